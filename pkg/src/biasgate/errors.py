"""Exception types shared across the package.

Everything raised on purpose derives from BiasGateError so callers can
catch one base class at API boundaries. OS-level failures (missing files,
permissions) are left as the builtin OSError family.
"""


class BiasGateError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(BiasGateError):
    """A persisted file does not match its expected format.

    line is 1-based and refers to the offending line of the source file,
    or None when the problem is not tied to a single line.
    """

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownBiasType(BiasGateError):
    """A bias-type label could not be resolved to a canonical type."""

    def __init__(self, label: str):
        super().__init__(f"unknown bias type: {label!r}")
        self.label = label


class EmptyStatement(BiasGateError):
    """A knowledge-base statement is empty after whitespace cleanup."""


class EmptySentence(BiasGateError):
    """A sentence to be judged is empty after whitespace cleanup."""


class EmptyInput(BiasGateError):
    """An operation that needs at least one item received none."""


class MissingAttribution(BiasGateError):
    """A biased gold label lacks the group or attribute span."""


class DimensionMismatch(BiasGateError):
    """Embedding vectors in one batch disagree on dimensionality."""


class EmbedderMismatch(BiasGateError):
    """An index was built with a different embedder or knowledge base."""


class BackendUnavailable(BiasGateError):
    """A remote backend stayed unreachable after the configured retries."""


class TemplateError(BiasGateError):
    """A template file is missing a required section or is malformed."""


class MissingColumn(BiasGateError):
    """A tabular import references a column the file does not have."""


class BadFlagValue(BiasGateError):
    """A tabular import row carries an unparseable label flag."""
