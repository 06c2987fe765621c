"""Versioned prompt and answer templates.

Templates live in a plain-text data file so the wording can be revised
without touching code. The file is split into named sections; rendering
substitutes {placeholder} markers in a single pass and leaves anything
unrecognized alone, so braces inside substituted values cannot cascade
into further substitution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cache
from importlib.resources import files
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import TemplateError

_SECTION_RE = re.compile(r"^\[([a-z0-9_]+)\]$")
_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")

REQUIRED_SECTIONS = (
    "task",
    "steps",
    "demo",
    "reference_header",
    "reference_line",
    "sentence_line",
    "answer_biased",
    "answer_unbiased",
    "quote_chars",
)


@dataclass(frozen=True)
class TemplateSet:
    sections: Mapping[str, str]

    def section(self, name: str) -> str:
        try:
            return self.sections[name]
        except KeyError:
            raise TemplateError(f"missing template section [{name}]") from None

    def render(self, name: str, /, **values: str) -> str:
        """Substitute {placeholder} markers; unknown markers pass through."""
        text = self.section(name)
        return _PLACEHOLDER_RE.sub(
            lambda m: values.get(m.group(1), m.group(0)), text
        )

    @property
    def quote_chars(self) -> str:
        return self.section("quote_chars")

    @property
    def biased_head(self) -> str:
        """First sentence of the biased answer, the parser's decision cue."""
        return _first_sentence(self.section("answer_biased"))

    @property
    def unbiased_head(self) -> str:
        return _first_sentence(self.section("answer_unbiased"))


def _first_sentence(text: str) -> str:
    head, _, _ = text.partition(".")
    return head.strip()


def parse_template_text(text: str) -> TemplateSet:
    sections: dict[str, str] = {}
    name: str | None = None
    lines: list[str] = []

    def flush():
        if name is None:
            return
        while lines and not lines[0].strip():
            lines.pop(0)
        while lines and not lines[-1].strip():
            lines.pop()
        sections[name] = "\n".join(lines)

    for raw in text.splitlines():
        match = _SECTION_RE.match(raw.strip())
        if match:
            flush()
            if match.group(1) in sections:
                raise TemplateError(f"duplicate template section [{match.group(1)}]")
            name = match.group(1)
            lines = []
        elif name is not None:
            lines.append(raw)
        # lines before the first section are file comments, ignored
    flush()

    missing = [s for s in REQUIRED_SECTIONS if s not in sections]
    if missing:
        raise TemplateError(f"missing template sections: {', '.join(missing)}")
    return TemplateSet(MappingProxyType(sections))


def load_templates(path: str | Path | None = None) -> TemplateSet:
    """Load a template file, or the packaged defaults when path is None."""
    if path is None:
        return default_templates()
    return parse_template_text(Path(path).read_text(encoding="utf-8"))


@cache
def default_templates() -> TemplateSet:
    resource = files("biasgate.data").joinpath("templates.txt")
    return parse_template_text(resource.read_text(encoding="utf-8"))
