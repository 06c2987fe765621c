"""Bias knowledge base: canonical types, entries, ingestion and persistence.

The knowledge base is an immutable snapshot: every mutation builds a new
KnowledgeBase value with a bumped version, so concurrent readers can keep
using the snapshot they already hold.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from functools import cache, cached_property
from importlib.resources import files
from pathlib import Path

from .errors import SchemaError

log = logging.getLogger(__name__)

FILE_MAGIC = "#biasgate-kb v1"
_VERSION_PREFIX = "#version "

# Number of distinct unresolved labels kept verbatim in an IngestReport.
_UNKNOWN_SAMPLE_CAP = 20


class BiasType(Enum):
    """The seven canonical bias categories."""

    ORIENTATION = "orientation"
    GENDER = "gender"
    SOCIAL = "social"
    RACE = "race"
    RELIGION = "religion"
    DISABLED = "disabled"
    CULTURE = "culture"

    def __str__(self) -> str:
        return self.value


def clean_text(text: str) -> str:
    """Trim and collapse all interior whitespace runs to single spaces."""
    return " ".join(text.split())


@dataclass(frozen=True)
class AliasMap:
    """Maps free-form bias-type labels onto canonical BiasType values."""

    aliases: Mapping[str, BiasType] = field(default_factory=dict)

    def resolve(self, label: str) -> BiasType | None:
        """Resolve a label, or None when it matches nothing.

        Matching is case-insensitive, collapses whitespace, and ignores one
        trailing "bias" word, so "Racial Bias", "racial" and "race" all
        land on BiasType.RACE with the packaged aliases.
        """
        token = clean_text(label).lower()
        if token.endswith(" bias"):
            token = token[: -len(" bias")].rstrip()
        try:
            return BiasType(token)
        except ValueError:
            return self.aliases.get(token)

    @classmethod
    def load(cls, path: str | Path) -> AliasMap:
        """Read an alias file: one `alias = canonical` pair per line."""
        return cls(_parse_aliases(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> AliasMap:
        return _default_aliases()


def _parse_aliases(text: str) -> dict[str, BiasType]:
    aliases: dict[str, BiasType] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        alias, sep, target = line.partition("=")
        if not sep:
            raise SchemaError("expected `alias = canonical`", line=lineno)
        try:
            canonical = BiasType(clean_text(target).lower())
        except ValueError:
            raise SchemaError(
                f"unknown canonical type {target.strip()!r}", line=lineno
            ) from None
        aliases[clean_text(alias).lower()] = canonical
    return aliases


@cache
def _default_aliases() -> AliasMap:
    resource = files("biasgate.data").joinpath("aliases.txt")
    return AliasMap(_parse_aliases(resource.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class BiasEntry:
    """One knowledge-base row: a biased statement and its category."""

    id: int
    statement: str
    bias_type: BiasType

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"entry id must be non-negative, got {self.id}")
        if not self.statement.strip():
            raise ValueError("entry statement must be non-empty")


@dataclass(frozen=True)
class IngestReport:
    """Per-batch accounting: every input record is added or counted here."""

    total: int
    added: int
    duplicates: int
    empty: int
    unknown: int
    unknown_labels: tuple[str, ...] = ()

    @property
    def skipped(self) -> int:
        return self.duplicates + self.empty + self.unknown

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "added": self.added,
            "duplicates": self.duplicates,
            "empty": self.empty,
            "unknown": self.unknown,
            "skipped": self.skipped,
            "unknown_labels": list(self.unknown_labels),
        }


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable snapshot of bias statements, ordered by ascending id."""

    entries: tuple[BiasEntry, ...] = ()
    version: int = 0

    def __post_init__(self):
        last = -1
        for entry in self.entries:
            if entry.id <= last:
                raise ValueError("entry ids must be strictly ascending")
            last = entry.id

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def max_id(self) -> int:
        """Largest entry id, or -1 for an empty base."""
        return self.entries[-1].id if self.entries else -1

    @cached_property
    def counts_by_type(self) -> dict[BiasType, int]:
        """Entry counts per canonical type; all seven types are present."""
        counts = {bias_type: 0 for bias_type in BiasType}
        for entry in self.entries:
            counts[entry.bias_type] += 1
        return counts

    @cached_property
    def dedup_keys(self) -> frozenset[tuple[str, BiasType]]:
        return frozenset(
            (entry.statement.lower(), entry.bias_type) for entry in self.entries
        )


def ingest(
    records: Iterable[tuple[str, str]],
    aliases: AliasMap | None = None,
) -> tuple[KnowledgeBase, IngestReport]:
    """Build a fresh knowledge base (version 1) from (statement, label) pairs.

    Records with empty statements or unresolvable labels are skipped, as are
    duplicates of an earlier record. added + skipped always equals total.
    """
    return _extend(KnowledgeBase(), records, aliases)


def append(
    kb: KnowledgeBase,
    records: Iterable[tuple[str, str]],
    aliases: AliasMap | None = None,
) -> tuple[KnowledgeBase, IngestReport]:
    """Return a new base with the records added and the version bumped.

    The version increments even when every record was skipped: a new
    snapshot was produced, and downstream caches key on the version. The
    input base is never modified.
    """
    return _extend(kb, records, aliases)


def _extend(
    kb: KnowledgeBase,
    records: Iterable[tuple[str, str]],
    aliases: AliasMap | None,
) -> tuple[KnowledgeBase, IngestReport]:
    aliases = aliases or AliasMap.default()
    seen = set(kb.dedup_keys)
    entries = list(kb.entries)
    next_id = kb.max_id + 1

    total = added = duplicates = empty = unknown = 0
    unknown_labels: list[str] = []
    for statement, label in records:
        total += 1
        cleaned = clean_text(statement)
        if not cleaned:
            empty += 1
            continue
        bias_type = aliases.resolve(label)
        if bias_type is None:
            unknown += 1
            sample = clean_text(label)
            if sample not in unknown_labels and len(unknown_labels) < _UNKNOWN_SAMPLE_CAP:
                unknown_labels.append(sample)
            continue
        key = (cleaned.lower(), bias_type)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        entries.append(BiasEntry(next_id, cleaned, bias_type))
        next_id += 1
        added += 1

    report = IngestReport(
        total=total,
        added=added,
        duplicates=duplicates,
        empty=empty,
        unknown=unknown,
        unknown_labels=tuple(unknown_labels),
    )
    new_kb = KnowledgeBase(entries=tuple(entries), version=kb.version + 1)
    log.debug(
        "ingest: %d added, %d skipped, version %d", added, report.skipped, new_kb.version
    )
    return new_kb, report


def save(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the base as a tab-separated UTF-8 file with a two-line header."""
    lines = [FILE_MAGIC, f"{_VERSION_PREFIX}{kb.version}"]
    for entry in kb.entries:
        lines.append(f"{entry.id}\t{entry.bias_type.value}\t{entry.statement}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path) -> KnowledgeBase:
    """Read a knowledge-base file; an empty file is an empty base, version 0."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return KnowledgeBase()

    lines = text.splitlines()
    if lines[0] != FILE_MAGIC:
        raise SchemaError(f"expected header {FILE_MAGIC!r}", line=1)
    if len(lines) < 2 or not lines[1].startswith(_VERSION_PREFIX):
        raise SchemaError(f"expected {_VERSION_PREFIX.strip()!r} header", line=2)
    try:
        version = int(lines[1][len(_VERSION_PREFIX):])
    except ValueError:
        raise SchemaError("version must be an integer", line=2) from None
    if version < 0:
        raise SchemaError("version must be non-negative", line=2)

    entries: list[BiasEntry] = []
    last_id = -1
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise SchemaError(
                f"expected 3 tab-separated fields, got {len(fields)}", line=lineno
            )
        raw_id, raw_type, statement = fields
        try:
            entry_id = int(raw_id)
        except ValueError:
            raise SchemaError(f"bad entry id {raw_id!r}", line=lineno) from None
        if entry_id <= last_id:
            raise SchemaError(
                f"entry id {entry_id} not above previous id {last_id}", line=lineno
            )
        try:
            bias_type = BiasType(raw_type)
        except ValueError:
            raise SchemaError(f"unknown bias type {raw_type!r}", line=lineno) from None
        if not statement.strip():
            raise SchemaError("empty statement", line=lineno)
        entries.append(BiasEntry(entry_id, statement, bias_type))
        last_id = entry_id

    return KnowledgeBase(entries=tuple(entries), version=version)
