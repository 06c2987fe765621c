"""Gold labels, labeled examples, generation tasks, and their file formats.

All dataset files are JSONL (UTF-8, one object per line). The CSV importer
exists for third-party corpora and takes an explicit column mapping rather
than guessing header names.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import BadFlagValue, MissingColumn, SchemaError, UnknownBiasType
from .knowledge import AliasMap, BiasType, clean_text

TASK_KINDS = ("completion", "qa")

_TRUE_FLAGS = {"true", "1", "yes", "y", "biased"}
_FALSE_FLAGS = {"false", "0", "no", "n", "unbiased"}


@dataclass(frozen=True)
class GoldLabel:
    """Ground truth for one sentence.

    Unbiased labels carry no type or spans. Biased labels always carry a
    type; group and attribute are optional because some corpora only mark
    the category.
    """

    biased: bool
    bias_type: BiasType | None = None
    group: str | None = None
    attribute: str | None = None

    def __post_init__(self):
        if self.biased and self.bias_type is None:
            raise ValueError("biased labels must carry a bias_type")
        if not self.biased and (
            self.bias_type is not None or self.group is not None or self.attribute is not None
        ):
            raise ValueError("unbiased labels must not carry type or spans")


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    gold: GoldLabel

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("labeled example text must be non-empty")


@dataclass(frozen=True)
class GenerationTask:
    id: str
    prompt: str
    task_kind: str = "completion"

    def __post_init__(self):
        if not self.prompt.strip():
            raise ValueError("generation task prompt must be non-empty")
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"task_kind must be one of {TASK_KINDS}")


def _gold_from_fields(
    biased: bool,
    type_label: str | None,
    group: str | None,
    attribute: str | None,
    aliases: AliasMap,
) -> GoldLabel:
    """Build a GoldLabel, resolving the type label; unbiased drops extras."""
    if not biased:
        return GoldLabel(biased=False)
    if not type_label or not type_label.strip():
        raise ValueError("biased label is missing its bias type")
    bias_type = aliases.resolve(type_label)
    if bias_type is None:
        raise UnknownBiasType(type_label)
    group = clean_text(group) if group and group.strip() else None
    attribute = clean_text(attribute) if attribute and attribute.strip() else None
    return GoldLabel(biased=True, bias_type=bias_type, group=group, attribute=attribute)


def load_labeled(path: str | Path, aliases: AliasMap | None = None) -> list[LabeledExample]:
    """Read labeled examples from JSONL; errors carry the offending line.

    Line shape: {"id", "text", "gold": {"biased", "bias_type", "group",
    "attribute"}} with the optional gold fields null or omitted.
    """
    aliases = aliases or AliasMap.default()
    examples: list[LabeledExample] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"bad JSON: {exc.msg}", line=lineno) from None
        if not isinstance(row, dict):
            raise SchemaError("expected a JSON object", line=lineno)
        try:
            gold_row = row["gold"]
            if not isinstance(gold_row, dict):
                raise ValueError("gold must be an object")
            gold = _gold_from_fields(
                bool(gold_row["biased"]),
                gold_row.get("bias_type"),
                gold_row.get("group"),
                gold_row.get("attribute"),
                aliases,
            )
            example = LabeledExample(
                id=str(row.get("id", f"item{lineno}")),
                text=str(row["text"]),
                gold=gold,
            )
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}", line=lineno) from None
        except (ValueError, UnknownBiasType) as exc:
            raise SchemaError(str(exc), line=lineno) from None
        examples.append(example)
    return examples


def save_labeled(examples: Iterable[LabeledExample], path: str | Path) -> None:
    lines = []
    for example in examples:
        gold = example.gold
        lines.append(
            json.dumps(
                {
                    "id": example.id,
                    "text": example.text,
                    "gold": {
                        "biased": gold.biased,
                        "bias_type": gold.bias_type.value if gold.bias_type else None,
                        "group": gold.group,
                        "attribute": gold.attribute,
                    },
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_generation_tasks(path: str | Path) -> list[GenerationTask]:
    tasks: list[GenerationTask] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"bad JSON: {exc.msg}", line=lineno) from None
        try:
            task = GenerationTask(
                id=str(row["id"]),
                prompt=str(row["prompt"]),
                task_kind=str(row.get("task_kind", "completion")),
            )
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}", line=lineno) from None
        except ValueError as exc:
            raise SchemaError(str(exc), line=lineno) from None
        tasks.append(task)
    return tasks


def load_replay(path: str | Path) -> dict[str, str]:
    """Read canned responses keyed by task id; duplicate ids are an error."""
    responses: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"bad JSON: {exc.msg}", line=lineno) from None
        try:
            task_id, response = str(row["id"]), str(row["response"])
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}", line=lineno) from None
        if task_id in responses:
            raise SchemaError(f"duplicate id {task_id!r}", line=lineno)
        responses[task_id] = response
    return responses


@dataclass(frozen=True)
class ColumnMapping:
    """Maps CSV header names onto labeled-example fields."""

    text: str
    biased: str
    bias_type: str | None = None
    group: str | None = None
    attribute: str | None = None
    id: str | None = None


@dataclass(frozen=True)
class SkippedRow:
    line: int
    reason: str


def import_labeled_csv(
    path: str | Path,
    mapping: ColumnMapping,
    aliases: AliasMap | None = None,
) -> tuple[list[LabeledExample], list[SkippedRow]]:
    """Import labeled examples from a headered CSV.

    A mapped column missing from the header raises MissingColumn; bad rows
    (unparseable flag, unknown type, empty text) are skipped and reported
    so one stray row cannot sink a large import.
    """
    aliases = aliases or AliasMap.default()
    examples: list[LabeledExample] = []
    skipped: list[SkippedRow] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        wanted = [
            column
            for column in (
                mapping.text, mapping.biased, mapping.bias_type,
                mapping.group, mapping.attribute, mapping.id,
            )
            if column is not None
        ]
        for column in wanted:
            if column not in header:
                raise MissingColumn(f"column {column!r} not in header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                examples.append(_example_from_row(row, lineno, mapping, aliases))
            except (BadFlagValue, UnknownBiasType, ValueError) as exc:
                skipped.append(SkippedRow(line=lineno, reason=str(exc)))
    return examples, skipped


def _example_from_row(
    row: dict, lineno: int, mapping: ColumnMapping, aliases: AliasMap
) -> LabeledExample:
    text = (row.get(mapping.text) or "").strip()
    if not text:
        raise ValueError("empty text")
    flag = (row.get(mapping.biased) or "").strip().lower()
    if flag in _TRUE_FLAGS:
        biased = True
    elif flag in _FALSE_FLAGS:
        biased = False
    else:
        raise BadFlagValue(f"unparseable biased flag {flag!r}")
    gold = _gold_from_fields(
        biased,
        row.get(mapping.bias_type) if mapping.bias_type else None,
        row.get(mapping.group) if mapping.group else None,
        row.get(mapping.attribute) if mapping.attribute else None,
        aliases,
    )
    item_id = (row.get(mapping.id) or "").strip() if mapping.id else ""
    return LabeledExample(id=item_id or f"row{lineno}", text=text, gold=gold)


def read_corpus_csv(
    path: str | Path,
    statement_col: str = "statement",
    type_col: str = "bias_type",
) -> list[tuple[str, str]]:
    """Read (statement, type label) pairs for knowledge-base ingestion."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for column in (statement_col, type_col):
            if column not in header:
                raise MissingColumn(f"column {column!r} not in header {header}")
        return [
            ((row.get(statement_col) or ""), (row.get(type_col) or ""))
            for row in reader
        ]
