"""Prompt assembly and gold-answer rendering.

A prompt is two texts: the system text carries the task definition plus
the optional reasoning steps and worked demonstration; the user text
carries the optional retrieved REFERENCE block and always ends with the
sentence under judgement. Each feature flag adds its block verbatim and
independently, so ablations differ from the full prompt only by the
dropped block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import BiasGateError, EmptySentence, MissingAttribution
from .knowledge import KnowledgeBase
from .labels import GoldLabel, LabeledExample
from .retrieval import Reference, RetrievalIndex, query
from .templates import TemplateSet, default_templates


@dataclass(frozen=True)
class PromptConfig:
    """Feature flags: retrieval references, reasoning steps, demonstration."""

    use_retrieval: bool = True
    use_steps: bool = True
    use_demo: bool = True
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    sentence: str
    config: PromptConfig
    references: tuple[Reference, ...] = ()

    @property
    def messages(self) -> list[dict[str, str]]:
        """Chat-completion message list: one system turn, one user turn."""
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]


def build_prompt(
    sentence: str,
    references: Sequence[Reference] = (),
    config: PromptConfig = PromptConfig(),
    templates: TemplateSet | None = None,
) -> PromptBundle:
    """Assemble the prompt for one sentence.

    With retrieval off the passed references are not rendered and are not
    recorded on the bundle. With retrieval on, the REFERENCE header is
    always present, even when no references were retrieved.
    """
    templates = templates or default_templates()
    sentence = sentence.strip()
    if not sentence:
        raise EmptySentence("cannot judge an empty sentence")

    blocks = [templates.section("task")]
    if config.use_steps:
        blocks.append(templates.section("steps"))
    if config.use_demo:
        blocks.append(templates.section("demo"))
    system_text = "\n\n".join(blocks)

    lines: list[str] = []
    kept: tuple[Reference, ...] = ()
    if config.use_retrieval:
        kept = tuple(references)
        lines.append(templates.section("reference_header"))
        for position, reference in enumerate(kept, start=1):
            lines.append(
                templates.render(
                    "reference_line",
                    rank=str(position),
                    statement=reference.entry.statement,
                    type=reference.entry.bias_type.value,
                )
            )
    lines.append(templates.render("sentence_line", sentence=sentence))
    user_text = "\n".join(lines)

    return PromptBundle(
        system_text=system_text,
        user_text=user_text,
        sentence=sentence,
        config=config,
        references=kept,
    )


def render_gold_answer(label: GoldLabel, templates: TemplateSet | None = None) -> str:
    """Render the exact answer a perfectly instruction-following judge gives."""
    templates = templates or default_templates()
    if not label.biased:
        return templates.section("answer_unbiased")
    group = (label.group or "").strip()
    attribute = (label.attribute or "").strip()
    if not group or not attribute:
        raise MissingAttribution(
            "biased gold labels need group and attribute spans to render"
        )
    return templates.render(
        "answer_biased",
        type=label.bias_type.value,
        group=group,
        attribute=attribute,
    )


@dataclass(frozen=True)
class TrainingRecord:
    """One supervised fine-tuning example in instruction/input/output form."""

    instruction: str
    input: str
    output: str

    def as_dict(self) -> dict[str, str]:
        return {"instruction": self.instruction, "input": self.input, "output": self.output}


@dataclass(frozen=True)
class SkippedExample:
    id: str
    reason: str


def build_training_records(
    examples: Iterable[LabeledExample],
    kb: KnowledgeBase,
    index: RetrievalIndex,
    config: PromptConfig = PromptConfig(),
    templates: TemplateSet | None = None,
    embedder=None,
) -> tuple[list[TrainingRecord], list[SkippedExample]]:
    """Turn labeled examples into training records; unrenderable examples
    (typically biased labels without spans) are skipped and reported."""
    templates = templates or default_templates()
    records: list[TrainingRecord] = []
    skipped: list[SkippedExample] = []
    for example in examples:
        try:
            references = (
                query(index, kb, example.text, k=config.k, embedder=embedder)
                if config.use_retrieval
                else []
            )
            bundle = build_prompt(example.text, references, config, templates)
            answer = render_gold_answer(example.gold, templates)
        except BiasGateError as exc:
            skipped.append(SkippedExample(id=example.id, reason=str(exc)))
            continue
        records.append(
            TrainingRecord(
                instruction=bundle.system_text,
                input=bundle.user_text,
                output=answer,
            )
        )
    return records, skipped


def write_training_records(records: Iterable[TrainingRecord], path: str | Path) -> None:
    lines = [
        json.dumps(record.as_dict(), ensure_ascii=False, sort_keys=True)
        for record in records
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_training_records(path: str | Path) -> list[TrainingRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            records.append(
                TrainingRecord(
                    instruction=row["instruction"],
                    input=row["input"],
                    output=row["output"],
                )
            )
    return records
