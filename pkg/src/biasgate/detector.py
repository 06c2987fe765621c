"""The detector: retrieval, prompting, completion and parsing in one call."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from time import perf_counter
from typing import Sequence

from .backends import ChatBackend
from .embeddings import Embedder, LocalHashingEmbedder
from .errors import EmbedderMismatch, EmptyInput
from .knowledge import AliasMap, KnowledgeBase
from .prompting import PromptBundle, PromptConfig, build_prompt
from .retrieval import Reference, RetrievalIndex, query
from .templates import TemplateSet, default_templates
from .verdict import Verdict, parse


@dataclass(frozen=True)
class DetectionResult:
    verdict: Verdict
    references: tuple[Reference, ...]
    prompt: PromptBundle
    completion: str
    latency_ms: float

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.as_dict(),
            "references": [
                {
                    "id": ref.entry.id,
                    "statement": ref.entry.statement,
                    "bias_type": ref.entry.bias_type.value,
                    "score": ref.score,
                    "rank": ref.rank,
                }
                for ref in self.references
            ],
            "latency_ms": self.latency_ms,
        }


@dataclass(frozen=True)
class BatchItem:
    """One slot of a batch; exactly one of result and error is set."""

    position: int
    text: str
    result: DetectionResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class Detector:
    """Judges sentences against one knowledge-base snapshot.

    The snapshot (kb, index, embedder) is fixed at construction; swapping
    in fresh knowledge means building a new Detector, which keeps every
    in-flight detection consistent.
    """

    def __init__(
        self,
        kb: KnowledgeBase,
        index: RetrievalIndex,
        backend: ChatBackend,
        config: PromptConfig = PromptConfig(),
        embedder: Embedder | None = None,
        templates: TemplateSet | None = None,
        aliases: AliasMap | None = None,
    ):
        self.kb = kb
        self.index = index
        self.backend = backend
        self.config = config
        self.embedder = embedder or LocalHashingEmbedder()
        self.templates = templates or default_templates()
        self.aliases = aliases or AliasMap.default()
        if index.kb_version != kb.version:
            raise EmbedderMismatch(
                f"index is for kb version {index.kb_version}, got {kb.version}"
            )
        if index.embedder_id != self.embedder.ident:
            raise EmbedderMismatch(
                f"index built with {index.embedder_id!r}, "
                f"detector uses {self.embedder.ident!r}"
            )

    def detect(self, text: str) -> DetectionResult:
        """Judge one sentence. Backend failures propagate as
        BackendUnavailable; they are never converted into a verdict."""
        if not text.strip():
            raise EmptyInput("cannot judge empty text")
        start = perf_counter()
        references = (
            query(self.index, self.kb, text, k=self.config.k, embedder=self.embedder)
            if self.config.use_retrieval
            else []
        )
        bundle = build_prompt(text, references, self.config, self.templates)
        completion = self.backend.complete(bundle)
        verdict = parse(completion, self.aliases, self.templates)
        latency_ms = (perf_counter() - start) * 1000.0
        return DetectionResult(
            verdict=verdict,
            references=bundle.references,
            prompt=bundle,
            completion=completion,
            latency_ms=latency_ms,
        )

    def detect_batch(self, texts: Sequence[str], max_workers: int = 4) -> list[BatchItem]:
        """Judge many sentences, preserving order. Per-item failures are
        recorded on their slot instead of aborting the batch."""

        def run(position: int, text: str) -> BatchItem:
            try:
                return BatchItem(position=position, text=text, result=self.detect(text))
            except Exception as exc:
                return BatchItem(
                    position=position,
                    text=text,
                    error=f"{type(exc).__name__}: {exc}",
                )

        if not texts:
            return []
        workers = max(1, min(max_workers, len(texts)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(len(texts)), texts))
