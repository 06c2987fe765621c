"""Moderation gateway: audit generated text and block biased output.

The gateway wraps an upstream generation backend. Every generated
response is judged before it reaches the client; biased output is
replaced with the configured block message (or returned with a warning
flag in audit-only mode). Audits run against an immutable engine
snapshot (knowledge base, index, detector) that hot reloads swap out
atomically, so in-flight requests always see a consistent snapshot.

Reported audit latency covers retrieval, prompting, judging and parsing
only; time spent waiting on the upstream model is accounted separately.
"""

from __future__ import annotations

import json
import threading
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from time import perf_counter
from typing import Callable, Protocol

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .backends import ChatBackend
from .detector import DetectionResult, Detector
from .embeddings import Embedder, LocalHashingEmbedder
from .errors import BackendUnavailable, BiasGateError
from .knowledge import AliasMap, KnowledgeBase, load as load_kb
from .prompting import PromptConfig
from .retrieval import RetrievalIndex, build_index
from .templates import TemplateSet, default_templates
from .verdict import Verdict

DEFAULT_BLOCK_MESSAGE = (
    "[response withheld: the generated text was flagged as biased]"
)


class Upstream(Protocol):
    """The generation backend being moderated."""

    def generate(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class GatewayConfig:
    block_message: str = DEFAULT_BLOCK_MESSAGE
    audit_only: bool = False
    # On judge failure or an unusable judge verdict: fail open returns the
    # upstream text unjudged; fail closed (the default) withholds it.
    fail_open: bool = False
    prompt: PromptConfig = field(default_factory=PromptConfig)
    kb_path: str | None = None
    audit_log_path: str | None = None
    max_concurrent: int | None = None


@dataclass(frozen=True)
class _Engine:
    kb: KnowledgeBase
    index: RetrievalIndex
    detector: Detector


class Gateway:
    """Holds the moderation state shared by the HTTP endpoints."""

    def __init__(
        self,
        kb: KnowledgeBase,
        index: RetrievalIndex,
        judge_backend_factory: Callable[[KnowledgeBase], ChatBackend],
        upstream: Upstream | None = None,
        config: GatewayConfig = GatewayConfig(),
        embedder: Embedder | None = None,
        templates: TemplateSet | None = None,
        aliases: AliasMap | None = None,
    ):
        self.config = config
        self.upstream = upstream
        self.embedder = embedder or LocalHashingEmbedder()
        self.templates = templates or default_templates()
        self.aliases = aliases or AliasMap.default()
        self._judge_backend_factory = judge_backend_factory
        self._engine = self._build_engine(kb, index)
        self._lock = threading.Lock()
        self._reload_lock = threading.Lock()
        self._semaphore = (
            threading.BoundedSemaphore(config.max_concurrent)
            if config.max_concurrent
            else None
        )
        self.audit_records: list[dict] = []
        self.counters = {
            "audits": 0,
            "generates": 0,
            "passed": 0,
            "flagged": 0,
            "blocked": 0,
            "judge_failures": 0,
            "upstream_failures": 0,
        }
        self._audit_latency_total_ms = 0.0
        self._audit_latency_count = 0

    def _build_engine(self, kb: KnowledgeBase, index: RetrievalIndex) -> _Engine:
        detector = Detector(
            kb,
            index,
            self._judge_backend_factory(kb),
            config=self.config.prompt,
            embedder=self.embedder,
            templates=self.templates,
            aliases=self.aliases,
        )
        return _Engine(kb=kb, index=index, detector=detector)

    @property
    def engine(self) -> _Engine:
        return self._engine

    @contextmanager
    def _slot(self):
        if self._semaphore is None:
            yield
        else:
            with self._semaphore:
                yield

    def audit_text(self, text: str, k: int | None = None) -> DetectionResult:
        """Judge one text against the current engine snapshot."""
        engine = self._engine
        detector = engine.detector
        if k is not None and k != detector.config.k:
            detector = Detector(
                engine.kb,
                engine.index,
                detector.backend,
                config=replace(detector.config, k=k),
                embedder=self.embedder,
                templates=self.templates,
                aliases=self.aliases,
            )
        return detector.detect(text)

    def reload(self, kb: KnowledgeBase, index: RetrievalIndex | None = None) -> _Engine:
        """Swap in a new knowledge base; in-flight audits keep the old one."""
        with self._reload_lock:
            if index is None:
                index = build_index(kb, self.embedder)
            engine = self._build_engine(kb, index)
            self._engine = engine
            return engine

    def reload_from(self, kb_path: str) -> _Engine:
        return self.reload(load_kb(kb_path))

    def note(self, counter: str) -> None:
        with self._lock:
            self.counters[counter] += 1

    def log_audit(
        self,
        endpoint: str,
        action: str,
        verdict: Verdict | None,
        text: str,
        audit_latency_ms: float | None,
        upstream_latency_ms: float | None = None,
        judge_error: str | None = None,
    ) -> dict:
        record = {
            "id": uuid.uuid4().hex,
            "ts": datetime.now(timezone.utc).isoformat(),
            "endpoint": endpoint,
            "action": action,
            "usable": verdict.usable if verdict else None,
            "biased": verdict.biased if verdict else None,
            "bias_type": verdict.as_dict()["bias_type"] if verdict else None,
            "kb_version": self._engine.kb.version,
            "audit_latency_ms": audit_latency_ms,
            "upstream_latency_ms": upstream_latency_ms,
            "judge_error": judge_error,
            "text": text,
        }
        with self._lock:
            self.audit_records.append(record)
            self.counters[action] += 1
            if audit_latency_ms is not None:
                self._audit_latency_total_ms += audit_latency_ms
                self._audit_latency_count += 1
            if self.config.audit_log_path:
                with open(self.config.audit_log_path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        return record

    def stats(self) -> dict:
        with self._lock:
            mean = (
                self._audit_latency_total_ms / self._audit_latency_count
                if self._audit_latency_count
                else None
            )
            return {
                "counters": dict(self.counters),
                "audit_log_entries": len(self.audit_records),
                "mean_audit_latency_ms": mean,
            }


class AuditRequest(BaseModel):
    text: str
    k: int | None = None


class GenerateRequest(BaseModel):
    prompt: str


class ReloadRequest(BaseModel):
    kb_path: str | None = None


_PASSTHROUGH_VERDICT = Verdict(usable=True, biased=False, raw="")


def create_app(gateway: Gateway) -> FastAPI:
    app = FastAPI(title="biasgate", docs_url=None, redoc_url=None)
    app.state.gateway = gateway

    @app.get("/healthz")
    def healthz() -> dict:
        engine = gateway.engine
        return {
            "status": "ok",
            "kb_version": engine.kb.version,
            "kb_entries": len(engine.kb),
            "embedder": engine.index.embedder_id,
            "audit_only": gateway.config.audit_only,
            "counters": gateway.stats()["counters"],
        }

    @app.post("/v1/audit")
    def audit(request: AuditRequest) -> dict:
        if not request.text.strip():
            raise HTTPException(status_code=422, detail="text must be non-empty")
        if request.k is not None and request.k < 1:
            raise HTTPException(status_code=422, detail="k must be at least 1")
        with gateway._slot():
            try:
                result = gateway.audit_text(request.text, k=request.k)
            except BackendUnavailable as exc:
                gateway.note("judge_failures")
                raise HTTPException(status_code=503, detail=str(exc)) from None
        gateway.note("audits")
        verdict = result.verdict
        action = "flagged" if (verdict.usable and verdict.biased) else "passed"
        gateway.log_audit(
            endpoint="audit",
            action=action,
            verdict=verdict,
            text=request.text,
            audit_latency_ms=result.latency_ms,
        )
        return {
            "action": action,
            "verdict": verdict.as_dict(),
            "references": result.as_dict()["references"],
            "audit_latency_ms": result.latency_ms,
            "kb_version": gateway.engine.kb.version,
        }

    @app.post("/v1/generate")
    def generate(request: GenerateRequest) -> dict:
        if not request.prompt.strip():
            raise HTTPException(status_code=422, detail="prompt must be non-empty")
        if gateway.upstream is None:
            raise HTTPException(status_code=400, detail="no upstream configured")
        gateway.note("generates")

        with gateway._slot():
            upstream_start = perf_counter()
            try:
                text = gateway.upstream.generate(request.prompt)
            except Exception as exc:
                gateway.note("upstream_failures")
                raise HTTPException(
                    status_code=502, detail=f"upstream generation failed: {exc}"
                ) from None
            upstream_latency_ms = (perf_counter() - upstream_start) * 1000.0

            verdict: Verdict | None = _PASSTHROUGH_VERDICT
            references: list = []
            audit_latency_ms: float | None = 0.0
            judge_error = None
            if text.strip():
                try:
                    result = gateway.audit_text(text)
                    verdict = result.verdict
                    references = result.as_dict()["references"]
                    audit_latency_ms = result.latency_ms
                except BackendUnavailable as exc:
                    gateway.note("judge_failures")
                    if not gateway.config.fail_open:
                        raise HTTPException(
                            status_code=503, detail=f"judge unavailable: {exc}"
                        ) from None
                    judge_error = str(exc)
                    verdict = None
                    audit_latency_ms = None
                if verdict is not None and not verdict.usable:
                    gateway.note("judge_failures")
                    if not gateway.config.fail_open:
                        raise HTTPException(
                            status_code=503,
                            detail="judge verdict was unusable and the gateway fails closed",
                        )
                    judge_error = "judge verdict was unusable"

        flagged = (
            verdict is not None and verdict.usable and bool(verdict.biased)
        )
        blocked = flagged and not gateway.config.audit_only
        action = "blocked" if blocked else ("flagged" if flagged else "passed")
        gateway.log_audit(
            endpoint="generate",
            action=action,
            verdict=verdict,
            text=text,
            audit_latency_ms=audit_latency_ms,
            upstream_latency_ms=upstream_latency_ms,
            judge_error=judge_error,
        )
        return {
            "status": "blocked" if blocked else "ok",
            "text": gateway.config.block_message if blocked else text,
            "flagged": flagged,
            "verdict": verdict.as_dict() if verdict else None,
            "references": references,
            "upstream_latency_ms": upstream_latency_ms,
            "audit_latency_ms": audit_latency_ms,
            "judge_error": judge_error,
            "kb_version": gateway.engine.kb.version,
        }

    @app.post("/v1/reload")
    def reload(request: ReloadRequest | None = None) -> dict:
        kb_path = (request.kb_path if request else None) or gateway.config.kb_path
        if not kb_path:
            raise HTTPException(status_code=400, detail="no knowledge-base path configured")
        try:
            engine = gateway.reload_from(kb_path)
        except (BiasGateError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {
            "status": "ok",
            "kb_version": engine.kb.version,
            "kb_entries": len(engine.kb),
        }

    return app
