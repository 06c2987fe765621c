"""Exact top-k retrieval over the knowledge base.

The index is a dense matrix of embedded statements aligned row-for-row
with the knowledge base it was built from. Queries are a single matrix
product followed by an exact sort, so results are reproducible and there
is no approximation to tune. Rebuilds happen offline: build a new index,
then swap the reference; queries in flight keep the old snapshot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .embeddings import Embedder, LocalHashingEmbedder
from .errors import EmbedderMismatch, SchemaError
from .knowledge import BiasEntry, KnowledgeBase

_MAGIC = b"BGIX\x01"


@dataclass(frozen=True)
class Reference:
    """One retrieved statement; rank is 1-based within its result list."""

    entry: BiasEntry
    score: float
    rank: int


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    """Embedded snapshot of one knowledge-base version."""

    kb_version: int
    embedder_id: str
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d matrix")
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @cached_property
    def active_rows(self) -> np.ndarray:
        """Boolean mask of rows with a nonzero embedding; zero rows never match."""
        return np.linalg.norm(self.vectors, axis=1) > 0.0


def build_index(kb: KnowledgeBase, embedder: Embedder | None = None) -> RetrievalIndex:
    embedder = embedder or LocalHashingEmbedder()
    vectors = embedder.embed([entry.statement for entry in kb.entries])
    return RetrievalIndex(
        kb_version=kb.version, embedder_id=embedder.ident, vectors=vectors
    )


def query(
    index: RetrievalIndex,
    kb: KnowledgeBase,
    text: str,
    k: int = 5,
    embedder: Embedder | None = None,
) -> list[Reference]:
    """Return up to k references, best cosine first, ties by ascending id.

    A query whose embedding is the zero vector (no alphanumeric tokens)
    matches nothing and returns an empty list.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    embedder = embedder or LocalHashingEmbedder()
    if embedder.ident != index.embedder_id:
        raise EmbedderMismatch(
            f"index built with {index.embedder_id!r}, queried with {embedder.ident!r}"
        )
    if kb.version != index.kb_version:
        raise EmbedderMismatch(
            f"index built from kb version {index.kb_version}, given version {kb.version}"
        )
    if len(kb.entries) != len(index):
        raise EmbedderMismatch(
            f"index has {len(index)} rows for {len(kb.entries)} entries"
        )
    if not len(index):
        return []

    q = embedder.embed([text])[0]
    if not q.any():
        return []

    scores = index.vectors @ q
    candidates = np.flatnonzero(index.active_rows)
    if not candidates.size:
        return []
    # Ordering keys are rounded to 9 decimals: scores that are equal in exact
    # arithmetic can differ by an ulp depending on float summation order, and
    # the id tie rule must still apply to them. Reported scores stay raw.
    # lexsort uses the last key as primary: score descending, position
    # (equivalently entry id, entries being id-ordered) ascending on ties.
    keys = np.round(scores[candidates], 9)
    order = candidates[np.lexsort((candidates, -keys))]
    return [
        Reference(entry=kb.entries[pos], score=float(scores[pos]), rank=rank)
        for rank, pos in enumerate(order[:k], start=1)
    ]


def save_index(index: RetrievalIndex, path: str | Path) -> None:
    """Write the index cache: magic, JSON header line, raw float64 rows."""
    rows, dim = index.vectors.shape
    header = {
        "kb_version": index.kb_version,
        "embedder_id": index.embedder_id,
        "dtype": "float64",
        "rows": rows,
        "dim": dim,
    }
    blob = (
        _MAGIC
        + json.dumps(header, sort_keys=True).encode("utf-8")
        + b"\n"
        + np.ascontiguousarray(index.vectors, dtype=np.float64).tobytes()
    )
    target = Path(path)
    tmp = target.with_suffix(target.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(target)


def load_index(path: str | Path) -> RetrievalIndex:
    blob = Path(path).read_bytes()
    if not blob.startswith(_MAGIC):
        raise SchemaError("not an index cache file (bad magic)")
    newline = blob.find(b"\n", len(_MAGIC))
    if newline < 0:
        raise SchemaError("index cache header is truncated")
    try:
        header = json.loads(blob[len(_MAGIC):newline].decode("utf-8"))
        rows, dim = int(header["rows"]), int(header["dim"])
        kb_version = int(header["kb_version"])
        embedder_id = str(header["embedder_id"])
        if header["dtype"] != "float64":
            raise SchemaError(f"unsupported dtype {header['dtype']!r}")
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"bad index cache header: {exc}") from None
    payload = blob[newline + 1:]
    expected = rows * dim * 8
    if len(payload) != expected:
        raise SchemaError(
            f"index cache payload is {len(payload)} bytes, expected {expected}"
        )
    vectors = np.frombuffer(payload, dtype=np.float64).reshape(rows, dim).copy()
    return RetrievalIndex(kb_version=kb_version, embedder_id=embedder_id, vectors=vectors)
