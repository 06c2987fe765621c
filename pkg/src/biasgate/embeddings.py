"""Text embedders: a deterministic local hasher and a remote HTTP client.

The local embedder is the package default and is fully specified so that
index builds are reproducible across machines: tokens are lowercased
alphanumeric runs, each token is FNV-1a hashed into one of 256 buckets,
and the bucket counts are L2-normalized. Text with no tokens embeds to
the zero vector, which downstream retrieval treats as matching nothing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from itertools import groupby
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ._wire import RetryPolicy, auth_headers, post_json
from .errors import BackendUnavailable, DimensionMismatch

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

LOCAL_DIM = 256


@runtime_checkable
class Embedder(Protocol):
    """Anything that can turn a batch of texts into row vectors."""

    ident: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    """Lowercase and split into maximal alphanumeric runs."""
    return ["".join(run) for alnum, run in groupby(text.lower(), key=str.isalnum) if alnum]


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


class LocalHashingEmbedder:
    """Deterministic 256-dimensional hashing embedder, no model weights."""

    ident = "fnv1a-256"
    dim = LOCAL_DIM

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in tokenize(text):
                bucket = fnv1a_64(token.encode("utf-8")) % self.dim
                out[row, bucket] += 1.0
        return _normalize_rows(out)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    nonzero = norms[:, 0] > 0.0
    matrix[nonzero] /= norms[nonzero]
    return matrix


@dataclass(frozen=True)
class RemoteEmbedderConfig:
    url: str
    model: str
    timeout: float = 10.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    api_key: str | None = None
    api_key_header: str = "Authorization"

    @classmethod
    def from_env(cls, **overrides) -> RemoteEmbedderConfig:
        env = os.environ
        params = {
            "url": env.get("BIASGATE_EMBED_URL", ""),
            "model": env.get("BIASGATE_EMBED_MODEL", ""),
            "api_key": env.get("BIASGATE_API_KEY"),
            "api_key_header": env.get("BIASGATE_API_KEY_HEADER", "Authorization"),
        }
        params.update(overrides)
        return cls(**params)


class RemoteEmbedder:
    """Client for an embeddings endpoint speaking the common JSON shape.

    Request:  {"input": [text, ...], "model": name}
    Response: {"data": [{"embedding": [floats]}, ...]} in input order.

    Rows are L2-normalized on arrival so retrieval scores stay cosines
    regardless of what the backend returns.
    """

    def __init__(self, config: RemoteEmbedderConfig):
        self.config = config
        self.ident = f"remote:{config.model}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, 0), dtype=np.float64)
        body = post_json(
            self.config.url,
            {"input": list(texts), "model": self.config.model},
            timeout=self.config.timeout,
            policy=self.config.retry,
            headers=auth_headers(self.config.api_key, self.config.api_key_header),
        )
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise BackendUnavailable(
                f"embedding backend returned {0 if not isinstance(data, list) else len(data)} "
                f"rows for {len(texts)} inputs"
            )
        vectors = []
        dim: int | None = None
        for i, item in enumerate(data):
            embedding = item.get("embedding") if isinstance(item, dict) else None
            if not isinstance(embedding, list) or not embedding:
                raise BackendUnavailable(f"embedding row {i} is malformed")
            if dim is None:
                dim = len(embedding)
            elif len(embedding) != dim:
                raise DimensionMismatch(
                    f"row {i} has dimension {len(embedding)}, expected {dim}"
                )
            vectors.append(embedding)
        return _normalize_rows(np.asarray(vectors, dtype=np.float64))
