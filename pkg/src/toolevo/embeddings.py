"""Embedding providers.

Two implementations of the same contract: a deterministic token-hash
provider used for tests and offline runs, and a thin HTTP client for a
real embedding service.  Every provider returns L2-normalized float64
vectors of a fixed dimension.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Protocol

import numpy as np

from .errors import EmptyText, ProviderUnavailable, ZeroVector

UNIT_NORM_TOL = 1e-9


def normalize(values: Iterable[float]) -> np.ndarray:
    vec = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector("cannot normalize an all-zero vector")
    return vec / norm


class EmbeddingProvider(Protocol):
    identity: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: list[str]) -> list[np.ndarray]: ...


class HashEmbedder:
    """Hashes whitespace-separated tokens into buckets, then L2-normalizes.

    Fully deterministic across processes and platforms (sha256, not the
    interpreter's randomized hash), which is what makes scripted runs
    byte-reproducible.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.identity = f"hash:{dim}"

    def embed(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise EmptyText("cannot embed empty or whitespace-only text")
        counts = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:8], "big") % self.dim
            counts[bucket] += 1.0
        return normalize(counts)

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class HttpEmbedder:
    """Client for an embedding endpoint.

    Wire format: POST {"model": str, "input": [str]} -> {"vectors": [[float]]}.
    """

    def __init__(self, url: str, model: str = "default", timeout_s: float = 30.0):
        self.url = url
        self.model = model
        self.timeout_s = timeout_s
        self.identity = f"http:{url}"
        self.dim = 0  # discovered on first call

    def ensure_dim(self) -> int:
        if self.dim == 0:
            self.embed("dimension probe")
        return self.dim

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        for text in texts:
            if not text.split():
                raise EmptyText("cannot embed empty or whitespace-only text")
        try:
            resp = requests.post(
                self.url,
                json={"model": self.model, "input": texts},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise ProviderUnavailable(f"embedding endpoint {self.url}: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderUnavailable(
                f"embedding endpoint {self.url}: malformed response payload")
        out = []
        for raw in vectors:
            vec = normalize(np.asarray(raw, dtype=np.float64))
            if self.dim == 0:
                self.dim = vec.shape[0]
            elif vec.shape[0] != self.dim:
                raise ProviderUnavailable(
                    f"embedding endpoint {self.url}: inconsistent dimensions")
            out.append(vec)
        return out


def make_embedder(spec: str) -> HashEmbedder | HttpEmbedder:
    """Build a provider from a config string: "hash:<dim>" or "http:<url>"."""
    if spec.startswith("hash:"):
        try:
            dim = int(spec.split(":", 1)[1])
        except ValueError:
            raise ProviderUnavailable(f"bad hash embedder spec: {spec!r}")
        return HashEmbedder(dim)
    if spec.startswith("http://") or spec.startswith("https://"):
        # the scheme prefix doubles as the selector
        return HttpEmbedder(spec)
    raise ProviderUnavailable(f"unknown embedder spec: {spec!r}")
