"""Similarity retrieval over the tool library.

Matching is cosine similarity between the query embedding and each
tool's description embedding.  The match decision uses an inclusive
threshold: best score >= tau_ret counts as a hit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .embeddings import EmbeddingProvider
from .errors import DimensionMismatch, ZeroVector
from .registry import ToolLibrary

# (query, ranked candidates) -> reranked candidates; identity by default
Reranker = Callable[[str, list[tuple[str, float]]], list[tuple[str, float]]]


@dataclass(frozen=True)
class RetrievalDecision:
    matched: bool
    tool_id: str | None
    score: float | None   # best score seen; None only for an empty library


def cosine_similarity(a: Sequence[float] | np.ndarray,
                      b: Sequence[float] | np.ndarray) -> float:
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"shape mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.dot(va, vb) / (na * nb))


def score_against_library(library: ToolLibrary,
                          query_vec: np.ndarray) -> list[tuple[str, float]]:
    """All (tool_id, cosine) pairs in creation order."""
    return [(tool.id, cosine_similarity(query_vec, tool.desc_embedding))
            for tool in library.tools_in_order()]


def retrieve_top_k(library: ToolLibrary, embedder: EmbeddingProvider,
                   query: str, k: int,
                   reranker: Reranker | None = None) -> list[tuple[str, float]]:
    """Top-k tools by description similarity, highest first.

    Ties are broken toward the older tool (smaller created_seq).  Returns
    fewer than k entries when the library is smaller; an empty list for an
    empty library.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(library) == 0:
        return []
    query_vec = embedder.embed(query)
    scored = score_against_library(library, query_vec)
    # stable sort on descending score keeps creation order within ties
    ranked = sorted(scored, key=lambda pair: -pair[1])[:k]
    if reranker is not None:
        ranked = reranker(query, ranked)
    return ranked


def decide(library: ToolLibrary, embedder: EmbeddingProvider,
           query: str, tau_ret: float) -> RetrievalDecision:
    """Threshold the best cosine score; the boundary score itself matches."""
    if len(library) == 0:
        return RetrievalDecision(matched=False, tool_id=None, score=None)
    query_vec = embedder.embed(query)
    best_id, best_score = None, -np.inf
    for tool_id, score in score_against_library(library, query_vec):
        if score > best_score:
            best_id, best_score = tool_id, score
    if best_score >= tau_ret:
        return RetrievalDecision(matched=True, tool_id=best_id, score=best_score)
    return RetrievalDecision(matched=False, tool_id=None, score=best_score)


def calibrate_tau(labeled: Sequence[tuple[float, bool]]) -> float:
    """Pick the threshold that maximizes F1 on (score, is_match) pairs.

    Candidate thresholds are the observed scores themselves (a score at
    the threshold counts as predicted-match, mirroring decide).  Ties on
    F1 resolve toward the largest threshold.
    """
    if not labeled:
        raise ValueError("calibrate_tau needs at least one labeled pair")
    best_tau, best_f1 = 0.0, -1.0
    for tau in sorted({score for score, _ in labeled}, reverse=True):
        tp = sum(1 for s, y in labeled if s >= tau and y)
        fp = sum(1 for s, y in labeled if s >= tau and not y)
        fn = sum(1 for s, y in labeled if s < tau and y)
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom else 0.0
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return best_tau
