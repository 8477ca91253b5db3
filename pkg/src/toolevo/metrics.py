"""Evaluation metrics: answer judging, tool reuse rates, cumulative
utility, hit histograms, and stratified corpus sampling."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyLibrary, LengthMismatch, UnparseableNumber
from .providers import ModelProvider, user_message
from .registry import ORIGIN_EVOLVED, ORIGIN_PREDEFINED, ToolLibrary

JUDGE_NUMERIC = "NumericLocal"
JUDGE_SYMBOLIC = "ExactSymbolic"
JUDGE_PROVIDER = "ProviderJudge"

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


@dataclass
class EvalRecord:
    problem_id: str
    predicted: str | None
    gold: dict                    # {"kind": ..., "value": ...}
    correct: bool
    judge_mode: str
    diagnostic: str | None = None


@dataclass
class HitHistogram:
    counts: dict[int, int]        # usage_count value -> number of tools
    total_tools: int


def _to_number(value: object, label: str) -> float:
    if isinstance(value, bool):
        raise UnparseableNumber(f"{label} is a boolean, not a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        if _NUMBER.fullmatch(text):
            return float(text)
    raise UnparseableNumber(f"{label} is not a parseable number: {value!r}")


def judge_numeric(predicted_value: object, gold_value: object,
                  rtol: float = 1e-5, atol: float = 1e-8) -> bool:
    """Relative-tolerance match: |p - g| <= max(rtol * |g|, atol)."""
    pred = _to_number(predicted_value, "predicted value")
    gold = _to_number(gold_value, "gold value")
    return abs(pred - gold) <= max(rtol * abs(gold), atol)


def extract_last_number(text: str) -> float:
    """The last parseable number in the text, scientific notation included."""
    matches = _NUMBER.findall(text)
    if not matches:
        raise UnparseableNumber(f"no numeric token in {text[:80]!r}")
    return float(matches[-1])


def _normalize_text(text: str) -> str:
    return " ".join(text.split()).casefold()


_PROVIDER_JUDGE_PROMPT = """You are grading an answer. Reply with exactly "yes" if the predicted answer expresses the same result as the gold answer, otherwise reply with exactly "no".

Gold answer: {gold}
Predicted answer: {predicted}"""


def judge(problem_id: str, predicted: str | None, gold: dict,
          mode: str | None = None, rtol: float = 1e-5, atol: float = 1e-8,
          provider: ModelProvider | None = None) -> EvalRecord:
    """Grade one prediction against its gold answer.

    The mode defaults from gold["kind"]: numeric golds get the local
    numeric judge (last number in the prediction, relative tolerance),
    everything else gets whitespace- and case-normalized exact match.
    Any judging failure yields correct=False with a diagnostic rather
    than an exception.
    """
    kind = str(gold.get("kind", "text"))
    if mode is None:
        mode = JUDGE_NUMERIC if kind == "numeric" else JUDGE_SYMBOLIC
    if predicted is None:
        return EvalRecord(problem_id, None, gold, False, mode, "no prediction")
    diagnostic = None
    correct = False
    if mode == JUDGE_NUMERIC:
        try:
            value = extract_last_number(predicted)
            correct = judge_numeric(value, gold["value"], rtol=rtol, atol=atol)
        except UnparseableNumber as exc:
            diagnostic = str(exc)
    elif mode == JUDGE_SYMBOLIC:
        correct = _normalize_text(predicted) == _normalize_text(str(gold["value"]))
    elif mode == JUDGE_PROVIDER:
        if provider is None:
            diagnostic = "provider judge requested without a provider"
        else:
            prompt = (_PROVIDER_JUDGE_PROMPT
                      .replace("{gold}", str(gold["value"]))
                      .replace("{predicted}", predicted))
            reply = provider.complete(user_message(prompt))
            correct = reply.strip().casefold().startswith("yes")
    else:
        diagnostic = f"unknown judge mode {mode!r}"
    return EvalRecord(problem_id, predicted, gold, correct, mode, diagnostic)


def trr_at_k(library: ToolLibrary, k: int) -> float:
    """Fraction of tools whose hit count reaches k."""
    if len(library) == 0:
        raise EmptyLibrary("reuse rate is undefined for an empty library")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for t in library.tools.values() if t.usage_count >= k)
    return hits / len(library)


def trr_stratified(library: ToolLibrary, k: int) -> dict[str, float | None]:
    """Reuse rate split by origin; None marks an empty stratum (undefined,
    deliberately not zero)."""
    if len(library) == 0:
        raise EmptyLibrary("reuse rate is undefined for an empty library")
    out: dict[str, float | None] = {}
    for key, origin in (("trr_evol", ORIGIN_EVOLVED), ("trr_trans", ORIGIN_PREDEFINED)):
        subset = [t for t in library.tools.values() if t.origin == origin]
        if not subset:
            out[key] = None
        else:
            out[key] = sum(1 for t in subset if t.usage_count >= k) / len(subset)
    return out


def cumulative_utility(records: Sequence[EvalRecord], sizes: Sequence[int],
                       lam: float = 0.0) -> float:
    """Sum over the stream of (solved indicator - lam * library size)."""
    if len(records) != len(sizes):
        raise LengthMismatch(
            f"{len(records)} records vs {len(sizes)} library sizes")
    return float(sum((1.0 if r.correct else 0.0) - lam * s
                     for r, s in zip(records, sizes)))


def hit_histogram(library: ToolLibrary) -> HitHistogram:
    counts: dict[int, int] = {}
    for tool in library.tools.values():
        counts[tool.usage_count] = counts.get(tool.usage_count, 0) + 1
    return HitHistogram(counts=dict(sorted(counts.items())),
                        total_tools=len(library))


_REPORT_BINS = (("0", 0, 0), ("1-2", 1, 2), ("3-4", 3, 4), ("5-9", 5, 9),
                ("10-49", 10, 49), ("50+", 50, None))


def binned_histogram(histogram: HitHistogram) -> dict[str, int]:
    """Reporting view of the exact histogram with coarse hit-count bins."""
    out = {label: 0 for label, _, _ in _REPORT_BINS}
    for hits, n in histogram.counts.items():
        for label, lo, hi in _REPORT_BINS:
            if hits >= lo and (hi is None or hits <= hi):
                out[label] += n
                break
    return out


def _kmeans_plus_plus(points: np.ndarray, k: int,
                      rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centers[0] = points[first]
    dist2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(dist2.sum())
        if total <= 0.0:
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=dist2 / total))
        centers[j] = points[idx]
        dist2 = np.minimum(dist2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray,
           max_iter: int = 100) -> np.ndarray:
    """Plain Lloyd iterations; stops when assignments no longer change."""
    assignments = np.full(points.shape[0], -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_assignments = np.argmin(dists, axis=1)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(centers.shape[0]):
            members = points[assignments == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
    return assignments


def stratified_seed_sample(items: Sequence[tuple[str, np.ndarray]],
                           n_clusters: int, per_cluster: int,
                           seed: int) -> list[str]:
    """Cluster items by embedding, then sample uniformly from each cluster.

    Deterministic for a fixed seed: k-means++ seeding, Lloyd iterations
    capped at 100, then a without-replacement draw of per_cluster ids from
    every non-empty cluster (the whole cluster when it is smaller).
    """
    if not items:
        raise ValueError("cannot sample from an empty item list")
    if n_clusters < 1 or per_cluster < 1:
        raise ValueError("n_clusters and per_cluster must be >= 1")
    rng = np.random.default_rng(seed)
    ids = [item_id for item_id, _ in items]
    points = np.asarray([vec for _, vec in items], dtype=np.float64)
    k = min(n_clusters, len(items))
    centers = _kmeans_plus_plus(points, k, rng)
    assignments = _lloyd(points, centers)
    sampled: list[str] = []
    for j in range(k):
        member_idx = np.flatnonzero(assignments == j)
        if member_idx.size == 0:
            continue
        take = min(per_cluster, member_idx.size)
        chosen = rng.choice(member_idx, size=take, replace=False)
        sampled.extend(ids[int(i)] for i in sorted(chosen))
    return sampled
