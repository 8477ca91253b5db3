"""Tool verification gates and duplicate screening.

A tool is admitted only when three gates all pass, evaluated left to
right with short-circuiting: syntax (the sandbox can parse the source),
execution (the bundled test example runs without error), and domain
sanity (the result is JSON-serializable, numerically finite, and matches
the expected value when one was supplied).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .registry import AtomicTool, ToolLibrary
from .retrieval import cosine_similarity
from .sandbox import Sandbox, SandboxRequest
from .synthesis import ProposedTool

DEFAULT_TIMEOUT_MS = 10_000
EXPECTED_RTOL = 1e-5


@dataclass
class VerificationReport:
    syntax_ok: bool = False
    exec_ok: bool = False
    domain_ok: bool = False
    diagnostics: list[str] = field(default_factory=list)
    durations_ms: dict[str, float] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return self.syntax_ok and self.exec_ok and self.domain_ok


@dataclass(frozen=True)
class DedupDecision:
    accepted: bool
    nearest_id: str | None
    score: float | None


def all_finite(value: object) -> bool:
    """True when no float anywhere inside value is NaN or infinite."""
    if isinstance(value, bool):
        return True
    if isinstance(value, float):
        return math.isfinite(value)
    if isinstance(value, (int, str)) or value is None:
        return True
    if isinstance(value, (list, tuple)):
        return all(all_finite(v) for v in value)
    if isinstance(value, dict):
        return all(all_finite(v) for v in value.values())
    return False


def _numbers_match(expected: object, actual: object, rtol: float = EXPECTED_RTOL,
                   atol: float = 1e-8) -> bool:
    try:
        exp = float(expected)   # type: ignore[arg-type]
        act = float(actual)     # type: ignore[arg-type]
    except (TypeError, ValueError):
        return expected == actual
    return abs(act - exp) <= max(rtol * abs(exp), atol)


def verify(tool: ProposedTool, sandbox: Sandbox,
           timeout_ms: int = DEFAULT_TIMEOUT_MS,
           memory_cap_mb: int | None = None) -> VerificationReport:
    """Run the three admission gates against the sandbox.

    A sandbox that cannot be reached raises SandboxUnavailable from the
    transport layer; a report with overall == False always means the tool
    itself failed a gate.
    """
    report = VerificationReport()

    start = time.monotonic()
    check = sandbox.request(SandboxRequest(
        mode="check", source=tool.source, function_name=tool.name,
        args={}, timeout_ms=timeout_ms, memory_cap_mb=memory_cap_mb))
    report.durations_ms["syntax"] = (time.monotonic() - start) * 1000.0
    report.syntax_ok = check.ok
    if not check.ok:
        report.diagnostics.append(f"syntax gate: {check.error}")
        return report

    start = time.monotonic()
    run = sandbox.request(SandboxRequest(
        mode="run", source=tool.source, function_name=tool.name,
        args=tool.test_example.get("input", {}), timeout_ms=timeout_ms,
        memory_cap_mb=memory_cap_mb))
    report.durations_ms["exec"] = (time.monotonic() - start) * 1000.0
    # An unserializable result means the call itself succeeded; that
    # failure belongs to the domain gate, not the execution gate.
    if run.error == "unserializable":
        report.exec_ok = True
        report.domain_ok = False
        report.diagnostics.append("domain gate: result is not JSON-serializable")
        return report
    report.exec_ok = run.ok
    if not run.ok:
        report.diagnostics.append(f"exec gate: {run.error}")
        return report

    start = time.monotonic()
    domain_ok = True
    if not all_finite(run.result):
        domain_ok = False
        report.diagnostics.append("domain gate: result contains NaN or infinity")
    expected = tool.test_example.get("result")
    if domain_ok and expected is not None:
        if not _numbers_match(expected, run.result):
            domain_ok = False
            report.diagnostics.append(
                f"domain gate: result {run.result!r} does not match "
                f"expected {expected!r}")
    report.domain_ok = domain_ok
    report.durations_ms["domain"] = (time.monotonic() - start) * 1000.0
    return report


def dedup_check(candidate: AtomicTool, library: ToolLibrary,
                tau_dup: float) -> DedupDecision:
    """Accept a candidate only when its nearest code neighbor is strictly
    below tau_dup; a candidate sitting exactly at the threshold is rejected
    and the credit goes to the existing tool."""
    nearest_id, nearest_score = None, -math.inf
    for tool in library.tools_in_order():
        score = cosine_similarity(candidate.code_embedding, tool.code_embedding)
        if score > nearest_score:
            nearest_id, nearest_score = tool.id, score
    if nearest_id is None:
        return DedupDecision(accepted=True, nearest_id=None, score=None)
    if nearest_score < tau_dup:
        return DedupDecision(accepted=True, nearest_id=nearest_id, score=nearest_score)
    return DedupDecision(accepted=False, nearest_id=nearest_id, score=nearest_score)
