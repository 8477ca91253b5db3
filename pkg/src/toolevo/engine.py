"""Per-problem control loop: decompose, retrieve or synthesize, verify,
deduplicate, prune, execute the tool chain, fall back when needed.

The loop mutates one library across a problem stream.  Everything it does
is deterministic given a scripted provider, a canned sandbox, and a fixed
config, which is what makes end-to-end runs byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field

from .embeddings import EmbeddingProvider
from .errors import (
    ChainExecutionFailed,
    DecompositionEmpty,
    MalformedDecomposition,
    MalformedToolJson,
    NoFunctionFound,
    ProviderUnavailable,
    SynthesisEmpty,
)
from .prompts import render_fallback_prompt, render_synthesis_prompt, render_toolcall_prompt
from .providers import ModelProvider, user_message
from .registry import ORIGIN_EVOLVED, AtomicTool, ToolLibrary
from .retrieval import retrieve_top_k
from .sandbox import Sandbox, SandboxRequest
from .synthesis import (
    DecompositionPlan,
    ProposedTool,
    SubGoal,
    atomic_decompose,
    decompose,
    first_json_value,
    parse_synthesis_output,
    synthesize_tool,
)
from .verification import VerificationReport, all_finite, dedup_check, verify

logger = logging.getLogger(__name__)

FINAL_CHAIN = "ChainAnswer"
FINAL_FALLBACK = "FallbackAnswer"
FINAL_FAILED = "Failed"

_ANSWER_BLOCK = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_QUANTITY = re.compile(
    r"([a-z][a-z0-9_]*)\s*(?:=|:)\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")
_OUTPUT_NAME = re.compile(r"\b([a-z][a-z0-9]*(?:_[a-z0-9]+)+)\b")


@dataclass
class Problem:
    id: str
    question: str
    gold_answer: dict | None = None     # {"kind": ..., "value": ...}
    domain_tag: str | None = None

    @classmethod
    def from_obj(cls, obj: dict) -> "Problem":
        return cls(
            id=str(obj["id"]),
            question=str(obj["question"]),
            gold_answer=obj.get("gold"),
            domain_tag=obj.get("domain"),
        )


@dataclass
class EngineConfig:
    tau_ret: float = 0.55
    tau_dup: float = 0.8
    top_k: int = 3
    capacity: int = 500
    min_usage: int = 1
    lam: float = 0.0
    temperature: float = 0.3
    sandbox_timeout_ms: int = 10_000

    def validate(self) -> "EngineConfig":
        for name in ("tau_ret", "tau_dup"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.min_usage < 0:
            raise ValueError(f"min_usage must be >= 0, got {self.min_usage}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.sandbox_timeout_ms < 1:
            raise ValueError("sandbox_timeout_ms must be >= 1")
        return self


@dataclass
class Providers:
    model: ModelProvider
    desc_embedder: EmbeddingProvider
    code_embedder: EmbeddingProvider


# --- trace records ---

@dataclass(frozen=True)
class Retrieved:
    tool_id: str
    score: float


@dataclass(frozen=True)
class Evolved:
    tool_id: str


@dataclass(frozen=True)
class DuplicateCredited:
    existing_id: str


@dataclass(frozen=True)
class VerificationFailed:
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class FallbackStep:
    reason: str = ""


@dataclass
class StepRecord:
    subgoal: SubGoal
    action: object
    intermediate_result: object = None
    verification: VerificationReport | None = None


@dataclass
class ExecutionTrace:
    steps: list[StepRecord] = field(default_factory=list)
    final_action: str = FINAL_FAILED


@dataclass
class SolveResult:
    answer: str | None
    trace: ExecutionTrace
    library_before_size: int
    library_after_size: int


@dataclass
class ChainEntry:
    """An executable slot of the chain, aligned to one plan step."""

    step: int
    name: str
    source: str
    description: str
    params: list[str]
    io_description: dict
    tool_id: str | None


def tool_content_id(name: str, source: str) -> str:
    digest = hashlib.sha256(source.encode("utf-8")).hexdigest()[:10]
    return f"{name}-{digest}"


def _entry_from_atomic(step: int, tool: AtomicTool) -> ChainEntry:
    return ChainEntry(
        step=step,
        name=tool.name,
        source=tool.source,
        description=tool.description,
        params=list(tool.test_example.get("input", {}).keys()),
        io_description=dict(tool.io_description),
        tool_id=tool.id,
    )


def _entry_from_proposed(step: int, proposed: ProposedTool,
                         tool_id: str | None) -> ChainEntry:
    return ChainEntry(
        step=step,
        name=proposed.name,
        source=proposed.source,
        description=proposed.text_description,
        params=list(proposed.test_example.get("input", {}).keys()),
        io_description=dict(proposed.io_description),
        tool_id=tool_id,
    )


def _to_atomic(proposed: ProposedTool, providers: Providers) -> AtomicTool:
    description = proposed.text_description or proposed.name.replace("_", " ")
    return AtomicTool(
        id=tool_content_id(proposed.name, proposed.source),
        name=proposed.name,
        description=description,
        io_description=dict(proposed.io_description),
        source=proposed.source,
        test_example={"input": dict(proposed.test_example.get("input", {})),
                      "expected": proposed.test_example.get("result")},
        usage_count=1,
        origin=ORIGIN_EVOLVED,
        created_seq=-1,  # assigned by the library
        desc_embedding=providers.desc_embedder.embed(description),
        code_embedding=providers.code_embedder.embed(proposed.source),
    )


def _pick_for_subgoal(tools: list[ProposedTool], subgoal: SubGoal) -> ProposedTool | None:
    if not tools:
        return None
    for tool in tools:
        if tool.sub_question.strip() == subgoal.description.strip():
            return tool
    return tools[0]


def parse_quantities(text: str) -> dict[str, float]:
    """Pull name = value pairs out of a problem statement."""
    return {name: float(raw) for name, raw in _QUANTITY.findall(text)}


def output_name(io_description: dict) -> str | None:
    """The snake_case identifier naming a tool's output quantity, if any."""
    match = _OUTPUT_NAME.search(str(io_description.get("output", "")))
    return match.group(1) if match else None


def _parse_toolcall_reply(reply: str) -> list[dict]:
    doc = first_json_value(reply, "[")
    if doc is None or not isinstance(doc, list):
        raise ChainExecutionFailed("tool call reply is not a JSON list")
    if len(doc) > 1:
        raise ChainExecutionFailed(f"expected at most one tool call, got {len(doc)}")
    for entry in doc:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ChainExecutionFailed("tool call entry needs a name")
        if not isinstance(entry.get("arguments"), dict):
            raise ChainExecutionFailed("tool call entry needs an arguments object")
    return doc


def _bind_args(entry: ChainEntry, pool: dict[str, object], subgoal: SubGoal,
               provider: ModelProvider, temperature: float) -> dict:
    """Bind call arguments for one chain step.

    Direct route: every parameter name is found among the problem's
    parsed quantities and prior step outputs.  Otherwise the provider is
    asked for a single tool call against a one-entry catalog.
    """
    if entry.params and all(p in pool for p in entry.params):
        return {p: pool[p] for p in entry.params}
    catalog = json.dumps([{
        "name": entry.name,
        "description": entry.description,
        "parameters": entry.params,
        "io_description": entry.io_description,
    }], ensure_ascii=False)
    prompt = render_toolcall_prompt(subgoal.description, catalog)
    reply = provider.complete(user_message(prompt), temperature)
    calls = _parse_toolcall_reply(reply)
    if not calls:
        raise ChainExecutionFailed(
            f"step {subgoal.step}: provider declined to bind {entry.name}")
    call = calls[0]
    if call["name"] != entry.name:
        raise ChainExecutionFailed(
            f"step {subgoal.step}: provider called {call['name']!r}, "
            f"expected {entry.name!r}")
    return call["arguments"]


def execute_chain(problem: Problem, chain: dict[int, ChainEntry],
                  plan: DecompositionPlan, sandbox: Sandbox,
                  provider: ModelProvider, steps: list[StepRecord],
                  temperature: float, timeout_ms: int) -> str:
    """Run the chain tools in plan order, then ask for the final answer.

    Raises ChainExecutionFailed on an empty chain, any sandbox failure,
    a non-finite intermediate value, or a reply without an <answer> block.
    """
    if not chain:
        raise ChainExecutionFailed("empty chain: no executable step")
    pool: dict[str, object] = dict(parse_quantities(problem.question))
    results: dict[int, object] = {}
    for idx, sub in enumerate(plan.subtasks):
        entry = chain.get(sub.step)
        if entry is None:
            continue
        args = _bind_args(entry, pool, sub, provider, temperature)
        response = sandbox.request(SandboxRequest(
            mode="run", source=entry.source, function_name=entry.name,
            args=args, timeout_ms=timeout_ms))
        if not response.ok:
            raise ChainExecutionFailed(f"step {sub.step}: {response.error}")
        if not all_finite(response.result):
            raise ChainExecutionFailed(f"step {sub.step}: non-finite result")
        results[sub.step] = response.result
        steps[idx].intermediate_result = response.result
        name = output_name(entry.io_description)
        if name and isinstance(response.result, (int, float)):
            pool[name] = response.result

    triples = []
    for sub in plan.subtasks:
        triple = {"step": sub.step, "sub_question": sub.description,
                  "code": chain[sub.step].source if sub.step in chain else None}
        if sub.step in results:
            triple["result"] = results[sub.step]
        triples.append(triple)
    prompt = render_synthesis_prompt(problem.question, triples)
    reply = provider.complete(user_message(prompt), temperature)
    try:
        _tools, answer = parse_synthesis_output(reply)
    except MalformedToolJson as exc:
        raise ChainExecutionFailed(f"final reply unparseable: {exc}") from exc
    if answer is None:
        raise ChainExecutionFailed("final reply carried no <answer> block")
    return answer


def fallback(problem: Problem, provider: ModelProvider,
             temperature: float = 0.3) -> str:
    """Single direct-reasoning completion, no tools involved."""
    prompt = render_fallback_prompt(problem.question)
    reply = provider.complete(user_message(prompt), temperature)
    matches = _ANSWER_BLOCK.findall(reply)
    return matches[-1].strip() if matches else reply.strip()


def solve(problem: Problem, library: ToolLibrary, config: EngineConfig,
          providers: Providers, sandbox: Sandbox) -> SolveResult:
    """Solve one problem, mutating the library in place."""
    before = len(library)
    trace = ExecutionTrace()

    def finish(answer: str | None, final_action: str) -> SolveResult:
        trace.final_action = final_action
        return SolveResult(answer=answer, trace=trace,
                           library_before_size=before,
                           library_after_size=len(library))

    def run_fallback() -> SolveResult:
        try:
            return finish(fallback(problem, providers.model, config.temperature),
                          FINAL_FALLBACK)
        except ProviderUnavailable:
            return finish(None, FINAL_FAILED)

    try:
        plan = decompose(problem.question, providers.model, config.temperature)
    except ProviderUnavailable:
        return finish(None, FINAL_FAILED)
    except (MalformedDecomposition, DecompositionEmpty) as exc:
        logger.info("problem %s: decomposition failed (%s), falling back",
                    problem.id, exc)
        return run_fallback()

    chain: dict[int, ChainEntry] = {}
    for sub in plan.subtasks:
        ranked = retrieve_top_k(library, providers.desc_embedder,
                                sub.description, config.top_k)
        best_id, best_score = None, None
        if ranked:
            best_id, best_score = max(ranked, key=lambda pair: pair[1])
        if best_id is not None and best_score >= config.tau_ret:
            library.record_hit(best_id)
            chain[sub.step] = _entry_from_atomic(sub.step, library.tools[best_id])
            trace.steps.append(StepRecord(sub, Retrieved(best_id, best_score)))
            continue

        known_code = {entry.step: entry.source for entry in chain.values()}
        try:
            proposed_tools, _answer = synthesize_tool(
                problem.question, plan, known_code, providers.model,
                config.temperature)
        except ProviderUnavailable:
            return finish(None, FINAL_FAILED)
        except (MalformedToolJson, SynthesisEmpty) as exc:
            trace.steps.append(StepRecord(sub, FallbackStep(str(exc))))
            continue
        proposed = _pick_for_subgoal(proposed_tools, sub)
        if proposed is None:
            trace.steps.append(StepRecord(
                sub, FallbackStep("synthesis produced no tool")))
            continue

        report = verify(proposed, sandbox, timeout_ms=config.sandbox_timeout_ms)
        if not report.overall:
            trace.steps.append(StepRecord(
                sub, VerificationFailed(tuple(report.diagnostics)),
                verification=report))
            continue

        try:
            candidates = atomic_decompose(proposed)
        except NoFunctionFound as exc:
            trace.steps.append(StepRecord(
                sub, VerificationFailed((str(exc),)), verification=report))
            continue

        registered: list[str] = []
        credited: list[str] = []
        for candidate in candidates:
            tool = _to_atomic(candidate, providers)
            decision = dedup_check(tool, library, config.tau_dup)
            if decision.accepted:
                library.register(tool)
                registered.append(tool.id)
            else:
                library.record_hit(decision.nearest_id)
                credited.append(decision.nearest_id)
        library.prune()

        chain[sub.step] = _entry_from_proposed(
            sub.step, proposed, registered[0] if registered else None)
        action = (Evolved(registered[0]) if registered
                  else DuplicateCredited(credited[0]))
        trace.steps.append(StepRecord(sub, action, verification=report))

    try:
        answer = execute_chain(problem, chain, plan, sandbox, providers.model,
                               trace.steps, config.temperature,
                               config.sandbox_timeout_ms)
        return finish(answer, FINAL_CHAIN)
    except ProviderUnavailable:
        return finish(None, FINAL_FAILED)
    except ChainExecutionFailed as exc:
        logger.info("problem %s: chain failed (%s), falling back", problem.id, exc)
        return run_fallback()


@dataclass
class StreamResult:
    results: list[SolveResult]
    library: ToolLibrary
    sizes: list[int]              # library size after each problem


def run_stream(problems: list[Problem], library: ToolLibrary,
               config: EngineConfig, providers: Providers,
               sandbox: Sandbox) -> StreamResult:
    """Fold solve over a problem stream, recording the size trajectory."""
    config.validate()
    results: list[SolveResult] = []
    sizes: list[int] = []
    for problem in problems:
        results.append(solve(problem, library, config, providers, sandbox))
        sizes.append(len(library))
    return StreamResult(results=results, library=library, sizes=sizes)


# --- trace serialization ---

def _action_to_obj(action: object) -> dict:
    if isinstance(action, Retrieved):
        return {"kind": "Retrieved", "tool_id": action.tool_id,
                "score": action.score}
    if isinstance(action, Evolved):
        return {"kind": "Evolved", "tool_id": action.tool_id}
    if isinstance(action, DuplicateCredited):
        return {"kind": "DuplicateCredited", "existing_id": action.existing_id}
    if isinstance(action, VerificationFailed):
        return {"kind": "VerificationFailed",
                "diagnostics": list(action.diagnostics)}
    if isinstance(action, FallbackStep):
        return {"kind": "FallbackStep", "reason": action.reason}
    raise TypeError(f"unknown trace action {action!r}")


def trace_to_obj(problem: Problem, result: SolveResult) -> dict:
    """Stable-key-order JSON view of one solve; timing is deliberately
    excluded so identical runs serialize identically."""
    steps = []
    for record in result.trace.steps:
        obj = {
            "step": record.subgoal.step,
            "subgoal": record.subgoal.description,
            "action": _action_to_obj(record.action),
            "intermediate_result": record.intermediate_result,
        }
        if record.verification is not None:
            obj["verification"] = {
                "syntax_ok": record.verification.syntax_ok,
                "exec_ok": record.verification.exec_ok,
                "domain_ok": record.verification.domain_ok,
                "overall": record.verification.overall,
                "diagnostics": list(record.verification.diagnostics),
            }
        steps.append(obj)
    return {
        "problem_id": problem.id,
        "final_action": result.trace.final_action,
        "answer": result.answer,
        "library_before_size": result.library_before_size,
        "library_after_size": result.library_after_size,
        "steps": steps,
    }


def trace_to_json(problem: Problem, result: SolveResult) -> str:
    return json.dumps(trace_to_obj(problem, result), ensure_ascii=False, indent=1)
