"""Problem decomposition and tool synthesis.

Parsers here are tolerant about wrapping (models love to add prose and
code fences around JSON) but strict about schema: once a JSON payload is
located it must carry the agreed keys with the agreed types.
"""

from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field, replace

from .errors import (
    DecompositionEmpty,
    MalformedDecomposition,
    MalformedToolJson,
    NoFunctionFound,
    SynthesisEmpty,
)
from .prompts import (
    render_decompose_prompt,
    render_synthesis_prompt,
)
from .providers import ModelProvider, user_message

logger = logging.getLogger(__name__)

_SNAKE_CASE = re.compile(r"^[a-z_][a-z0-9_]*$")
_CODE_BLOCK = re.compile(r"<code>(.*?)</code>", re.DOTALL)
_ANSWER_BLOCK = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)


@dataclass(frozen=True)
class SubGoal:
    step: int
    description: str


@dataclass
class DecompositionPlan:
    original_problem: str
    subtasks: list[SubGoal]


@dataclass
class ProposedTool:
    """A candidate tool as emitted by the synthesizer, before verification."""

    sub_question: str
    name: str
    source: str
    text_description: str
    io_description: dict = field(default_factory=lambda: {"input": "", "output": ""})
    test_example: dict = field(default_factory=lambda: {"input": {}, "result": None})
    error: str | None = None


def first_json_value(text: str, opener: str = "{"):
    """Locate and decode the first top-level JSON value opened by `opener`.

    Scans candidate positions so that leading prose, markdown fences, or
    trailing commentary do not break parsing.
    """
    decoder = json.JSONDecoder()
    for pos, char in enumerate(text):
        if char != opener:
            continue
        try:
            value, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            continue
        return value
    return None


def parse_decomposition_json(text: str) -> DecompositionPlan:
    """Parse the analyzer's reply into a plan.

    Steps that arrive non-consecutive (or non-integer-ordered) are
    renumbered 1..n in list order, with a warning; everything else about
    the schema is enforced strictly.
    """
    doc = first_json_value(text, "{")
    if doc is None or not isinstance(doc, dict):
        raise MalformedDecomposition("no JSON object found in decomposition reply")
    if "subtasks" not in doc:
        raise MalformedDecomposition('decomposition JSON is missing "subtasks"')
    raw_subtasks = doc["subtasks"]
    if not isinstance(raw_subtasks, list):
        raise MalformedDecomposition('"subtasks" must be a list')
    if len(raw_subtasks) == 0:
        raise DecompositionEmpty("decomposition produced zero subtasks")
    subtasks: list[SubGoal] = []
    for entry in raw_subtasks:
        if not isinstance(entry, dict):
            raise MalformedDecomposition("each subtask must be a JSON object")
        if "step" not in entry or "description" not in entry:
            raise MalformedDecomposition(
                'each subtask needs "step" and "description"')
        step, description = entry["step"], entry["description"]
        if not isinstance(step, int) or isinstance(step, bool):
            raise MalformedDecomposition(f'subtask "step" must be an integer, got {step!r}')
        if not isinstance(description, str) or not description.strip():
            raise MalformedDecomposition("subtask description must be non-empty text")
        subtasks.append(SubGoal(step=step, description=description.strip()))
    expected = list(range(1, len(subtasks) + 1))
    if [s.step for s in subtasks] != expected:
        logger.warning("renumbering non-consecutive subtask steps %s to 1..%d",
                       [s.step for s in subtasks], len(subtasks))
        subtasks = [SubGoal(step=i, description=s.description)
                    for i, s in enumerate(subtasks, start=1)]
    original = doc.get("original_problem")
    if not isinstance(original, str):
        original = ""
    return DecompositionPlan(original_problem=original, subtasks=subtasks)


def decompose(problem_text: str, provider: ModelProvider,
              temperature: float | None = None) -> DecompositionPlan:
    """Ask the analyzer to split a problem into ordered computation steps."""
    prompt = render_decompose_prompt(problem_text)
    reply = provider.complete(user_message(prompt), temperature)
    return parse_decomposition_json(reply)


def _parse_tool_entry(entry: object) -> ProposedTool:
    if not isinstance(entry, dict):
        raise MalformedToolJson("tool entries must be JSON objects")
    for key in ("name", "code"):
        if key not in entry:
            raise MalformedToolJson(f'tool entry is missing "{key}"')
    name, source = entry["name"], entry["code"]
    if not isinstance(name, str) or not _SNAKE_CASE.match(name):
        raise MalformedToolJson(f"tool name must be snake_case, got {name!r}")
    if not isinstance(source, str) or not source.strip():
        raise MalformedToolJson(f"tool {name!r} has empty code")
    io_desc = entry.get("io_description") or {}
    if not isinstance(io_desc, dict):
        raise MalformedToolJson(f"tool {name!r}: io_description must be an object")
    test_example = entry.get("test_example") or {}
    if not isinstance(test_example, dict):
        raise MalformedToolJson(f"tool {name!r}: test_example must be an object")
    test_input = test_example.get("input") or {}
    if not isinstance(test_input, dict):
        raise MalformedToolJson(f"tool {name!r}: test_example.input must be an object")
    error = entry.get("error")
    return ProposedTool(
        sub_question=str(entry.get("sub_question") or ""),
        name=name,
        source=source,
        text_description=str(entry.get("text_description") or ""),
        io_description={"input": str(io_desc.get("input") or ""),
                        "output": str(io_desc.get("output") or "")},
        test_example={"input": test_input, "result": test_example.get("result")},
        error=error if isinstance(error, str) else None,
    )


def parse_synthesis_output(text: str) -> tuple[list[ProposedTool], str | None]:
    """Split a synthesizer reply into proposed tools and the prose answer.

    The <code> block, when present, must hold a JSON list of tool objects.
    The <answer> block is returned stripped, or None when absent.  A reply
    may legitimately carry either block alone.
    """
    tools: list[ProposedTool] = []
    code_match = _CODE_BLOCK.search(text)
    if code_match:
        payload = code_match.group(1)
        doc = first_json_value(payload, "[")
        if doc is None:
            raise MalformedToolJson("<code> block does not contain a JSON list")
        if not isinstance(doc, list):
            raise MalformedToolJson("<code> payload must be a JSON list")
        tools = [_parse_tool_entry(entry) for entry in doc]
    answer_match = None
    for answer_match in _ANSWER_BLOCK.finditer(text):
        pass
    answer = answer_match.group(1).strip() if answer_match else None
    return tools, answer


def _build_triples(plan: DecompositionPlan, known_code: dict[int, str]) -> list[dict]:
    return [{"step": sub.step,
             "sub_question": sub.description,
             "code": known_code.get(sub.step)}
            for sub in plan.subtasks]


def synthesize_tool(problem_text: str, plan: DecompositionPlan,
                    known_code: dict[int, str], provider: ModelProvider,
                    temperature: float | None = None,
                    ) -> tuple[list[ProposedTool], str | None]:
    """Ask the synthesizer to fill in code for steps that have none.

    known_code maps step number to already-available source; missing steps
    are rendered as null so the model knows which ones to generate.
    Raises SynthesisEmpty when the reply carries neither a tool nor an
    answer.
    """
    prompt = render_synthesis_prompt(problem_text, _build_triples(plan, known_code))
    reply = provider.complete(user_message(prompt), temperature)
    tools, answer = parse_synthesis_output(reply)
    if not tools and answer is None:
        raise SynthesisEmpty("synthesis reply carried neither <code> nor <answer>")
    return tools, answer


def _docstring_first_line(node: ast.FunctionDef | ast.AsyncFunctionDef) -> str:
    doc = ast.get_docstring(node)
    if not doc:
        return ""
    return doc.strip().splitlines()[0].strip()


def atomic_decompose(proposed: ProposedTool,
                     sandbox=None, provider=None) -> list[ProposedTool]:
    """Split a verified tool into per-function atomic candidates.

    Static rule: every top-level function definition becomes one candidate;
    nested helpers stay inside their parent; a single-function source maps
    to itself unchanged.  Multi-function candidates get the module-level
    imports prepended so they stay loadable on their own.  A description is
    formed from the function's docstring first line plus the parent's
    summary.

    When both a provider and a sandbox are given, the provider may propose
    a finer split; it is used only if every returned source passes the
    sandbox syntax check, otherwise the static result stands.
    """
    try:
        tree = ast.parse(proposed.source)
    except SyntaxError as exc:
        raise NoFunctionFound(f"source does not parse: {exc}") from exc
    functions = [node for node in tree.body
                 if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef))]
    if not functions:
        raise NoFunctionFound(f"tool {proposed.name!r} defines no top-level function")
    if len(functions) == 1:
        return [replace(proposed)]

    import_lines = [ast.get_source_segment(proposed.source, node)
                    for node in tree.body
                    if isinstance(node, (ast.Import, ast.ImportFrom))]
    preamble = "".join(line + "\n" for line in import_lines if line)
    candidates: list[ProposedTool] = []
    for node in functions:
        segment = ast.get_source_segment(proposed.source, node)
        docline = _docstring_first_line(node)
        description = " ".join(
            part for part in (docline, proposed.text_description) if part)
        matches_parent = node.name == proposed.name
        candidates.append(ProposedTool(
            sub_question=proposed.sub_question,
            name=node.name,
            source=preamble + (segment or "") + "\n",
            text_description=description or node.name.replace("_", " "),
            io_description=(dict(proposed.io_description) if matches_parent
                            else {"input": "", "output": ""}),
            test_example=(json.loads(json.dumps(proposed.test_example))
                          if matches_parent else {"input": {}, "result": None}),
        ))

    if provider is not None and sandbox is not None:
        refined = _provider_split(proposed, sandbox, provider)
        if refined:
            return refined
    return candidates


_SPLIT_PROMPT = """Split the Python source below into the smallest set of standalone functions.
Return a JSON list wrapped in <code> ... </code> where each entry has the keys
"sub_question", "name", "code", "text_description", "io_description", "test_example".

Source:
{source}"""


def _provider_split(proposed: ProposedTool, sandbox, provider) -> list[ProposedTool] | None:
    from .sandbox import SandboxRequest

    prompt = _SPLIT_PROMPT.replace("{source}", proposed.source)
    try:
        reply = provider.complete(user_message(prompt))
        tools, _ = parse_synthesis_output(reply)
    except Exception:
        return None
    if not tools:
        return None
    for tool in tools:
        response = sandbox.request(SandboxRequest(
            mode="check", source=tool.source, function_name=tool.name,
            args={}, timeout_ms=10_000))
        if not response.ok:
            return None
    return tools
