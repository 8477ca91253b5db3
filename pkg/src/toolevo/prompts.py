"""Prompt templates and renderers.

The three templates below are wire contracts: downstream parsers and the
golden-file tests assume their exact bytes.  Substitution happens with
str.replace on the declared slot tokens only (never str.format, which
would trip on the literal JSON braces inside the templates).
"""

from __future__ import annotations

import json

DECOMPOSE_SLOT = "{query}"

DECOMPOSE_TEMPLATE = """[SYSTEM]
You are an expert computational scientist with broad interdisciplinary expertise.
You excel at decomposing complex scientific problems into a sequence of programmable computation steps that can be executed by predefined atomic tools.

[TASK]
Decompose the user problem into a list of concrete computational subtasks.
Each subtask must be a specific computation step (not analysis, discussion, or description).
The subtasks must form a coherent execution order: outputs of earlier steps can be used as inputs to later steps. Decompose until the full computation pipeline is covered, but do NOT provide the final numerical answer.

[STRICT OUTPUT FORMAT]
Return STRICT JSON only (no extra text, no Markdown, no comments):
{
  "original_problem": "...",
  "subtasks": [
    {"step": 1, "description": "..."},
    {"step": 2, "description": "..."},
    ...
  ]
}

[USER]
{query}"""

TOOLCALL_PROBLEM_SLOT = "{sub_question_or_operation}"
TOOLCALL_CATALOG_SLOT = "{tool_catalog_with_signatures}"

TOOLCALL_TEMPLATE = """[SYSTEM]
You are a strict tool-calling agent. You MUST respond only by calling one predefined AtomicTool.
Your goal is to select the single most relevant tool from the provided tool catalog and call it.

[CORE RULES]
1) Do NOT answer the question directly. Do NOT do calculations in natural language.
2) Call exactly ONE tool. If no tool matches, return an empty tool-call list.
3) Do NOT invent tools. Only use tools provided by the system.
4) Output MUST be in standard OpenAI tool-call JSON format. No extra text.

[USER]
Problem: {sub_question_or_operation}
Tool catalog: {tool_catalog_with_signatures}"""

SYNTHESIS_QUESTION_SLOT = "{main_question}"
SYNTHESIS_TRIPLES_SLOT = "{(step_i, sub_question_i, code_i)}  # repeated for i=1..n"

SYNTHESIS_TEMPLATE = """[SYSTEM]
You are an expert team composed of specialists from multiple scientific disciplines.
You can perform rigorous interdisciplinary computation by combining step-by-step sub-questions with executable Python code.

[INPUT]
Main question:
{main_question}

Sub-questions (process in order). Each item provides a sub-question and its corresponding code.
If the code is empty / null, treat it as "missing".
{(step_i, sub_question_i, code_i)}  # repeated for i=1..n

[EXECUTION RULES]
1) If a sub-question provides non-empty and valid code, simulate its execution and write down the structured result.
2) If a sub-question has missing code or the provided code cannot solve the sub-question, generate ONE runnable Python function:
   - snake_case function name
   - include a clear docstring with I/O specification and units
   - include a minimal test example
   Then simulate executing your function on the test example.

[NUMBERS AND UNITS]
- Use scientific notation with 6 significant digits for floating-point numbers.
- For probabilities/ratios in [0,1], round to 4 decimal places.
- All physical quantities must include SI units. If units are missing, explicitly state the default assumption.

[STRICT OUTPUT FORMAT]
Part 1: For missing-code sub-questions ONLY, output a JSON list wrapped in <code> ... </code>:
<code>
[
  {
    "sub_question": "...",
    "name": "function_name",
    "code": "full Python function as a string",
    "text_description": "brief function summary",
    "io_description": {"input": "...", "output": "..."},
    "test_example": {"input": {...}, "result": "... or null"},
    "error": "optional"
  }
]
</code>

Part 2: Output the final answer wrapped in <answer> ... </answer>:
<answer>
Plain natural-language conclusion (do not mention "code" or "function").
</answer>

[CONCISENESS]
No extra text is allowed outside <code> and <answer>."""

# Direct-reasoning prompt used when the tool chain cannot produce an answer.
FALLBACK_SLOT = "{query}"

FALLBACK_TEMPLATE = """[SYSTEM]
You are a careful scientific problem solver. Reason step by step and finish with the final result wrapped in <answer> ... </answer>.

[USER]
{query}"""


def render_decompose_prompt(query: str) -> str:
    return DECOMPOSE_TEMPLATE.replace(DECOMPOSE_SLOT, query)


def render_toolcall_prompt(problem: str, catalog: str) -> str:
    return (TOOLCALL_TEMPLATE
            .replace(TOOLCALL_PROBLEM_SLOT, problem)
            .replace(TOOLCALL_CATALOG_SLOT, catalog))


def format_triples(triples: list[dict]) -> str:
    """One JSON object per line, key order as supplied by the caller."""
    return "\n".join(json.dumps(t, ensure_ascii=False) for t in triples)


def render_synthesis_prompt(main_question: str, triples: list[dict]) -> str:
    return (SYNTHESIS_TEMPLATE
            .replace(SYNTHESIS_QUESTION_SLOT, main_question)
            .replace(SYNTHESIS_TRIPLES_SLOT, format_triples(triples)))


def render_fallback_prompt(query: str) -> str:
    return FALLBACK_TEMPLATE.replace(FALLBACK_SLOT, query)
