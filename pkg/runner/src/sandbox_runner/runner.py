"""Sandboxed execution worker speaking line-delimited JSON.

Reads one request object per stdin line and emits exactly one response
line per request, in order, no matter what the tool source does.  A
ready line is announced on startup so the supervisor can tell a live
worker from a hung one.

Request:  {"mode": "check"|"run", "source": str, "function_name": str,
           "args": {...}, "timeout_ms": int, "memory_cap_mb": int?}
Response: {"ok": bool, "result": any, "error": str|null,
           "stdout": str, "duration_ms": float}

Isolation is best-effort namespace restriction (no file or socket
builtins, imports gated by an allowlist), not a security boundary.
"""

from __future__ import annotations

import argparse
import builtins
import io
import json
import signal
import sys
import time
from contextlib import redirect_stdout

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 10_000

DEFAULT_ALLOWED_IMPORTS = frozenset({
    "math", "cmath", "statistics", "fractions", "decimal", "random",
    "itertools", "functools", "collections", "heapq", "bisect",
    "operator", "string", "re", "json", "datetime", "typing",
})

# no open/exec/eval/input/globals; __import__ is injected per-run
_SAFE_BUILTIN_NAMES = (
    "abs", "all", "any", "bool", "bytearray", "bytes", "callable", "chr",
    "complex", "dict", "divmod", "enumerate", "filter", "float", "format",
    "frozenset", "getattr", "hasattr", "hash", "hex", "int", "isinstance",
    "issubclass", "iter", "len", "list", "map", "max", "min", "next",
    "object", "oct", "ord", "pow", "print", "range", "repr", "reversed",
    "round", "set", "slice", "sorted", "str", "sum", "tuple", "zip",
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException",
    "Exception", "FloatingPointError", "IndexError", "KeyError",
    "LookupError", "MemoryError", "NameError", "NotImplementedError",
    "OverflowError", "RecursionError", "RuntimeError", "StopIteration",
    "TypeError", "ValueError", "ZeroDivisionError",
    "False", "None", "True", "NotImplemented",
)


class ToolTimeout(Exception):
    pass


def _guarded_import(allowed: frozenset[str]):
    def guarded(name, globals=None, locals=None, fromlist=(), level=0):
        root = name.split(".")[0]
        if level != 0 or root not in allowed:
            raise ImportError(f"import of {name!r} is not allowed")
        return builtins.__import__(name, globals, locals, fromlist, level)
    return guarded


def _fresh_namespace(allowed_imports: frozenset[str]) -> dict:
    safe = {name: getattr(builtins, name) for name in _SAFE_BUILTIN_NAMES}
    safe["__import__"] = _guarded_import(allowed_imports)
    return {"__builtins__": safe, "__name__": "__tool__"}


def handle_check(source: str) -> dict:
    """Compile without executing; parse failures are reported in-band."""
    start = time.monotonic()
    try:
        compile(source, "<tool>", "exec")
    except (SyntaxError, ValueError) as exc:
        return {"ok": False, "result": None,
                "error": f"syntax error: {exc.msg if isinstance(exc, SyntaxError) else exc}",
                "stdout": "",
                "duration_ms": (time.monotonic() - start) * 1000.0}
    return {"ok": True, "result": None, "error": None, "stdout": "",
            "duration_ms": (time.monotonic() - start) * 1000.0}


def _apply_memory_cap(cap_mb: int):
    import resource

    soft, hard = resource.getrlimit(resource.RLIMIT_AS)
    resource.setrlimit(resource.RLIMIT_AS, (cap_mb * 1024 * 1024, hard))
    return lambda: resource.setrlimit(resource.RLIMIT_AS, (soft, hard))


def handle_run(obj: dict, allowed_imports: frozenset[str]) -> dict:
    start = time.monotonic()
    buffer = io.StringIO()

    def respond(ok: bool, result=None, error: str | None = None) -> dict:
        return {"ok": ok, "result": result, "error": error,
                "stdout": buffer.getvalue(),
                "duration_ms": (time.monotonic() - start) * 1000.0}

    source = str(obj.get("source") or "")
    function_name = str(obj.get("function_name") or "")
    args = obj.get("args") or {}
    if not isinstance(args, dict):
        return respond(False, error="exception: TypeError: args must be an object")
    timeout_ms = int(obj.get("timeout_ms") or DEFAULT_TIMEOUT_MS)

    try:
        code = compile(source, "<tool>", "exec")
    except (SyntaxError, ValueError) as exc:
        return respond(False, error=f"syntax error: {exc}")

    restore_cap = None
    cap_mb = obj.get("memory_cap_mb")
    if cap_mb:
        restore_cap = _apply_memory_cap(int(cap_mb))

    def on_alarm(signum, frame):
        raise ToolTimeout()

    previous = signal.signal(signal.SIGALRM, on_alarm)
    # the deadline covers top-level execution too: adversarial source may
    # never reach the function call
    signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
    try:
        namespace = _fresh_namespace(allowed_imports)
        with redirect_stdout(buffer):
            exec(code, namespace)
            func = namespace.get(function_name)
            if not callable(func):
                return respond(False, error="function not found")
            result = func(**args)
    except ToolTimeout:
        return respond(False, error="timeout")
    except BaseException as exc:
        return respond(False,
                       error=f"exception: {type(exc).__name__}: {exc}")
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)
        if restore_cap is not None:
            restore_cap()

    try:
        json.dumps(result, allow_nan=False)
    except (TypeError, ValueError):
        return respond(False, error="unserializable")
    return respond(True, result=result)


def handle_request(line: str, allowed_imports: frozenset[str]) -> dict:
    """One response per request line, even for garbage input."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"ok": False, "result": None,
                "error": f"malformed request: {exc}", "stdout": "",
                "duration_ms": 0.0}
    if not isinstance(obj, dict):
        return {"ok": False, "result": None,
                "error": "malformed request: not an object", "stdout": "",
                "duration_ms": 0.0}
    mode = obj.get("mode")
    if mode == "check":
        return handle_check(str(obj.get("source") or ""))
    if mode == "run":
        return handle_run(obj, allowed_imports)
    return {"ok": False, "result": None,
            "error": f"unknown mode: {mode!r}", "stdout": "",
            "duration_ms": 0.0}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--allow", action="append", default=[],
                        metavar="MODULE",
                        help="extend the import allowlist")
    args = parser.parse_args(argv)
    allowed = DEFAULT_ALLOWED_IMPORTS | frozenset(args.allow)

    out = sys.stdout
    out.write(json.dumps({"ready": True, "protocol": PROTOCOL_VERSION}) + "\n")
    out.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            response = handle_request(line, allowed)
        except BaseException as exc:   # invariant: always answer
            response = {"ok": False, "result": None,
                        "error": f"exception: {type(exc).__name__}: {exc}",
                        "stdout": "", "duration_ms": 0.0}
        out.write(json.dumps(response, allow_nan=False) + "\n")
        out.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
