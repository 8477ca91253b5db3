"""Sandbox wire protocol: request/response types, a subprocess supervisor,
and a canned stub for tests.

Requests and responses travel as single JSON lines over the runner's
stdin/stdout.  The supervisor enforces a hard deadline on top of the
runner's own timeout: if no response line arrives within timeout + grace,
the runner process is killed and a synthetic timeout response is returned.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import SandboxUnavailable

PROTOCOL_VERSION = 1
GRACE_MS = 2000
READY_DEADLINE_S = 10.0


@dataclass
class SandboxRequest:
    mode: str                      # "check" or "run"
    source: str
    function_name: str
    args: dict
    timeout_ms: int
    memory_cap_mb: int | None = None

    def to_obj(self) -> dict:
        obj = {
            "mode": self.mode,
            "source": self.source,
            "function_name": self.function_name,
            "args": self.args,
            "timeout_ms": self.timeout_ms,
        }
        if self.memory_cap_mb is not None:
            obj["memory_cap_mb"] = self.memory_cap_mb
        return obj


@dataclass
class SandboxResponse:
    ok: bool
    result: object = None
    error: str | None = None
    stdout: str = ""
    duration_ms: float = 0.0

    @classmethod
    def from_obj(cls, obj: dict) -> "SandboxResponse":
        ok = bool(obj.get("ok"))
        error = obj.get("error")
        if not ok and not error:
            error = "unknown error"
        return cls(
            ok=ok,
            result=obj.get("result"),
            error=error,
            stdout=str(obj.get("stdout") or ""),
            duration_ms=float(obj.get("duration_ms") or 0.0),
        )


class Sandbox(Protocol):
    def request(self, req: SandboxRequest) -> SandboxResponse: ...

    def close(self) -> None: ...


@dataclass
class StubRule:
    mode: str
    function_name: str | None      # None matches any function
    response: SandboxResponse


class StubSandbox:
    """Serves canned responses; first rule matching (mode, function_name) wins."""

    def __init__(self, rules: list[StubRule] | None = None):
        self.rules: list[StubRule] = list(rules or [])
        self.requests: list[SandboxRequest] = []

    def add(self, mode: str, function_name: str | None,
            response: SandboxResponse) -> "StubSandbox":
        self.rules.append(StubRule(mode, function_name, response))
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "StubSandbox":
        try:
            entries = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SandboxUnavailable(f"cannot load stub rules {path}: {exc}") from exc
        if not isinstance(entries, list):
            raise SandboxUnavailable(f"stub rules {path} must be a JSON list")
        rules = []
        for entry in entries:
            if not isinstance(entry, dict) or "mode" not in entry or "response" not in entry:
                raise SandboxUnavailable(
                    f"stub rules {path}: each entry needs mode and response")
            rules.append(StubRule(
                mode=entry["mode"],
                function_name=entry.get("function_name"),
                response=SandboxResponse.from_obj(entry["response"]),
            ))
        return cls(rules)

    def request(self, req: SandboxRequest) -> SandboxResponse:
        self.requests.append(req)
        for rule in self.rules:
            if rule.mode != req.mode:
                continue
            if rule.function_name is not None and rule.function_name != req.function_name:
                continue
            return rule.response
        return SandboxResponse(
            ok=False, error=f"no stub rule for {req.mode}:{req.function_name}")

    def close(self) -> None:
        pass


class SubprocessSandbox:
    """Supervises a runner subprocess speaking line-delimited JSON.

    The runner announces {"ready": true, "protocol": 1} on startup.  One
    request line yields exactly one response line.  A runner that blows
    its deadline (or dies mid-request) is killed and respawned; the caller
    sees an in-band error response, never a hung call.
    """

    def __init__(self, cmd: list[str], grace_ms: int = GRACE_MS):
        if not cmd:
            raise SandboxUnavailable("empty sandbox command")
        self.cmd = list(cmd)
        self.grace_ms = grace_ms
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._spawn()

    def _spawn(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SandboxUnavailable(f"cannot start sandbox {self.cmd}: {exc}") from exc
        self._lines = queue.Queue()
        reader = threading.Thread(target=self._read_lines, args=(self._proc,),
                                  daemon=True)
        reader.start()
        try:
            ready_line = self._lines.get(timeout=READY_DEADLINE_S)
        except queue.Empty:
            self._kill()
            raise SandboxUnavailable(f"sandbox {self.cmd} never announced readiness")
        try:
            ready = json.loads(ready_line) if ready_line else {}
        except json.JSONDecodeError:
            ready = {}
        if not ready.get("ready") or ready.get("protocol") != PROTOCOL_VERSION:
            self._kill()
            raise SandboxUnavailable(
                f"sandbox {self.cmd} sent a bad handshake: {ready_line!r}")

    def _read_lines(self, proc: subprocess.Popen) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)  # EOF marker

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass
        self._proc = None

    def request(self, req: SandboxRequest) -> SandboxResponse:
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()
        assert self._proc is not None and self._proc.stdin is not None
        line = json.dumps(req.to_obj(), ensure_ascii=False)
        start = time.monotonic()
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._kill()
            return SandboxResponse(ok=False, error="sandbox process went away")
        deadline_s = (req.timeout_ms + self.grace_ms) / 1000.0
        try:
            reply = self._lines.get(timeout=deadline_s)
        except queue.Empty:
            self._kill()
            return SandboxResponse(
                ok=False, error="timeout",
                duration_ms=(time.monotonic() - start) * 1000.0)
        if reply is None:  # runner died without answering
            self._kill()
            return SandboxResponse(ok=False, error="sandbox process went away")
        try:
            obj = json.loads(reply)
        except json.JSONDecodeError:
            self._kill()
            return SandboxResponse(ok=False, error="sandbox sent malformed JSON")
        return SandboxResponse.from_obj(obj)

    def close(self) -> None:
        if self._proc is not None and self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        self._kill()


def make_sandbox(spec: str) -> Sandbox:
    """Build a sandbox from "stub:<rules.json>" or "cmd:<command line>"."""
    if spec.startswith("stub:"):
        return StubSandbox.from_file(spec.split(":", 1)[1])
    if spec.startswith("cmd:"):
        import shlex

        words = shlex.split(spec.split(":", 1)[1])
        return SubprocessSandbox(words)
    raise SandboxUnavailable(f"unknown sandbox spec: {spec!r}")
