"""Model providers: a scripted replay mock and a minimal HTTP client.

A provider takes chat messages and returns completion text.  The scripted
provider replays canned responses keyed by the SHA-256 of the concatenated
prompt text, which makes full engine runs reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import ProviderUnavailable, TranscriptMiss

DEFAULT_TEMPERATURE = 0.3


def prompt_key(messages: list[dict]) -> str:
    concatenated = "".join(m["content"] for m in messages)
    return hashlib.sha256(concatenated.encode("utf-8")).hexdigest()


def user_message(text: str) -> list[dict]:
    return [{"role": "user", "content": text}]


@dataclass
class ModelTranscript:
    """Append-only log of every exchange a provider served."""

    provider_id: str
    temperature: float
    entries: list[tuple[str, str, str]] = field(default_factory=list)

    def record(self, role: str, request_text: str, response_text: str) -> None:
        self.entries.append((role, request_text, response_text))


class ModelProvider(Protocol):
    identity: str
    transcript: ModelTranscript

    def complete(self, messages: list[dict], temperature: float | None = None) -> str: ...


class ScriptedProvider:
    """Replays responses from a mapping of sha256(prompt) -> response text."""

    def __init__(self, responses: dict[str, str] | None = None,
                 temperature: float = DEFAULT_TEMPERATURE):
        self.identity = "scripted"
        self.responses = dict(responses or {})
        self.temperature = temperature
        self.transcript = ModelTranscript(self.identity, temperature)

    def add(self, prompt_text: str, response_text: str) -> None:
        """Convenience for building fixtures from plain prompt text."""
        key = prompt_key(user_message(prompt_text))
        self.responses[key] = response_text

    @classmethod
    def from_file(cls, path: str | Path,
                  temperature: float = DEFAULT_TEMPERATURE) -> "ScriptedProvider":
        try:
            raw = Path(path).read_text(encoding="utf-8")
            mapping = json.loads(raw)
        except (OSError, json.JSONDecodeError) as exc:
            raise ProviderUnavailable(f"cannot load scripted transcript {path}: {exc}") from exc
        if not isinstance(mapping, dict) or not all(
                isinstance(v, str) for v in mapping.values()):
            raise ProviderUnavailable(
                f"scripted transcript {path} must map prompt hashes to strings")
        return cls(mapping, temperature)

    def complete(self, messages: list[dict], temperature: float | None = None) -> str:
        key = prompt_key(messages)
        if key not in self.responses:
            head = "".join(m["content"] for m in messages)[:120]
            raise TranscriptMiss(
                f"no scripted response for prompt {key[:12]}... starting {head!r}")
        response = self.responses[key]
        request_text = "".join(m["content"] for m in messages)
        self.transcript.record(messages[-1]["role"], request_text, response)
        return response


class HttpModelProvider:
    """Client for a completion endpoint.

    Wire format: POST {"messages": [{"role", "content"}], "temperature": float}
    -> {"content": str}.
    """

    def __init__(self, url: str, temperature: float = DEFAULT_TEMPERATURE,
                 timeout_s: float = 120.0):
        self.url = url
        self.identity = f"http:{url}"
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.transcript = ModelTranscript(self.identity, temperature)

    def complete(self, messages: list[dict], temperature: float | None = None) -> str:
        import requests

        temp = self.temperature if temperature is None else temperature
        try:
            resp = requests.post(
                self.url,
                json={"messages": messages, "temperature": temp},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            payload = resp.json()
            content = payload["content"]
        except Exception as exc:
            raise ProviderUnavailable(f"model endpoint {self.url}: {exc}") from exc
        if not isinstance(content, str):
            raise ProviderUnavailable(f"model endpoint {self.url}: non-string content")
        request_text = "".join(m["content"] for m in messages)
        self.transcript.record(messages[-1]["role"], request_text, content)
        return content


def make_model_provider(spec: str,
                        temperature: float = DEFAULT_TEMPERATURE) -> ScriptedProvider | HttpModelProvider:
    """Build a provider from "scripted:<path>" or an http(s) URL."""
    if spec.startswith("scripted:"):
        return ScriptedProvider.from_file(spec.split(":", 1)[1], temperature)
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpModelProvider(spec, temperature)
    raise ProviderUnavailable(f"unknown model provider spec: {spec!r}")
