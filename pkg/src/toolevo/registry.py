"""Evolving tool library: storage, usage accounting, capacity pruning, snapshots.

The library is the mutable state the engine threads through a problem
stream.  Tools are atomic (one function each), carry unit-norm description
and code embeddings, and keep a usage count that doubles as the reuse
signal for pruning and for the reuse-rate metrics.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .embeddings import UNIT_NORM_TOL
from .errors import (
    CorruptSnapshot,
    DuplicateId,
    InvalidTool,
    ProviderMismatch,
    UnknownTool,
)

ORIGIN_PREDEFINED = "Predefined"
ORIGIN_EVOLVED = "Evolved"

_SNAKE_CASE = re.compile(r"^[a-z_][a-z0-9_]*$")

# Exact field order of a serialized tool object.  Snapshots of identical
# libraries must be byte-identical, so this order is load-bearing.
_TOOL_FIELDS = (
    "id", "name", "description", "io_description", "source", "test_example",
    "usage_count", "origin", "created_seq", "desc_embedding", "code_embedding",
)


@dataclass
class AtomicTool:
    id: str
    name: str
    description: str
    io_description: dict          # {"input": str, "output": str}
    source: str
    test_example: dict            # {"input": {...kwargs...}, "expected": value or None}
    usage_count: int
    origin: str
    created_seq: int
    desc_embedding: np.ndarray
    code_embedding: np.ndarray

    def copy(self) -> "AtomicTool":
        return replace(
            self,
            io_description=dict(self.io_description),
            test_example=json.loads(json.dumps(self.test_example)),
            desc_embedding=self.desc_embedding.copy(),
            code_embedding=self.code_embedding.copy(),
        )


def _validate_embedding(vec: np.ndarray, dim: int, label: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise InvalidTool(f"{label} must be a 1-d vector of dimension {dim}")
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise InvalidTool(f"{label} must be unit-norm, got |v| = {norm!r}")
    return arr


def _validate_tool(tool: AtomicTool, dim: int) -> None:
    if not tool.id:
        raise InvalidTool("tool id must be non-empty")
    if not tool.name or not _SNAKE_CASE.match(tool.name):
        raise InvalidTool(f"tool name must be snake_case, got {tool.name!r}")
    if not tool.source.strip():
        raise InvalidTool("tool source must be non-empty")
    if tool.origin not in (ORIGIN_PREDEFINED, ORIGIN_EVOLVED):
        raise InvalidTool(f"unknown origin {tool.origin!r}")
    if tool.usage_count < 0:
        raise InvalidTool("usage_count must be >= 0")
    if not isinstance(tool.io_description, dict):
        raise InvalidTool("io_description must be a mapping")
    if not isinstance(tool.test_example, dict) or not isinstance(
            tool.test_example.get("input", {}), dict):
        raise InvalidTool("test_example.input must be a mapping of kwargs")
    tool.desc_embedding = _validate_embedding(tool.desc_embedding, dim, "desc_embedding")
    tool.code_embedding = _validate_embedding(tool.code_embedding, dim, "code_embedding")


@dataclass
class ToolLibrary:
    """Capacity-bounded tool store keyed by id, ordered by creation."""

    provider: str
    dim: int
    capacity: int = 500
    min_usage: int = 1
    tools: dict[str, AtomicTool] = field(default_factory=dict)
    _next_seq: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def __len__(self) -> int:
        return len(self.tools)

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self.tools

    def tools_in_order(self) -> list[AtomicTool]:
        return sorted(self.tools.values(), key=lambda t: t.created_seq)

    def register(self, tool: AtomicTool) -> AtomicTool:
        """Add a tool, assigning its creation sequence number.

        The caller sets the initial usage_count (a freshly evolved tool
        enters with 1, a preloaded tool usually with 0).
        """
        if tool.id in self.tools:
            raise DuplicateId(f"tool id already registered: {tool.id!r}")
        tool.created_seq = self._next_seq
        _validate_tool(tool, self.dim)
        self._next_seq += 1
        self.tools[tool.id] = tool
        return tool

    def record_hit(self, tool_id: str) -> int:
        tool = self.tools.get(tool_id)
        if tool is None:
            raise UnknownTool(f"no tool with id {tool_id!r}")
        tool.usage_count += 1
        return tool.usage_count

    def prune(self) -> list[str]:
        """Enforce the capacity bound; returns removed ids.

        Phase 1 applies the usage rule literally: only when the library
        exceeds capacity, every tool with usage_count < min_usage goes.
        Phase 2 keeps removing the lowest-usage tools (ties broken by
        smallest created_seq) until the size is exactly the capacity.
        Running prune on a within-capacity library is a no-op.
        """
        removed: list[str] = []
        if len(self.tools) > self.capacity:
            for tool in self.tools_in_order():
                if tool.usage_count < self.min_usage:
                    del self.tools[tool.id]
                    removed.append(tool.id)
        if len(self.tools) > self.capacity:
            excess = len(self.tools) - self.capacity
            victims = sorted(self.tools.values(),
                             key=lambda t: (t.usage_count, t.created_seq))
            for tool in victims[:excess]:
                del self.tools[tool.id]
                removed.append(tool.id)
        return removed

    # --- snapshots ---

    def save_snapshot(self) -> bytes:
        doc = {
            "provider": self.provider,
            "dim": self.dim,
            "capacity": self.capacity,
            "min_usage": self.min_usage,
            "tools": [self._tool_to_obj(t) for t in self.tools_in_order()],
        }
        return (json.dumps(doc, ensure_ascii=False, indent=1) + "\n").encode("utf-8")

    @staticmethod
    def _tool_to_obj(tool: AtomicTool) -> dict:
        return {
            "id": tool.id,
            "name": tool.name,
            "description": tool.description,
            "io_description": tool.io_description,
            "source": tool.source,
            "test_example": tool.test_example,
            "usage_count": tool.usage_count,
            "origin": tool.origin,
            "created_seq": tool.created_seq,
            "desc_embedding": [float(x) for x in tool.desc_embedding],
            "code_embedding": [float(x) for x in tool.code_embedding],
        }

    @classmethod
    def load_snapshot(cls, data: bytes,
                      expected_provider: str | None = None) -> "ToolLibrary":
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptSnapshot(f"snapshot is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise CorruptSnapshot("snapshot root must be an object")
        try:
            provider = doc["provider"]
            dim = doc["dim"]
            capacity = doc["capacity"]
            min_usage = doc["min_usage"]
            tool_objs = doc["tools"]
        except KeyError as exc:
            raise CorruptSnapshot(f"snapshot missing field {exc}") from exc
        if not isinstance(provider, str) or not isinstance(dim, int):
            raise CorruptSnapshot("snapshot provider/dim have wrong types")
        if not isinstance(capacity, int) or not isinstance(min_usage, int):
            raise CorruptSnapshot("snapshot capacity/min_usage have wrong types")
        if not isinstance(tool_objs, list):
            raise CorruptSnapshot("snapshot tools must be a list")
        if expected_provider is not None and provider != expected_provider:
            raise ProviderMismatch(
                f"snapshot was written under provider {provider!r}, "
                f"expected {expected_provider!r}")
        try:
            library = cls(provider=provider, dim=dim, capacity=capacity,
                          min_usage=min_usage)
        except ValueError as exc:
            raise CorruptSnapshot(str(exc)) from exc
        seqs: set[int] = set()
        for obj in tool_objs:
            if not isinstance(obj, dict):
                raise CorruptSnapshot("tool entries must be objects")
            missing = [k for k in _TOOL_FIELDS if k not in obj]
            if missing:
                raise CorruptSnapshot(f"tool entry missing fields: {missing}")
            tool = AtomicTool(
                id=obj["id"],
                name=obj["name"],
                description=obj["description"],
                io_description=obj["io_description"],
                source=obj["source"],
                test_example=obj["test_example"],
                usage_count=obj["usage_count"],
                origin=obj["origin"],
                created_seq=obj["created_seq"],
                desc_embedding=np.asarray(obj["desc_embedding"], dtype=np.float64),
                code_embedding=np.asarray(obj["code_embedding"], dtype=np.float64),
            )
            if not isinstance(tool.created_seq, int) or tool.created_seq < 0:
                raise CorruptSnapshot(f"bad created_seq on tool {tool.id!r}")
            if tool.created_seq in seqs:
                raise CorruptSnapshot(f"duplicate created_seq {tool.created_seq}")
            seqs.add(tool.created_seq)
            if tool.id in library.tools:
                raise CorruptSnapshot(f"duplicate tool id {tool.id!r}")
            try:
                _validate_tool(tool, dim)
            except InvalidTool as exc:
                raise CorruptSnapshot(f"tool {tool.id!r}: {exc}") from exc
            library.tools[tool.id] = tool
        library.tools = {t.id: t for t in library.tools_in_order()}
        library._next_seq = max(seqs) + 1 if seqs else 0
        return library
