"""Shared test helpers: libraries, tools, and embedding shortcuts."""

from __future__ import annotations

import numpy as np
import pytest

from toolevo.embeddings import HashEmbedder
from toolevo.registry import ORIGIN_EVOLVED, AtomicTool, ToolLibrary

DIM = 64


@pytest.fixture
def embedder() -> HashEmbedder:
    return HashEmbedder(DIM)


def unit_vector(dim: int, axis: int = 0) -> np.ndarray:
    vec = np.zeros(dim)
    vec[axis % dim] = 1.0
    return vec


def random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    vec = rng.normal(size=dim)
    norm = np.linalg.norm(vec)
    while norm == 0.0:
        vec = rng.normal(size=dim)
        norm = np.linalg.norm(vec)
    return vec / norm


def make_tool(tool_id: str, *, name: str | None = None,
              description: str = "a tool", source: str | None = None,
              usage: int = 0, origin: str = ORIGIN_EVOLVED,
              desc_vec: np.ndarray | None = None,
              code_vec: np.ndarray | None = None,
              dim: int = DIM, axis: int = 0,
              test_input: dict | None = None,
              expected: object = None,
              io_output: str = "") -> AtomicTool:
    return AtomicTool(
        id=tool_id,
        name=name or tool_id.replace("-", "_"),
        description=description,
        io_description={"input": "", "output": io_output},
        source=source or f"def {name or tool_id.replace('-', '_')}():\n    return 0\n",
        test_example={"input": test_input or {}, "expected": expected},
        usage_count=usage,
        origin=origin,
        created_seq=-1,
        desc_embedding=desc_vec if desc_vec is not None else unit_vector(dim, axis),
        code_embedding=code_vec if code_vec is not None else unit_vector(dim, axis + 1),
    )


def make_library(tools: list[AtomicTool] | None = None, *, dim: int = DIM,
                 capacity: int = 500, min_usage: int = 1) -> ToolLibrary:
    library = ToolLibrary(provider=f"hash:{dim}", dim=dim, capacity=capacity,
                          min_usage=min_usage)
    for tool in tools or []:
        library.register(tool)
    return library
