"""Test-time tool evolution: decompose problems, retrieve or synthesize
verified atomic tools, and evolve a capacity-bounded library over a
problem stream."""

from .engine import EngineConfig, Problem, Providers, SolveResult, run_stream, solve
from .registry import AtomicTool, ToolLibrary

__all__ = [
    "AtomicTool",
    "EngineConfig",
    "Problem",
    "Providers",
    "SolveResult",
    "ToolLibrary",
    "run_stream",
    "solve",
]

__version__ = "0.1.0"
