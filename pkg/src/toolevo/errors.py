"""Exception types shared across the package."""


class ToolEvoError(Exception):
    """Base class for every error raised by this package."""


# --- library / snapshots ---

class DuplicateId(ToolEvoError):
    pass


class InvalidTool(ToolEvoError):
    pass


class UnknownTool(ToolEvoError):
    pass


class CorruptSnapshot(ToolEvoError):
    pass


class ProviderMismatch(CorruptSnapshot):
    """Snapshot was produced under a different embedding provider or dimension."""


# --- embeddings / retrieval ---

class EmptyText(ToolEvoError):
    pass


class ProviderUnavailable(ToolEvoError):
    pass


class DimensionMismatch(ToolEvoError):
    pass


class ZeroVector(ToolEvoError):
    pass


# --- model providers ---

class TranscriptMiss(ToolEvoError):
    """A scripted provider was asked for a prompt it has no recorded response for."""


# --- synthesis / parsing ---

class MalformedDecomposition(ToolEvoError):
    pass


class DecompositionEmpty(ToolEvoError):
    pass


class MalformedToolJson(ToolEvoError):
    pass


class SynthesisEmpty(ToolEvoError):
    pass


class NoFunctionFound(ToolEvoError):
    pass


# --- sandbox / execution ---

class SandboxUnavailable(ToolEvoError):
    """The sandbox process could not be started or has gone away.

    Distinct from a verification report that merely failed.
    """


class ChainExecutionFailed(ToolEvoError):
    pass


# --- metrics ---

class EmptyLibrary(ToolEvoError):
    pass


class UnparseableNumber(ToolEvoError):
    pass


class LengthMismatch(ToolEvoError):
    pass
