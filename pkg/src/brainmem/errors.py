"""Exception hierarchy shared by every memory region."""


class EngineError(Exception):
    """Base class for all engine errors."""


class FrozenState(EngineError):
    """A write was attempted while the store is frozen."""

    def __init__(self, operation: str = "write"):
        super().__init__(f"store is frozen; refusing {operation}")
        self.operation = operation


class InvariantViolation(EngineError):
    def __init__(self, field: str, message: str = ""):
        super().__init__(f"invariant violated on {field!r}" + (f": {message}" if message else ""))
        self.field = field


class UnknownId(EngineError, KeyError):
    def __init__(self, memory_id):
        super().__init__(f"unknown memory id {memory_id!r}")
        self.memory_id = memory_id

    def __str__(self) -> str:
        return self.args[0]


class UnknownRef(UnknownId):
    pass


class EmptyContent(EngineError, ValueError):
    pass


class EmptyText(EngineError, ValueError):
    pass


class EmptyQuery(EngineError, ValueError):
    pass


class EmptyProbeSet(EngineError, ValueError):
    pass


class NoKeys(EngineError, ValueError):
    pass


class NotFound(EngineError, LookupError):
    pass


class BadConfidence(EngineError, ValueError):
    pass


class BadK(EngineError, ValueError):
    pass


class BadWeights(EngineError, ValueError):
    pass


class PredicateMismatch(EngineError, ValueError):
    pass


class ArchiveCorrupt(EngineError):
    pass


class VersionMismatch(EngineError):
    pass


class EmbedderUnavailable(EngineError, RuntimeError):
    pass


class ExtractorUnavailable(EngineError, RuntimeError):
    pass


class BadRecord(EngineError, ValueError):
    """Malformed input line (conversation turn or probe)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
