"""Record types held by the memory substrate.

Every record serializes to a flat JSON object via ``to_dict`` (timestamps as
their ISO-prefix string form) and back via ``from_dict``. ``validate`` raises
:class:`InvariantViolation` naming the offending field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import ClassVar

from .errors import InvariantViolation
from .timestamps import Timestamp

MemoryId = str


def _unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise InvariantViolation(name, f"{value!r} outside [0, 1]")


class Record:
    timestamp_fields: ClassVar[tuple[str, ...]] = ()

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Timestamp):
                value = str(value)
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, list):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict):
        kwargs = dict(data)
        for name in cls.timestamp_fields:
            if name in kwargs and kwargs[name] is not None:
                kwargs[name] = Timestamp.parse(kwargs[name])
        return cls(**kwargs)

    def validate(self) -> None:
        pass


@dataclass
class EpisodicTrace(Record):
    id: MemoryId
    content: str
    event_time: Timestamp
    ingest_time: Timestamp
    session_id: str
    speaker: str
    entities: list[str] = field(default_factory=list)
    temporal_expressions: list[tuple[str, Timestamp]] = field(default_factory=list)
    salience: float = 0.0
    access_count: int = 0
    stability: float = 0.5
    consolidated: bool = False

    timestamp_fields: ClassVar[tuple[str, ...]] = ("event_time", "ingest_time")

    def __post_init__(self) -> None:
        self.entities = sorted(set(self.entities))

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["temporal_expressions"] = [[s, str(ts)] for s, ts in self.temporal_expressions]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodicTrace":
        data = dict(data)
        data["temporal_expressions"] = [(s, Timestamp.parse(ts)) for s, ts in data.get("temporal_expressions", [])]
        return super().from_dict(data)

    def validate(self) -> None:
        _unit("salience", self.salience)
        _unit("stability", self.stability)
        if self.access_count < 0:
            raise InvariantViolation("access_count", "negative")
        if not self.content.strip() and not self.entities:
            raise InvariantViolation("content", "content and entities both empty")


@dataclass
class SemanticFact(Record):
    id: MemoryId
    subject: str
    predicate: str
    object: str
    confidence: float
    provenance: list[MemoryId]
    created_at: Timestamp
    updated_at: Timestamp
    superseded_by: MemoryId | None = None

    timestamp_fields: ClassVar[tuple[str, ...]] = ("created_at", "updated_at")

    @property
    def live(self) -> bool:
        return self.superseded_by is None

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    def validate(self) -> None:
        _unit("confidence", self.confidence)
        if not self.provenance:
            raise InvariantViolation("provenance", "must be nonempty")


@dataclass
class TimelineEvent(Record):
    id: MemoryId
    entity: str
    description: str
    at: Timestamp
    trace_ref: MemoryId
    seq: int

    timestamp_fields: ClassVar[tuple[str, ...]] = ("at",)


@dataclass
class SalienceRecord(Record):
    id: MemoryId
    trace_ref: MemoryId
    novelty: float
    conflict: float
    feedback: float
    aggregate: float
    protected: bool = False
    protect_reason: str | None = None

    def validate(self) -> None:
        for name in ("novelty", "conflict", "feedback", "aggregate"):
            _unit(name, getattr(self, name))


@dataclass
class ProceduralPattern(Record):
    id: MemoryId
    key: str
    value: str
    statement: str
    sessions: list[str] = field(default_factory=list)
    support: int = 0
    contradictions: int = 0
    fixed_point: bool = False

    @property
    def domain(self) -> str:
        return self.key.split(".", 1)[0]

    def validate(self) -> None:
        if self.support < 0 or self.contradictions < 0:
            raise InvariantViolation("support", "counts must be nonnegative")
        expected = self.support >= 2 and self.contradictions == 0
        if self.fixed_point != expected:
            raise InvariantViolation("fixed_point", "must equal support>=2 and contradictions==0")


@dataclass
class WmItem(Record):
    summary: str
    source_trace: MemoryId
    inserted_at: Timestamp
    salience: float = 0.0

    timestamp_fields: ClassVar[tuple[str, ...]] = ("inserted_at",)

    def validate(self) -> None:
        _unit("salience", self.salience)


RECORD_TYPES: dict[str, type[Record]] = {
    "episodic": EpisodicTrace,
    "semantic": SemanticFact,
    "timeline": TimelineEvent,
    "salience": SalienceRecord,
    "procedural": ProceduralPattern,
}
