"""Soulfulness S = aT + bC + cI over probe suites, and erosion between two scores.

Probe files hold one JSON object per line::

    {"kind": "temporal", "query": "When did I leave Google?", "expected": "2023-06"}
    {"kind": "temporal", "op": "order", "a": ["google", "started job"], "b": ["techstartup", "accepted offer"], "expected": "before"}
    {"kind": "identity", "query": "What was my thesis about?", "expected": ["neural memory models"]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .config import check_soul_weights
from .errors import BadRecord, EmptyProbeSet, InvariantViolation
from .text import tokenize
from .timestamps import TemporalRelation, Timestamp

PROBE_KINDS = ("temporal", "identity")
PROBE_OPS = ("query", "order", "duration")


@dataclass
class Probe:
    kind: str
    expected: object
    query: str | None = None
    op: str = "query"
    a: tuple[str, str] | None = None
    b: tuple[str, str] | None = None

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "expected": self.expected}
        if self.op == "query":
            out["query"] = self.query
        else:
            out.update(op=self.op, a=list(self.a), b=list(self.b))
        return out


@dataclass
class ProbeResult:
    probe: Probe
    answer: object
    correct: bool

    def as_dict(self) -> dict:
        return {"probe": self.probe.as_dict(), "answer": self.answer, "correct": self.correct}


def parse_probe(data, line: int | None = None) -> Probe:
    if not isinstance(data, dict):
        raise BadRecord("probe must be a JSON object", line)
    kind = data.get("kind")
    if kind not in PROBE_KINDS:
        raise BadRecord(f"probe kind must be one of {PROBE_KINDS}, got {kind!r}", line)
    if "expected" not in data:
        raise BadRecord("probe lacks 'expected'", line)
    op = data.get("op", "query")
    if op not in PROBE_OPS or (kind == "identity" and op != "query"):
        raise BadRecord(f"unsupported op {op!r} for {kind} probe", line)
    expected = data["expected"]
    if op == "query":
        query = data.get("query")
        if not isinstance(query, str) or not query.strip():
            raise BadRecord("probe query must be a nonempty string", line)
        if kind == "temporal":
            try:
                Timestamp.parse(str(expected))
            except ValueError as exc:
                raise BadRecord(f"bad expected timestamp: {exc}", line) from None
        elif not isinstance(expected, (str, list)) or not expected:
            raise BadRecord("identity expected must be a term string or list of terms", line)
        return Probe(kind, expected, query=query)
    sides = []
    for name in ("a", "b"):
        side = data.get(name)
        if not (isinstance(side, list) and len(side) == 2 and all(isinstance(x, str) for x in side)):
            raise BadRecord(f"'{name}' must be [entity, pattern]", line)
        sides.append(tuple(side))
    if op == "order" and str(expected).lower() not in {r.value for r in TemporalRelation}:
        raise BadRecord(f"bad expected relation {expected!r}", line)
    if op == "duration" and not isinstance(expected, (int, float)):
        raise BadRecord("duration expected must be a number of days", line)
    return Probe(kind, expected, op=op, a=sides[0], b=sides[1])


def load_probes(path: str | Path) -> list[Probe]:
    probes = []
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise BadRecord(f"invalid JSON: {exc.msg}", n) from None
            probes.append(parse_probe(data, n))
    return probes


def _matches_expected(answer: Timestamp, expected: Timestamp) -> bool:
    if not answer.known or not expected.known:
        return answer.known == expected.known
    try:
        return answer.truncated(expected.granularity) == expected
    except ValueError:  # answer coarser than what the probe asks for
        return False


def run_temporal_probe(engine, probe: Probe) -> ProbeResult:
    arc = engine.storyarc
    if probe.op == "order":
        rel = arc.query_order(probe.a, probe.b)
        return ProbeResult(probe, rel.value, rel.value == str(probe.expected).lower())
    if probe.op == "duration":
        d = arc.query_duration(probe.a, probe.b)
        return ProbeResult(probe, d.days, d.days is not None and abs(d.days - float(probe.expected)) <= 1e-9)
    bundle = engine.retrieve(probe.query)
    if not bundle.temporal_answers:
        return ProbeResult(probe, None, False)
    at = bundle.temporal_answers[0].at
    return ProbeResult(probe, str(at), _matches_expected(at, Timestamp.parse(str(probe.expected))))


def expected_terms(expected) -> list[str]:
    items = [expected] if isinstance(expected, str) else list(expected)
    return [t for item in items for t in tokenize(str(item))]


def run_identity_probe(engine, probe: Probe) -> ProbeResult:
    bundle = engine.retrieve(probe.query)
    text = bundle.top_text()
    if text is None:
        return ProbeResult(probe, None, False)
    have = set(tokenize(text))
    return ProbeResult(probe, text, all(t in have for t in expected_terms(probe.expected)))


def _fraction(results: list[ProbeResult]) -> float:
    return sum(r.correct for r in results) / len(results)


def temporal_coherence(engine, probes: list[Probe]) -> tuple[float, list[ProbeResult]]:
    """Fraction of temporal probes answered at the expected granularity."""
    chosen = [p for p in probes if p.kind == "temporal"]
    if not chosen:
        raise EmptyProbeSet("no temporal probes")
    results = [run_temporal_probe(engine, p) for p in chosen]
    return _fraction(results), results


def identity_preservation(engine, probes: list[Probe]) -> tuple[float, list[ProbeResult]]:
    """Fraction of identity probes whose top evidence contains every expected term."""
    chosen = [p for p in probes if p.kind == "identity"]
    if not chosen:
        raise EmptyProbeSet("no identity probes")
    results = [run_identity_probe(engine, p) for p in chosen]
    return _fraction(results), results


def semantic_consistency(engine) -> float:
    return engine.lobe.consistency()


@dataclass(frozen=True)
class SoulComponents:
    T: float
    C: float
    I: float  # noqa: E741
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self) -> None:
        check_soul_weights(self.weights)
        for name in ("T", "C", "I"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvariantViolation(name, f"{v!r} outside [0, 1]")


def soulfulness(components: SoulComponents) -> float:
    a, b, c = components.weights
    return a * components.T + b * components.C + c * components.I


@dataclass(frozen=True)
class ErosionMeasurement:
    t0_score: float
    t_score: float
    erosion: float


def erosion(s0: float, st: float) -> ErosionMeasurement:
    return ErosionMeasurement(s0, st, s0 - st)


@dataclass
class SoulReport:
    components: SoulComponents
    score: float
    results: list[ProbeResult] = field(default_factory=list)

    def as_dict(self) -> dict:
        c = self.components
        return {"T": c.T, "C": c.C, "I": c.I, "weights": list(c.weights), "S": self.score}


def evaluate(engine, probes: list[Probe]) -> SoulReport:
    """All three components and S for one engine state; read-only."""
    t, t_results = temporal_coherence(engine, probes)
    i, i_results = identity_preservation(engine, probes)
    comps = SoulComponents(t, semantic_consistency(engine), i, tuple(engine.config.soul_weights))
    return SoulReport(comps, soulfulness(comps), t_results + i_results)
