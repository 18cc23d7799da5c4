"""Semantic memory: confidence-weighted facts with moving-average revision and supersession."""

from __future__ import annotations

import math

from .errors import BadConfidence, InvariantViolation, PredicateMismatch
from .records import MemoryId, SemanticFact
from .substrate import Substrate, id_index
from .text import normalize_entity
from .timestamps import TemporalRelation, Timestamp

Triple = tuple[str, str, str]


def ema(previous: float, evidence: float, lam: float) -> float:
    """One revision step: (1 - lam) * previous + lam * evidence."""
    return (1.0 - lam) * previous + lam * evidence


def normalize_triple(triple: Triple) -> Triple:
    s, p, o = (normalize_entity(x) for x in triple)
    if not (s and p and o):
        raise InvariantViolation("triple", f"empty component in {triple!r}")
    return s, p, o


def _check_confidence(value: float) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value) or not 0.0 <= value <= 1.0:
        raise BadConfidence(f"evidence confidence {value!r} outside [0, 1]")


class TemporalLobe:
    def __init__(self, store: Substrate):
        self.store = store

    @property
    def lam(self) -> float:
        return self.store.config.ema_lambda

    def _live_matching(self, triple: Triple) -> SemanticFact | None:
        s, p, o = triple
        hits = self.store.scan("semantic", lambda f: f.live, subject=s, predicate=p, object=o)
        return hits[-1] if hits else None

    def upsert(self, triple: Triple, evidence: float, provenance: MemoryId,
               at: Timestamp | None = None) -> tuple[SemanticFact, bool]:
        """Insert or revise a fact; returns ``(fact, created)``.

        A live fact with the same triple is revised by the moving average.
        Otherwise a new fact is inserted and conflicting live facts on the same
        (subject, predicate) are resolved: the newer evidence supersedes the
        older one, and incomparable timestamps leave both live.
        """
        _check_confidence(evidence)
        triple = normalize_triple(triple)
        at = at or Timestamp.unknown()
        with self.store.lock:
            self.store.check_writable("upsert_fact")
            existing = self._live_matching(triple)
            if existing is not None:
                prov = existing.provenance if provenance in existing.provenance else existing.provenance + [provenance]
                updated = existing.updated_at
                if not updated.known or at.compare(updated) is TemporalRelation.AFTER:
                    updated = at
                fact = self.store.update(
                    "semantic", existing.id,
                    confidence=min(1.0, max(0.0, ema(existing.confidence, evidence, self.lam))),
                    provenance=prov, updated_at=updated,
                )
                return fact, False
            fact = SemanticFact("", *triple, confidence=float(evidence), provenance=[provenance],
                                created_at=at, updated_at=at)
            self.store.put_record("semantic", fact)
            for other in self.detect_conflicts(triple):
                if other.id == fact.id:
                    continue
                rel = at.compare(other.updated_at)
                if rel in (TemporalRelation.AFTER, TemporalRelation.CONCURRENT):
                    self.supersede(other.id, fact.id)
                elif rel is TemporalRelation.BEFORE and fact.live:
                    self.supersede(fact.id, other.id)
            return fact, True

    def upsert_fact(self, triple: Triple, evidence: float, provenance: MemoryId,
                    at: Timestamp | None = None) -> SemanticFact:
        return self.upsert(triple, evidence, provenance, at)[0]

    def query_facts(self, subject: str | None = None, predicate: str | None = None,
                    include_superseded: bool = False) -> list[SemanticFact]:
        equals = {}
        if subject is not None:
            equals["subject"] = normalize_entity(subject)
        if predicate is not None:
            equals["predicate"] = normalize_entity(predicate)
        with self.store.lock:
            facts = self.store.scan("semantic", None if include_superseded else (lambda f: f.live), **equals)
        return sorted(facts, key=lambda f: (-f.confidence, _desc_time(f.updated_at), id_index(f.id)))

    def detect_conflicts(self, triple: Triple) -> list[SemanticFact]:
        s, p, o = normalize_triple(triple)
        with self.store.lock:
            return self.store.scan("semantic", lambda f: f.live and f.object != o, subject=s, predicate=p)

    def lineage(self, memory_id: MemoryId) -> list[SemanticFact]:
        """Supersession chain starting at ``memory_id`` and following the pointers forward."""
        chain, seen = [], set()
        current: MemoryId | None = memory_id
        while current is not None and current not in seen and self.store.has("semantic", current):
            seen.add(current)
            fact = self.store.get("semantic", current)
            chain.append(fact)
            current = fact.superseded_by
        return chain

    def supersede(self, old: MemoryId, new: MemoryId) -> SemanticFact:
        """Point ``old`` at ``new``. Repeating it with another target overwrites the pointer."""
        with self.store.lock:
            self.store.check_writable("supersede")
            a = self.store.get("semantic", old)
            b = self.store.get("semantic", new)
            if (a.subject, a.predicate) != (b.subject, b.predicate):
                raise PredicateMismatch(f"{old} is ({a.subject}, {a.predicate}); {new} is ({b.subject}, {b.predicate})")
            if any(f.id == old for f in self.lineage(new)):
                raise InvariantViolation("superseded_by", f"superseding {old} by {new} would form a cycle")
            return self.store.update("semantic", old, superseded_by=new)

    def consistency(self) -> float:
        """1 - (live (subject, predicate) pairs holding several objects) / (live pairs); 1 when empty."""
        with self.store.lock:
            objects: dict[tuple[str, str], set[str]] = {}
            for f in self.store.records("semantic"):
                if f.live:
                    objects.setdefault((f.subject, f.predicate), set()).add(f.object)
        if not objects:
            return 1.0
        multi = sum(1 for objs in objects.values() if len(objs) > 1)
        return 1.0 - multi / len(objects)

    def enforce_capacity(self) -> list[MemoryId]:
        """Evict superseded facts first (oldest first), then the weakest live facts."""
        with self.store.lock:
            self.store.check_writable("semantic capacity")
            cap = self.store.config.cap_temporal_lobe
            evicted: list[MemoryId] = []
            while self.store.count("semantic") > cap:
                facts = list(self.store.records("semantic"))
                dead = [f for f in facts if not f.live]
                if dead:
                    victim = min(dead, key=lambda f: id_index(f.id))
                    for f in facts:
                        if f.superseded_by == victim.id:
                            self.store.update("semantic", f.id, superseded_by=victim.superseded_by)
                    self.store.delete("semantic", victim.id)
                    evicted.append(victim.id)
                    continue
                victim = min(facts, key=lambda f: (f.confidence, id_index(f.id)))
                self.store.delete("semantic", victim.id)
                evicted.append(victim.id)
            return evicted


def _desc_time(ts: Timestamp) -> tuple:
    unknown, instant, rank = ts.sort_key()
    return (unknown, -instant, -rank)
