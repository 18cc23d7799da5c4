"""Salience scoring from novelty, conflict and feedback cues, plus protection tags."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, UnknownRef
from .records import EpisodicTrace, MemoryId, SalienceRecord
from .substrate import Substrate, id_index

WEIGHTS = (0.4, 0.4, 0.2)
REASONS = ("high_salience", "identity")


def aggregate(novelty: float, conflict: float, feedback: float) -> float:
    wn, wc, wf = WEIGHTS
    return min(1.0, max(0.0, wn * novelty + wc * conflict + wf * feedback))


@dataclass
class SalienceContext:
    existing: list[str] = field(default_factory=list)
    conflict: bool = False
    feedback: float = 0.0


class Amygdala:
    def __init__(self, store: Substrate, embedder):
        self.store = store
        self.embedder = embedder

    def novelty(self, text: str, existing: list[str]) -> float:
        """1 minus the best cosine similarity against ``existing``; 1 when there is nothing to compare."""
        if not existing:
            return 1.0
        q = self.embedder.embed(text)
        best = max(float(np.dot(q, self.embedder.embed(t))) for t in existing)
        return min(1.0, max(0.0, round(1.0 - best, 12)))

    def score_salience(self, trace: EpisodicTrace, context: SalienceContext) -> SalienceRecord:
        """Unsaved record for ``trace``; see :meth:`record` to store it."""
        if not 0.0 <= context.feedback <= 1.0:
            raise InvariantViolation("feedback", f"{context.feedback!r} outside [0, 1]")
        nov = self.novelty(trace.content, context.existing)
        conf = 1.0 if context.conflict else 0.0
        return SalienceRecord("", trace.id, nov, conf, float(context.feedback),
                              aggregate(nov, conf, float(context.feedback)))

    def record(self, rec: SalienceRecord) -> SalienceRecord:
        """Store ``rec`` (replacing any earlier record for the trace) and copy the aggregate onto the trace."""
        with self.store.lock:
            self.store.check_writable("salience record")
            old = self.lookup(rec.trace_ref)
            if old is not None:
                self.store.delete("salience", old.id)
            self.store.put_record("salience", rec)
            if self.store.has("episodic", rec.trace_ref):
                self.store.update("episodic", rec.trace_ref, salience=rec.aggregate)
            return rec

    def lookup(self, trace_ref: MemoryId) -> SalienceRecord | None:
        hits = self.store.scan("salience", trace_ref=trace_ref)
        return hits[0] if hits else None

    def tag_protection(self, trace_ref: MemoryId, reason: str) -> SalienceRecord:
        """Mark a trace as protected from pruning.

        The trace's own salience is raised to at least the protection
        threshold so consolidation treats it as high priority; the record's
        aggregate stays the plain weighted sum of its cues.
        """
        if reason not in REASONS:
            raise InvariantViolation("protect_reason", f"unknown reason {reason!r}")
        with self.store.lock:
            self.store.check_writable("tag_protection")
            rec = self.lookup(trace_ref)
            if rec is None:
                raise UnknownRef(trace_ref)
            if not rec.protected:
                self.store.update("salience", rec.id, protected=True, protect_reason=reason)
            if self.store.has("episodic", trace_ref):
                trace = self.store.get("episodic", trace_ref)
                floor = self.store.config.protection_threshold
                if trace.salience < floor:
                    self.store.update("episodic", trace_ref, salience=floor)
            return rec

    def protected_ids(self) -> set[MemoryId]:
        return {r.trace_ref for r in self.store.records("salience") if r.protected}

    def top_salient(self, n: int) -> list[SalienceRecord]:
        """The ``n`` highest aggregates, newer records first among equals."""
        if n <= 0:
            return []
        with self.store.lock:
            recs = list(self.store.records("salience"))
        recs.sort(key=lambda r: (-r.aggregate, -id_index(r.trace_ref), -id_index(r.id)))
        return recs[:n]

    def enforce_capacity(self) -> list[MemoryId]:
        """Drop the lowest-aggregate unprotected records (oldest first among equals) above the cap."""
        with self.store.lock:
            self.store.check_writable("salience capacity")
            excess = self.store.count("salience") - self.store.config.cap_amygdala
            if excess <= 0:
                return []
            recs = sorted(self.store.records("salience"),
                          key=lambda r: (r.protected, r.aggregate, id_index(r.id)))
            out = []
            for r in recs[:excess]:
                self.store.delete("salience", r.id)
                out.append(r.id)
            return out
