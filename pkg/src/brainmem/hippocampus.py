"""Episodic encoding, key-value addressing, access tracking and capacity pruning."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .adapters import ExtractionResult
from .errors import EmptyContent, NoKeys
from .prefrontal import WorkingMemory, summarize
from .records import EpisodicTrace, MemoryId, WmItem
from .substrate import Substrate, id_index
from .text import normalize_entity, tokenize
from .timestamps import TemporalRelation, Timestamp

log = logging.getLogger(__name__)

_AT_OR_AFTER = (TemporalRelation.AFTER, TemporalRelation.CONCURRENT)
_AT_OR_BEFORE = (TemporalRelation.BEFORE, TemporalRelation.CONCURRENT)


@dataclass
class Turn:
    session_id: str
    speaker: str
    text: str
    timestamp: Timestamp
    turn: int = 0
    feedback: float | None = None


def retention_scores(traces: list[EpisodicTrace]) -> dict[MemoryId, float]:
    """0.5 salience + 0.3 stability + 0.2 recency, recency being creation rank scaled so newest is 1."""
    ordered = sorted(traces, key=lambda t: id_index(t.id))
    n = len(ordered)
    out = {}
    for rank, t in enumerate(ordered):
        recency = rank / (n - 1) if n > 1 else 1.0
        out[t.id] = 0.5 * t.salience + 0.3 * t.stability + 0.2 * recency
    return out


class Hippocampus:
    def __init__(self, store: Substrate, wm: WorkingMemory):
        self.store = store
        self.wm = wm

    def encode_episode(self, turn: Turn, analysis: ExtractionResult | None, raw: bool = False) -> EpisodicTrace:
        """Store ``turn`` as a trace and push its summary to working memory.

        With ``raw`` the turn is kept verbatim for audit only: no entities,
        no temporal expressions, no working-memory entry.
        """
        text = turn.text.strip()
        if not text:
            raise EmptyContent("turn text is blank")
        with self.store.lock:
            self.store.check_writable("encode_episode")
            if raw or analysis is None:
                entities, temporal, event_time = [], [], turn.timestamp
            else:
                entities = list(analysis.entities)
                temporal = list(analysis.temporal_expressions)
                event_time = analysis.event_time or turn.timestamp
            trace = EpisodicTrace(
                id="", content=text, event_time=event_time, ingest_time=turn.timestamp,
                session_id=turn.session_id, speaker=turn.speaker, entities=entities,
                temporal_expressions=temporal, stability=self.store.config.initial_stability,
            )
            self.store.put_record("episodic", trace)
            if not raw:
                self.wm.push(WmItem(summarize(text), trace.id, turn.timestamp, trace.salience))
            return trace

    def address(self, entities=None, session_id: str | None = None,
                time_range: tuple[Timestamp | None, Timestamp | None] | None = None,
                text_terms=None) -> list[EpisodicTrace]:
        """Traces matching every given key, newest event first, then by id.

        ``time_range`` is inclusive at the coarser granularity of each
        comparison; traces with unknown event time never match a range.
        """
        if entities is None and session_id is None and time_range is None and text_terms is None:
            raise NoKeys("address() needs at least one key")
        want_entities = {normalize_entity(e) for e in entities} if entities is not None else None
        want_terms = set()
        if text_terms is not None:
            for term in ([text_terms] if isinstance(text_terms, str) else text_terms):
                want_terms.update(tokenize(term))

        def match(t: EpisodicTrace) -> bool:
            if want_entities is not None and not want_entities <= set(t.entities):
                return False
            if session_id is not None and t.session_id != session_id:
                return False
            if time_range is not None:
                lo, hi = time_range
                if not t.event_time.known:
                    return False
                if lo is not None and t.event_time.compare(lo) not in _AT_OR_AFTER:
                    return False
                if hi is not None and t.event_time.compare(hi) not in _AT_OR_BEFORE:
                    return False
            if want_terms and not want_terms <= set(tokenize(t.content)):
                return False
            return True

        with self.store.lock:
            hits = self.store.scan("episodic", match)
        return sorted(hits, key=_newest_first)

    def record_access(self, memory_id: MemoryId) -> EpisodicTrace:
        with self.store.lock:
            trace = self.store.get("episodic", memory_id)
            step = self.store.config.stability_step
            return self.store.update("episodic", memory_id, access_count=trace.access_count + 1,
                                     stability=min(1.0, trace.stability + step))

    def protected_ids(self) -> set[MemoryId]:
        return {r.trace_ref for r in self.store.records("salience") if r.protected}

    def prune(self, memory_id: MemoryId) -> None:
        """Delete a trace together with its salience record, timeline events and WM items."""
        with self.store.lock:
            self.store.delete("episodic", memory_id)
            for kind in ("salience", "timeline"):
                for rec in self.store.scan(kind, trace_ref=memory_id):
                    self.store.delete(kind, rec.id)
            self.wm.drop_trace(memory_id)

    def enforce_capacity(self, spare=()) -> list[MemoryId]:
        """Prune lowest-retention traces until the store fits its cap.

        Victims come from three tiers in order: ordinary traces, traces held
        by working memory or listed in ``spare``, and finally
        salience-protected traces (with a warning). Within a tier the lowest
        retention score goes first.
        """
        with self.store.lock:
            self.store.check_writable("enforce_capacity")
            cap = self.store.config.cap_hippocampus
            traces = list(self.store.records("episodic"))
            excess = len(traces) - cap
            if excess <= 0:
                return []
            scores = retention_scores(traces)
            protected = self.protected_ids()
            pinned = self.wm.referenced() | set(spare)

            def tier(t: EpisodicTrace) -> int:
                if t.id in protected:
                    return 2
                return 1 if t.id in pinned else 0

            order = sorted(traces, key=lambda t: (tier(t), scores[t.id], id_index(t.id)))
            pruned = []
            for t in order[:excess]:
                if tier(t) == 2:
                    log.warning("pruning protected trace %s: store cannot fit otherwise", t.id)
                self.prune(t.id)
                pruned.append(t.id)
            return pruned


def _newest_first(t: EpisodicTrace) -> tuple:
    if t.event_time.known:
        return (0, -t.event_time.instant.timestamp(), id_index(t.id))
    return (1, 0.0, id_index(t.id))
