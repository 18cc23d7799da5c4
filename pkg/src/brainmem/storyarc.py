"""Per-entity timelines and the when / order / duration / first-last queries over them."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotFound
from .records import EpisodicTrace, MemoryId, TimelineEvent
from .substrate import Substrate, id_index
from .text import match_terms, normalize_entity
from .timestamps import Granularity, TemporalRelation, Timestamp, coarser, days_between

DEPARTURE_CUES = frozenset({"leav", "left", "quit", "resign", "departur", "exit"})
ARRIVAL_CUES = frozenset({"accept", "join", "start", "begin", "began", "hir", "onboard"})
HEDGE_CUES = frozenset({"think", "consider", "mayb", "might", "plan", "plann", "perhap", "wonder"})


def _event_key(ev: TimelineEvent) -> tuple:
    return (ev.at.sort_key(), id_index(ev.id))


def _latest_key(ev: TimelineEvent) -> tuple:
    """Tie-break preferring known, later timestamps and then later position."""
    return (ev.at.known, ev.at.sort_key()[1], ev.seq)


@dataclass(frozen=True)
class Duration:
    days: float | None
    granularity: Granularity

    @property
    def known(self) -> bool:
        return self.days is not None


class StoryArc:
    """Timeline index backed by the substrate's ``timeline`` store.

    Events on one entity timeline are kept sorted by timestamp (unknown last,
    insertion order among equals) and ``seq`` is renumbered to follow that
    order, so ``seq`` always agrees with ``at`` wherever both are comparable.
    The in-memory view is rebuilt whenever the store changes behind its back.
    """

    def __init__(self, store: Substrate):
        self.store = store
        self._timelines: dict[str, list[TimelineEvent]] = {}
        self._keys: set[tuple[MemoryId, str]] = set()
        self._terms: dict[MemoryId, set[str]] = {}
        self._synced = -1

    # -- index maintenance ------------------------------------------------

    def _sync(self) -> None:
        if self._synced == self.store.kind_version["timeline"]:
            return
        self._timelines = {}
        self._keys = set()
        self._terms = {}
        for ev in self.store.records("timeline"):
            self._timelines.setdefault(ev.entity, []).append(ev)
            self._keys.add((ev.trace_ref, ev.entity))
            self._terms[ev.id] = match_terms(ev.description)
        for events in self._timelines.values():
            events.sort(key=lambda e: e.seq)
        self._synced = self.store.kind_version["timeline"]

    def _settle(self, entity: str) -> None:
        events = self._timelines[entity]
        events.sort(key=_event_key)
        for seq, ev in enumerate(events):
            if ev.seq != seq:
                self.store.update("timeline", ev.id, seq=seq)

    def index_event(self, trace: EpisodicTrace) -> list[TimelineEvent]:
        return self.index_many([trace])

    def index_many(self, traces: list[EpisodicTrace]) -> list[TimelineEvent]:
        """One event per (trace, entity); re-indexing a pair is a no-op."""
        with self.store.lock:
            self.store.check_writable("index_event")
            self._sync()
            created = []
            touched = set()
            for trace in traces:
                for entity in trace.entities:
                    if (trace.id, entity) in self._keys:
                        continue
                    events = self._timelines.setdefault(entity, [])
                    seq = events[-1].seq + 1 if events else 0
                    ev = TimelineEvent("", entity, trace.content, trace.event_time, trace.id, seq)
                    self.store.put_record("timeline", ev)
                    self._keys.add((trace.id, entity))
                    self._terms[ev.id] = match_terms(ev.description)
                    # append now, sort once per touched entity below
                    if events and entity not in touched and _event_key(ev) < _event_key(events[-1]):
                        touched.add(entity)
                    events.append(ev)
                    created.append(ev)
            for entity in sorted(touched):
                self._settle(entity)
            self._synced = self.store.kind_version["timeline"]
            return created

    def remove_trace(self, trace_ref: MemoryId) -> int:
        with self.store.lock:
            doomed = self.store.scan("timeline", trace_ref=trace_ref)
            for ev in doomed:
                self.store.delete("timeline", ev.id)
            return len(doomed)

    def reindex(self, trace: EpisodicTrace) -> list[TimelineEvent]:
        """Drop and rebuild the events of a trace whose content changed."""
        with self.store.lock:
            self.remove_trace(trace.id)
            return self.index_event(trace)

    # -- reads ------------------------------------------------------------

    def entities(self) -> list[str]:
        with self.store.lock:
            self._sync()
            return sorted(e for e, evs in self._timelines.items() if evs)

    def timeline(self, entity: str) -> list[TimelineEvent]:
        with self.store.lock:
            self._sync()
            return list(self._timelines.get(normalize_entity(entity), []))

    def overlap(self, event: TimelineEvent, terms: set[str]) -> int:
        return len(terms & self._terms[event.id])

    def matches(self, entity: str, pattern: str | set[str]) -> list[tuple[int, TimelineEvent]]:
        """(overlap, event) for every event sharing at least one term with ``pattern``."""
        terms = match_terms(pattern) if isinstance(pattern, str) else set(pattern)
        out = []
        for ev in self.timeline(entity):
            n = self.overlap(ev, terms)
            if n > 0:
                out.append((n, ev))
        return out

    def query_when(self, entity: str, pattern: str | set[str]) -> tuple[Timestamp, TimelineEvent]:
        """Best match by term overlap, ties going to the latest known timestamp."""
        hits = self.matches(entity, pattern)
        if not hits:
            raise NotFound(f"no event on {entity!r} matches {pattern!r}")
        _, best = max(hits, key=lambda h: (h[0], _latest_key(h[1])))
        return best.at, best

    def query_order(self, a: tuple[str, str], b: tuple[str, str]) -> TemporalRelation:
        try:
            ta, _ = self.query_when(*a)
            tb, _ = self.query_when(*b)
        except NotFound:
            return TemporalRelation.UNKNOWN
        return ta.compare(tb)

    def query_duration(self, a: tuple[str, str], b: tuple[str, str]) -> Duration:
        """Days between the two resolved events, using mid-period dates for coarse stamps."""
        try:
            ta, _ = self.query_when(*a)
            tb, _ = self.query_when(*b)
        except NotFound:
            return Duration(None, Granularity.UNKNOWN)
        return Duration(days_between(ta, tb), coarser(ta.granularity, tb.granularity))

    def query_extremum(self, entity: str, which: str = "first", pattern: str | None = None) -> TimelineEvent:
        """Earliest or latest event by (at, seq); events with unknown time are skipped."""
        if which not in ("first", "last"):
            raise ValueError(f"which must be 'first' or 'last', got {which!r}")
        if pattern is None:
            pool = self.timeline(entity)
        else:
            pool = [ev for _, ev in self.matches(entity, pattern)]
        pool = [ev for ev in pool if ev.at.known]
        if not pool:
            raise NotFound(f"no dated event on {entity!r}")
        key = lambda ev: (ev.at.sort_key(), ev.seq)  # noqa: E731
        return min(pool, key=key) if which == "first" else max(pool, key=key)

    def resolve_departure(self, entity: str) -> tuple[Timestamp, TimelineEvent]:
        """Date of leaving ``entity``.

        The latest departure mention on the entity's timeline answers directly
        unless it is hedged ("thinking of leaving"). A hedged mention is
        resolved by the first later arrival event ("accepted", "joined") on
        any other timeline, since taking the new role marks the exit.
        """
        with self.store.lock:
            candidates = [(n, ev) for n, ev in self.matches(entity, set(DEPARTURE_CUES))]
            if not candidates:
                raise NotFound(f"no departure mentioned for {entity!r}")
            _, dep = max(candidates, key=lambda h: _latest_key(h[1]))
            if not (self._terms[dep.id] & HEDGE_CUES) or not dep.at.known:
                return dep.at, dep
            home = normalize_entity(entity)
            later = []
            for other, events in self._timelines.items():
                if other == home:
                    continue
                for ev in events:
                    if self._terms[ev.id] & ARRIVAL_CUES and ev.at.compare(dep.at) is TemporalRelation.AFTER:
                        later.append(ev)
            if not later:
                return dep.at, dep
            first = min(later, key=lambda ev: (ev.at.sort_key(), ev.seq, ev.id))
            return first.at, first
