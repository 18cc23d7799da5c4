"""Background lifecycle: candidate selection, consolidation, reconsolidation, forgetting."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .errors import ExtractorUnavailable
from .hippocampus import Hippocampus
from .records import EpisodicTrace, MemoryId
from .semantic import TemporalLobe
from .storyarc import StoryArc
from .substrate import Substrate, id_index
from .timestamps import days_between


@dataclass
class ConsolidationReport:
    selected: list[MemoryId] = field(default_factory=list)
    facts_created: list[MemoryId] = field(default_factory=list)
    facts_updated: list[MemoryId] = field(default_factory=list)
    pruned: list[MemoryId] = field(default_factory=list)
    cycle_time: float = 0.0

    def is_empty(self) -> bool:
        return not (self.selected or self.facts_created or self.facts_updated or self.pruned)

    def as_dict(self) -> dict:
        return {"selected": list(self.selected), "facts_created": list(self.facts_created),
                "facts_updated": list(self.facts_updated), "pruned": list(self.pruned),
                "cycle_time": self.cycle_time}


class Consolidator:
    def __init__(self, store: Substrate, hippocampus: Hippocampus, lobe: TemporalLobe | None,
                 arc: StoryArc | None, extractor):
        self.store = store
        self.hippocampus = hippocampus
        self.lobe = lobe
        self.arc = arc
        self.extractor = extractor
        self.index_entities = True

    def select_candidates(self) -> list[EpisodicTrace]:
        """Unconsolidated traces that were accessed often or are salient, most salient first."""
        cfg = self.store.config
        with self.store.lock:
            picked = self.store.scan(
                "episodic",
                lambda t: not t.consolidated and (t.access_count >= cfg.consolidation_access_threshold
                                                  or t.salience >= cfg.consolidation_salience_threshold),
            )
        return sorted(picked, key=lambda t: (-t.salience, id_index(t.id)))

    def consolidate(self, traces: list[EpisodicTrace]) -> ConsolidationReport:
        """Upsert each trace's extracted triples into semantic memory and mark it consolidated."""
        report = ConsolidationReport()
        if self.lobe is None:
            return report
        if self.extractor is None:
            raise ExtractorUnavailable("consolidation needs an extractor")
        with self.store.lock:
            self.store.check_writable("consolidate")
            for trace in traces:
                current = self.store.get("episodic", trace.id)
                if current.consolidated:
                    continue
                at = current.event_time if current.event_time.known else current.ingest_time
                analysis = self.extractor.extract(current.content, current.speaker, current.ingest_time)
                for triple, conf in analysis.triples:
                    fact, created = self.lobe.upsert(triple, conf, current.id, at)
                    bucket = report.facts_created if created else report.facts_updated
                    if fact.id not in bucket:
                        bucket.append(fact.id)
                self.store.update("episodic", current.id, consolidated=True)
                report.selected.append(current.id)
        return report

    def reconsolidate(self, trace_ref: MemoryId, patch: str | None = None) -> EpisodicTrace:
        """Re-access a trace; with ``patch`` its content is replaced and it must be consolidated again."""
        with self.store.lock:
            self.store.check_writable("reconsolidate")
            self.store.get("episodic", trace_ref)
            trace = self.hippocampus.record_access(trace_ref)
            if patch is None or not patch.strip():
                return trace
            changes = {"content": patch.strip(), "consolidated": False}
            if self.extractor is not None and self.index_entities:
                analysis = self.extractor.extract(patch, trace.speaker, trace.ingest_time)
                changes["entities"] = analysis.entities
                changes["temporal_expressions"] = analysis.temporal_expressions
            trace = self.store.update("episodic", trace_ref, **changes)
            if self.arc is not None:
                self.arc.reindex(trace)
            return trace

    def now(self):
        latest = None
        for t in self.store.records("episodic"):
            if t.ingest_time.known and (latest is None or t.ingest_time.sort_key() > latest.sort_key()):
                latest = t.ingest_time
        return latest

    def forget(self, spare=()) -> list[MemoryId]:
        """Capacity pruning plus removal of stale traces.

        A trace is stale when it is unconsolidated, its salience is below the
        stale threshold and it was ingested more than the horizon before the
        newest trace. Protected traces, traces held by working memory and
        ``spare`` are never pruned as stale.
        """
        cfg = self.store.config
        with self.store.lock:
            self.store.check_writable("forget")
            pruned = []
            now = self.now()
            if now is not None:
                keep = self.hippocampus.protected_ids() | self.hippocampus.wm.referenced() | set(spare)
                for t in self.store.records("episodic"):
                    if t.id in keep or t.consolidated or t.salience >= cfg.stale_salience:
                        continue
                    age = days_between(t.ingest_time, now)
                    if age is not None and age > cfg.stale_horizon_days:
                        self.hippocampus.prune(t.id)
                        pruned.append(t.id)
            pruned.extend(self.hippocampus.enforce_capacity(spare=spare))
            return pruned

    def run_cycle(self) -> ConsolidationReport:
        """select, consolidate, forget; holds the writer lock throughout."""
        with self.store.lock:
            self.store.check_writable("run_cycle")
            start = time.perf_counter()
            report = self.consolidate(self.select_candidates())
            report.pruned = self.forget(spare=report.selected)
            if self.lobe is not None:
                self.lobe.enforce_capacity()
            report.cycle_time = time.perf_counter() - start
            return report
