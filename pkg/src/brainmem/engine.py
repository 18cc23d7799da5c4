"""Orchestrator wiring the memory regions over one substrate."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .adapters import HashEmbedder, RuleExtractor
from .config import EngineConfig
from .consolidation import ConsolidationReport, Consolidator
from .errors import BadRecord, EmptyQuery, EmptyText
from .hippocampus import Hippocampus, Turn
from .prefrontal import RuleClassifier, WorkingMemory, fast_path_check, route, uniform_plan
from .procedural import BasalGanglia, task_tags
from .records import MemoryId
from .retrieval import (BM25Index, DenseIndex, EvidenceBundle, RankedList, fuse_rrf, rank_graph,
                        rank_temporal, temporal_answers, uncertainty)
from .salience import Amygdala, SalienceContext
from .semantic import TemporalLobe
from .storyarc import StoryArc
from .substrate import KINDS, Substrate
from .text import tokenize
from .timestamps import Timestamp

FIRST_PERSON = frozenset({"i", "my", "me", "mine", "myself"})


def parse_turn(data, line: int | None = None) -> Turn:
    """Validate one wire-format turn record."""
    if not isinstance(data, dict):
        raise BadRecord("turn must be a JSON object", line)
    for name in ("session_id", "speaker", "text", "timestamp"):
        if not isinstance(data.get(name), str):
            raise BadRecord(f"field {name!r} must be a string", line)
    if not data["text"].strip():
        raise BadRecord("field 'text' is blank", line)
    try:
        ts = Timestamp.parse(data["timestamp"])
    except ValueError as exc:
        raise BadRecord(str(exc), line) from None
    turn_no = data.get("turn", 0)
    if isinstance(turn_no, bool) or not isinstance(turn_no, int):
        raise BadRecord("field 'turn' must be an integer", line)
    feedback = data.get("feedback")
    if feedback is not None:
        if isinstance(feedback, bool) or not isinstance(feedback, (int, float)) or not 0.0 <= feedback <= 1.0:
            raise BadRecord("field 'feedback' must be a number in [0, 1]", line)
        feedback = float(feedback)
    return Turn(data["session_id"], data["speaker"], data["text"], ts, turn_no, feedback)


@dataclass
class IngestResult:
    trace_id: MemoryId
    timeline_events: int = 0
    salience: float | None = None
    protected: str | None = None
    patterns: list[str] = field(default_factory=list)
    pruned: list[MemoryId] = field(default_factory=list)


class Engine:
    """Memory engine: ingest turns, answer queries, run lifecycle cycles.

    Regions listed in ``config.disabled_regions`` become pass-throughs. A
    disabled hippocampus still records each raw turn for audit, but without
    entities, timeline events or working-memory entries, and the lexical,
    dense and temporal rankers see no traces.
    """

    def __init__(self, config: EngineConfig | None = None, *, store: Substrate | None = None,
                 extractor=None, embedder=None, classifier=None):
        self.store = store if store is not None else Substrate(config or EngineConfig())
        self.config = self.store.config
        self.extractor = extractor or RuleExtractor()
        self.embedder = embedder or HashEmbedder(self.config.embed_dim)
        self.classifier = classifier or RuleClassifier()
        self.wm = WorkingMemory(self.store)
        self.hippocampus = Hippocampus(self.store, self.wm)
        self.storyarc = StoryArc(self.store)
        self.lobe = TemporalLobe(self.store)
        self.amygdala = Amygdala(self.store, self.embedder)
        self.ganglia = BasalGanglia(self.store)
        self.consolidator = Consolidator(
            self.store, self.hippocampus,
            self.lobe if self.enabled("temporal_lobe") else None,
            self.storyarc if self.enabled("hippocampus") else None,
            self.extractor,
        )
        self.consolidator.index_entities = self.enabled("hippocampus")
        self._bm25 = BM25Index(self.config.bm25_k1, self.config.bm25_b)
        self._dense = DenseIndex(self.embedder)
        self._indexed = -1

    def enabled(self, region: str) -> bool:
        return self.config.enabled(region)

    # -- persistence ------------------------------------------------------

    @classmethod
    def load(cls, path: str | Path, **adapters) -> "Engine":
        return cls(store=Substrate.import_archive(path), **adapters)

    def export(self, path: str | Path) -> dict:
        return self.store.export_archive(path)

    def state_digest(self) -> str:
        return self.store.state_digest()

    def freeze(self) -> None:
        self.store.freeze()

    def counts(self) -> dict[str, int]:
        return {k: self.store.count(k) for k in KINDS} | {"working_memory": len(self.store.working_memory)}

    # -- write path -------------------------------------------------------

    def ingest_turn(self, turn: Turn | dict) -> IngestResult:
        """encode, score salience, index the timeline, observe preferences, enforce caps."""
        if isinstance(turn, dict):
            turn = parse_turn(turn)
        with self.store.lock:
            self.store.check_writable("ingest")
            analysis = self.extractor.extract(turn.text, turn.speaker, turn.timestamp)
            raw = not self.enabled("hippocampus")
            trace = self.hippocampus.encode_episode(turn, analysis, raw=raw)
            result = IngestResult(trace.id)
            if not raw:
                result.timeline_events = len(self.storyarc.index_event(trace))
            if self.enabled("amygdala"):
                self._score(trace, turn, analysis, result)
            if self.enabled("basal_ganglia"):
                result.patterns = [p.key for p in self.ganglia.observe_statement(trace, analysis)]
            result.pruned = self.enforce_capacity()
            return result

    def _score(self, trace, turn: Turn, analysis, result: IngestResult) -> None:
        window = self.config.novelty_window
        earlier = [t.content for t in self.store.records("episodic") if t.id != trace.id][-window:]
        conflict = self.enabled("temporal_lobe") and any(self.lobe.detect_conflicts(t) for t, _ in analysis.triples)
        if turn.feedback is not None:
            feedback = turn.feedback
        else:
            feedback = 1.0 if analysis.milestone else 0.0
        rec = self.amygdala.record(self.amygdala.score_salience(trace, SalienceContext(earlier, conflict, feedback)))
        result.salience = rec.aggregate
        if rec.aggregate >= self.config.protection_threshold:
            self.amygdala.tag_protection(trace.id, "high_salience")
            result.protected = "high_salience"
        if analysis.identity_flag:
            self.amygdala.tag_protection(trace.id, "identity")
            result.protected = result.protected or "identity"
        self.wm.set_salience(trace.id, self.store.get("episodic", trace.id).salience)

    def enforce_capacity(self) -> list[MemoryId]:
        with self.store.lock:
            pruned = self.hippocampus.enforce_capacity()
            self.amygdala.enforce_capacity()
            self.ganglia.enforce_capacity()
            self.lobe.enforce_capacity()
            return pruned

    def run_cycle(self) -> ConsolidationReport:
        with self.store.lock:
            report = self.consolidator.run_cycle()
            self.amygdala.enforce_capacity()
            self.ganglia.enforce_capacity()
            return report

    def record_access(self, memory_id: MemoryId):
        return self.hippocampus.record_access(memory_id)

    def reconsolidate(self, memory_id: MemoryId, patch: str | None = None):
        return self.consolidator.reconsolidate(memory_id, patch)

    # -- read path --------------------------------------------------------

    def query_entities(self, query: str) -> list[str]:
        ents = set(self.extractor.extract(query, "user", None).entities)
        if FIRST_PERSON & set(tokenize(query)):
            ents.add("user")
        return sorted(ents)

    def _sync_indexes(self) -> None:
        version = self.store.kind_version["episodic"]
        if version == self._indexed:
            return
        docs = {}
        if self.enabled("hippocampus"):
            docs = {t.id: t.content for t in self.store.records("episodic")}
        self._bm25.sync(docs)
        self._dense.sync(docs)
        self._indexed = version

    def _rank(self, source: str, query: str, profile, entities, answers) -> RankedList:
        k_top = self.config.top_k
        if source == "lexical":
            return self._bm25.rank(query, k_top)
        if source == "dense":
            try:
                return self._dense.rank(query, k_top)
            except EmptyText:
                return RankedList("dense")
        if source == "graph":
            if not self.enabled("temporal_lobe"):
                return RankedList("graph")
            return rank_graph(self.store, entities, k_top)
        if not self.enabled("hippocampus"):
            return RankedList("temporal")
        gate = self.config.temporal_gate if self.enabled("prefrontal") else 0.0
        return rank_temporal(self.storyarc, query, profile, entities, k_top, gate, answers)

    def retrieve(self, query: str, touch: bool = False) -> EvidenceBundle:
        """classify, route, try the working-memory fast path, run rankers, fuse.

        Read-only unless ``touch`` is set, in which case the top result is
        reinforced through :meth:`record_access`.
        """
        if not isinstance(query, str) or not query.strip():
            raise EmptyQuery("query text is empty")
        with self.store.lock:
            profile = self.classifier.classify(query)
            executive = self.enabled("prefrontal")
            plan = route(profile) if executive else uniform_plan()
            entities = self.query_entities(query)
            constraints = self.ganglia.apply_patterns(task_tags(query)) if self.enabled("basal_ganglia") else []
            bundle = EvidenceBundle(query, profile, plan, constraints=constraints)
            if executive and plan.fast_path:
                hit = fast_path_check(query, profile, self.wm.snapshot())
                if hit is not None:
                    bundle.fast_path = hit
                    bundle.rounds_used = 0
                    bundle.uncertainty = 0.0
                    return bundle
            self._sync_indexes()
            answers = []
            if self.enabled("hippocampus") and (not executive or profile.temporal >= self.config.temporal_gate):
                answers = temporal_answers(self.storyarc, query, entities)
            bundle.temporal_answers = answers

            weights = dict(plan.weights)
            q, ents = query, list(entities)
            for round_no in range(1, plan.max_rounds + 1):
                lists = [self._rank(s, q, profile, ents, answers) for s in plan.sources]
                fused = fuse_rrf(lists, weights, self.config.rrf_k)[: self.config.top_k]
                bundle.fused = fused
                bundle.rounds_used = round_no
                bundle.uncertainty = uncertainty(fused)
                if not fused or bundle.uncertainty <= self.config.uncertainty_threshold:
                    break
                top = self.store.get("episodic", fused[0].candidate_id)
                extra = [e for e in top.entities if e not in ents]
                q = " ".join([query] + extra)
                ents = sorted(set(ents) | set(extra))
                if "graph" in weights:
                    weights["graph"] *= self.config.round2_graph_boost
            bundle.evidence = {r.candidate_id: self.store.get("episodic", r.candidate_id).content
                               for r in bundle.fused}
            if touch and bundle.fused:
                self.record_access(bundle.fused[0].candidate_id)
            return bundle
