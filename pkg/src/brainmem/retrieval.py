"""Four rankers (lexical, dense, graph, temporal) and weighted reciprocal rank fusion."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import BadK, BadWeights, EmbedderUnavailable, NotFound
from .prefrontal import QueryProfile, RetrievalPlan
from .records import MemoryId, WmItem
from .storyarc import DEPARTURE_CUES, StoryArc
from .substrate import Substrate, id_index
from .text import STOPWORDS, match_terms, normalize_entity, tokenize
from .timestamps import Timestamp


@dataclass
class RankedList:
    source: str
    entries: list[tuple[MemoryId, float]] = field(default_factory=list)

    def ids(self) -> list[MemoryId]:
        return [cid for cid, _ in self.entries]


@dataclass
class FusedResult:
    candidate_id: MemoryId
    per_source_ranks: dict[str, int]
    fused_score: float

    def as_dict(self) -> dict:
        return {"id": self.candidate_id, "ranks": dict(self.per_source_ranks), "score": self.fused_score}


def id_key(cid: MemoryId) -> tuple:
    """Creation order for store ids, plain string order for anything else."""
    try:
        return (0, id_index(cid), cid)
    except (ValueError, IndexError):
        return (1, 0, cid)


def _rank_sorted(scores: dict[MemoryId, float], k_top: int) -> list[tuple[MemoryId, float]]:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], id_key(kv[0])))
    return ordered[:k_top]


# ---------------------------------------------------------------------------
# Weighted reciprocal rank fusion
# ---------------------------------------------------------------------------


def fuse_rrf(lists, weights: dict[str, float], k: float = 60.0) -> list[FusedResult]:
    """score(d) = sum over sources of w_s / (k + rank_s(d)), ranks 1-based.

    Contributions are added in the order ``lists`` is given. Ties go to the
    candidate with the better best rank in any source, then to the smaller
    candidate id (plain string order).
    """
    if isinstance(k, bool) or not isinstance(k, (int, float)) or not k > 0 or math.isinf(k):
        raise BadK(f"k must be a positive finite number, got {k!r}")
    for source, w in weights.items():
        if not w >= 0:
            raise BadWeights(f"weight for {source} must be nonnegative, got {w!r}")
    scores: dict[MemoryId, float] = {}
    ranks: dict[MemoryId, dict[str, int]] = {}
    for ranked in lists:
        w = weights.get(ranked.source, 0.0)
        for position, cid in enumerate(ranked.ids(), start=1):
            scores[cid] = scores.get(cid, 0.0) + w / (k + position)
            ranks.setdefault(cid, {})[ranked.source] = position
    fused = [FusedResult(cid, ranks[cid], scores[cid]) for cid in scores]
    fused.sort(key=lambda r: (-r.fused_score, min(r.per_source_ranks.values()), r.candidate_id))
    return fused


def uncertainty(fused: list[FusedResult]) -> float:
    """1 - top / (top + runner-up).

    An empty result is fully uncertain; a lone candidate has no rival and is certain.
    """
    if not fused:
        return 1.0
    if len(fused) == 1:
        return 0.0
    top, second = fused[0].fused_score, fused[1].fused_score
    if top + second <= 0:
        return 1.0
    return 1.0 - top / (top + second)


# ---------------------------------------------------------------------------
# Lexical: BM25
# ---------------------------------------------------------------------------


def bm25_terms(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS]


class BM25Index:
    """Inverted index over trace contents, kept in step with the episodic store."""

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self._docs: dict[MemoryId, tuple[str, Counter, int]] = {}
        self._postings: dict[str, dict[MemoryId, int]] = {}
        self._total_len = 0

    def __len__(self) -> int:
        return len(self._docs)

    def add(self, doc_id: MemoryId, text: str) -> None:
        if doc_id in self._docs:
            if self._docs[doc_id][0] == text:
                return
            self.remove(doc_id)
        tf = Counter(bm25_terms(text))
        dl = sum(tf.values())
        self._docs[doc_id] = (text, tf, dl)
        self._total_len += dl
        for term, n in tf.items():
            self._postings.setdefault(term, {})[doc_id] = n

    def remove(self, doc_id: MemoryId) -> None:
        _, tf, dl = self._docs.pop(doc_id)
        self._total_len -= dl
        for term in tf:
            posting = self._postings[term]
            del posting[doc_id]
            if not posting:
                del self._postings[term]

    def sync(self, docs: dict[MemoryId, str]) -> None:
        for doc_id in [d for d in self._docs if d not in docs]:
            self.remove(doc_id)
        for doc_id, text in docs.items():
            self.add(doc_id, text)

    def idf(self, term: str) -> float:
        n = len(self._docs)
        df = len(self._postings.get(term, ()))
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def scores(self, query: str) -> dict[MemoryId, float]:
        if not self._docs:
            return {}
        avgdl = self._total_len / len(self._docs)
        out: dict[MemoryId, float] = {}
        for term in sorted(set(bm25_terms(query))):
            posting = self._postings.get(term)
            if not posting:
                continue
            idf = self.idf(term)
            for doc_id, tf in posting.items():
                dl = self._docs[doc_id][2]
                norm = tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl) if avgdl else tf + self.k1
                out[doc_id] = out.get(doc_id, 0.0) + idf * tf * (self.k1 + 1.0) / norm
        return out

    def rank(self, query: str, k_top: int) -> RankedList:
        return RankedList("lexical", _rank_sorted({d: s for d, s in self.scores(query).items() if s > 0}, k_top))


# ---------------------------------------------------------------------------
# Dense: exact cosine by full scan
# ---------------------------------------------------------------------------


class DenseIndex:
    def __init__(self, embedder):
        self.embedder = embedder
        self._vectors: dict[MemoryId, tuple[str, np.ndarray]] = {}

    def sync(self, docs: dict[MemoryId, str]) -> None:
        if self.embedder is None:
            return
        for doc_id in [d for d in self._vectors if d not in docs]:
            del self._vectors[doc_id]
        for doc_id, text in docs.items():
            cached = self._vectors.get(doc_id)
            if cached is None or cached[0] != text:
                self._vectors[doc_id] = (text, self.embedder.embed(text))

    def similarities(self, query: str) -> dict[MemoryId, float]:
        if self.embedder is None:
            raise EmbedderUnavailable("no embedder configured")
        if not self._vectors:
            return {}
        ids = list(self._vectors)
        matrix = np.stack([self._vectors[d][1] for d in ids])
        sims = matrix @ self.embedder.embed(query)
        return {d: float(s) for d, s in zip(ids, sims)}

    def rank(self, query: str, k_top: int, min_similarity: float = 1e-9) -> RankedList:
        sims = {d: s for d, s in self.similarities(query).items() if s > min_similarity}
        return RankedList("dense", _rank_sorted(sims, k_top))


# ---------------------------------------------------------------------------
# Graph and temporal
# ---------------------------------------------------------------------------


def rank_graph(store: Substrate, query_entities, k_top: int) -> RankedList:
    """Traces behind live facts that mention a query entity, scored by fact confidence."""
    wanted = {normalize_entity(e) for e in query_entities}
    scores: dict[MemoryId, float] = {}
    if not wanted:
        return RankedList("graph")
    for fact in store.records("semantic"):
        if not fact.live or not ({fact.subject, fact.object} & wanted):
            continue
        for ref in fact.provenance:
            if store.has("episodic", ref):
                scores[ref] = max(scores.get(ref, 0.0), fact.confidence)
    # newer evidence first among equal confidence
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], -id_index(kv[0])))
    return RankedList("graph", ordered[:k_top])


_TEMPORAL_WORDS = {"when", "long", "first", "last", "earliest", "latest", "before", "after", "date",
                   "year", "month", "day", "days", "week", "weeks", "months", "years", "many", "ago",
                   "time", "since", "until"}


@dataclass
class TemporalAnswer:
    kind: str
    entity: str
    at: Timestamp
    trace_ref: MemoryId
    description: str

    def as_dict(self) -> dict:
        return {"kind": self.kind, "entity": self.entity, "at": str(self.at),
                "granularity": self.at.granularity.value, "trace": self.trace_ref,
                "description": self.description}


def query_pattern(query: str, entities) -> set[str]:
    """Match terms of a temporal question minus entity names and temporal function words."""
    drop = set()
    for e in entities:
        drop |= match_terms(e)
    kept = " ".join(w for w in tokenize(query) if w not in _TEMPORAL_WORDS)
    return {t for t in match_terms(kept) if t not in drop}


def temporal_answers(arc: StoryArc, query: str, entities) -> list[TemporalAnswer]:
    """Direct timeline answers for the entities named in a temporal question.

    Departure questions go through transition resolution; "first"/"last"
    questions use the timeline extremum; everything else is a best-match
    "when" lookup. Without a named entity on record, every timeline is searched.
    """
    toks = set(tokenize(query))
    known = set(arc.entities())
    named = [normalize_entity(e) for e in entities if normalize_entity(e) in known]
    pattern = query_pattern(query, named)
    answers: list[TemporalAnswer] = []
    departure = bool(pattern & DEPARTURE_CUES)
    which = "first" if toks & {"first", "earliest"} else "last" if toks & {"last", "latest"} else None
    for entity in named:
        try:
            if departure:
                at, ev = arc.resolve_departure(entity)
                kind = "departure"
            elif which is not None:
                ev = arc.query_extremum(entity, which, pattern or None)
                at, kind = ev.at, which
            elif pattern:
                at, ev = arc.query_when(entity, pattern)
                kind = "when"
            else:
                continue
        except NotFound:
            continue
        answers.append(TemporalAnswer(kind, entity, at, ev.trace_ref, ev.description))
    if not answers and not named and pattern:
        best = None
        for entity in sorted(known):
            for n, ev in arc.matches(entity, pattern):
                key = (n, ev.at.known, ev.at.sort_key()[1], -id_index(ev.id))
                if best is None or key > best[0]:
                    best = (key, entity, ev)
        if best is not None:
            _, entity, ev = best
            answers.append(TemporalAnswer("when", entity, ev.at, ev.trace_ref, ev.description))
    return answers


def rank_temporal(arc: StoryArc, query: str, profile: QueryProfile, entities, k_top: int,
                  gate: float = 0.3, answers: list[TemporalAnswer] | None = None) -> RankedList:
    """Traces of timeline events matching the question, scored by term overlap.

    Traces behind direct answers are placed above every overlap match.
    Returns nothing when ``profile.temporal`` is below ``gate``.
    """
    if profile.temporal < gate:
        return RankedList("temporal")
    known = set(arc.entities())
    named = [normalize_entity(e) for e in entities if normalize_entity(e) in known]
    pattern = query_pattern(query, named)
    pool = named or sorted(known)
    best: dict[MemoryId, tuple[float, tuple]] = {}
    for entity in pool:
        for n, ev in arc.matches(entity, pattern):
            key = (ev.at.known, ev.at.sort_key()[1])
            if ev.trace_ref not in best or (n, key) > best[ev.trace_ref]:
                best[ev.trace_ref] = (float(n), key)
    if answers is None:
        answers = temporal_answers(arc, query, entities)
    top = max((s for s, _ in best.values()), default=0.0)
    for i, ans in enumerate(answers):
        best[ans.trace_ref] = (top + len(answers) - i, (ans.at.known, ans.at.sort_key()[1]))
    ordered = sorted(best.items(), key=lambda kv: (-kv[1][0], not kv[1][1][0], -kv[1][1][1], id_index(kv[0])))
    return RankedList("temporal", [(cid, s) for cid, (s, _) in ordered[:k_top]])


# ---------------------------------------------------------------------------
# Evidence bundle
# ---------------------------------------------------------------------------


@dataclass
class EvidenceBundle:
    query: str
    profile: QueryProfile
    plan: RetrievalPlan
    fused: list[FusedResult] = field(default_factory=list)
    temporal_answers: list[TemporalAnswer] = field(default_factory=list)
    rounds_used: int = 1
    uncertainty: float = 1.0
    fast_path: WmItem | None = None
    constraints: list[str] = field(default_factory=list)
    evidence: dict[MemoryId, str] = field(default_factory=dict)

    def top_text(self) -> str | None:
        """Text of the single best piece of evidence."""
        if self.fast_path is not None:
            return self.fast_path.summary
        if self.fused:
            return self.evidence.get(self.fused[0].candidate_id)
        return None

    def as_dict(self) -> dict:
        return {
            "query": self.query,
            "profile": self.profile.as_dict(),
            "plan": self.plan.as_dict(),
            "fast_path": None if self.fast_path is None else self.fast_path.to_dict(),
            "fused": [dict(r.as_dict(), text=self.evidence.get(r.candidate_id)) for r in self.fused],
            "temporal_answers": [a.as_dict() for a in self.temporal_answers],
            "rounds_used": self.rounds_used,
            "uncertainty": self.uncertainty,
            "constraints": list(self.constraints),
        }
