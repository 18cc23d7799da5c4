"""Executive control: query classification, source routing, working memory."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import EmptyQuery, InvariantViolation
from .records import MemoryId, WmItem
from .substrate import Substrate
from .text import content_terms, tokenize

SOURCES = ("lexical", "dense", "graph", "temporal")
DIMENSIONS = ("temporal", "identity", "preference", "factual")


@dataclass(frozen=True)
class QueryProfile:
    temporal: float = 0.0
    identity: float = 0.0
    preference: float = 0.0
    factual: float = 0.0

    def __post_init__(self) -> None:
        for name in DIMENSIONS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantViolation(name, f"{value!r} outside [0, 1]")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in DIMENSIONS}

    def max_dimension(self) -> float:
        return max(self.as_dict().values())

    def factual_dominant(self) -> bool:
        return self.factual >= max(self.temporal, self.identity, self.preference)


@dataclass
class RetrievalPlan:
    sources: tuple[str, ...]
    weights: dict[str, float]
    max_rounds: int = 1
    fast_path: bool = False

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise InvariantViolation("max_rounds", "must be >= 1")
        for source, w in self.weights.items():
            if w < 0:
                raise InvariantViolation("weights", f"negative weight for {source}")
            if w > 0 and source not in self.sources:
                raise InvariantViolation("weights", f"weight for unselected source {source}")

    def as_dict(self) -> dict:
        return {"sources": list(self.sources), "weights": dict(self.weights),
                "max_rounds": self.max_rounds, "fast_path": self.fast_path}


def profile_from_json(payload: str | dict) -> QueryProfile:
    """Build a profile from the classifier JSON contract, clamping each value to [0, 1]."""
    data = json.loads(payload) if isinstance(payload, str) else payload
    values = {}
    for name in DIMENSIONS:
        try:
            v = float(data.get(name, 0.0))
        except (TypeError, ValueError):
            v = 0.0
        values[name] = min(1.0, max(0.0, v)) if v == v else 0.0
    return QueryProfile(**values)


# ---------------------------------------------------------------------------
# Rule-based classifier
# ---------------------------------------------------------------------------

_TEMPORAL_STRONG = ("when", "how long", "before", "after", "first", "what year", "what month",
                    "what date", "how many days", "how many weeks", "how many months",
                    "how many years", "since", "until", "ago", "earliest", "latest")
_TEMPORAL_WEAK = ("date", "time", "year", "month", "day", "earlier", "later", "order", "recently")
_IDENTITY_STRONG = ("my name", "about me", "told you", "who am i", "did i tell", "i told", "remember me",
                    "my birthday")
_FIRST_PERSON = {"i", "my", "me", "mine", "myself"}
_PREFERENCE_STRONG = ("prefer", "favorite", "favourite", "which do i like", "like better", "rather")
_PREFERENCE_WEAK = ("like", "love", "enjoy", "hate", "want")
_FACTUAL_STRONG = ("what is", "what are", "what's a", "whats a", "define", "explain", "who is",
                   "who was", "what does", "describe", "tell me about")


def _has_phrase(tokens: list[str], phrase: str) -> bool:
    words = phrase.split()
    n = len(words)
    return any(tokens[i:i + n] == words for i in range(len(tokens) - n + 1))


def _has_any(tokens: list[str], phrases) -> bool:
    return any(_has_phrase(tokens, p) for p in phrases)


class RuleClassifier:
    """Lexicon scorer: strong cue 0.9, weak cue 0.5 (first person 0.6 for identity).

    Factual starts at a 0.5 baseline and rises to 0.9 on definitional cues.
    """

    def classify(self, text: str) -> QueryProfile:
        if not text or not text.strip():
            raise EmptyQuery("query text is empty")
        toks = tokenize(text.replace("'", ""))
        temporal = 0.9 if _has_any(toks, _TEMPORAL_STRONG) else 0.5 if _has_any(toks, _TEMPORAL_WEAK) else 0.0
        if _has_any(toks, _IDENTITY_STRONG):
            identity = 0.9
        elif _FIRST_PERSON & set(toks):
            identity = 0.6
        else:
            identity = 0.0
        if _has_any(toks, _PREFERENCE_STRONG):
            preference = 0.9
        elif _has_any(toks, _PREFERENCE_WEAK):
            preference = 0.5
        else:
            preference = 0.0
        factual = 0.9 if _has_any(toks, _FACTUAL_STRONG) else 0.5
        return QueryProfile(temporal, identity, preference, factual)


CLASSIFIER_PROMPT = (
    "Score the query below on four dimensions, each a number between 0.0 and 1.0.\n"
    "temporal: needs dates, ordering or durations of events.\n"
    "identity: asks about the user themself or things they said earlier.\n"
    "preference: asks which option the user likes or chooses.\n"
    "factual: asks for a general fact or definition.\n"
    'Query: "{query}"\n'
    'Answer with JSON only, shaped {{"temporal": x, "identity": x, "preference": x, "factual": x}}.'
)


class OnlineClassifier:
    """Chat-model classifier honoring the same JSON contract as :func:`profile_from_json`."""

    def __init__(self, config, transport=None):
        self.config = config
        self._transport = transport

    def classify(self, text: str) -> QueryProfile:
        from .adapters import chat_json

        if not text or not text.strip():
            raise EmptyQuery("query text is empty")
        return profile_from_json(chat_json(self.config, CLASSIFIER_PROMPT.format(query=text), self._transport))


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------


def route(profile: QueryProfile, min_weight: float = 0.05) -> RetrievalPlan:
    weights = {
        "lexical": 1.0 + profile.factual,
        "dense": 1.0 + profile.factual,
        "graph": 1.0 + profile.identity + profile.preference,
        "temporal": 1.0 + profile.temporal,
    }
    kept = {s: w for s, w in weights.items() if w >= min_weight}
    if not kept:  # unreachable with the unit base, kept for safety if bases change
        kept = {"lexical": 1.0}
    max_rounds = 2 if profile.max_dimension() < 0.5 else 1
    fast = profile.factual_dominant() and profile.temporal <= 0.5
    return RetrievalPlan(tuple(s for s in SOURCES if s in kept), kept, max_rounds, fast)


def uniform_plan() -> RetrievalPlan:
    """Plan used when executive control is ablated."""
    return RetrievalPlan(SOURCES, {s: 1.0 for s in SOURCES}, 1, False)


# ---------------------------------------------------------------------------
# Working memory
# ---------------------------------------------------------------------------


def summarize(text: str, limit: int = 120) -> str:
    text = " ".join(text.split())
    if len(text) <= limit:
        return text
    cut = text[:limit].rsplit(" ", 1)[0]
    return cut + "..."


@dataclass
class WorkingMemory:
    """Bounded FIFO of recent summaries held on the substrate.

    An incoming item with salience below ``low`` never evicts a resident whose
    salience is at least ``high``; the oldest eligible resident goes instead,
    and if none is eligible the incoming item is dropped.
    """

    store: Substrate
    low: float = 0.1
    high: float = 0.8
    capacity: int = field(default=0)

    def __post_init__(self) -> None:
        if not self.capacity:
            self.capacity = self.store.config.cap_prefrontal

    def push(self, item: WmItem) -> WmItem | None:
        """Insert ``item``; returns the evicted item (or ``item`` itself if it was dropped)."""
        self.store.check_writable("wm_push")
        items = list(self.store.working_memory)
        evicted = None
        if len(items) >= self.capacity:
            victim_idx = 0
            if item.salience < self.low:
                victim_idx = next((i for i, it in enumerate(items) if it.salience < self.high), None)
            if victim_idx is None:
                return item
            evicted = items.pop(victim_idx)
        items.append(item)
        self.store.set_working_memory(items)
        return evicted

    def snapshot(self) -> list[WmItem]:
        return list(self.store.working_memory)

    def set_salience(self, trace_id: MemoryId, salience: float) -> None:
        items = self.snapshot()
        changed = False
        for it in items:
            if it.source_trace == trace_id and it.salience != salience:
                it.salience = salience
                changed = True
        if changed:
            self.store.set_working_memory(items)

    def drop_trace(self, trace_id: MemoryId) -> None:
        items = self.snapshot()
        kept = [it for it in items if it.source_trace != trace_id]
        if len(kept) != len(items):
            self.store.set_working_memory(kept)

    def referenced(self) -> set[MemoryId]:
        return {it.source_trace for it in self.store.working_memory}


def fast_path_check(query: str, profile: QueryProfile, items: list[WmItem], min_shared: int = 2) -> WmItem | None:
    """Working-memory hit for factual-dominant queries, else ``None``.

    Temporal queries (``temporal > 0.5``) never take the fast path.
    """
    if profile.temporal > 0.5 or not profile.factual_dominant() or not items:
        return None
    q = content_terms(query)
    best, best_overlap = None, 0
    for it in reversed(items):  # most recent first wins ties
        overlap = len(q & content_terms(it.summary))
        if overlap > best_overlap:
            best, best_overlap = it, overlap
    return best if best_overlap >= min_shared else None
