"""Embedding and extraction adapters.

The offline implementations here are deterministic and dependency-free
beyond numpy; every engine path runs on them. Online adapters speak an
OpenAI-compatible HTTP API and are only constructed when explicitly asked for.
"""

from __future__ import annotations

import calendar
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from datetime import timedelta
from functools import lru_cache
from typing import Protocol

import numpy as np

from .errors import EmbedderUnavailable, EmptyText, ExtractorUnavailable
from .text import STOPWORDS, normalize_entity, tokenize
from .timestamps import Granularity, Timestamp

Triple = tuple[str, str, str]


@dataclass
class ExtractionResult:
    entities: list[str] = field(default_factory=list)
    temporal_expressions: list[tuple[str, Timestamp]] = field(default_factory=list)
    triples: list[tuple[Triple, float]] = field(default_factory=list)
    preference_statements: list[tuple[str, str, str]] = field(default_factory=list)
    identity_flag: bool = False
    milestone: bool = False

    def __post_init__(self) -> None:
        self.entities = sorted({normalize_entity(e) for e in self.entities if normalize_entity(e)})
        for _, conf in self.triples:
            if not 0.0 <= conf <= 1.0:
                raise ValueError(f"triple confidence {conf!r} outside [0, 1]")

    @property
    def event_time(self) -> Timestamp | None:
        """First resolved (known) temporal expression, if any."""
        for _, ts in self.temporal_expressions:
            if ts.known:
                return ts
        return None


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class Extractor(Protocol):
    def extract(self, text: str, speaker: str, timestamp: Timestamp) -> ExtractionResult: ...


# ---------------------------------------------------------------------------
# Hash embedder
# ---------------------------------------------------------------------------


def token_bucket(token: str, dim: int) -> tuple[int, float]:
    """Bucket index and sign for ``token``; stable across processes."""
    h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
    return h % dim, (1.0 if (h >> 63) & 1 else -1.0)


class HashEmbedder:
    """Signed feature hashing of content tokens, L2-normalized.

    Stopwords are dropped unless a text has nothing else, so ``embed("a b")``
    still yields a vector. Token order never matters.
    """

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cached = lru_cache(maxsize=65536)(self._embed)

    def tokens(self, text: str) -> list[str]:
        toks = tokenize(text)
        content = [t for t in toks if t not in STOPWORDS]
        return content or toks

    def _embed(self, text: str) -> np.ndarray:
        toks = self.tokens(text)
        if not toks:
            raise EmptyText("cannot embed text without tokens")
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in toks:
            idx, sign = token_bucket(tok, self.dim)
            vec[idx] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # every token cancelled out; fall back to unsigned counts
            for tok in toks:
                vec[token_bucket(tok, self.dim)[0]] += 1.0
            norm = float(np.linalg.norm(vec))
        vec /= norm
        vec.setflags(write=False)
        return vec

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        return self._cached(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


# ---------------------------------------------------------------------------
# Rule-based extractor
# ---------------------------------------------------------------------------

SEED_ENTITIES = {
    "google": "google", "techstartup": "techstartup", "microsoft": "microsoft", "amazon": "amazon",
    "typescript": "typescript", "javascript": "javascript", "python": "python", "react": "react",
    "prettier": "prettier", "eslint": "eslint", "rust": "rust", "phd": "phd",
}
_CORP_SUFFIXES = {"inc", "corp", "corporation", "ltd", "llc", "co", "gmbh", "plc"}
_MONTHS = {name.lower(): i for i, name in enumerate(calendar.month_name) if name}
_MONTHS.update({name.lower(): i for i, name in enumerate(calendar.month_abbr) if name})
_MONTHS["sept"] = 9
_WEEKDAYS = {d.lower() for d in calendar.day_name} | {d.lower() for d in calendar.day_abbr}
_CAP_SKIP = {"i", "i'm", "i've", "i'll", "i'd", "im", "ok", "okay", "hi", "hello", "hey",
             "yes", "no", "thanks", "please", "today", "tomorrow", "yesterday"}
_MONTH_ALT = "|".join(sorted(_MONTHS, key=len, reverse=True))

_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9'&-]*|\d[\w-]*")
_SENT_RE = re.compile(r"(?<=[.!?])\s+")
_ISO_DATE_RE = re.compile(r"\b(\d{4}-\d{2}(?:-\d{2})?)\b")
_MONTH_YEAR_RE = re.compile(rf"\b({_MONTH_ALT})\.?\s+(?:\d{{1,2}}(?:st|nd|rd|th)?,?\s+)?(\d{{4}})\b", re.I)
_BARE_MONTH_RE = re.compile(rf"\b(?:in|since|during|until|by|this|last)\s+({_MONTH_ALT})\b(?!\.?\s+\d)", re.I)
_BARE_YEAR_RE = re.compile(r"\b(?:in|since|during|until|by)\s+((?:19|20)\d{2})\b(?!-)", re.I)
_RELATIVE_RE = re.compile(
    r"\b(today|tonight|this morning|this afternoon|this evening|yesterday|tomorrow|"
    r"last week|last month|last year|this month|this year|next month|next year|"
    r"(\d+|a|one|two|three|four|five|six|seven|eight|nine|ten)\s+(day|week|month|year)s?\s+ago)\b",
    re.I,
)
_NUMBER_WORDS = {"a": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
                 "seven": 7, "eight": 8, "nine": 9, "ten": 10}

_HEDGES = ("thinking of", "thinking about", "considering", "might", "maybe", "perhaps",
           "probably", "not sure", "planning to", "may ")
_REPORTED = ("said", "says", "told me", "mentioned", "claims", "according to")
_MILESTONE = ("finally", "defended", "graduated", "got married", "got engaged", "promoted",
              "promotion", "was born", "anniversary", "milestone", "passed my", "first ever")
_IDENTITY = ("my name", "my thesis", "my phd", "my dissertation", "my birthday", "my favorite",
             "my favourite", "i prefer", "about me", "my wife", "my husband", "my partner",
             "my sister", "my brother", "my mother", "my father", "my mom", "my dad",
             "allergic", "my hometown")

_DIET_RE = re.compile(r"\b(vegetarian|vegan|pescatarian|omnivore|flexitarian|keto|carnivore)\b")
_FIRST_PERSON_RE = re.compile(r"\b(i|i'm|im|i've|i am|my|me)\b")
_EMPLOYER_RES = (
    re.compile(r"\b(?:job|work|working|position|role|internship|employed)\s+(?:at|for|with)\s+(?P<e>[A-Z][\w&-]*(?:\s+[A-Z][\w&.-]*)*)"),
    re.compile(r"\baccepted\s+(?:the\s+|an\s+|a\s+)?(?:job\s+)?offer\s+(?:from|at)\s+(?P<e>[A-Z][\w&-]*(?:\s+[A-Z][\w&.-]*)*)"),
    re.compile(r"\bjoined\s+(?P<e>[A-Z][\w&-]*(?:\s+[A-Z][\w&.-]*)*)"),
)
_RESIDENCE_RE = re.compile(r"\b(?:I|i)\s+(?:live|moved|relocated)\s+(?:in|to)\s+(?P<e>[A-Z][\w-]*(?:\s+[A-Z][\w-]*)*)")
_POSSESSIVE_RE = re.compile(r"\bmy\s+((?:[a-z]+(?:'s)?\s+){0,2}?[a-z]+)\s+is\s+([^.,!?;]+)")
_THESIS_RE = re.compile(r"\b(?:thesis|dissertation)\b.*?\b(?:on|about)\s+([a-z][a-z\s-]*?)\s*(?:[.!?,;]|$)", re.S)
_ALLERGY_RE = re.compile(r"\ballergic\s+to\s+([a-z][a-z\s]*?)\s*(?:[.!?,;]|$)")

_LANGS = {"typescript": "TypeScript", "javascript": "JavaScript", "python": "Python",
          "rust": "Rust", "java": "Java", "kotlin": "Kotlin", "golang": "Go"}
_LANG_RE = re.compile(
    r"\b(never|don't|do not|not|no)?\s*(?:always\s+)?(?:use|prefer|write(?:\s+in)?|stick\s+to|switch\s+to|code\s+in)"
    r"\s+(?:plain\s+|only\s+)?(" + "|".join(_LANGS) + r")\b")
_FORMATTERS = {"prettier": "Prettier", "black": "Black", "eslint": "ESLint", "rustfmt": "rustfmt", "gofmt": "gofmt"}
_FORMAT_RE = re.compile(r"\b(?:format\w*|use)\b[^.]*?\b(" + "|".join(_FORMATTERS) + r")\b")
_INDENT_RE = re.compile(r"\b(\d+)[- ]space")
_COMPONENT_RE = re.compile(r"\b(?:prefer|use|write)\s+(functional|class)\s+components?\b")


def _entity_from_span(span: str) -> str:
    words = normalize_entity(span).split()
    while len(words) > 1 and words[-1] in _CORP_SUFFIXES:
        words.pop()
    return " ".join(words)


def _shift_months(ts: Timestamp, months: int) -> Timestamp:
    dt = ts.instant
    total = dt.year * 12 + (dt.month - 1) + months
    return Timestamp(dt.replace(year=total // 12, month=total % 12 + 1, day=1), Granularity.MONTH)


def _finer_or_equal(ts: Timestamp, g: Granularity) -> bool:
    order = [Granularity.YEAR, Granularity.MONTH, Granularity.DAY, Granularity.HOUR, Granularity.MINUTE]
    return ts.known and order.index(ts.granularity) >= order.index(g)


def resolve_relative(phrase: str, anchor: Timestamp) -> Timestamp:
    """Resolve a relative expression against the turn timestamp.

    When the anchor is too coarse to pin the phrase down (``yesterday`` on a
    month-precision turn) the result is ``unknown`` rather than a guess.
    """
    p = phrase.lower()
    if not anchor.known:
        return Timestamp.unknown()
    if p in ("today", "tonight") or p.startswith("this morning") or p.startswith("this afternoon") \
            or p.startswith("this evening"):
        return anchor
    if p in ("yesterday", "tomorrow"):
        if not _finer_or_equal(anchor, Granularity.DAY):
            return Timestamp.unknown()
        delta = timedelta(days=-1 if p == "yesterday" else 1)
        return Timestamp(anchor.instant + delta, Granularity.DAY)
    if p == "last week":
        if not _finer_or_equal(anchor, Granularity.DAY):
            return Timestamp.unknown()
        return Timestamp(anchor.instant - timedelta(days=7), Granularity.DAY)
    if p in ("this month", "last month", "next month"):
        if not _finer_or_equal(anchor, Granularity.MONTH):
            return Timestamp.unknown()
        return _shift_months(anchor, {"this month": 0, "last month": -1, "next month": 1}[p])
    if p in ("this year", "last year", "next year"):
        delta = {"this year": 0, "last year": -1, "next year": 1}[p]
        return Timestamp.of(anchor.instant.year + delta)
    m = re.match(r"(\d+|\w+)\s+(day|week|month|year)s?\s+ago", p)
    if m:
        n = int(m.group(1)) if m.group(1).isdigit() else _NUMBER_WORDS.get(m.group(1), 1)
        unit = m.group(2)
        if unit in ("day", "week"):
            if not _finer_or_equal(anchor, Granularity.DAY):
                return Timestamp.unknown()
            days = n * (7 if unit == "week" else 1)
            return Timestamp(anchor.instant - timedelta(days=days), Granularity.DAY)
        if unit == "month":
            if not _finer_or_equal(anchor, Granularity.MONTH):
                return Timestamp.unknown()
            return _shift_months(anchor, -n)
        return Timestamp.of(anchor.instant.year - n)
    return Timestamp.unknown()


class RuleExtractor:
    """Deterministic template extractor.

    Entities are capitalized spans (sentence-initial words only when they are
    seed entities or start a multi-word span) plus seed-dictionary hits.
    Temporal expressions cover ISO dates, month-year, bare months and years
    anchored to the turn, and a fixed set of relative phrases. Triples come
    from first-person templates with confidence 0.9, hedged statements 0.5
    and reported speech 0.6.
    """

    COPULAR = 0.9
    HEDGED = 0.5
    REPORTED = 0.6

    def __init__(self, seed_entities: dict[str, str] | None = None):
        self.seed_entities = dict(SEED_ENTITIES if seed_entities is None else seed_entities)

    # entities ---------------------------------------------------------------

    def entities(self, text: str) -> list[str]:
        found: list[str] = []
        for sentence in _SENT_RE.split(text):
            words = list(_WORD_RE.finditer(sentence))
            span: list[str] = []
            span_start = 0

            def flush():
                if not span:
                    return
                initial_only = span_start == 0 and len(span) == 1
                name = _entity_from_span(" ".join(span))
                if name and (not initial_only or name in self.seed_entities):
                    found.append(name)

            for i, m in enumerate(words):
                w = m.group(0)
                lw = w.lower()
                capital = w[0].isupper() and lw not in _CAP_SKIP and lw not in _MONTHS and lw not in _WEEKDAYS
                if capital:
                    if not span:
                        span_start = i
                    span.append(w)
                else:
                    flush()
                    span = []
            flush()
        lowered = tokenize(text)
        for tok in lowered:
            if tok in self.seed_entities:
                found.append(self.seed_entities[tok])
        return sorted(set(found))

    # temporal ---------------------------------------------------------------

    def temporal_expressions(self, text: str, anchor: Timestamp) -> list[tuple[str, Timestamp]]:
        hits: list[tuple[int, str, Timestamp]] = []
        taken: list[tuple[int, int]] = []

        def add(m: re.Match, group: int, ts: Timestamp):
            start, end = m.span(group)
            if any(s < end and start < e for s, e in taken):
                return
            taken.append((start, end))
            hits.append((start, m.group(group), ts))

        for m in _ISO_DATE_RE.finditer(text):
            try:
                add(m, 1, Timestamp.parse(m.group(1)))
            except ValueError:
                continue
        for m in _MONTH_YEAR_RE.finditer(text):
            month = _MONTHS[m.group(1).lower()]
            add(m, 0, Timestamp.of(int(m.group(2)), month))
        for m in _BARE_MONTH_RE.finditer(text):
            month = _MONTHS[m.group(1).lower()]
            if anchor.known:
                ts = Timestamp.of(anchor.instant.year, month)
            else:
                ts = Timestamp.unknown()
            add(m, 1, ts)
        for m in _BARE_YEAR_RE.finditer(text):
            add(m, 1, Timestamp.of(int(m.group(1))))
        for m in _RELATIVE_RE.finditer(text):
            add(m, 1, resolve_relative(m.group(1), anchor))
        hits.sort(key=lambda h: h[0])
        return [(surface, ts) for _, surface, ts in hits]

    # triples & preferences --------------------------------------------------

    def _confidence(self, sentence_lower: str) -> float:
        if any(h in sentence_lower for h in _HEDGES):
            return self.HEDGED
        if any(r in sentence_lower for r in _REPORTED):
            return self.REPORTED
        return self.COPULAR

    def triples(self, text: str) -> list[tuple[Triple, float]]:
        out: list[tuple[Triple, float]] = []
        for sentence in _SENT_RE.split(text):
            low = sentence.lower()
            first_person = bool(_FIRST_PERSON_RE.search(low))
            conf = self._confidence(low)
            if first_person:
                diets = _DIET_RE.findall(low)
                if diets:
                    out.append((("user", "diet", diets[-1]), conf))
            for rx in _EMPLOYER_RES:
                m = rx.search(sentence)
                if m and first_person:
                    name = _entity_from_span(m.group("e"))
                    if name:
                        out.append((("user", "employer", name), conf))
                    break
            m = _RESIDENCE_RE.search(sentence)
            if m:
                out.append((("user", "residence", _entity_from_span(m.group("e"))), conf))
            for m in _POSSESSIVE_RE.finditer(low):
                attr = "_".join(m.group(1).replace("'s", "").split())
                value = " ".join(m.group(2).split())
                if attr and value:
                    out.append((("user", attr, value), conf))
            m = _ALLERGY_RE.search(low)
            if m and first_person:
                out.append((("user", "allergy", " ".join(m.group(1).split())), conf))
        low_all = text.lower()
        m = _THESIS_RE.search(low_all)
        if m and _FIRST_PERSON_RE.search(low_all):
            out.append((("user", "thesis_topic", " ".join(m.group(1).split())), self._confidence(low_all)))
        seen = set()
        unique = []
        for triple, conf in out:
            if triple not in seen:
                seen.add(triple)
                unique.append((triple, conf))
        return unique

    def preferences(self, text: str) -> list[tuple[str, str, str]]:
        out: list[tuple[str, str, str]] = []
        for sentence in _SENT_RE.split(text):
            low = sentence.lower()
            for m in _LANG_RE.finditer(low):
                if m.group(1):  # negated mention ("never plain JavaScript")
                    continue
                out.append(("code", "language", _LANGS[m.group(2)]))
                break
            fm = _FORMAT_RE.search(low)
            indent = _INDENT_RE.search(low)
            if fm or (indent and "indent" in low):
                parts = []
                if fm:
                    parts.append(_FORMATTERS[fm.group(1)])
                if indent:
                    parts.append(f"{indent.group(1)}-space indentation")
                out.append(("code", "formatting", ", ".join(parts)))
            cm = _COMPONENT_RE.search(low)
            if cm:
                out.append(("code", "component_style", f"{cm.group(1)} components"))
        return out

    def extract(self, text: str, speaker: str = "user", timestamp: Timestamp | None = None) -> ExtractionResult:
        anchor = timestamp or Timestamp.unknown()
        low = text.lower()
        triples = self.triples(text)
        prefs = self.preferences(text)
        identity = (
            any(t[0][0] == "user" for t in triples)
            or any(cue in low for cue in _IDENTITY)
            or bool(prefs)
        )
        return ExtractionResult(
            entities=self.entities(text),
            temporal_expressions=self.temporal_expressions(text, anchor),
            triples=triples,
            preference_statements=prefs,
            identity_flag=identity,
            milestone=any(cue in low for cue in _MILESTONE),
        )


# ---------------------------------------------------------------------------
# Online adapters (optional)
# ---------------------------------------------------------------------------

API_KEY_ENV = "BRAINMEM_API_KEY"


@dataclass
class OnlineAdapterConfig:
    endpoint: str = "https://api.openai.com/v1"
    embedding_model: str = "text-embedding-3-small"
    chat_model: str = "gpt-4o-mini"
    api_key_env: str = API_KEY_ENV
    timeout: float = 30.0

    @classmethod
    def from_env(cls) -> "OnlineAdapterConfig":
        return cls(
            endpoint=os.environ.get("BRAINMEM_ENDPOINT", cls.endpoint),
            embedding_model=os.environ.get("BRAINMEM_EMBED_MODEL", cls.embedding_model),
            chat_model=os.environ.get("BRAINMEM_CHAT_MODEL", cls.chat_model),
        )

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)


def _client(config: OnlineAdapterConfig, transport=None):
    try:
        import httpx
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise EmbedderUnavailable("httpx is required for online adapters") from exc
    headers = {}
    key = config.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return httpx.Client(base_url=config.endpoint, headers=headers, timeout=config.timeout, transport=transport)


class OnlineEmbedder:
    """Embeddings from an OpenAI-compatible ``/embeddings`` endpoint, L2-normalized."""

    def __init__(self, config: OnlineAdapterConfig, dim: int = 1536, transport=None):
        self.config = config
        self.dim = dim
        self._transport = transport

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        try:
            with _client(self.config, self._transport) as client:
                resp = client.post("/embeddings", json={"model": self.config.embedding_model, "input": text})
                resp.raise_for_status()
                values = resp.json()["data"][0]["embedding"]
        except EmbedderUnavailable:
            raise
        except Exception as exc:
            raise EmbedderUnavailable(str(exc)) from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise EmbedderUnavailable(f"expected {self.dim} dims, got {vec.shape}")
        return vec / np.linalg.norm(vec)


def chat_json(config: OnlineAdapterConfig, prompt: str, transport=None) -> dict:
    """Send one user message and parse the reply as a JSON object."""
    try:
        with _client(config, transport) as client:
            resp = client.post("/chat/completions", json={
                "model": config.chat_model,
                "temperature": 0.0,
                "messages": [{"role": "user", "content": prompt}],
            })
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
    except Exception as exc:
        raise ExtractorUnavailable(str(exc)) from exc
    match = re.search(r"\{.*\}", content, re.S)
    if not match:
        raise ExtractorUnavailable(f"no JSON object in reply: {content[:80]!r}")
    return json.loads(match.group(0))
