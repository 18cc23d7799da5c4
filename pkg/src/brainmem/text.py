"""Tokenization and normalization helpers used by every index."""

from __future__ import annotations

import re
import string

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})

STOPWORDS = frozenset(
    """
    a an the and or but if of at by for with about against between into through
    during to from in out on off over under again further then once here there
    all any both each few more most other some such no nor not only own same so
    than too very s t m d ll re ve can will just don should now is am are was were
    be been being have has had having do does did doing i me my myself we our ours
    you your yours he him his she her it its they them their what which who whom
    this that these those when where why how as up down
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens, order preserved, stopwords kept."""
    return _TOKEN_RE.findall(text.lower())


def content_terms(text: str) -> set[str]:
    """Token set with stopwords removed; the unit of bag-of-terms matching."""
    return {t for t in tokenize(text) if t not in STOPWORDS}


def normalize_entity(name: str) -> str:
    """Case-fold, replace punctuation with spaces, collapse whitespace. No stemming."""
    return " ".join(name.casefold().translate(_PUNCT_TABLE).split())


_SUFFIXES = ("ing", "ed", "es", "s")


def stem(token: str) -> str:
    """Crude suffix stripping so "launched", "launches" and "launch" meet.

    A trailing "e" is dropped as well ("leave" and "leaving" both give "leav").
    """
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            token = token[: -len(suffix)]
            break
    if token.endswith("e") and len(token) > 3:
        token = token[:-1]
    return token


def match_terms(text: str) -> set[str]:
    """Stemmed content terms, used for event pattern matching."""
    return {stem(t) for t in content_terms(text)}
