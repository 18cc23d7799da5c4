"""Procedural preferences: recurring statements that become standing constraints."""

from __future__ import annotations

from .adapters import ExtractionResult
from .records import EpisodicTrace, MemoryId, ProceduralPattern
from .substrate import Substrate, id_index
from .text import tokenize

# Lexicon deciding which domain tags a task request carries.
TASK_LEXICON = {
    "code": {"code", "component", "function", "script", "program", "react", "typescript", "javascript",
             "python", "api", "refactor", "implement", "class", "module", "bug", "debug", "css", "html",
             "endpoint", "test", "tests", "app", "frontend", "backend", "form"},
    "cooking": {"recipe", "cook", "cooking", "meal", "dinner", "lunch", "breakfast", "bake"},
}


def task_tags(text: str) -> set[str]:
    toks = set(tokenize(text))
    return {domain for domain, words in TASK_LEXICON.items() if toks & words}


def _fixed(support: int, contradictions: int) -> bool:
    return support >= 2 and contradictions == 0


class BasalGanglia:
    def __init__(self, store: Substrate):
        self.store = store

    def pattern(self, key: str) -> ProceduralPattern | None:
        hits = self.store.scan("procedural", key=key)
        return hits[0] if hits else None

    def observe_statement(self, trace: EpisodicTrace, analysis: ExtractionResult) -> list[ProceduralPattern]:
        """Fold the trace's preference statements into their patterns.

        Support counts distinct sessions repeating the same value; a different
        value for an existing key counts as a contradiction.
        """
        touched = []
        with self.store.lock:
            self.store.check_writable("observe_statement")
            for domain, attribute, statement in analysis.preference_statements:
                key = f"{domain}.{attribute}"
                value = statement.casefold()
                pat = self.pattern(key)
                if pat is None:
                    pat = ProceduralPattern("", key, value, statement, [trace.session_id], 1, 0, False)
                    self.store.put_record("procedural", pat)
                elif pat.value == value:
                    if trace.session_id in pat.sessions:
                        continue
                    support = pat.support + 1
                    self.store.update("procedural", pat.id, sessions=sorted(pat.sessions + [trace.session_id]),
                                      support=support, fixed_point=_fixed(support, pat.contradictions))
                else:
                    self.store.update("procedural", pat.id, contradictions=pat.contradictions + 1,
                                      fixed_point=False)
                touched.append(pat)
            return touched

    def resolve(self, key: str, statement: str, session_id: str) -> ProceduralPattern:
        """Settle a contradicted pattern on ``statement``, restarting its evidence count."""
        with self.store.lock:
            self.store.check_writable("resolve pattern")
            pat = self.pattern(key)
            if pat is None:
                pat = ProceduralPattern("", key, statement.casefold(), statement, [session_id], 1, 0, False)
                self.store.put_record("procedural", pat)
                return pat
            return self.store.update("procedural", pat.id, value=statement.casefold(), statement=statement,
                                     sessions=[session_id], support=1, contradictions=0, fixed_point=False)

    def fixed_point_patterns(self) -> list[ProceduralPattern]:
        with self.store.lock:
            pats = self.store.scan("procedural", lambda p: p.fixed_point)
        return sorted(pats, key=lambda p: (-p.support, p.key))

    def apply_patterns(self, tags) -> list[str]:
        tags = set(tags)
        return [p.statement for p in self.fixed_point_patterns() if p.domain in tags]

    def enforce_capacity(self) -> list[MemoryId]:
        """Evict non-fixed patterns with the least support first, oldest first among equals."""
        with self.store.lock:
            self.store.check_writable("procedural capacity")
            excess = self.store.count("procedural") - self.store.config.cap_basal_ganglia
            if excess <= 0:
                return []
            pats = sorted(self.store.records("procedural"),
                          key=lambda p: (p.fixed_point, p.support, id_index(p.id)))
            out = []
            for p in pats[:excess]:
                self.store.delete("procedural", p.id)
                out.append(p.id)
            return out
