"""Acceptance criteria 1-9. Each test records a PASS/FAIL line printed at the end of the run."""

import contextlib
import random
import time
from datetime import date

import pytest

import archive_mutations as mut
from brainmem import Engine, EngineConfig
from brainmem.cli import main
from brainmem.errors import ArchiveCorrupt, VersionMismatch
from brainmem.metrics import (SoulComponents, erosion, identity_preservation, parse_probe, soulfulness,
                              temporal_coherence)
from brainmem.records import EpisodicTrace
from brainmem.retrieval import RankedList, fuse_rrf
from brainmem.semantic import TemporalLobe
from brainmem.storyarc import StoryArc
from brainmem.substrate import Substrate
from brainmem.timestamps import Timestamp
from conftest import ACCEPTANCE, DATA, load_turns, replay


@contextlib.contextmanager
def criterion(n: int):
    detail = {"text": ""}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE[n] = (False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    ACCEPTANCE[n] = (True, f"{detail['text']} ({time.perf_counter() - start:.2f}s)".strip())


# ---------------------------------------------------------------------------
# 1. weighted RRF against a naive double-loop oracle
# ---------------------------------------------------------------------------


def rrf_oracle(lists, weights, k=60):
    candidates = sorted({cid for _, ids in lists for cid in ids})
    rows = []
    for cid in candidates:
        score, ranks = 0.0, {}
        for source, ids in lists:
            for position in range(len(ids)):
                if ids[position] == cid:
                    score += weights[source] / (k + position + 1)
                    ranks[source] = position + 1
        rows.append((cid, score, ranks))
    rows.sort(key=lambda r: (-r[1], min(r[2].values()), r[0]))
    return rows


def test_criterion_1_rrf_oracle():
    with criterion(1) as info:
        assert abs(fuse_rrf([RankedList("lexical", [("d", 0)])], {"lexical": 1.0})[0].fused_score - 1 / 61) < 1e-12
        pair = fuse_rrf([RankedList("lexical", [("d", 0)]), RankedList("dense", [("a", 0), ("b", 0), ("d", 0)])],
                        {"lexical": 1.0, "dense": 1.0})
        assert abs(next(r for r in pair if r.candidate_id == "d").fused_score - (1 / 61 + 1 / 63)) < 1e-12

        rng = random.Random(1)
        start = time.perf_counter()
        for _ in range(1000):
            pool = [f"c{i}" for i in range(rng.randint(1, 100))]
            sources = rng.sample(["lexical", "dense", "graph", "temporal"], rng.randint(1, 4))
            lists = [(s, rng.sample(pool, rng.randint(0, len(pool)))) for s in sources]
            weights = {s: rng.uniform(0.0, 3.0) for s in sources}
            got = fuse_rrf([RankedList(s, [(c, 0.0) for c in ids]) for s, ids in lists], weights, 60)
            want = rrf_oracle(lists, weights)
            assert [(r.candidate_id, r.fused_score, r.per_source_ranks) for r in got] == want
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0
        info["text"] = "1000 instances bit-exact"


# ---------------------------------------------------------------------------
# 2. moving-average confidence contract
# ---------------------------------------------------------------------------


def test_criterion_2_ema_contract():
    with criterion(2) as info:
        rng = random.Random(2)
        start = time.perf_counter()
        for _ in range(200):
            p0, target, lam = rng.random(), rng.random(), rng.uniform(0.01, 0.99)
            lobe = TemporalLobe(Substrate(EngineConfig(ema_lambda=lam)))
            fact, _ = lobe.upsert(("user", "trait", "x"), p0, "ep-0")
            for n in range(1, rng.randint(1, 40) + 1):
                fact, created = lobe.upsert(("user", "trait", "x"), target, f"ep-{n}")
                assert not created
                assert 0.0 <= fact.confidence <= 1.0
                assert abs(fact.confidence - target) <= (1 - lam) ** n + 1e-9
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0
        info["text"] = "200 triples within (1-lambda)^N"


# ---------------------------------------------------------------------------
# 3. timeline queries against a full-scan oracle, permutation invariant
# ---------------------------------------------------------------------------

VOCAB = ["launch", "visit", "paint", "draft", "grow", "mark", "plan", "sign", "open", "build", "ship", "host"]


def random_stamp(rng):
    r = rng.random()
    if r < 0.1:
        return "unknown"
    y = rng.randint(2019, 2024)
    if r < 0.3:
        return f"{y}"
    m = rng.randint(1, 12)
    if r < 0.65:
        return f"{y}-{m:02d}"
    return f"{y}-{m:02d}-{rng.randint(1, 28):02d}"


def _mid(s):
    parts = [int(x) for x in s.split("-")]
    if len(parts) == 1:
        return date(parts[0], 7, 1)
    if len(parts) == 2:
        return date(parts[0], parts[1], 15)
    return date(*parts)


class TimelineOracle:
    """Answers every query by scanning the flat event list; never looks at insertion order."""

    def __init__(self, events):
        self.events = events  # (entity, stamp string, word set)

    def when(self, entity, pattern):
        hits = [(len(pattern & words), s) for e, s, words in self.events if e == entity and pattern & words]
        if not hits:
            return None
        # most overlap, then known, then latest instant, then finer granularity
        return max(hits, key=lambda h: (h[0], h[1] != "unknown", _start(h[1]), len(h[1])))[1]

    def order(self, a, b):
        sa, sb = self.when(*a), self.when(*b)
        if sa is None or sb is None or "unknown" in (sa, sb):
            return "unknown"
        n = min(len(sa), len(sb))
        x, y = sa[:n], sb[:n]
        return "before" if x < y else "after" if x > y else "concurrent"

    def duration(self, a, b):
        sa, sb = self.when(*a), self.when(*b)
        if sa is None or sb is None or "unknown" in (sa, sb):
            return None
        return float(abs((_mid(sb) - _mid(sa)).days))

    def extremum(self, entity, which, pattern):
        pool = [s for e, s, words in self.events
                if e == entity and s != "unknown" and (pattern is None or pattern & words)]
        if not pool:
            return None
        key = lambda s: (_start(s), len(s))  # noqa: E731
        return min(pool, key=key) if which == "first" else max(pool, key=key)


def _start(s):
    if s == "unknown":
        return date.min
    parts = [int(x) for x in s.split("-")]
    return date(parts[0], parts[1] if len(parts) > 1 else 1, parts[2] if len(parts) > 2 else 1)


def engine_answers(arc, queries):
    out = []
    for q in queries:
        kind = q[0]
        try:
            if kind == "when":
                out.append(str(arc.query_when(q[1], " ".join(sorted(q[2])))[0]))
            elif kind == "order":
                out.append(arc.query_order((q[1][0], " ".join(sorted(q[1][1]))),
                                           (q[2][0], " ".join(sorted(q[2][1])))).value)
            elif kind == "duration":
                out.append(arc.query_duration((q[1][0], " ".join(sorted(q[1][1]))),
                                              (q[2][0], " ".join(sorted(q[2][1])))).days)
            else:
                pattern = None if q[3] is None else " ".join(sorted(q[3]))
                out.append(str(arc.query_extremum(q[1], q[2], pattern).at))
        except LookupError:
            out.append(None)
    return out


def oracle_answers(oracle, queries):
    out = []
    for q in queries:
        if q[0] == "when":
            out.append(oracle.when(q[1], q[2]))
        elif q[0] == "order":
            out.append(oracle.order(q[1], q[2]))
        elif q[0] == "duration":
            out.append(oracle.duration(q[1], q[2]))
        else:
            out.append(oracle.extremum(q[1], q[2], q[3]))
    return out


def test_criterion_3_timeline_oracle():
    with criterion(3) as info:
        rng = random.Random(3)
        start = time.perf_counter()
        checked = 0
        for t in range(100):
            entities = [f"ent{i}" for i in range(rng.randint(1, 3))]
            n = rng.randint(1, 500)
            events, traces = [], []
            for i in range(n):
                ents = rng.sample(entities, rng.randint(1, len(entities)))
                words = rng.sample(VOCAB, rng.randint(1, 4))
                stamp = random_stamp(rng)
                ts = Timestamp.parse(stamp)
                traces.append(EpisodicTrace(f"ep-{i}", " ".join(words), ts, ts, "S", "user", entities=ents))
                events.extend((e, stamp, set(words)) for e in ents)
            oracle = TimelineOracle(events)

            def pat():
                return set(rng.sample(VOCAB, rng.randint(1, 2)))

            queries = []
            for _ in range(3):
                queries.append(("when", rng.choice(entities), pat()))
                queries.append(("order", (rng.choice(entities), pat()), (rng.choice(entities), pat())))
                queries.append(("duration", (rng.choice(entities), pat()), (rng.choice(entities), pat())))
                queries.append(("extremum", rng.choice(entities), rng.choice(["first", "last"]),
                                rng.choice([None, pat()])))
            want = oracle_answers(oracle, queries)
            for p in range(20):
                order = traces[:]
                if p:
                    rng.shuffle(order)
                arc = StoryArc(Substrate())
                arc.index_many(order)
                assert engine_answers(arc, queries) == want, f"timeline {t}, permutation {p}"
                checked += len(queries)
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"took {elapsed:.1f}s"
        info["text"] = f"{checked} answers equal to full scan over 100 timelines x 20 orders"


# ---------------------------------------------------------------------------
# 4. the four scripted cases
# ---------------------------------------------------------------------------

THESIS = "I finally defended my PhD thesis today! Five years of work on neural memory models."


def run_cases():
    out = {}
    e1 = replay("case1")
    out["case1"] = [str(a.at) for a in e1.retrieve("When did I leave Google?").temporal_answers]
    e2 = replay("case2", cycle_each=True)
    live = e2.lobe.query_facts("user", "diet")
    first = min(e2.lobe.query_facts("user", "diet", include_superseded=True), key=lambda f: f.created_at.sort_key())
    out["case2"] = ([f.object for f in live], len(e2.lobe.lineage(first.id)) - 1)
    e3 = replay("case3", EngineConfig(cap_hippocampus=5))
    out["case3"] = (THESIS in [t.content for t in e3.store.records("episodic")], e3.store.count("episodic"),
                    len(load_turns("case3")) - 1)
    e4 = replay("case4")
    out["case4"] = sorted(e4.retrieve("Write me a React component for a login form.").constraints)
    out["digests"] = [e.state_digest() for e in (e1, e2, e3, e4)]
    return out


def test_criterion_4_case_suite():
    with criterion(4) as info:
        first, second = run_cases(), run_cases()
        assert first == second
        assert first["case1"] == ["2023-06"]
        assert first["case2"] == (["vegetarian"], 2)
        assert first["case3"] == (True, 5, 33)
        assert first["case4"] == sorted(["TypeScript", "Prettier, 2-space indentation", "functional components"])
        info["text"] = "cases 1-4 reproduced twice with identical state digests"


# ---------------------------------------------------------------------------
# 5. frozen mode
# ---------------------------------------------------------------------------

QUERY_SUITE = [
    "When did I leave Google?", "When did I start my job at Google?", "When did I accept the offer?",
    "What is a knowledge graph?", "Where do I work now?", "What did I say about startups?",
    "Remind me what my sister needs", "How long was I at Google?", "What happened first, Google or TechStartup?",
    "What was my last job?", "Tell me about venture funding", "What pasta recipe did you suggest?",
    "Which stretching routine is good?", "Did the interviews go well?", "When were the interviews?",
]


def test_criterion_5_frozen(tmp_path, capsys):
    with criterion(5) as info:
        store = tmp_path / "frozen.bma"
        assert main(["ingest", str(DATA / "case1.jsonl"), "--store", str(store), "--freeze-after"]) == 0
        raw = store.read_bytes()
        engine = Engine.load(store)
        digest = engine.state_digest()
        queries = [f"{prefix}{q}" for prefix in ("", "Quick question: ", "Remind me: ", "Again, ") for q in QUERY_SUITE]
        assert len(queries) >= 50
        for q in queries:
            engine.retrieve(q)
            assert engine.state_digest() == digest
        for q in queries[:10]:
            assert main(["query", q, "--store", str(store)]) == 0
        assert main(["cycle", "--store", str(store)]) == 3
        assert main(["ingest", str(DATA / "case2.jsonl"), "--store", str(store)]) == 3
        assert store.read_bytes() == raw
        assert Engine.load(store).state_digest() == digest
        capsys.readouterr()
        info["text"] = f"{len(queries)} queries, digest unchanged, cycle/ingest exit 3"


# ---------------------------------------------------------------------------
# 6. capacity invariants under random operation sequences
# ---------------------------------------------------------------------------

POOL = [
    "I just started my new job at Google.", "I'm vegetarian for health reasons.", "I'm vegan now.",
    "My favorite color is teal.", "My hometown is Dunmore.", "Always use TypeScript, never plain JavaScript.",
    "Use plain JavaScript for this one.", "Format code with Prettier, 2-space indentation.",
    "I finally defended my PhD thesis today!", "I joined Globex last month.",
    "The weather is grey.", "We watched a movie.", "Need to buy milk.", "The bus was late again.",
    "Dinner was pasta with garlic.", "Traffic was heavy downtown.", "The park was crowded.",
]


def test_criterion_6_capacity_invariants():
    with criterion(6) as info:
        # amygdala cap above the episodic cap so protected traces can outnumber the free slots
        cfg = EngineConfig(cap_hippocampus=15, cap_temporal_lobe=12, cap_amygdala=40, cap_prefrontal=5,
                           cap_basal_ganglia=3)
        engine = Engine(cfg)
        hippo = engine.hippocampus
        violations, protected_pruned = [], []
        original_prune = hippo.prune

        def checked_prune(memory_id):
            protected = hippo.protected_ids()
            if memory_id in protected:
                protected_pruned.append(memory_id)
                remaining = {t.id for t in engine.store.records("episodic")}
                if remaining - protected:
                    violations.append(memory_id)
            original_prune(memory_id)

        hippo.prune = checked_prune
        rng = random.Random(6)
        day = 0
        for op in range(10_000):
            r = rng.random()
            if r < 0.7:
                day += rng.randint(0, 3)
                ts = date.fromordinal(date(2020, 1, 1).toordinal() + day).isoformat()
                text = f"{rng.choice(POOL)} note {rng.randint(0, 50)}"
                engine.ingest_turn({"session_id": f"S{rng.randint(1, 40)}", "speaker": "user", "text": text,
                                    "timestamp": ts})
            elif r < 0.95:
                ids = [t.id for t in engine.store.records("episodic")]
                if ids:
                    engine.record_access(rng.choice(ids))
            else:
                engine.run_cycle()
            assert engine.store.count("episodic") <= cfg.cap_hippocampus
            assert engine.store.count("semantic") <= cfg.cap_temporal_lobe
            assert engine.store.count("salience") <= cfg.cap_amygdala
            assert engine.store.count("procedural") <= cfg.cap_basal_ganglia
            assert len(engine.store.working_memory) <= cfg.cap_prefrontal
        assert violations == []
        assert protected_pruned, "sequence never pressured protected traces"
        info["text"] = (f"10000 ops, caps held; {len(protected_pruned)} protected prunes, "
                        "each only after every unprotected trace was gone")


# ---------------------------------------------------------------------------
# 7. ablation directionality
# ---------------------------------------------------------------------------

NAMES = ["Orion", "Vega", "Lyra", "Draco", "Cygnus", "Aquila", "Perseus", "Hydra", "Pegasus", "Carina",
         "Auriga", "Lupus", "Corvus", "Fornax", "Pavo", "Tucana", "Volans", "Octans", "Pictor", "Dorado",
         "Phoenix", "Columba", "Sextans", "Antlia", "Pyxis"]
VERBS = [("launched", "launch"), ("visited", "visit"), ("painted", "paint"), ("finished", "finish"),
         ("signed", "sign"), ("opened", "open"), ("funded", "fund"), ("pitched", "pitch")]
MONTHS = ["January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
          "November", "December"]
FILLER = ["The weather was mild today.", "We cooked soup for dinner.", "The train ran on time.",
          "A neighbour walked the dog.", "Rain tapped on the window.", "The cafe was quiet."]


def synthetic_temporal_suite(rng):
    turns, probes = [], []
    for i, name in enumerate(NAMES):
        for past, base in rng.sample(VERBS, 2):
            year, month = rng.randint(2015, 2023), rng.randint(1, 12)
            turns.append(f"I {past} {name} in {MONTHS[month - 1]} {year}.")
            probes.append({"kind": "temporal", "query": f"When did I {base} {name}?",
                           "expected": f"{year}-{month:02d}"})
    rng.shuffle(turns)
    rows = []
    for n, text in enumerate(turns):
        rows.append(text)
        rows.append(FILLER[n % len(FILLER)])
    return rows, [parse_probe(p) for p in probes]


IDENTITY = [("favorite color", "teal"), ("hometown", "dunmore"), ("lucky number", "seventeen"),
            ("middle name", "ambrose"), ("blood type", "onegative"), ("first pet", "biscuit"),
            ("favorite author", "borges"), ("childhood street", "elmwood"), ("dream job", "cartographer"),
            ("favorite dish", "ratatouille")]


def build(rows, config):
    engine = Engine(config)
    for n, text in enumerate(rows):
        day = date.fromordinal(date(2024, 1, 1).toordinal() + n).isoformat()
        engine.ingest_turn({"session_id": f"S{n}", "speaker": "user", "text": text, "timestamp": day})
    return engine


def test_criterion_7_ablation_directionality():
    with criterion(7) as info:
        rows, probes = synthetic_temporal_suite(random.Random(7))
        assert len(probes) == 50
        t_full, _ = temporal_coherence(build(rows, EngineConfig()), probes)
        t_ablated, _ = temporal_coherence(build(rows, EngineConfig(disabled_regions=("hippocampus",))), probes)
        assert t_full - t_ablated >= 0.5, (t_full, t_ablated)

        id_rows = [f"My {attr} is {value}." for attr, value in IDENTITY]
        id_rows += [f"{FILLER[n % len(FILLER)]} Entry {n} noted." for n in range(40)]
        id_probes = [parse_probe({"kind": "identity", "query": f"What is my {attr}?", "expected": [value]})
                     for attr, value in IDENTITY]
        pressure = dict(cap_hippocampus=20)
        i_full, _ = identity_preservation(build(id_rows, EngineConfig(**pressure)), id_probes)
        i_ablated, _ = identity_preservation(
            build(id_rows, EngineConfig(**pressure, disabled_regions=("amygdala",))), id_probes)
        assert i_full - i_ablated >= 0.3, (i_full, i_ablated)
        info["text"] = f"T {t_full:.2f} -> {t_ablated:.2f}, I {i_full:.2f} -> {i_ablated:.2f}"


# ---------------------------------------------------------------------------
# 8. soulfulness arithmetic
# ---------------------------------------------------------------------------


def test_criterion_8_soulfulness():
    with criterion(8) as info:
        assert abs(soulfulness(SoulComponents(0.623, 0.9, 0.489, (0.5, 0.3, 0.2))) - 0.6793) < 1e-12
        rng = random.Random(8)
        for _ in range(2000):
            a = rng.random()
            b = rng.random() * (1 - a)
            w = (a, b, 1 - a - b)
            t, c, i = rng.random(), rng.random(), rng.random()
            s = soulfulness(SoulComponents(t, c, i, w))
            assert min(t, c, i) - 1e-12 <= s <= max(t, c, i) + 1e-12
            bumped = [soulfulness(SoulComponents(*v, w)) for v in
                      ((min(1, t + 0.1), c, i), (t, min(1, c + 0.1), i), (t, c, min(1, i + 0.1)))]
            assert all(x >= s - 1e-12 for x in bumped)
            s2 = soulfulness(SoulComponents(rng.random(), rng.random(), rng.random(), w))
            assert erosion(s, s2).erosion == -erosion(s2, s).erosion
        info["text"] = "S=0.6793 exact; convexity, monotonicity, antisymmetry over 2000 draws"


# ---------------------------------------------------------------------------
# 9. archive round trip and damage detection
# ---------------------------------------------------------------------------


def random_state(rng):
    engine = Engine(EngineConfig(cap_hippocampus=rng.randint(5, 40)))
    for n in range(rng.randint(0, 30)):
        engine.ingest_turn({"session_id": f"S{rng.randint(1, 9)}", "speaker": rng.choice(["user", "assistant"]),
                            "text": f"{rng.choice(POOL)} (ünïcode {n})", "timestamp": random_stamp(rng)})
        if rng.random() < 0.2:
            engine.run_cycle()
        if rng.random() < 0.3 and engine.store.count("episodic"):
            engine.record_access(rng.choice([t.id for t in engine.store.records("episodic")]))
    if rng.random() < 0.2:
        engine.freeze()
    return engine


def test_criterion_9_archive(tmp_path):
    with criterion(9) as info:
        rng = random.Random(9)
        for n in range(50):
            engine = random_state(rng)
            path = tmp_path / f"s{n}.bma"
            engine.export(path)
            assert Engine.load(path).state_digest() == engine.state_digest()
        source = replay("case1")
        detected = 0
        for mutation in mut.MUTATIONS:
            path = tmp_path / f"{mutation.__name__}.bma"
            source.export(path)
            mutation(path)
            with pytest.raises((ArchiveCorrupt, VersionMismatch)):
                Engine.load(path)
            detected += 1
        assert detected >= 10
        info["text"] = f"50 round trips equal, {detected} damaged archives rejected"
