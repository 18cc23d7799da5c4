import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainmem import Engine, EngineConfig
from brainmem.adapters import HashEmbedder
from brainmem.errors import BadK, BadWeights, EmptyQuery
from brainmem.prefrontal import QueryProfile
from brainmem.retrieval import BM25Index, DenseIndex, RankedList, fuse_rrf, rank_graph, uncertainty
from brainmem.text import STOPWORDS, tokenize


def test_rrf_single_source():
    fused = fuse_rrf([RankedList("lexical", [("d", 9.0)])], {"lexical": 1.0})
    assert abs(fused[0].fused_score - 1 / 61) < 1e-12


def test_rrf_two_sources():
    lists = [RankedList("lexical", [("d", 1.0)]), RankedList("dense", [("x", 1.0), ("y", 1.0), ("d", 1.0)])]
    fused = {r.candidate_id: r for r in fuse_rrf(lists, {"lexical": 1.0, "dense": 1.0})}
    assert abs(fused["d"].fused_score - (1 / 61 + 1 / 63)) < 1e-12
    assert fused["d"].per_source_ranks == {"lexical": 1, "dense": 3}


def test_rrf_tie_breaks():
    lists = [RankedList("lexical", [("b", 0), ("a", 0)]), RankedList("dense", [("a", 0), ("b", 0)])]
    assert [r.candidate_id for r in fuse_rrf(lists, {"lexical": 1, "dense": 1})] == ["a", "b"]


def test_rrf_bad_inputs():
    with pytest.raises(BadK):
        fuse_rrf([], {}, k=0)
    with pytest.raises(BadWeights):
        fuse_rrf([], {"lexical": -1.0})
    assert fuse_rrf([], {}) == []


@given(st.lists(st.lists(st.sampled_from("abcdef"), unique=True, max_size=6), max_size=4))
def test_rrf_scores_positive_and_sorted(ids):
    lists = [RankedList(f"s{i}", [(c, 0.0) for c in l]) for i, l in enumerate(ids)]
    fused = fuse_rrf(lists, {f"s{i}": 1.0 for i in range(len(ids))})
    scores = [r.fused_score for r in fused]
    assert scores == sorted(scores, reverse=True)
    assert all(s > 0 for s in scores)


def test_uncertainty():
    lists = [RankedList("lexical", [("a", 0)]), RankedList("dense", [("a", 0)]), RankedList("graph", [("b", 0)])]
    fused = fuse_rrf(lists, {"lexical": 1, "dense": 1, "graph": 1})
    assert uncertainty(fused) == pytest.approx(1 / 3)
    assert uncertainty(fused[:1]) == 0.0
    assert uncertainty([]) == 1.0


CORPUS = {
    "d1": "the cat sat on the mat",
    "d2": "the dog chased the cat around the yard",
    "d3": "cats and dogs are common pets",
    "d4": "a mat for yoga practice",
    "d5": "the dog sat quietly",
}


def bm25_oracle(docs, query, k1=1.2, b=0.75):
    """Textbook BM25 by brute force over every document."""
    toks = {d: [t for t in tokenize(text) if t not in STOPWORDS] for d, text in docs.items()}
    n = len(docs)
    avgdl = sum(len(t) for t in toks.values()) / n
    out = {}
    for d, words in toks.items():
        total = 0.0
        for term in set(t for t in tokenize(query) if t not in STOPWORDS):
            df = sum(1 for w in toks.values() if term in w)
            tf = words.count(term)
            if tf == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(words) / avgdl))
        if total:
            out[d] = total
    return out


@pytest.mark.parametrize("query", ["cat mat", "dog", "the sat dog cat", "yoga pets", "unicorn"])
def test_bm25_matches_oracle(query):
    idx = BM25Index()
    idx.sync(CORPUS)
    got = idx.scores(query)
    want = bm25_oracle(CORPUS, query)
    assert got.keys() == want.keys()
    for d in want:
        assert abs(got[d] - want[d]) < 1e-9


def test_bm25_hand_value():
    # "dog": df=2 of 5, idf = ln(1 + 3.5/2.5); d5 has 3 content terms, avgdl = 18/5
    idx = BM25Index()
    idx.sync(CORPUS)
    idf = math.log(1 + 3.5 / 2.5)
    expected = idf * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 3 / 3.6))
    assert abs(idx.scores("dog")["d5"] - expected) < 1e-9


def test_bm25_remove_keeps_postings_consistent():
    idx = BM25Index()
    idx.sync(CORPUS)
    idx.sync({k: v for k, v in CORPUS.items() if k != "d2"})
    fresh = BM25Index()
    fresh.sync({k: v for k, v in CORPUS.items() if k != "d2"})
    assert idx.scores("dog cat") == pytest.approx(fresh.scores("dog cat"), abs=1e-12)


def test_dense_orthogonal_and_topk():
    dense = DenseIndex(HashEmbedder(64))
    dense.sync(CORPUS)
    sims = dense.similarities("dog")
    brute = sorted(((d, s) for d, s in sims.items() if s > 1e-9), key=lambda kv: (-kv[1], int(kv[0][1:])))
    assert dense.rank("dog", 3).entries == brute[:3]
    assert "d4" not in dict(dense.rank("dog", 10).entries)  # shares no token with "dog"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.text(alphabet="abcde ", min_size=1, max_size=20).filter(lambda s: s.strip()), min_size=1,
                max_size=12), st.text(alphabet="abcde ", min_size=1, max_size=10).filter(lambda s: s.strip()))
def test_dense_rank_equals_full_scan(texts, query):
    dense = DenseIndex(HashEmbedder(16))
    docs = {f"ep-{i}": t for i, t in enumerate(texts)}
    dense.sync(docs)
    e = HashEmbedder(16)
    q = e.embed(query)
    scores = {d: float(e.embed(t) @ q) for d, t in docs.items()}
    brute = sorted(((d, s) for d, s in scores.items() if s > 1e-9), key=lambda kv: (-kv[1], int(kv[0][3:])))
    got = dense.rank(query, 5).entries
    assert [d for d, _ in got] == [d for d, _ in brute[:5]]


def test_graph_case2(case2):
    ranked = rank_graph(case2.store, ["user"], 10)
    top = case2.store.get("episodic", ranked.ids()[0])
    assert "back to being fully vegetarian" in top.content
    superseded = {p for f in case2.store.records("semantic") if not f.live for p in f.provenance}
    assert not set(ranked.ids()) & (superseded - {p for f in case2.store.records("semantic") if f.live
                                                  for p in f.provenance})


def test_case1_temporal_query(case1):
    bundle = case1.retrieve("When did I leave Google?")
    assert [str(a.at) for a in bundle.temporal_answers] == ["2023-06"]
    by_temporal = {r.per_source_ranks.get("temporal"): r.candidate_id for r in bundle.fused}
    assert "TechStartup" in bundle.evidence[by_temporal[1]]


def test_temporal_matches_ordered_by_overlap(case1):
    from brainmem.retrieval import rank_temporal

    ranked = rank_temporal(case1.storyarc, "When did I start my new job?", QueryProfile(temporal=0.9), [], 10,
                           answers=[])
    overlaps = []
    for cid in ranked.ids():
        t = case1.store.get("episodic", cid)
        overlaps.append(len({"start", "new", "job"} & {w.rstrip("ed") for w in tokenize(t.content)}))
    assert overlaps == sorted(overlaps, reverse=True)


class LowProfile:
    def classify(self, text):
        return QueryProfile(0.1, 0.3, 0.1, 0.2)


def test_confident_first_round_stops():
    engine = Engine(EngineConfig(), classifier=LowProfile())
    engine.ingest_turn({"session_id": "S1", "speaker": "user", "text": "zebra zebra quagga", "timestamp": "2023"})
    engine.ingest_turn({"session_id": "S1", "speaker": "user", "text": "the weather is mild", "timestamp": "2023"})
    bundle = engine.retrieve("zebra quagga")
    assert bundle.plan.max_rounds == 2
    assert bundle.rounds_used == 1 and bundle.uncertainty <= 1 / 3


def test_uncertain_first_round_expands():
    engine = Engine(EngineConfig(), classifier=LowProfile())
    engine.ingest_turn({"session_id": "S1", "speaker": "user", "text": "Alice met Bob in Paris", "timestamp": "2023"})
    engine.ingest_turn({"session_id": "S1", "speaker": "user", "text": "Carol met Dave in Rome", "timestamp": "2023"})
    bundle = engine.retrieve("who met whom")
    assert bundle.rounds_used == 2


def test_retrieve_is_read_only_and_rejects_empty(case1):
    before = case1.state_digest()
    case1.retrieve("When did I leave Google?")
    assert case1.state_digest() == before
    with pytest.raises(EmptyQuery):
        case1.retrieve(" ")
    bundle = case1.retrieve("When did I leave Google?", touch=True)
    assert case1.store.get("episodic", bundle.fused[0].candidate_id).access_count == 1
