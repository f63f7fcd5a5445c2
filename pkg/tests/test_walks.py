import numpy as np
import pytest
from scipy.stats import chisquare

from leaninfer.graph import ingest_edges
from leaninfer.walks import WalkConfig, biased_walks, uniform_walks


def corpus_edge_set(graph):
    sym = graph.symmetrized()
    edges = set()
    for u in range(graph.n):
        nbrs, _ = sym.neighbors(u)
        for v in nbrs:
            edges.add((u, int(v)))
    return edges


def second_order_counts(corpus, t, v):
    """Tally of next nodes over transitions (t -> v -> x) in the corpus."""
    counts = {}
    total = 0
    for w in corpus.walks():
        for i in range(len(w) - 2):
            if w[i] == t and w[i + 1] == v:
                counts[int(w[i + 2])] = counts.get(int(w[i + 2]), 0) + 1
                total += 1
    return counts, total


def test_single_isolated_node_yields_length1_walks():
    g = ingest_edges([("solo", "solo")])  # self-loop only; excluded from walks
    c = uniform_walks(g, WalkConfig(walks_per_node=10, walk_length=5, seed=1))
    assert len(c) == 10
    assert all(len(w) == 1 for w in c.walks())


def test_two_node_path_alternates():
    g = ingest_edges([("a", "b")])
    c = uniform_walks(g, WalkConfig(walks_per_node=4, walk_length=7, seed=2))
    assert len(c) == 8
    for w in c.walks():
        assert len(w) == 7
        for i in range(len(w) - 1):
            assert w[i] != w[i + 1]


def test_walk_count_per_start_node():
    g = ingest_edges([("a", "b"), ("b", "c"), ("c", "a")])
    cfg = WalkConfig(walks_per_node=5, walk_length=10, seed=3)
    c = uniform_walks(g, cfg)
    starts = [int(w[0]) for w in c.walks()]
    for node in range(g.n):
        assert starts.count(node) == 5


def test_star_center_uniform_next_step():
    g = ingest_edges([("c", "l1"), ("c", "l2"), ("c", "l3")])
    cfg = WalkConfig(walks_per_node=200, walk_length=80, seed=4)
    c = uniform_walks(g, cfg)
    ci = g.index_of["c"]
    counts = {}
    total = 0
    for w in c.walks():
        for i in range(len(w) - 1):
            if w[i] == ci:
                counts[int(w[i + 1])] = counts.get(int(w[i + 1]), 0) + 1
                total += 1
    assert total >= 30000
    observed = [counts.get(g.index_of[l], 0) for l in ("l1", "l2", "l3")]
    stat, p = chisquare(observed)
    assert p > 0.01


def test_weighted_first_order_step():
    g = ingest_edges([("c", "a", 3), ("c", "b", 1)])
    c = uniform_walks(g, WalkConfig(walks_per_node=50, walk_length=60, seed=5))
    ci = g.index_of["c"]
    hits = {g.index_of["a"]: 0, g.index_of["b"]: 0}
    total = 0
    for w in c.walks():
        for i in range(len(w) - 1):
            if w[i] == ci:
                hits[int(w[i + 1])] += 1
                total += 1
    frac_a = hits[g.index_of["a"]] / total
    assert abs(frac_a - 0.75) < 0.02


def test_all_steps_are_edges():
    rng = np.random.default_rng(6)
    records = [(f"u{rng.integers(12)}", f"u{rng.integers(12)}") for _ in range(60)]
    g = ingest_edges(records)
    edges = corpus_edge_set(g)
    for cfg in (WalkConfig(seed=1), WalkConfig(p=2.0, q=0.5, seed=1)):
        c = biased_walks(g, cfg) if cfg.q != 1.0 else uniform_walks(g, cfg)
        for w in c.walks():
            for i in range(len(w) - 1):
                assert (int(w[i]), int(w[i + 1])) in edges


def test_seeded_corpus_is_bit_identical():
    rng = np.random.default_rng(8)
    records = [(f"u{rng.integers(15)}", f"u{rng.integers(15)}") for _ in range(80)]
    g = ingest_edges(records)
    cfg = WalkConfig(walks_per_node=3, walk_length=20, p=1.0, q=0.5, seed=99)
    c1 = biased_walks(g, cfg)
    c2 = biased_walks(g, cfg)
    assert np.array_equal(c1.flat, c2.flat)
    assert np.array_equal(c1.offsets, c2.offsets)
    c3 = biased_walks(g, WalkConfig(walks_per_node=3, walk_length=20, p=1.0, q=0.5, seed=100))
    assert not np.array_equal(c1.flat, c3.flat)


def test_biased_path_return_probability():
    # path a - b - c, unit weights, arrived at b from a, p=1, q=0.5:
    # return to a has weight 1/p = 1, advance to c has weight 1/q = 2
    g = ingest_edges([("a", "b"), ("b", "c")])
    cfg = WalkConfig(walks_per_node=700, walk_length=80, p=1.0, q=0.5, seed=11)
    c = biased_walks(g, cfg)
    counts, total = second_order_counts(c, g.index_of["a"], g.index_of["b"])
    assert total >= 10_000
    expected = np.array([total / 3.0, 2.0 * total / 3.0])
    observed = np.array([counts.get(g.index_of["a"], 0), counts.get(g.index_of["c"], 0)])
    stat, p = chisquare(observed, expected)
    assert p > 0.01


def test_biased_triangle_distance_one_bucket():
    # triangle: from edge (a -> b), c is adjacent to a so its bias bucket is 1;
    # with p=2, q=1: P(a) = 0.5 / 1.5 = 1/3, P(c) = 2/3
    g = ingest_edges([("a", "b"), ("b", "c"), ("c", "a")])
    cfg = WalkConfig(walks_per_node=500, walk_length=80, p=2.0, q=1.0, seed=12)
    c = biased_walks(g, cfg)
    counts, total = second_order_counts(c, g.index_of["a"], g.index_of["b"])
    assert total >= 5_000
    expected = np.array([total / 3.0, 2.0 * total / 3.0])
    observed = np.array([counts.get(g.index_of["a"], 0), counts.get(g.index_of["c"], 0)])
    stat, p = chisquare(observed, expected)
    assert p > 0.01


def test_biased_with_p1_q1_matches_uniform_law():
    # 6-node weighted graph; compare empirical first-order conditional
    # distributions between the two kernels by chi-square
    rng = np.random.default_rng(13)
    records = [(f"u{rng.integers(6)}", f"u{rng.integers(6)}", int(rng.integers(1, 4)))
               for _ in range(25)]
    g = ingest_edges(records)
    cfg = WalkConfig(walks_per_node=300, walk_length=60, p=1.0, q=1.0, seed=14)
    cu = uniform_walks(g, cfg)
    cb = biased_walks(g, cfg)
    sym = g.symmetrized()
    for v in range(g.n):
        nbrs, _ = sym.neighbors(v)
        if len(nbrs) < 2:
            continue
        obs_u = np.zeros(len(nbrs))
        obs_b = np.zeros(len(nbrs))
        pos = {int(x): i for i, x in enumerate(nbrs)}
        for corpus, obs in ((cu, obs_u), (cb, obs_b)):
            for w in corpus.walks():
                for i in range(1, len(w) - 1):  # second-order steps only
                    if w[i] == v:
                        obs[pos[int(w[i + 1])]] += 1
        if obs_u.sum() < 500 or obs_b.sum() < 500:
            continue
        expected = obs_u / obs_u.sum() * obs_b.sum()
        keep = expected > 5
        if keep.sum() < 2:
            continue
        stat, p = chisquare(obs_b[keep], expected[keep] * obs_b[keep].sum() / expected[keep].sum())
        assert p > 0.005, f"node {v} distributions diverge"


def test_sink_truncation_in_directed_mode():
    g = ingest_edges([("a", "b"), ("b", "sink")])
    cfg = WalkConfig(walks_per_node=3, walk_length=10, seed=15, directed_as="directed")
    c = uniform_walks(g, cfg)
    si = g.index_of["sink"]
    for w in c.walks():
        if w[0] == si:
            assert len(w) == 1
        else:
            assert int(w[-1]) == si  # every directed path ends at the sink


def test_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(p=0.0)
    with pytest.raises(ValueError):
        WalkConfig(walk_length=0)
    with pytest.raises(ValueError):
        WalkConfig(directed_as="sideways")
