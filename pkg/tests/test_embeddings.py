import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chainprofiler import embeddings as emb
from chainprofiler.embeddings import WalkParams
from chainprofiler.errors import CoverTooLarge, EmptySequences, MismatchedCandidates
from chainprofiler.txgraph import TransactionGraph

SMALL = WalkParams(dim=8, walks_per_node=3, cover_size=5, walk_length=6, epochs=1, seed=11)


def ring(n, chords=()):
    nodes = [f"n{i:02d}" for i in range(n)]
    edges = [(nodes[i], nodes[(i + 1) % n]) for i in range(n)] + [(nodes[a], nodes[b]) for a, b in chords]
    return TransactionGraph(nodes, edges)


def test_single_edge_tour():
    g = TransactionGraph([], [("x", "y")])
    seqs = emb.generate_diffusion_sequences(g, WalkParams(walks_per_node=1, cover_size=2))
    assert [list(s) for s in seqs] == [[0, 1, 0], [1, 0, 1]]


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 30), st.integers(2, 12), st.integers(0, 1000))
def test_diffusion_tours_are_closed_walks(n, cover, seed):
    g = ring(n, chords=[(0, n // 2), (1, n - 2)])
    p = WalkParams(walks_per_node=2, cover_size=min(cover, n), seed=seed)
    adj = {(g.index[a], g.index[b]) for a, b in g.edges}
    for i, s in enumerate(emb.generate_diffusion_sequences(g, p)):
        k = len(set(s.tolist()))
        assert k == p.cover_size
        assert len(s) == 2 * k - 1
        assert s[0] == s[-1] == i // p.walks_per_node
        for u, v in zip(s[:-1], s[1:]):
            assert (min(u, v), max(u, v)) in adj


def test_cover_too_large_warns_and_clamps():
    g = TransactionGraph([], [("a", "b"), ("b", "c")])
    with pytest.warns(CoverTooLarge):
        seqs = emb.generate_diffusion_sequences(g, WalkParams(walks_per_node=1, cover_size=10))
    assert all(len(s) == 5 for s in seqs)


@pytest.mark.parametrize("degree,role", [(0, 0), (1, 0), (2, 1), (3, 1), (4, 2), (7, 2), (8, 3), (1000, 9)])
def test_role_of_degree(degree, role):
    assert emb.role_of_degree(degree) == role


def test_role_walks_match_resimulation():
    g = ring(9, chords=[(0, 4), (0, 6), (2, 7)])
    p = WalkParams(walks_per_node=2, walk_length=7, seed=5)
    rs = emb.generate_role_sequences(g, p)
    k = 0
    for i, a in enumerate(g.nodes):
        for w in range(p.walks_per_node):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([5, 1, i, w])))
            walk = [a]
            while len(walk) < p.walk_length:
                nbrs = sorted(g.adj[walk[-1]])
                walk.append(nbrs[rng.integers(len(nbrs))])
            assert [g.nodes[j] for j in rs.nodes[k]] == walk
            assert list(rs.roles[k]) == [len(g.adj[x]).bit_length() - 1 for x in walk]
            k += 1


def test_training_is_reproducible_and_seed_sensitive():
    g = ring(12, chords=[(0, 6)])
    t1 = emb.diff2vec(g, SMALL)
    t2 = emb.diff2vec(g, SMALL)
    t3 = emb.diff2vec(g, WalkParams(**{**SMALL.__dict__, "seed": 12}))
    assert t1.vectors.tobytes() == t2.vectors.tobytes()
    assert not np.array_equal(t1.vectors, t3.vectors)
    assert t1.vectors.shape == (12, 8)
    r = emb.role2vec(g, SMALL)
    assert r.vectors.shape == (12, 8) and np.all(np.isfinite(r.vectors))


def test_hogwild_workers_run():
    g = ring(20, chords=[(0, 10), (5, 15)])
    t = emb.diff2vec(g, WalkParams(**{**SMALL.__dict__, "workers": 2}))
    assert np.all(np.isfinite(t.vectors))


def test_skipgram_validation():
    with pytest.raises(EmptySequences):
        emb.train_skipgram([], SMALL)
    with pytest.raises(ValueError):
        emb.train_skipgram([np.array([0, 1])], SMALL, contexts=[np.array([0])])
    with pytest.raises(ValueError):
        WalkParams(dim=0)


def test_star_center_role():
    g = TransactionGraph([], [("hub", f"leaf{i}") for i in range(8)])
    rs = emb.generate_role_sequences(g, WalkParams(walks_per_node=2, walk_length=5))
    hub = g.index["hub"]
    for nodes, roles in zip(rs.nodes, rs.roles):
        assert all(r == (3 if n == hub else 0) for n, r in zip(nodes, roles))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_fusion_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    cands = [f"c{i}" for i in range(10)]
    ra = dict(zip(cands, (rng.permutation(10) + 1).tolist()))
    rb = dict(zip(cands, (rng.permutation(10) + 1).tolist()))
    fused = emb.fuse_rankings({"t": ra}, {"t": rb})["t"]
    oracle = sorted(cands, key=lambda c: (2 / (1 / ra[c] + 1 / rb[c]), c))
    assert [c for c, _ in fused] == oracle


@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 10))
def test_harmonic_rank_symmetric_and_monotone(a, b, step):
    assert emb.harmonic_rank(a, b) == emb.harmonic_rank(b, a)
    assert emb.harmonic_rank(a + step, b) > emb.harmonic_rank(a, b)


def test_fuse_rankings():
    a = {"t": {"x": 1, "y": 2, "z": 3}}
    b = {"t": {"x": 3, "y": 1, "z": 2}}
    fused = emb.fuse_rankings(a, b)["t"]
    # y: 2/(1/2+1) = 4/3, x: 2/(1+1/3) = 1.5, z: 2/(1/3+1/2) = 2.4
    assert [c for c, _ in fused] == ["y", "x", "z"]
    assert fused[0][1] == pytest.approx(4 / 3)
    with pytest.raises(MismatchedCandidates):
        emb.fuse_rankings(a, {"t": {"x": 1, "y": 2}})
    with pytest.raises(MismatchedCandidates):
        emb.fuse_rankings(a, {"u": {"x": 1}})


def test_fusion_ties_break_by_address():
    fused = emb.fuse_rankings({"t": {"b": 1, "a": 2}}, {"t": {"b": 2, "a": 1}})["t"]
    assert [c for c, _ in fused] == ["a", "b"]


def test_complete_and_file_round_trip(tmp_path):
    table = emb.EmbeddingTable(["a", "b"], [[1.0, 2.0], [3.0, 4.0]], {"algorithm": "x"})
    full = emb.complete_embeddings(table, ["a", "b", "c"])
    assert list(full["c"]) == [2.0, 3.0]
    assert emb.complete_embeddings(table, ["a"]) is table
    assert full.metadata["completed"] == 1
    path = tmp_path / "e.csv"
    sidecar = emb.write_embeddings(path, full, {"seed": 3})
    back = emb.read_embeddings(path)
    assert back.addresses == full.addresses
    assert np.array_equal(back.vectors, full.vectors)
    assert '"seed": 3' in open(sidecar).read()
