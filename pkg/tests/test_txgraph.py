import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from chainprofiler import txgraph
from chainprofiler.errors import EmptyGraph
from chainprofiler.ingest import Transaction
from chainprofiler.txgraph import TransactionGraph


def addr(i):
    return f"0x{i:040x}"


def test_build_graph_skips_self_and_creation():
    txs = [Transaction(f"0x{i:064x}", i, i + 1, addr(a), addr(b) if b is not None else None, 1, 1, 1)
           for i, (a, b) in enumerate([(1, 2), (2, 1), (1, 1), (3, None), (2, 3)])]
    g = txgraph.build_graph(txs)
    assert g.edges == {(addr(1), addr(2)), (addr(2), addr(3))}
    assert addr(3) in g
    g2 = txgraph.build_graph(txs, exclude_pairs=[(addr(2), addr(1))])
    assert g2.edges == {(addr(2), addr(3))}


def test_preprocess_example():
    # triangle 1-2-3 with a pendant 4 on 3, and a separate edge 5-6
    g = TransactionGraph([], [(addr(1), addr(2)), (addr(2), addr(3)), (addr(1), addr(3)),
                              (addr(3), addr(4)), (addr(5), addr(6))])
    out, removed = txgraph.preprocess(g)
    assert out.nodes == [addr(1), addr(2), addr(3)]
    assert removed == [addr(4), addr(5), addr(6)]


def test_lcc_tie_goes_to_smallest_member():
    g = TransactionGraph([], [(addr(7), addr(8)), (addr(2), addr(9))])
    assert txgraph.largest_component(g) == [addr(2), addr(9)]


def test_empty_graph():
    with pytest.raises(EmptyGraph):
        txgraph.preprocess(TransactionGraph([], []))


def _oracle(edges, nodes):
    G = nx.Graph()
    G.add_nodes_from(nodes)
    G.add_edges_from(edges)
    comps = sorted(nx.connected_components(G), key=lambda c: (-len(c), min(c)))
    H = G.subgraph(comps[0])
    return sorted(n for n in H if H.degree(n) != 1)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 40), st.floats(0.02, 0.3))
def test_preprocess_matches_networkx(seed, n, density):
    rng = random.Random(seed)
    nodes = [addr(i) for i in range(n)]
    edges = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:] if rng.random() < density]
    g = TransactionGraph(nodes, edges)
    out, removed = txgraph.preprocess(g)
    assert out.nodes == _oracle(edges, nodes)
    assert sorted(set(removed) | set(out.nodes)) == nodes
    for a, b in out.edges:
        assert (a, b) in g.edges


def test_csr_and_edge_file(tmp_path):
    g = TransactionGraph([addr(9)], [(addr(3), addr(1)), (addr(1), addr(2))])
    indptr, idx = g.csr()
    assert list(indptr) == [0, 2, 3, 4, 4]
    assert list(idx) == [1, 2, 0, 0]
    txgraph.write_edges(tmp_path / "e.csv", g)
    back = txgraph.read_edges(tmp_path / "e.csv")
    assert back.edges == g.edges
