"""Undirected address graph and the preprocessing applied before embedding."""
from __future__ import annotations

import csv
from collections import deque
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import EmptyGraph
from .ingest import Transaction


class TransactionGraph:
    """Simple undirected graph over addresses.

    Nodes are kept in lexicographic order, so ``index`` and ``nodes`` form a
    stable bimap. Edges are stored as ``(a, b)`` with ``a < b``.
    """

    def __init__(self, nodes: Iterable[str], edges: Iterable[Tuple[str, str]]):
        edge_set = set()
        node_set = set(nodes)
        for a, b in edges:
            if a == b:
                continue
            edge_set.add((a, b) if a < b else (b, a))
            node_set.add(a)
            node_set.add(b)
        self.nodes: List[str] = sorted(node_set)
        self.index: Dict[str, int] = {a: i for i, a in enumerate(self.nodes)}
        self.edges: Set[Tuple[str, str]] = edge_set
        self.adj: Dict[str, List[str]] = {a: [] for a in self.nodes}
        for a, b in edge_set:
            self.adj[a].append(b)
            self.adj[b].append(a)
        for nbrs in self.adj.values():
            nbrs.sort()

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, address):
        return address in self.index

    @property
    def n_edges(self):
        return len(self.edges)

    def degree(self, address: str) -> int:
        return len(self.adj[address])

    def degrees(self) -> Dict[str, int]:
        return {a: len(n) for a, n in self.adj.items()}

    def subgraph(self, keep: Iterable[str]) -> "TransactionGraph":
        keep = set(keep)
        return TransactionGraph(keep, ((a, b) for a, b in self.edges if a in keep and b in keep))

    def csr(self):
        """(indptr, indices) adjacency arrays over node indices, neighbors sorted."""
        indptr = np.zeros(len(self.nodes) + 1, dtype=np.int64)
        indices = []
        for i, a in enumerate(self.nodes):
            nb = sorted(self.index[b] for b in self.adj[a])
            indices.extend(nb)
            indptr[i + 1] = indptr[i] + len(nb)
        return indptr, np.asarray(indices, dtype=np.int64)

    def components(self) -> List[List[str]]:
        seen = set()
        comps = []
        for start in self.nodes:
            if start in seen:
                continue
            seen.add(start)
            comp = [start]
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for v in self.adj[u]:
                    if v not in seen:
                        seen.add(v)
                        comp.append(v)
                        queue.append(v)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.nodes) > 0 and len(self.components()) == 1


def build_graph(corpus: Iterable[Transaction], nodes: Optional[Iterable[str]] = None,
                exclude_pairs: Iterable[Tuple[str, str]] = ()) -> TransactionGraph:
    """One undirected edge per address pair that transacted.

    Self-transfers and contract creations contribute no edge; ``nodes`` may
    declare additional isolated addresses. ``exclude_pairs`` drops edges
    (in either orientation), e.g. those already used to build ground truth.
    """
    declared = set(nodes or ())
    banned = {(a, b) if a < b else (b, a) for a, b in exclude_pairs}
    edges = []
    for tx in corpus:
        if tx.to_address is None:
            continue
        a, b = tx.from_address, tx.to_address
        if ((a, b) if a < b else (b, a)) in banned:
            continue
        edges.append((a, b))
    return TransactionGraph(declared, edges)


def largest_component(g: TransactionGraph) -> List[str]:
    comps = g.components()
    # components are sorted internally, so comp[0] is its smallest member
    return min(comps, key=lambda c: (-len(c), c[0]))


def preprocess(g: TransactionGraph) -> Tuple[TransactionGraph, List[str]]:
    """Largest connected component, then one pass removing degree-one nodes.

    Returns the reduced graph and the sorted list of every removed address.
    """
    if len(g) == 0:
        raise EmptyGraph("cannot preprocess an empty graph")
    lcc = g.subgraph(largest_component(g))
    keep = [a for a in lcc.nodes if lcc.degree(a) != 1]
    out = lcc.subgraph(keep)
    removed = sorted(set(g.nodes) - set(out.nodes))
    return out, removed


def write_edges(path, g: TransactionGraph) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["addr_a", "addr_b"])
        for a, b in sorted(g.edges):
            w.writerow([a, b])


def read_edges(path) -> TransactionGraph:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["addr_a", "addr_b"]:
            raise ValueError(f"{path}: header must be addr_a,addr_b")
        return TransactionGraph((), ((row["addr_a"], row["addr_b"]) for row in r))
