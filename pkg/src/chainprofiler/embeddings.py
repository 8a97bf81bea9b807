"""Node embeddings from diffusion-tree walks and structural-role walks.

Randomness
----------
Every walk owns an independent ``numpy.random.Generator`` backed by PCG64,
seeded with ``SeedSequence([seed, stream, node_index, walk_index])`` where
``stream`` is 0 for diffusion walks and 1 for role walks. Walks therefore do
not depend on generation order and can be produced in parallel.

Skip-gram training uses the 64-bit linear congruential generator of the
original word2vec tool (``r = r * 25214903917 + 11 mod 2**64``), seeded from
``seed``, and is bit-reproducible with one worker.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numba
import numpy as np

from .errors import CoverTooLarge, EmptySequences, MismatchedCandidates
from .txgraph import TransactionGraph

logger = logging.getLogger(__name__)

DIFFUSION_STREAM = 0
ROLE_STREAM = 1


@dataclass(frozen=True)
class WalkParams:
    dim: int = 128
    walks_per_node: int = 10
    cover_size: int = 40
    walk_length: int = 40
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("dim", "walks_per_node", "cover_size", "walk_length", "window", "epochs", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def walk_rng(seed: int, stream: int, node: int, walk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, node, walk])))


# --------------------------------------------------------------------------
# diffusion walks

def _diffusion_tree(adj: Sequence[Sequence[int]], root: int, cover: int, rng) -> Dict[int, List[int]]:
    """Grow a random tree from ``root`` until it spans ``cover`` nodes.

    Each step picks a uniformly random tree node and a uniformly random
    neighbor of it; the neighbor joins the tree if it is new.
    """
    infected = [root]
    in_tree = {root}
    children: Dict[int, List[int]] = {root: []}
    misses = 0
    while len(infected) < cover:
        u = infected[rng.integers(len(infected))]
        nbrs = adj[u]
        v = nbrs[rng.integers(len(nbrs))]
        if v in in_tree:
            misses += 1
            if misses > 64 * cover:
                # near-saturated trees: draw straight from the boundary
                boundary = [(a, b) for a in infected for b in adj[a] if b not in in_tree]
                u, v = boundary[rng.integers(len(boundary))]
            else:
                continue
        misses = 0
        infected.append(v)
        in_tree.add(v)
        children[u].append(v)
        children[v] = []
    return children


def _euler_tour(children: Mapping[int, List[int]], root: int) -> List[int]:
    tour = [root]
    stack = [(root, iter(children[root]))]
    while stack:
        node, it = stack[-1]
        child = next(it, None)
        if child is None:
            stack.pop()
            if stack:
                tour.append(stack[-1][0])
        else:
            tour.append(child)
            stack.append((child, iter(children[child])))
    return tour


def _component_sizes(g: TransactionGraph) -> Dict[str, int]:
    sizes = {}
    for comp in g.components():
        for a in comp:
            sizes[a] = len(comp)
    return sizes


def generate_diffusion_sequences(g: TransactionGraph, params: WalkParams = WalkParams()) -> List[np.ndarray]:
    """Euler tours of random diffusion trees, ``walks_per_node`` per node.

    Sequences hold node indices of ``g`` (``g.nodes[i]`` is the address).
    A tree of k nodes yields a closed tour of 2k - 1 entries starting and
    ending at its root.
    """
    adj = [[g.index[b] for b in g.adj[a]] for a in g.nodes]
    sizes = _component_sizes(g)
    cover = params.cover_size
    if any(cover > s for s in sizes.values()):
        warnings.warn(
            f"cover_size {cover} exceeds a component size; clamping", CoverTooLarge, stacklevel=2
        )
    out = []
    for i, a in enumerate(g.nodes):
        c = min(cover, sizes[a])
        for w in range(params.walks_per_node):
            rng = walk_rng(params.seed, DIFFUSION_STREAM, i, w)
            tree = _diffusion_tree(adj, i, c, rng)
            out.append(np.asarray(_euler_tour(tree, i), dtype=np.int64))
    return out


# --------------------------------------------------------------------------
# structural-role walks

def role_of_degree(degree: int) -> int:
    """Role token: floor(log2(degree)); isolated nodes get role 0."""
    return max(int(degree).bit_length() - 1, 0)


@dataclass
class RoleSequences:
    nodes: List[np.ndarray]  # node indices along each walk
    roles: List[np.ndarray]  # role token of each visited node
    n_roles: int


def uniform_walk(adj: Sequence[Sequence[int]], start: int, length: int, rng) -> List[int]:
    walk = [start]
    while len(walk) < length:
        nbrs = adj[walk[-1]]
        if not nbrs:
            break
        walk.append(nbrs[rng.integers(len(nbrs))])
    return walk


def generate_role_sequences(g: TransactionGraph, params: WalkParams = WalkParams()) -> RoleSequences:
    """Uniform random walks whose tokens are log2-degree role buckets.

    A walk from node ``i`` (walk ``w``) draws, at each step, neighbor
    ``sorted_neighbors[rng.integers(degree)]`` with ``rng = walk_rng(seed, 1, i, w)``.
    """
    adj = [[g.index[b] for b in g.adj[a]] for a in g.nodes]
    role = np.array([role_of_degree(len(n)) for n in adj], dtype=np.int64)
    nodes, roles = [], []
    for i in range(len(g.nodes)):
        for w in range(params.walks_per_node):
            rng = walk_rng(params.seed, ROLE_STREAM, i, w)
            walk = np.asarray(uniform_walk(adj, i, params.walk_length, rng), dtype=np.int64)
            nodes.append(walk)
            roles.append(role[walk])
    return RoleSequences(nodes, roles, int(role.max()) + 1 if len(role) else 0)


# --------------------------------------------------------------------------
# skip-gram with negative sampling

@dataclass
class EmbeddingTable:
    addresses: List[str]
    vectors: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.addresses):
            raise ValueError("vectors must be a (n_addresses, dim) matrix")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("non-finite embedding entry")
        self._row = {a: i for i, a in enumerate(self.addresses)}

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.addresses)

    def __contains__(self, address):
        return address in self._row

    def __getitem__(self, address) -> np.ndarray:
        return self.vectors[self._row[address]]

    def as_features(self):
        from .profiles import FeatureVector

        return {a: FeatureVector(a, "embedding", self.vectors[i]) for i, a in enumerate(self.addresses)}


@numba.njit(cache=True)
def _lcg(state):
    return state * np.uint64(25214903917) + np.uint64(11)


@numba.njit(cache=True)
def _train_range(syn0, syn1, centers, contexts, offsets, cum, lo, hi, window, negatives,
                 epochs, lr0, seed):
    dim = syn0.shape[1]
    total = (offsets[hi] - offsets[lo]) * epochs
    done = 0
    state = np.uint64(seed)
    grad = np.zeros(dim)
    n_ctx = cum.shape[0]
    for _ in range(epochs):
        for s in range(lo, hi):
            start = offsets[s]
            end = offsets[s + 1]
            for i in range(start, end):
                alpha = lr0 * max(1.0 - done / (total + 1.0), 0.0001)
                done += 1
                state = _lcg(state)
                b = np.int64(state >> np.uint64(16)) % window
                reach = window - b
                l1 = centers[i]
                j0 = max(start, i - reach)
                j1 = min(end, i + reach + 1)
                for j in range(j0, j1):
                    if j == i:
                        continue
                    for d in range(dim):
                        grad[d] = 0.0
                    for k in range(negatives + 1):
                        if k == 0:
                            target = contexts[j]
                            label = 1.0
                        else:
                            state = _lcg(state)
                            u = np.float64(state >> np.uint64(11)) / 9007199254740992.0
                            target = np.searchsorted(cum, u, side="right")
                            if target >= n_ctx:
                                target = n_ctx - 1
                            if target == contexts[j]:
                                continue
                            label = 0.0
                        f = 0.0
                        for d in range(dim):
                            f += syn0[l1, d] * syn1[target, d]
                        if f > 30.0:
                            sig = 1.0
                        elif f < -30.0:
                            sig = 0.0
                        else:
                            sig = 1.0 / (1.0 + math.exp(-f))
                        g = (label - sig) * alpha
                        for d in range(dim):
                            grad[d] += g * syn1[target, d]
                            syn1[target, d] += g * syn0[l1, d]
                    for d in range(dim):
                        syn0[l1, d] += grad[d]


@numba.njit(parallel=True, cache=True)
def _train_hogwild(syn0, syn1, centers, contexts, offsets, cum, bounds, window, negatives,
                   epochs, lr0, seeds):
    for w in numba.prange(bounds.shape[0] - 1):
        _train_range(syn0, syn1, centers, contexts, offsets, cum, bounds[w], bounds[w + 1],
                     window, negatives, epochs, lr0, seeds[w])


def _lcg_seed(seed: int, worker: int) -> int:
    ss = np.random.SeedSequence([seed, 2, worker])
    return ss.generate_state(1, dtype=np.uint64)[0]


def train_skipgram(sequences: Sequence[np.ndarray], params: WalkParams = WalkParams(),
                   contexts: Optional[Sequence[np.ndarray]] = None,
                   n_inputs: Optional[int] = None, n_outputs: Optional[int] = None) -> np.ndarray:
    """Skip-gram with negative sampling over integer token sequences.

    ``sequences`` hold the input (center) tokens. ``contexts``, when given,
    holds the aligned output tokens predicted from each center; by default
    the sequence predicts itself. Negatives are drawn from the output-token
    unigram distribution raised to 3/4, the learning rate decays linearly
    from ``params.learning_rate``. Returns the input-vector matrix.
    """
    if not sequences or sum(len(s) for s in sequences) == 0:
        raise EmptySequences("no tokens to train on")
    if contexts is None:
        contexts = sequences
    if len(contexts) != len(sequences) or any(len(a) != len(b) for a, b in zip(sequences, contexts)):
        raise ValueError("context sequences must align with input sequences")
    centers = np.concatenate([np.asarray(s, dtype=np.int64) for s in sequences])
    ctx = np.concatenate([np.asarray(s, dtype=np.int64) for s in contexts])
    offsets = np.zeros(len(sequences) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in sequences])
    n_in = int(centers.max()) + 1 if n_inputs is None else n_inputs
    n_out = int(ctx.max()) + 1 if n_outputs is None else n_outputs

    counts = np.bincount(ctx, minlength=n_out).astype(float) ** 0.75
    cum = np.cumsum(counts / counts.sum())
    cum[-1] = 1.0

    init = np.random.Generator(np.random.PCG64(np.random.SeedSequence([params.seed, 3])))
    syn0 = (init.random((n_in, params.dim)) - 0.5) / params.dim
    syn1 = np.zeros((n_out, params.dim))

    if params.workers == 1:
        _train_range(syn0, syn1, centers, ctx, offsets, cum, 0, len(sequences), params.window,
                     params.negatives, params.epochs, params.learning_rate, _lcg_seed(params.seed, 0))
    else:
        bounds = np.linspace(0, len(sequences), params.workers + 1).astype(np.int64)
        seeds = np.array([_lcg_seed(params.seed, w) for w in range(params.workers)], dtype=np.uint64)
        numba.set_num_threads(min(params.workers, numba.config.NUMBA_NUM_THREADS))
        _train_hogwild(syn0, syn1, centers, ctx, offsets, cum, bounds, params.window,
                       params.negatives, params.epochs, params.learning_rate, seeds)
    return syn0


def _check_coverage(g: TransactionGraph, sequences):
    seen = np.zeros(len(g), dtype=bool)
    for s in sequences:
        seen[s] = True
    if not seen.all():
        missing = [g.nodes[i] for i in np.flatnonzero(~seen)[:3]]
        raise EmptySequences(f"nodes absent from every sequence, e.g. {missing}")


def diff2vec(g: TransactionGraph, params: WalkParams = WalkParams()) -> EmbeddingTable:
    """Neighbourhood-preserving embedding: SGNS over diffusion-tree tours."""
    seqs = generate_diffusion_sequences(g, params)
    _check_coverage(g, seqs)
    vectors = train_skipgram(seqs, params, n_inputs=len(g), n_outputs=len(g))
    return EmbeddingTable(list(g.nodes), vectors, {"algorithm": "diff2vec", "params": asdict(params)})


def role2vec(g: TransactionGraph, params: WalkParams = WalkParams()) -> EmbeddingTable:
    """Structural embedding: each node predicts the role tokens around it on random walks."""
    rs = generate_role_sequences(g, params)
    _check_coverage(g, rs.nodes)
    vectors = train_skipgram(rs.nodes, params, contexts=rs.roles, n_inputs=len(g), n_outputs=rs.n_roles)
    return EmbeddingTable(list(g.nodes), vectors, {"algorithm": "role2vec", "params": asdict(params)})


def complete_embeddings(table: EmbeddingTable, all_addresses: Iterable[str]) -> EmbeddingTable:
    """Give every address missing from ``table`` the mean of the present vectors."""
    if len(table) == 0:
        raise ValueError("cannot complete an empty embedding table")
    missing = sorted(set(all_addresses) - set(table.addresses))
    if not missing:
        return table
    mean = table.vectors.mean(axis=0)
    vectors = np.vstack([table.vectors, np.tile(mean, (len(missing), 1))])
    meta = dict(table.metadata, completed=len(missing))
    return EmbeddingTable(list(table.addresses) + missing, vectors, meta)


# --------------------------------------------------------------------------
# rank fusion

def harmonic_rank(r_a: float, r_b: float) -> float:
    return 2.0 / (1.0 / r_a + 1.0 / r_b)


def fuse_rankings(ranks_a: Mapping[str, Mapping[str, int]],
                  ranks_b: Mapping[str, Mapping[str, int]]) -> Dict[str, List[Tuple[str, float]]]:
    """Combine two rankings per target by the harmonic mean of candidate ranks.

    Returns, per target, ``(candidate, fused_score)`` sorted by score and
    then address.
    """
    if set(ranks_a) != set(ranks_b):
        raise MismatchedCandidates("rankings cover different targets")
    fused = {}
    for target in sorted(ranks_a):
        ra, rb = ranks_a[target], ranks_b[target]
        if set(ra) != set(rb):
            raise MismatchedCandidates(f"candidate sets differ for target {target}")
        scores = [(c, harmonic_rank(ra[c], rb[c])) for c in ra]
        scores.sort(key=lambda cs: (cs[1], cs[0]))
        fused[target] = scores
    return fused


# --------------------------------------------------------------------------
# files

def write_embeddings(path, table: EmbeddingTable, extra_meta: Optional[Mapping] = None) -> str:
    """Write ``address,v0..`` rows plus a ``<path>.meta.json`` sidecar; returns the sidecar path."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address"] + [f"v{i}" for i in range(table.dim)])
        for a, v in zip(table.addresses, table.vectors):
            w.writerow([a] + [repr(float(x)) for x in v])
    sidecar = f"{path}.meta.json"
    with open(sidecar, "w") as fh:
        json.dump(dict(table.metadata, **(extra_meta or {})), fh, indent=2, sort_keys=True)
    return sidecar


def read_embeddings(path) -> EmbeddingTable:
    addresses, rows = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[0] != "address":
            raise ValueError(f"{path}: header must start with address")
        for row in r:
            if row:
                addresses.append(row[0])
                rows.append([float(x) for x in row[1:]])
    meta = {}
    try:
        with open(f"{path}.meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    return EmbeddingTable(addresses, np.array(rows).reshape(len(rows), len(header) - 1), meta)
