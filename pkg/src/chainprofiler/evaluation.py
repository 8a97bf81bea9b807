"""Candidate ranking and deanonymization metrics.

For a target with ``n`` candidates of which exactly one is correct, sitting
at 1-based rank ``r``:

* average rank is the mean of ``r``;
* ``auc_lemma`` is the mean of ``r / n`` (lower is better);
* ``auc_standard`` is the mean of ``(n - r) / (n - 1)``, the chance that a
  random wrong candidate is ranked below the correct one (higher is better);
* entropy gain treats each result as uniform density on ``[(r-1)/n, r/n]``,
  averages those densities on an ``M``-bin grid and reports
  ``log2(M) - H(q)`` in bits.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .embeddings import fuse_rankings
from .errors import DimensionMismatch, EmptyResults, MissingFeatures
from .profiles import FeatureVector

MAX_RESOLUTION = 1000


@dataclass
class RankedResult:
    target: str
    truth: str
    candidates: Tuple[str, ...]
    distances: np.ndarray
    rank: int

    @property
    def n(self) -> int:
        return len(self.candidates)

    def ranks(self) -> Dict[str, int]:
        return {c: i + 1 for i, c in enumerate(self.candidates)}


def rank_candidates(features: Mapping[str, FeatureVector], target: str,
                    candidates: Iterable[str], truth: str) -> RankedResult:
    """Order ``candidates`` by Euclidean distance to ``target``.

    Ties go to the lexicographically smaller address.
    """
    cands = sorted(set(candidates))
    if target in cands:
        raise ValueError("target must not be among its own candidates")
    if truth not in cands:
        raise ValueError("ground-truth partner is not a candidate")
    for a in [target] + cands:
        if a not in features:
            raise MissingFeatures(a)
    t = features[target]
    length = len(t.values)
    for a in cands:
        f = features[a]
        if len(f.values) != length or f.kind != t.kind:
            raise DimensionMismatch(f"{a}: {f.kind}[{len(f.values)}] vs {t.kind}[{length}]")
    X = np.vstack([features[a].values for a in cands])
    d = np.sqrt(((X - t.values) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(len(cands)), d))
    ordered = tuple(cands[i] for i in order)
    return RankedResult(target, truth, ordered, d[order], ordered.index(truth) + 1)


def rank_pairs(features: Mapping[str, FeatureVector], pairs, universe: Iterable[str]) -> List[RankedResult]:
    """Rank both directions of every same-owner pair against ``universe``.

    Pairs with an address outside ``universe`` are skipped.
    """
    universe = sorted(set(universe))
    members = set(universe)
    out = []
    for p in pairs:
        if p.id_a not in members or p.id_b not in members:
            continue
        for target, truth in ((p.id_a, p.id_b), (p.id_b, p.id_a)):
            cands = [a for a in universe if a != target]
            out.append(rank_candidates(features, target, cands, truth))
    return out


def fuse_results(a: Sequence[RankedResult], b: Sequence[RankedResult]) -> List[RankedResult]:
    """Harmonic-mean rank fusion of two result lists over the same targets."""
    key = lambda r: (r.target, r.truth)
    by_a = {key(r): r for r in a}
    by_b = {key(r): r for r in b}
    if set(by_a) != set(by_b):
        raise ValueError("result lists cover different targets")
    out = []
    for k in sorted(by_a):
        fused = fuse_rankings({k[0]: by_a[k].ranks()}, {k[0]: by_b[k].ranks()})[k[0]]
        ordered = tuple(c for c, _ in fused)
        scores = np.array([s for _, s in fused])
        out.append(RankedResult(k[0], k[1], ordered, scores, ordered.index(k[1]) + 1))
    return out


def _ranks(results):
    if len(results) == 0:
        raise EmptyResults("no ranked results")
    r = np.array([res.rank for res in results], dtype=float)
    n = np.array([res.n for res in results], dtype=float)
    return r, n


def average_rank(results: Sequence[RankedResult]) -> float:
    r, _ = _ranks(results)
    return float(r.mean())


class AucScores(NamedTuple):
    lemma: float
    standard: float


def auc_lemma(results: Sequence[RankedResult]) -> AucScores:
    """Both AUC orientations; ``standard`` ignores single-candidate results (nan if none remain)."""
    r, n = _ranks(results)
    lemma = float(np.mean(r / n))
    multi = n > 1
    standard = float(np.mean((n[multi] - r[multi]) / (n[multi] - 1))) if multi.any() else float("nan")
    return AucScores(lemma, standard)


@dataclass
class EntropyEstimate:
    resolution: int
    density: np.ndarray
    gain: float


def default_resolution(results: Sequence[RankedResult]) -> int:
    return int(min(max(res.n for res in results), MAX_RESOLUTION))


def rank_density(rank_pairs_: Iterable[Tuple[int, int]], M: int) -> np.ndarray:
    """Average over (n, r) of the uniform mass on [(r-1)/n, r/n], binned on M cells."""
    counts: Dict[Tuple[int, int], int] = {}
    total = 0
    for n, r in rank_pairs_:
        if not 1 <= r <= n:
            raise ValueError(f"rank {r} outside [1, {n}]")
        counts[(n, r)] = counts.get((n, r), 0) + 1
        total += 1
    if total == 0:
        raise EmptyResults("no ranked results")
    edges = np.arange(M + 1) / M
    q = np.zeros(M)
    for (n, r), c in counts.items():
        cdf = np.clip(edges * n - (r - 1), 0.0, 1.0)
        q += c * np.diff(cdf)
    return q / total


def gain_of_density(q: np.ndarray) -> float:
    nz = q[q > 0]
    return float(math.log2(len(q)) + np.sum(nz * np.log2(nz)))


def entropy_gain(results: Sequence[RankedResult], M: Optional[int] = None) -> EntropyEstimate:
    if len(results) == 0:
        raise EmptyResults("no ranked results")
    if M is None:
        M = default_resolution(results)
    if M < 1:
        raise ValueError("resolution must be >= 1")
    q = rank_density(((res.n, res.rank) for res in results), M)
    return EntropyEstimate(M, q, gain_of_density(q))


def rank_correction(total_set: int, candidate_set: int, miss_fraction: float) -> float:
    """Average-rank penalty for targets whose partner fell outside a filtered candidate set.

    Such targets are assumed to sit uniformly among the excluded
    ``total_set - candidate_set`` entries.
    """
    if candidate_set > total_set:
        raise ValueError("candidate_set cannot exceed total_set")
    if not 0.0 <= miss_fraction <= 1.0:
        raise ValueError("miss_fraction must be in [0, 1]")
    return miss_fraction * (total_set - candidate_set) / 2


# --------------------------------------------------------------------------
# reports

@dataclass
class MethodMetrics:
    average_rank: float
    auc_lemma: float
    auc_standard: float
    entropy_gain_bits: float
    count: int
    rank_correction: Optional[float] = None


def evaluate(results: Sequence[RankedResult], M: Optional[int] = None,
             correction: Optional[float] = None) -> MethodMetrics:
    auc = auc_lemma(results)
    return MethodMetrics(
        average_rank=average_rank(results),
        auc_lemma=auc.lemma,
        auc_standard=auc.standard,
        entropy_gain_bits=entropy_gain(results, M).gain,
        count=len(results),
        rank_correction=correction,
    )


@dataclass
class EvaluationReport:
    methods: Dict[str, MethodMetrics] = field(default_factory=dict)

    def add(self, name: str, metrics: MethodMetrics):
        self.methods[name] = metrics

    def to_dict(self):
        # NaN (no multi-candidate result) is not valid JSON
        clean = lambda v: None if isinstance(v, float) and math.isnan(v) else v
        return {name: {k: clean(v) for k, v in asdict(m).items()} for name, m in sorted(self.methods.items())}

    def write_json(self, path, metadata: Optional[Mapping] = None):
        payload = {"methods": self.to_dict()}
        if metadata:
            payload["metadata"] = dict(metadata)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "avg_rank", "auc_lemma", "auc_standard", "entropy_gain_bits", "count"])
            for name, m in sorted(self.methods.items()):
                w.writerow([name, repr(m.average_rank), repr(m.auc_lemma), repr(m.auc_standard),
                            repr(m.entropy_gain_bits), m.count])
