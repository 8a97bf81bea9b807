# Average rank, AUC and entropy gain on hand-made rankings.
import numpy as np

from chainprofiler import evaluation
from chainprofiler.evaluation import RankedResult


def results(pairs):
    return [RankedResult("t", "x", tuple(range(n)), np.zeros(n), r) for n, r in pairs]


# Perfect attacker with 8 candidates: log2(8) = 3 bits learned.
print(evaluation.entropy_gain(results([(8, 1)] * 10), M=8).gain)

# Coin flipping over 100 candidates learns next to nothing.
rng = np.random.default_rng(0)
coin = results([(100, int(r)) for r in rng.integers(1, 101, 10_000)])
print(evaluation.entropy_gain(coin).gain)

# r/n and its complement: lower r/n is better, the usual AUC is higher-better.
mixed = results([(10, 1), (10, 4), (50, 2), (3, 3)])
auc = evaluation.auc_lemma(mixed)
print("mean r/n", auc.lemma, " AUC", auc.standard, " avg rank", evaluation.average_rank(mixed))

# Rank density on a 10-cell grid: each result spreads its mass over its slot.
print(np.round(evaluation.rank_density([(n, r.rank) for n, r in zip([10, 10, 50, 3], mixed)], 10), 3))
