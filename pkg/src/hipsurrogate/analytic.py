"""Closed-form leak probabilities for synthetic corpora.

A corpus of ``n_docs`` documents with ``entities_per_doc`` critical entities
each holds ``N`` entities. With false-negative rate ``p`` the number of
leaked real values is ``X ~ Binomial(N, p)``; a strategy leaks when ``X``
exceeds its threshold ``t`` (the number of surrogate copies a real value has
to outnumber before it stands out).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._rng import np_rng
from .leakage import chain_values
from .strategy import StrategyConfig

THRESHOLDS = {"consistent": 0.0, "random": 1.015, "markov": 2.028}

PRESETS = {
    "fig4-1pct": {"entities_per_doc": (15, 150, 1500), "fners": (0.01,)},
    "fig4-1pct-results": {"entities_per_doc": (15, 150, 300), "fners": (0.01,)},
    "fig4-5pct": {"entities_per_doc": (5, 25, 50), "fners": (0.05,)},
    "fig4-5pct-methods": {"entities_per_doc": (15, 150, 1500), "fners": (0.05,)},
}

ANALYTIC_HEADER = ("strategy", "fner", "entities_per_doc", "n_docs", "leak_probability")

# the summation oracle is only meant for modest N
PMF_SUM_LIMIT = 10_000


@dataclass(frozen=True)
class AnalyticQuery:
    n_docs: int
    entities_per_doc: int
    fner: float
    threshold: float = 0.0

    def __post_init__(self):
        if int(self.n_docs) != self.n_docs or self.n_docs < 1:
            raise ValueError(f"n_docs must be a positive integer, got {self.n_docs}")
        if int(self.entities_per_doc) != self.entities_per_doc or self.entities_per_doc < 1:
            raise ValueError(f"entities_per_doc must be a positive integer, "
                             f"got {self.entities_per_doc}")
        if not 0.0 <= self.fner <= 1.0:
            raise ValueError(f"fner must lie in [0, 1], got {self.fner}")
        if not self.threshold >= 0.0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")

    @property
    def total(self):
        return int(self.n_docs) * int(self.entities_per_doc)


def expected_real(q):
    """Expected number of leaked real entities."""
    return q.fner * q.entities_per_doc * q.n_docs


def binom_sf(t, n, p):
    """``P(X > t)`` for ``X ~ Binomial(n, p)`` via the regularized incomplete beta."""
    k = math.floor(t) + 1
    if k <= 0:
        return 1.0
    if k > n or p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    if k == 1:
        return -math.expm1(n * math.log1p(-p))
    # P(X >= k) = I_p(k, n - k + 1)
    return float(special.betainc(k, n - k + 1, p))


def binom_sf_by_summation(t, n, p):
    """``P(X > t)`` by summing the binomial pmf in log space (test oracle)."""
    if n > PMF_SUM_LIMIT:
        raise ValueError(f"summation oracle is limited to n <= {PMF_SUM_LIMIT}")
    k = max(math.floor(t) + 1, 0)
    if k > n:
        return 0.0
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0
    log_p, log_q = math.log(p), math.log1p(-p)
    lg_n = math.lgamma(n + 1)

    def pmf(j):
        return math.exp(lg_n - math.lgamma(j + 1) - math.lgamma(n - j + 1)
                        + j * log_p + (n - j) * log_q)

    # sum whichever tail is shorter
    if k > n // 2:
        return math.fsum(pmf(j) for j in range(k, n + 1))
    return 1.0 - math.fsum(pmf(j) for j in range(0, k))


def leak_probability(q):
    """Probability that the leaked count exceeds the query's threshold."""
    return binom_sf(q.threshold, q.total, q.fner)


def default_doc_grid(points=30, lo=10, hi=10_000):
    """Log-spaced document counts, rounded to integers, duplicates removed."""
    return [int(x) for x in np.unique(np.rint(np.geomspace(lo, hi, points)).astype(int))]


@dataclass(frozen=True)
class AnalyticRow:
    strategy: str
    fner: float
    entities_per_doc: int
    n_docs: int
    leak_probability: float


def sweep(entity_counts, fners, thresholds=None, doc_grid=None):
    """Evaluate every (strategy, fner, entities per doc, n_docs) combination."""
    thresholds = dict(THRESHOLDS if thresholds is None else thresholds)
    doc_grid = default_doc_grid() if doc_grid is None else list(doc_grid)
    entity_counts, fners = list(entity_counts), list(fners)
    if not (entity_counts and fners and thresholds and doc_grid):
        raise ValueError("every grid must be nonempty")
    rows = []
    for strategy, t in thresholds.items():
        for fner in fners:
            for epd in entity_counts:
                for n_docs in doc_grid:
                    q = AnalyticQuery(int(n_docs), int(epd), float(fner), float(t))
                    rows.append(AnalyticRow(strategy, float(fner), int(epd), int(n_docs),
                                            leak_probability(q)))
    return rows


def estimate_threshold(strategy, pool_size=1000, n_draws=1000, trials=100, seed=0,
                       statistic="visits"):
    """Monte-Carlo estimate of how often a surrogate value recurs under ``strategy``.

    ``statistic="visits"`` (default) is the mean number of consecutive
    mentions that share one surrogate: total draws over the number of maximal
    runs of equal values, pooled across trials. It approaches ``1/p_new`` plus
    a small excess from fresh draws colliding with the current value.

    ``statistic="max_repeat"`` is the mean over trials of the largest
    multiplicity of any single value in a chain of ``n_draws`` mentions; it
    grows with ``n_draws`` through birthday collisions.
    """
    if isinstance(strategy, str):
        strategy = StrategyConfig(strategy, pool_size=pool_size, seed=seed)
    if trials < 1 or n_draws < 1:
        raise ValueError("trials and n_draws must be >= 1")
    if statistic not in ("visits", "max_repeat"):
        raise ValueError("statistic must be 'visits' or 'max_repeat'")
    if strategy.p_new == 0.0:
        return float(n_draws)
    rng = np_rng(seed, "threshold", strategy.kind, pool_size)
    counts = np.full(trials, n_draws, dtype=np.int64)
    entry, values = chain_values(counts, strategy.p_new, pool_size, rng)
    if statistic == "visits":
        boundary = np.ones(len(values), dtype=bool)
        boundary[1:] = (values[1:] != values[:-1]) | (entry[1:] != entry[:-1])
        return float(len(values) / boundary.sum())
    keys = entry * pool_size + values
    uniq, mult = np.unique(keys, return_counts=True)
    per_trial = np.zeros(trials, dtype=np.int64)
    np.maximum.at(per_trial, uniq // pool_size, mult)
    return float(per_trial.mean())
