"""Monte-Carlo estimate of PHI leakage under each substitution strategy.

For every run, each critical mention independently becomes a false negative
with probability ``fner``. The substitution chain is simulated over the same
mention counts to get each document's maximum surrogate repeat size. A
document leaks when the leaked real values stand out from the surrogates:

* Consistent: any false negative at all
* otherwise: false-negative count strictly greater than the max repeat size

A patient leaks when any of their documents leaks.

Run ``r`` draws false negatives from the substream ``(seed, "fn", r)`` and
chain values from ``(seed, "chain", r)``. Neither depends on the strategy or
the error rate, so strategies are compared on identical false-negative draws
and results do not depend on how runs are split across workers.
"""

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator

from ._rng import np_rng
from ._validation import check_choice, check_positive_int, check_probability
from .strategy import StrategyConfig

ACCOUNTING_MODES = ("pooled", "per-type")
DIST_HEADER = ("doc_id", "patient_id", "category", "critical", "mention_count")
LEAK_HEADER = ("strategy", "fner", "doc_leak_rate", "doc_leak_stderr",
               "patient_leak_rate", "patient_leak_stderr")
HIST_HEADER = ("value", "count", "series")
DEFAULT_FNERS = (0.001, 0.005, 0.01, 0.05)

# bincount over entries x pool is used below this many bins, sorting above it
_BINCOUNT_LIMIT = 4_000_000

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


class DistributionError(ValueError):
    """A PHI distribution (or its CSV) is malformed."""


@dataclass(frozen=True)
class DistEntry:
    doc_id: str
    patient_id: str
    category: str
    critical: bool
    mention_count: int


class PhiDistribution:
    """Per-document, per-category PHI mention counts grouped by patient."""

    def __init__(self, entries):
        entries = [e if isinstance(e, DistEntry) else DistEntry(*e) for e in entries]
        seen = set()
        patient_of = {}
        for e in entries:
            if int(e.mention_count) != e.mention_count or e.mention_count < 1:
                raise DistributionError(f"{e.doc_id}/{e.category}: mention_count must be "
                                        f"a positive integer, got {e.mention_count!r}")
            if (e.doc_id, e.category) in seen:
                raise DistributionError(f"duplicate (doc_id, category) = ({e.doc_id}, {e.category})")
            seen.add((e.doc_id, e.category))
            if patient_of.setdefault(e.doc_id, e.patient_id) != e.patient_id:
                raise DistributionError(f"{e.doc_id}: assigned to two patients")
        self.entries = tuple(entries)
        self.doc_ids = tuple(dict.fromkeys(e.doc_id for e in entries))
        self.patient_ids = tuple(dict.fromkeys(patient_of[d] for d in self.doc_ids))
        doc_index = {d: i for i, d in enumerate(self.doc_ids)}
        patient_index = {p: i for i, p in enumerate(self.patient_ids)}
        crit = [e for e in entries if e.critical]
        self.counts = np.array([e.mention_count for e in crit], dtype=np.int64)
        self.entry_doc = np.array([doc_index[e.doc_id] for e in crit], dtype=np.int64)
        self.doc_patient = np.array([patient_index[patient_of[d]] for d in self.doc_ids],
                                    dtype=np.int64)

    @property
    def n_docs(self):
        return len(self.doc_ids)

    @property
    def n_patients(self):
        return len(self.patient_ids)

    def __len__(self):
        return len(self.entries)

    def critical_per_doc(self):
        return np.bincount(self.entry_doc, weights=self.counts,
                           minlength=self.n_docs).astype(np.int64)

    def critical_per_patient(self):
        return np.bincount(self.doc_patient, weights=self.critical_per_doc(),
                           minlength=self.n_patients).astype(np.int64)

    @classmethod
    def uniform(cls, n_docs, mentions_per_doc, docs_per_patient=1, category="CRITICAL"):
        """Every document holds the same number of critical mentions."""
        return cls(
            DistEntry(f"doc{i:06d}", f"pat{i // docs_per_patient:06d}", category, True,
                      int(mentions_per_doc))
            for i in range(n_docs)
        )

    @classmethod
    def from_bundles(cls, bundles, registry):
        entries = []
        for b in bundles:
            counts = {}
            for rec in b.annotations:
                counts[rec.category] = counts.get(rec.category, 0) + 1
            for cat, n in counts.items():
                entries.append(DistEntry(b.doc_id, b.effective_patient, cat,
                                         registry.is_critical(cat), n))
        return cls(entries)

    @classmethod
    def read_csv(cls, path):
        entries = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != DIST_HEADER:
                raise DistributionError(f"{path}: row 1: expected header {','.join(DIST_HEADER)}")
            for row_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(DIST_HEADER):
                    raise DistributionError(f"{path}: row {row_no}: expected 5 fields")
                doc, patient, cat, crit, count = (c.strip() for c in row)
                crit_l = crit.lower()
                if crit_l not in _TRUE | _FALSE:
                    raise DistributionError(f"{path}: row {row_no}: bad critical flag {crit!r}")
                try:
                    n = int(count)
                except ValueError:
                    raise DistributionError(
                        f"{path}: row {row_no}: bad mention_count {count!r}") from None
                if not doc:
                    raise DistributionError(f"{path}: row {row_no}: empty doc_id")
                entries.append(DistEntry(doc, patient or doc, cat, crit_l in _TRUE, n))
        try:
            return cls(entries)
        except DistributionError as exc:
            raise DistributionError(f"{path}: {exc}") from None

    def to_csv(self, path_or_file):
        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIST_HEADER)
            for e in self.entries:
                w.writerow([e.doc_id, e.patient_id, e.category,
                            "true" if e.critical else "false", e.mention_count])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
                write(fh)


@dataclass(frozen=True)
class SimConfig:
    fner: float
    runs: int = 1000
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    accounting: str = "pooled"

    def __post_init__(self):
        if not 0.0 < self.fner < 1.0:
            raise ValueError(f"fner must lie in (0, 1), got {self.fner}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.accounting not in ACCOUNTING_MODES:
            raise ValueError(f"accounting must be one of {ACCOUNTING_MODES}")


@dataclass(frozen=True)
class LeakSummary:
    strategy: str
    fner: float
    runs: int
    n_docs: int
    n_patients: int
    doc_leak_rate: float
    doc_leak_stderr: float
    patient_leak_rate: float
    patient_leak_stderr: float
    doc_leaks: tuple
    patient_leaks: tuple

    def row(self):
        return (self.strategy, self.fner, self.doc_leak_rate, self.doc_leak_stderr,
                self.patient_leak_rate, self.patient_leak_stderr)


def inject_fn(mention_count, fner, rng):
    """Number of false negatives among ``mention_count`` critical mentions."""
    if not 0.0 <= fner < 1.0:
        raise ValueError(f"fner must lie in [0, 1), got {fner}")
    return rng.binomial(mention_count, fner)


def doc_leak(strategy_kind, fn_count, max_repeat=None):
    """Whether the real values left in a document stand out from the surrogates."""
    if fn_count < 0:
        raise ValueError("fn_count must be >= 0")
    if str(strategy_kind).lower() == "consistent":
        return fn_count >= 1
    if max_repeat is None:
        raise ValueError("max_repeat is required for non-Consistent strategies")
    return fn_count > max_repeat


def chain_values(counts, p_new, pool_size, rng):
    """Simulate one chain per entry; return ``(entry_of_mention, values)``.

    Vectorised twin of :func:`hipsurrogate.strategy.chain_assign_indices`.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    entry = np.repeat(np.arange(len(counts)), counts)
    if total == 0:
        return entry, np.zeros(0, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[counts > 0]
    if p_new >= 1.0:
        is_new = np.ones(total, dtype=bool)
    else:
        is_new = rng.random(total) < p_new
        is_new[starts] = True
    run_id = np.cumsum(is_new) - 1
    run_values = rng.integers(0, pool_size, size=int(run_id[-1]) + 1)
    return entry, run_values[run_id]


def chain_max_repeat(counts, p_new, pool_size, rng):
    """Maximum surrogate repeat size of each entry's chain."""
    counts = np.asarray(counts, dtype=np.int64)
    n = len(counts)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if p_new <= 0.0:
        return counts.copy()
    entry, values = chain_values(counts, p_new, pool_size, rng)
    if n * pool_size <= _BINCOUNT_LIMIT:
        hist = np.bincount(entry * pool_size + values, minlength=n * pool_size)
        return hist.reshape(n, pool_size).max(axis=1)
    keys, mult = np.unique(entry * pool_size + values, return_counts=True)
    out = np.zeros(n, dtype=np.int64)
    np.maximum.at(out, keys // pool_size, mult)
    return out


def _doc_max(entry_doc, per_entry, n_docs):
    out = np.zeros(n_docs, dtype=np.int64)
    np.maximum.at(out, entry_doc, per_entry)
    return out


def _run_block(dist, strategy, fners, accounting, run_indices):
    """Per-run leak counts for ``run_indices``; arrays shaped (len(fners), runs)."""
    consistent = strategy.kind == "consistent"
    doc_leaks = np.zeros((len(fners), len(run_indices)), dtype=np.int64)
    patient_leaks = np.zeros_like(doc_leaks)
    n_docs, n_patients = dist.n_docs, dist.n_patients
    for j, r in enumerate(run_indices):
        if consistent:
            max_rep = None
        else:
            max_rep = chain_max_repeat(dist.counts, strategy.p_new, strategy.pool_size,
                                       np_rng(strategy.seed, "chain", int(r)))
        for i, fner in enumerate(fners):
            fn = np_rng(strategy.seed, "fn", int(r)).binomial(dist.counts, fner)
            if accounting == "pooled":
                doc_fn = np.bincount(dist.entry_doc, weights=fn, minlength=n_docs)
                if consistent:
                    leaked = doc_fn >= 1
                else:
                    leaked = doc_fn > _doc_max(dist.entry_doc, max_rep, n_docs)
            else:
                entry_leak = fn >= 1 if consistent else fn > max_rep
                leaked = np.bincount(dist.entry_doc, weights=entry_leak, minlength=n_docs) > 0
            doc_leaks[i, j] = int(leaked.sum())
            patient_leaks[i, j] = int(
                (np.bincount(dist.doc_patient, weights=leaked, minlength=n_patients) > 0).sum())
    return doc_leaks, patient_leaks


def _mean_stderr(counts, denom):
    rates = sorted(c / denom for c in counts)
    n = len(rates)
    mean = math.fsum(rates) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in rates) / (n - 1)
    return mean, math.sqrt(var / n)


def _chunks(runs, n_jobs):
    n_jobs = max(1, min(n_jobs, runs))
    bounds = np.linspace(0, runs, n_jobs + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _collect(dist, strategy, fners, accounting, runs, n_jobs):
    blocks = _chunks(runs, n_jobs)
    if len(blocks) == 1:
        results = [_run_block(dist, strategy, fners, accounting, blocks[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(blocks)) as ex:
            futures = [ex.submit(_run_block, dist, strategy, fners, accounting, b)
                       for b in blocks]
            results = [f.result() for f in futures]
    doc = np.concatenate([r[0] for r in results], axis=1)
    pat = np.concatenate([r[1] for r in results], axis=1)
    return doc, pat


def _summaries(dist, strategy, fners, runs, doc, pat):
    out = []
    for i, fner in enumerate(fners):
        d_rate, d_se = _mean_stderr(doc[i], dist.n_docs)
        p_rate, p_se = _mean_stderr(pat[i], dist.n_patients)
        out.append(LeakSummary(strategy.kind, float(fner), runs, dist.n_docs, dist.n_patients,
                               d_rate, d_se, p_rate, p_se,
                               tuple(int(x) for x in doc[i]), tuple(int(x) for x in pat[i])))
    return out


def simulate(dist, cfg, n_jobs=1):
    """Leak rates for one strategy at one error rate, averaged over ``cfg.runs``."""
    if dist.n_docs == 0:
        raise DistributionError("distribution is empty")
    doc, pat = _collect(dist, cfg.strategy, [cfg.fner], cfg.accounting, cfg.runs, n_jobs)
    return _summaries(dist, cfg.strategy, [cfg.fner], cfg.runs, doc, pat)[0]


def simulate_grid(dist, strategies, fners, runs=1000, accounting="pooled", n_jobs=1):
    """:func:`simulate` for every (strategy, fner) pair, sharing chain draws.

    Each returned summary is identical to the corresponding single
    :func:`simulate` call.
    """
    if dist.n_docs == 0:
        raise DistributionError("distribution is empty")
    fners = [float(f) for f in fners]
    if not fners:
        raise ValueError("at least one fner is required")
    for f in fners:
        SimConfig(f, runs, accounting=accounting)
    out = []
    for strategy in strategies:
        doc, pat = _collect(dist, strategy, fners, accounting, runs, n_jobs)
        out.extend(_summaries(dist, strategy, fners, runs, doc, pat))
    return out


@dataclass(frozen=True)
class RepeatHistograms:
    max_repeat: dict
    fn_count: dict

    @staticmethod
    def quantile(hist, q):
        """Smallest value whose cumulative mass reaches ``q``."""
        if not hist:
            return None
        total = sum(hist.values())
        acc = 0
        for value in sorted(hist):
            acc += hist[value]
            if acc >= q * total:
                return value
        return max(hist)

    @staticmethod
    def mass_at(hist, value):
        total = sum(hist.values())
        return hist.get(value, 0) / total if total else 0.0


def repeat_size_histogram(dist, strategy, runs, seed=None, fner=0.01):
    """Histograms over (document, run) of max repeat size and false-negative count.

    Documents without critical mentions are skipped. Consistent reports a
    max repeat size of 1 for every document.
    """
    if seed is not None:
        strategy = StrategyConfig(strategy.kind, strategy.p_new, strategy.pool_size, seed)
    if len(dist.counts) == 0:
        return RepeatHistograms({}, {})
    has_crit = np.bincount(dist.entry_doc, minlength=dist.n_docs) > 0
    mr_hist, fn_hist = {}, {}
    for r in range(runs):
        if strategy.kind == "consistent":
            doc_mr = np.ones(int(has_crit.sum()), dtype=np.int64)
        else:
            per_entry = chain_max_repeat(dist.counts, strategy.p_new, strategy.pool_size,
                                         np_rng(strategy.seed, "chain", r))
            doc_mr = _doc_max(dist.entry_doc, per_entry, dist.n_docs)[has_crit]
        fn = np_rng(strategy.seed, "fn", r).binomial(dist.counts, fner)
        doc_fn = np.bincount(dist.entry_doc, weights=fn, minlength=dist.n_docs)[has_crit]
        for hist, arr in ((mr_hist, doc_mr), (fn_hist, doc_fn.astype(np.int64))):
            vals, cnts = np.unique(arr, return_counts=True)
            for v, c in zip(vals.tolist(), cnts.tolist()):
                hist[v] = hist.get(v, 0) + c
    return RepeatHistograms(dict(sorted(mr_hist.items())), dict(sorted(fn_hist.items())))


def _truncated_lognormal_mean(mu, sigma, lo, hi):
    a, b = math.log(lo), math.log(hi)
    z = stats.norm.cdf
    mass = z((b - mu) / sigma) - z((a - mu) / sigma)
    num = z((b - mu - sigma ** 2) / sigma) - z((a - mu - sigma ** 2) / sigma)
    return math.exp(mu + sigma ** 2 / 2) * num / mass


def fit_lognormal_sigma(mean, median, lo, hi):
    """Sigma of a log-normal with the given median whose [lo, hi] truncation has ``mean``.

    Starts from the untruncated relation ``sigma = sqrt(2 ln(mean/median))``
    and refines it by root finding when truncation shifts the mean.
    """
    if mean <= median:
        return 0.0
    sigma0 = math.sqrt(2.0 * math.log(mean / median))
    mu = math.log(median)
    lo_c, hi_c = max(lo - 0.5, 1e-9), hi + 0.5

    def gap(s):
        return _truncated_lognormal_mean(mu, s, lo_c, hi_c) - mean

    grid = np.linspace(1e-3, 4.0, 400)
    prev_s, prev_g = grid[0], gap(grid[0])
    for s in grid[1:]:
        g = gap(s)
        if prev_g <= 0 <= g or prev_g >= 0 >= g:
            return optimize.brentq(gap, prev_s, s, xtol=1e-10)
        prev_s, prev_g = s, g
    return sigma0


def synth_distribution(mean, median, min_count, max_count, n_docs, docs_per_patient=1,
                       seed=0, category="CRITICAL"):
    """Synthetic per-document critical counts matching summary statistics.

    Counts come from a log-normal centred on ``median`` whose spread is fitted
    to ``mean`` after truncation to ``[min_count, max_count]``, rejection
    sampled and rounded.
    """
    if not min_count <= median <= max_count:
        raise DistributionError("need min <= median <= max")
    if not min_count <= mean <= max_count:
        raise DistributionError(f"mean {mean} outside [{min_count}, {max_count}]")
    if min_count < 1:
        raise DistributionError("min must be >= 1 (every entry needs a mention)")
    if n_docs < 1 or docs_per_patient < 1:
        raise DistributionError("n_docs and docs_per_patient must be >= 1")
    if min_count == max_count:
        counts = np.full(n_docs, int(min_count), dtype=np.int64)
    else:
        mu = math.log(median)
        sigma = fit_lognormal_sigma(mean, median, min_count, max_count)
        rng = np_rng(seed, "synth")
        lo, hi = min_count - 0.5, max_count + 0.5
        accepted = []
        need = n_docs
        while need > 0:
            if sigma == 0.0:
                draw = np.full(need * 2, float(median))
            else:
                draw = rng.lognormal(mu, sigma, size=need * 2)
            draw = draw[(draw >= lo) & (draw < hi)]
            accepted.append(draw[:need])
            need -= len(accepted[-1])
        counts = np.clip(np.rint(np.concatenate(accepted)), min_count, max_count).astype(np.int64)
    return PhiDistribution(
        DistEntry(f"doc{i:06d}", f"pat{i // docs_per_patient:06d}", category, True, int(c))
        for i, c in enumerate(counts)
    )


UAB_TARGETS = {"mean": 388.5, "median": 224, "min_count": 2, "max_count": 2545}
UAB_DISCHARGE_TARGETS = {"mean": 355.6, "median": 199, "min_count": 10, "max_count": 2414}
MIMIC_TARGETS = {"mean": 6.8, "median": 5, "min_count": 2, "max_count": 76}


def write_leak_csv(summaries, path_or_file):
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEAK_HEADER)
        for s in summaries:
            w.writerow([s.strategy, repr(s.fner), repr(s.doc_leak_rate), repr(s.doc_leak_stderr),
                        repr(s.patient_leak_rate), repr(s.patient_leak_stderr)])

    _with_file(path_or_file, write)


def read_leak_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LEAK_HEADER:
            raise DistributionError(f"{path}: unexpected header")
        return [{k: (v if k == "strategy" else float(v)) for k, v in row.items()}
                for row in reader]


def write_histogram_csv(series, path_or_file):
    """``series`` maps a series name to a ``{value: count}`` histogram."""
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HIST_HEADER)
        for name, hist in series.items():
            for value, count in sorted(hist.items()):
                w.writerow([value, count, name])

    _with_file(path_or_file, write)


def read_histogram_csv(path):
    series = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HIST_HEADER:
            raise DistributionError(f"{path}: unexpected header")
        for row in reader:
            series.setdefault(row["series"], {})[int(row["value"])] = int(row["count"])
    return series


def _with_file(path_or_file, write):
    if hasattr(path_or_file, "write"):
        write(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            write(fh)


class LeakageSimulator(BaseEstimator):
    """Estimator wrapper around :func:`simulate` for one strategy.

    ``fit(dist)`` runs the simulation and stores ``doc_leak_rate_``,
    ``doc_leak_stderr_``, ``patient_leak_rate_``, ``patient_leak_stderr_``
    and the full ``summary_``.
    """

    def __init__(self, strategy="markov", p_new=None, fner=0.01, runs=1000, seed=0,
                 accounting="pooled", pool_size=1000, n_jobs=1):
        self.strategy = strategy
        self.p_new = p_new
        self.fner = fner
        self.runs = runs
        self.seed = seed
        self.accounting = accounting
        self.pool_size = pool_size
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if not isinstance(X, PhiDistribution):
            X = PhiDistribution(X)
        check_probability(self.fner, "fner", open_low=True, open_high=True)
        check_positive_int(self.runs, "runs")
        check_positive_int(self.seed, "seed", minimum=0)
        check_positive_int(self.n_jobs, "n_jobs")
        check_choice(self.accounting, "accounting", ACCOUNTING_MODES)
        strategy = StrategyConfig(self.strategy, self.p_new, self.pool_size, self.seed)
        cfg = SimConfig(float(self.fner), self.runs, strategy, self.accounting)
        s = simulate(X, cfg, self.n_jobs)
        self.summary_ = s
        self.doc_leak_rate_ = s.doc_leak_rate
        self.doc_leak_stderr_ = s.doc_leak_stderr
        self.patient_leak_rate_ = s.patient_leak_rate
        self.patient_leak_stderr_ = s.patient_leak_stderr
        return self
