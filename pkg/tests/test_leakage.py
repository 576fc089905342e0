import itertools
import math

import numpy as np
import pytest

from hipsurrogate.leakage import (
    DistEntry,
    DistributionError,
    LeakageSimulator,
    MIMIC_TARGETS,
    PhiDistribution,
    SimConfig,
    UAB_TARGETS,
    chain_max_repeat,
    doc_leak,
    fit_lognormal_sigma,
    inject_fn,
    read_histogram_csv,
    read_leak_csv,
    repeat_size_histogram,
    simulate,
    simulate_grid,
    synth_distribution,
    write_histogram_csv,
    write_leak_csv,
)
from hipsurrogate.strategy import StrategyConfig


def _max_repeat_pmf(n, p_new, K):
    """Exact distribution of a chain's max repeat size by full enumeration."""
    pmf = {}
    for flags in itertools.product((True, False), repeat=n - 1):
        flags = (True,) + flags
        p_flags = math.prod(p_new if f else 1 - p_new for f in flags[1:])
        if p_flags == 0:
            continue
        runs = []
        for f in flags:
            if f:
                runs.append(1)
            else:
                runs[-1] += 1
        for values in itertools.product(range(K), repeat=len(runs)):
            mult = {}
            for v, r in zip(values, runs):
                mult[v] = mult.get(v, 0) + r
            m = max(mult.values())
            pmf[m] = pmf.get(m, 0.0) + p_flags / K ** len(runs)
    return pmf


def _exact_doc_leak(n, fner, p_new, K, consistent=False):
    fn = [math.comb(n, k) * fner ** k * (1 - fner) ** (n - k) for k in range(n + 1)]
    if consistent:
        return 1 - fn[0]
    pmf = _max_repeat_pmf(n, p_new, K)
    return sum(fn[k] * sum(q for m, q in pmf.items() if m < k) for k in range(n + 1))


def test_enumeration_oracle_sanity():
    assert _max_repeat_pmf(3, 0.0, 5) == {3: 1.0}
    pmf = _max_repeat_pmf(2, 1.0, 4)
    assert pmf[2] == pytest.approx(0.25)


@pytest.mark.parametrize("kind, p_new", [("random", None), ("markov", None),
                                         ("custom", 0.3), ("consistent", None)])
@pytest.mark.parametrize("n", [1, 3, 4])
def test_simulator_matches_exact_enumeration(kind, p_new, n):
    K, fner, runs, docs = 3, 0.4, 400, 50
    strat = StrategyConfig(kind, p_new, pool_size=K, seed=11)
    dist = PhiDistribution.uniform(docs, n)
    s = simulate(dist, SimConfig(fner, runs, strat))
    exact = _exact_doc_leak(n, fner, strat.p_new, K, kind == "consistent")
    se = math.sqrt(exact * (1 - exact) / (runs * docs))
    assert abs(s.doc_leak_rate - exact) <= 4 * se + 1e-12


def test_inject_fn_binomial_moments():
    rng = np.random.default_rng(0)
    draws = inject_fn(np.full(200_000, 50), 0.1, rng)
    assert abs(draws.mean() - 5.0) < 0.03
    assert abs(draws.var() - 4.5) < 0.06
    with pytest.raises(ValueError):
        inject_fn(3, 1.5, rng)


def test_doc_leak_predicate():
    assert doc_leak("consistent", 1)
    assert not doc_leak("consistent", 0)
    assert not doc_leak("markov", 2, 2)
    assert doc_leak("random", 3, 2)
    with pytest.raises(ValueError):
        doc_leak("random", 1)


def test_consistent_closed_form():
    dist = PhiDistribution.uniform(200, 10)
    s = simulate(dist, SimConfig(0.05, 300, StrategyConfig("consistent", seed=3)))
    expected = 1 - 0.95 ** 10
    assert abs(s.doc_leak_rate - expected) < 3 * s.doc_leak_stderr + 1e-9


def test_patient_aggregation():
    single = PhiDistribution.uniform(100, 5, docs_per_patient=1)
    grouped = PhiDistribution.uniform(100, 5, docs_per_patient=4)
    cfg = SimConfig(0.05, 50, StrategyConfig("consistent", seed=2))
    a = simulate(single, cfg)
    b = simulate(grouped, cfg)
    assert a.patient_leak_rate == a.doc_leak_rate
    assert b.doc_leak_rate == a.doc_leak_rate
    assert b.patient_leak_rate > b.doc_leak_rate
    q = 1 - 0.95 ** 5
    assert abs(b.patient_leak_rate - (1 - (1 - q) ** 4)) < 4 * b.patient_leak_stderr


def test_pooled_vs_per_type():
    entries = []
    for d in range(200):
        entries.append(DistEntry(f"d{d}", f"d{d}", "PATIENT", True, 3))
        entries.append(DistEntry(f"d{d}", f"d{d}", "MRN", True, 3))
        entries.append(DistEntry(f"d{d}", f"d{d}", "DOCTOR", False, 9))
    dist = PhiDistribution(entries)
    strat = StrategyConfig("markov", seed=4, pool_size=1000)
    pooled = simulate(dist, SimConfig(0.3, 100, strat, "pooled"))
    per_type = simulate(dist, SimConfig(0.3, 100, strat, "per-type"))
    assert pooled.doc_leak_rate != per_type.doc_leak_rate
    cons = StrategyConfig("consistent", seed=4)
    assert (simulate(dist, SimConfig(0.3, 50, cons, "pooled")).doc_leak_rate
            == simulate(dist, SimConfig(0.3, 50, cons, "per-type")).doc_leak_rate)


def test_grid_matches_single_runs_and_jobs():
    dist = synth_distribution(**MIMIC_TARGETS, n_docs=300, seed=1)
    strats = [StrategyConfig(k, seed=9) for k in ("consistent", "random", "markov")]
    grid = simulate_grid(dist, strats, [0.01, 0.05], runs=30)
    par = simulate_grid(dist, strats, [0.01, 0.05], runs=30, n_jobs=3)
    assert grid == par
    one = simulate(dist, SimConfig(0.05, 30, strats[2]))
    assert one == [g for g in grid if g.strategy == "markov" and g.fner == 0.05][0]


def test_stderr_single_run_and_bounds():
    dist = PhiDistribution.uniform(10, 3)
    s = simulate(dist, SimConfig(0.5, 1, StrategyConfig("consistent")))
    assert s.doc_leak_stderr == 0.0
    assert s.doc_leak_rate in {i / 10 for i in range(11)}


def test_leak_rate_monotone_in_fner():
    dist = synth_distribution(**MIMIC_TARGETS, n_docs=400, seed=2)
    for kind in ("consistent", "random", "markov"):
        rows = simulate_grid(dist, [StrategyConfig(kind, seed=1)], [0.001, 0.01, 0.05, 0.2],
                             runs=40)
        rates = [r.doc_leak_rate for r in rows]
        assert rates == sorted(rates)


def test_max_repeat_paths_agree():
    counts = np.array([1, 5, 40, 300])
    a = chain_max_repeat(counts, 0.5, 1000, np.random.default_rng(3))
    import hipsurrogate.leakage as lk
    old = lk._BINCOUNT_LIMIT
    lk._BINCOUNT_LIMIT = 0
    try:
        b = chain_max_repeat(counts, 0.5, 1000, np.random.default_rng(3))
    finally:
        lk._BINCOUNT_LIMIT = old
    assert a.tolist() == b.tolist()
    assert chain_max_repeat(counts, 0.0, 1000, None).tolist() == counts.tolist()


def test_histograms():
    dist = PhiDistribution.uniform(100, 6)
    h = repeat_size_histogram(dist, StrategyConfig("consistent"), 10, seed=1)
    assert h.max_repeat == {1: 1000}
    h = repeat_size_histogram(dist, StrategyConfig("random"), 20, seed=1, fner=0.1)
    assert sum(h.max_repeat.values()) == sum(h.fn_count.values()) == 2000
    assert h.mass_at(h.max_repeat, 1) > 0.95


def test_distribution_validation(tmp_path):
    with pytest.raises(DistributionError):
        PhiDistribution([DistEntry("a", "p", "X", True, 0)])
    with pytest.raises(DistributionError):
        PhiDistribution([DistEntry("a", "p", "X", True, 1), DistEntry("a", "p", "X", True, 2)])
    with pytest.raises(DistributionError):
        PhiDistribution([DistEntry("a", "p", "X", True, 1), DistEntry("a", "q", "Y", True, 2)])
    bad = tmp_path / "bad.csv"
    bad.write_text("doc_id,patient_id,category,critical,mention_count\n"
                   "a,p,X,true,2\nb,p,X,maybe,2\n", encoding="utf-8")
    with pytest.raises(DistributionError, match="row 3"):
        PhiDistribution.read_csv(bad)


def test_csv_round_trips(tmp_path):
    dist = synth_distribution(**MIMIC_TARGETS, n_docs=50, docs_per_patient=3, seed=4)
    dist.to_csv(tmp_path / "d.csv")
    back = PhiDistribution.read_csv(tmp_path / "d.csv")
    assert back.entries == dist.entries
    rows = simulate_grid(back, [StrategyConfig("random")], [0.01], runs=5)
    write_leak_csv(rows, tmp_path / "l.csv")
    got = read_leak_csv(tmp_path / "l.csv")
    assert got[0]["doc_leak_rate"] == rows[0].doc_leak_rate
    series = {"max_repeat/random": {1: 5, 2: 1}, "fn_count/0.01": {0: 6}}
    write_histogram_csv(series, tmp_path / "h.csv")
    assert read_histogram_csv(tmp_path / "h.csv") == series


@pytest.mark.parametrize("targets", [UAB_TARGETS, MIMIC_TARGETS])
def test_synthetic_distribution_matches_targets(targets):
    dist = synth_distribution(**targets, n_docs=20000, seed=0)
    c = dist.critical_per_doc()
    assert abs(c.mean() - targets["mean"]) / targets["mean"] < 0.03
    assert abs(np.median(c) - targets["median"]) / targets["median"] < 0.08
    assert c.min() >= targets["min_count"] and c.max() <= targets["max_count"]
    again = synth_distribution(**targets, n_docs=20000, seed=0)
    assert again.entries == dist.entries


def test_synthetic_distribution_errors():
    with pytest.raises(DistributionError):
        synth_distribution(10, 5, 2, 8, 10)
    with pytest.raises(DistributionError):
        synth_distribution(3, 3, 0, 8, 10)
    flat = synth_distribution(4, 4, 4, 4, 5)
    assert flat.critical_per_doc().tolist() == [4] * 5
    assert fit_lognormal_sigma(5, 5, 1, 10) == 0.0


def test_estimator_api():
    dist = PhiDistribution.uniform(50, 10)
    est = LeakageSimulator(strategy="consistent", fner=0.05, runs=20, seed=1).fit(dist)
    assert 0 < est.doc_leak_rate_ < 1
    assert est.get_params()["fner"] == 0.05
    with pytest.raises(ValueError):
        LeakageSimulator(fner=0.0).fit(dist)
