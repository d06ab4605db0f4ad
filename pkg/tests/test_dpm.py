import numpy as np
import pytest
from scipy.special import gammaln

from distfactor.dpm import (
    DpmConfig,
    DpmDraws,
    DpmState,
    cluster_count_summary,
    dpm_predictive,
    escobar_west_step,
    log_alpha_posterior,
    log_dm_predictive,
    run_dpm,
    update_assignments,
)

from helpers import mean_z, total_variation
from oracles import coclustering, coclustering_by_enumeration, set_partitions


def test_bell_numbers():
    assert [sum(1 for _ in set_partitions(range(n))) for n in range(1, 6)] == [1, 2, 5, 15, 52]


def test_single_location_one_cluster():
    draws = run_dpm(np.array([[3, 4, 5]]), DpmConfig(iterations=50, burn_in=10, thinning=1))
    assert np.all(draws.n_clusters == 1)


def test_identical_rows_small_alpha_coclustered():
    counts = np.array([[5, 1, 1], [5, 1, 1]])
    cfg = DpmConfig(iterations=2000, burn_in=100, thinning=1, alpha_init=1e-6, update_alpha=False)
    draws = run_dpm(counts, cfg)
    assert coclustering(draws.labels)[0, 1] > 0.99


def test_predictive_matches_ratio_of_marginals():
    rng = np.random.default_rng(0)
    stats, row = rng.integers(0, 10, size=(3, 4)), rng.integers(0, 10, size=4)

    def log_marg(s):
        return gammaln(4.0) - gammaln(4.0 + s.sum()) + np.sum(gammaln(1.0 + s) - gammaln(1.0))

    expected = [log_marg(s + row) - log_marg(s) for s in stats]
    np.testing.assert_allclose(log_dm_predictive(row, stats, 1.0), expected, rtol=1e-12)


def test_stats_stay_in_sync():
    rng = np.random.default_rng(1)
    counts = rng.integers(0, 20, size=(12, 3))
    state = DpmState.single_cluster(counts, alpha=2.0)
    for _ in range(50):
        update_assignments(state, counts, rng)
        state.check(counts)


def test_coclustering_matches_enumeration():
    counts = np.array([[6, 1, 1], [5, 2, 1], [1, 1, 6], [2, 3, 3]])
    cfg = DpmConfig(iterations=40_000, burn_in=1000, thinning=1, alpha_init=1.0, update_alpha=False, seed=2)
    mc = coclustering(run_dpm(counts, cfg).labels)
    exact = coclustering_by_enumeration(counts, 1.0, 1.0)
    assert np.abs(mc - exact).max() < 0.01


def test_exchangeable_under_relabeling():
    counts = np.array([[6, 1, 1], [5, 2, 1], [1, 1, 6], [2, 3, 3]])
    perm = np.array([2, 0, 3, 1])
    cfg = DpmConfig(iterations=20_000, burn_in=500, thinning=1, update_alpha=False, seed=3)
    a = coclustering(run_dpm(counts, cfg).labels)
    b = coclustering(run_dpm(counts[perm], cfg).labels)
    assert np.abs(a[np.ix_(perm, perm)] - b).max() < 0.03


def test_alpha_update_grid_oracle():
    rng = np.random.default_rng(4)
    k, M, a, b = 3, 20, 2.0, 1.0
    alpha = rng.gamma(a, 1 / b, size=1_000_000)
    for _ in range(30):
        alpha = escobar_west_step(alpha, k, M, a, b, rng)
    edges = np.linspace(0, 8, 161)
    hist, _ = np.histogram(alpha, bins=edges)
    fine = np.linspace(1e-6, 8, 160_001)
    dens = np.exp(log_alpha_posterior(fine, k, M, a, b) - log_alpha_posterior(fine, k, M, a, b).max())
    mass = np.add.reduceat(dens[:-1], np.searchsorted(fine, edges[:-1]))
    assert total_variation(hist, mass) < 1e-2


def test_alpha_prior_dominance():
    rng = np.random.default_rng(5)
    alpha = np.full(20_000, 1.0)
    for _ in range(20):
        alpha = escobar_west_step(alpha, 5, 30, 4000.0, 1000.0, rng)
    assert alpha.mean() == pytest.approx(4.0, rel=0.01)


def test_alpha_positive():
    rng = np.random.default_rng(6)
    alpha = np.full(1000, 0.01)
    for _ in range(100):
        alpha = escobar_west_step(alpha, 1, 2, 0.5, 5.0, rng)
        assert np.all(alpha > 0)


def test_constant_count_interval_collapses():
    s = cluster_count_summary(np.full(40, 4))
    assert (s.mean, s.lower, s.upper) == (4.0, 4.0, 4.0)


def test_quantiles_sort_oracle():
    k = np.random.default_rng(7).integers(1, 10, size=401)
    s = cluster_count_summary(k)
    srt = np.sort(k)
    assert s.lower == srt[10] and s.upper == srt[390]


def test_single_cluster_predictive_moments():
    counts = np.array([[3, 1, 0], [2, 2, 2]])
    draws = DpmDraws(np.zeros((1, 2), dtype=int), np.ones(1), 1.0)
    reps = np.array(list(dpm_predictive(draws, counts, np.random.default_rng(8), replications=50_000)))
    conc = 1.0 + counts.sum(axis=0)
    a0 = conc.sum()
    n = counts.sum(axis=1)[:, None]
    mean = n * conc / a0
    var = n * conc / a0 * (1 - conc / a0) * (n + a0) / (1 + a0)
    assert np.all(np.abs(mean_z(reps, mean)) < 4)
    np.testing.assert_allclose(reps.var(axis=0, ddof=1), var, rtol=0.05)
    assert np.all(reps.sum(axis=2) == counts.sum(axis=1))


def test_predictive_seed_determinism():
    counts = np.array([[3, 1, 0], [2, 2, 2]])
    draws = DpmDraws(np.array([[0, 1]]), np.ones(1), 1.0)
    a = list(dpm_predictive(draws, counts, np.random.default_rng(0), 3))
    b = list(dpm_predictive(draws, counts, np.random.default_rng(0), 3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_config_validation():
    with pytest.raises(ValueError):
        DpmConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        DpmConfig(eta=0.0)
