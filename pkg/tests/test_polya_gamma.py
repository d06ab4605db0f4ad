import numpy as np
import pytest
from scipy import stats

from distfactor.polya_gamma import pg_mean, pg_var, sample_pg, sample_pg1, sample_pg_series

from helpers import mean_z


def test_pg_mean_limits():
    assert pg_mean(4, 0.0) == pytest.approx(1.0)
    assert pg_mean(1, 2.0) == pytest.approx(0.25 * np.tanh(1.0))
    assert pg_mean(1, 2.0) == pytest.approx(0.19040, abs=1e-5)


def test_pg_mean_linear_in_b():
    c = np.linspace(-6, 6, 25)
    np.testing.assert_allclose(pg_mean(10, c), 10 * pg_mean(1, c), rtol=1e-14)


def test_pg_var_small_c_continuous():
    assert pg_var(1, 1e-9) == pytest.approx(1 / 24, rel=1e-6)
    assert pg_var(1, 1e-3) == pytest.approx(pg_var(1, 0.0), rel=1e-5)


def test_pg_zero_shape():
    rng = np.random.default_rng(0)
    out = sample_pg(np.zeros(5, dtype=int), np.linspace(-3, 3, 5), rng)
    assert np.all(out == 0.0)


def test_pg1_c0_mean():
    x = sample_pg1(np.zeros(100_000), np.random.default_rng(1))
    assert abs(mean_z(x, 0.25)[0]) < 3


@pytest.mark.parametrize("c", [0.0, 1.0, 4.0, 12.0])
def test_pg1_moments(c):
    x = sample_pg1(np.full(50_000, c), np.random.default_rng(2))
    assert abs(mean_z(x, pg_mean(1, c))[0]) < 4
    assert x.var(ddof=1) == pytest.approx(pg_var(1, c), rel=0.05)
    assert np.all(x > 0)


def test_symmetric_in_c():
    a = sample_pg1(np.full(40_000, 3.0), np.random.default_rng(3))
    b = sample_pg1(np.full(40_000, -3.0), np.random.default_rng(4))
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_additivity():
    rng = np.random.default_rng(5)
    m, c, n = 5, 1.3, 20_000
    direct = sample_pg(np.full(n, m), c, rng)
    summed = sample_pg1(np.full(n * m, c), rng).reshape(n, m).sum(axis=1)
    assert stats.ks_2samp(direct, summed).pvalue > 1e-3


def test_series_oracle_b200():
    rng = np.random.default_rng(6)
    n = 20_000
    x = sample_pg(np.full(n, 200), 1.5, rng)
    y = sample_pg_series(200, 1.5, rng, size=n)
    se = np.sqrt(x.var(ddof=1) / n + y.var(ddof=1) / n)
    assert abs(x.mean() - y.mean()) < 3 * se
    assert abs(mean_z(y, pg_mean(200, 1.5))[0]) < 4


def test_series_matches_exact_b1():
    rng = np.random.default_rng(7)
    x = sample_pg1(np.full(30_000, 2.0), rng)
    y = sample_pg_series(1, 2.0, rng, size=30_000)
    assert stats.ks_2samp(x, y).pvalue > 1e-3


def test_rejects_bad_shape():
    with pytest.raises(ValueError):
        sample_pg(-1, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_pg(1.5, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_pg(1, np.inf, np.random.default_rng(0))


def test_broadcast_shapes():
    out = sample_pg(np.array([[1, 2, 40]]), np.zeros((3, 1)), np.random.default_rng(0))
    assert out.shape == (3, 3)
    assert np.all(out > 0)


def test_extreme_tilt_no_overflow():
    with np.errstate(all="raise"):
        x = sample_pg1(np.array([1e3, -1e4, 1e5] * 2000), np.random.default_rng(8)).reshape(-1, 3)
    assert np.all(np.isfinite(x)) and np.all(x > 0)
    np.testing.assert_allclose(x.mean(axis=0), pg_mean(1, np.array([1e3, 1e4, 1e5])), rtol=0.05)
