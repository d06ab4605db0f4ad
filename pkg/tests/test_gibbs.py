import numpy as np
import pytest
from scipy import stats

from distfactor.embedding import aggregate_node_counts
from distfactor.gibbs import (
    ChainConfig,
    NumericalFailure,
    _cholesky,
    eta_conditional,
    lambda_conditional,
    rho_conditional,
    run_chain,
    run_chains,
    update_delta,
    update_eta,
    update_mu,
    update_omega,
    update_phi,
    update_rho,
)
from distfactor.model import Hyperparameters, lattice_weights
from distfactor.simulate import simulate_from_model
from distfactor.tree import balanced_tree, default_space

from helpers import gaussian_from_log_density, mean_z
from oracles import GEWEKE_NAMES, augmented_loglik, geweke, sar_quadratic, tiny_instance


def test_omega_zero_count_is_zero():
    state, nc, *_ = tiny_instance()
    nc.total[0, :] = 0
    update_omega(state, nc, np.random.default_rng(0))
    assert np.all(state.Omega[0] == 0)


def test_omega_long_run_mean():
    state, nc, *_ = tiny_instance()
    state.Lambda[:] = 0.0
    state.Mu[:] = 0.0
    nc.total[:] = 4
    rng = np.random.default_rng(1)
    draws = np.array([update_omega(state, nc, rng).copy() for _ in range(20_000)])
    assert np.all(np.abs(mean_z(draws, np.ones(draws.shape[1:]))) < 4)


def test_lambda_no_data_is_sar_prior():
    state, nc, W, *_ = tiny_instance()
    state.Omega[:] = 0.0
    nc.left[:] = nc.total // 2
    nc.total[:] = 2 * nc.left
    P, h = lambda_conditional(0, state, nc, W)
    B = np.eye(W.size) - state.Rho[0] * W.W
    np.testing.assert_allclose(P, state.tau[0] * B.T @ np.diag(state.Phi[:, 0]) @ B, atol=1e-12)
    np.testing.assert_allclose(h, 0.0, atol=1e-12)


def test_lambda_scalar_hand_case():
    state, nc, W, *_ = tiny_instance(M=1, C=2, K=1)
    state.Rho[:] = 0.0
    w, e, kap, mu = state.Omega[0, 0], state.Eta[0, 0], nc.kappa[0, 0], state.Mu[0]
    prec = state.tau[0] * state.Phi[0, 0] + w * e * e
    mean = e * (kap - w * mu) / prec
    P, h = lambda_conditional(0, state, nc, W)
    assert P[0, 0] == pytest.approx(prec)
    assert h[0] / P[0, 0] == pytest.approx(mean)


def test_lambda_mean_is_density_maximizer():
    state, nc, W, *_ = tiny_instance(seed=3)
    for k in range(state.K):
        def logf(x):
            s = state.copy()
            s.Lambda[:, k] = x
            return augmented_loglik(s.psi(), nc.kappa, s.Omega) - 0.5 * s.tau[k] * sar_quadratic(x, s.Rho[k], s.Phi[:, k], W)

        mean, cov = gaussian_from_log_density(logf, W.size)
        P, h = lambda_conditional(k, state, nc, W)
        np.testing.assert_allclose(np.linalg.solve(P, h), mean, atol=1e-8)
        np.testing.assert_allclose(np.linalg.inv(P), cov, atol=1e-8)


def test_eta_no_data_is_standard_normal():
    state, nc, *_ = tiny_instance()
    state.Omega[:, 1] = 0.0
    nc.total[:, 1] = 0
    nc.left[:, 1] = 0
    P, h = eta_conditional(state, nc)
    np.testing.assert_allclose(P[1], np.eye(state.K))
    np.testing.assert_allclose(h[1], 0.0)


def test_eta_scalar_hand_case():
    state, nc, *_ = tiny_instance(M=1, C=2, K=1)
    w, lam, kap, mu = state.Omega[0, 0], state.Lambda[0, 0], nc.kappa[0, 0], state.Mu[0]
    P, h = eta_conditional(state, nc)
    assert P[0, 0, 0] == pytest.approx(1 + w * lam * lam)
    assert h[0, 0] / P[0, 0, 0] == pytest.approx(lam * (kap - w * mu) / (1 + w * lam * lam))


def test_eta_node_order_irrelevant():
    state, nc, *_ = tiny_instance(seed=4)
    a = state.copy()
    b = state.copy()
    ra, rb = np.random.default_rng(0), np.random.default_rng(1)
    da = np.array([update_eta(a, nc, ra).copy() for _ in range(4000)])
    db = np.array([update_eta(b, nc, rb, nodes=[2, 0, 1]).copy() for _ in range(4000)])
    for j in range(da[0].size):
        assert stats.ks_2samp(da.reshape(4000, -1)[:, j], db.reshape(4000, -1)[:, j]).pvalue > 1e-4


def test_phi_residual_free():
    state, nc, W, hyper, _ = tiny_instance()
    state.Lambda[:] = 0.0
    rng = np.random.default_rng(5)
    draws = np.array([update_phi(state, W, hyper, rng).copy() for _ in range(20_000)])
    assert np.all(np.abs(mean_z(draws, np.full(draws.shape[1:], 4 / 3))) < 4)


def test_phi_gamma_two_three():
    state, nc, W, hyper, _ = tiny_instance(M=1, C=2, K=1)
    state.Delta[:] = 1.0
    state.Lambda[:] = np.sqrt(3.0)
    rng = np.random.default_rng(6)
    draws = np.array([update_phi(state, W, hyper, rng)[0, 0] for _ in range(20_000)])
    assert abs(mean_z(draws, 2 / 3)[0]) < 4


def test_phi_mean_decreases_with_residual():
    state, nc, W, hyper, _ = tiny_instance(M=1, C=2, K=1)
    rng = np.random.default_rng(7)
    means = []
    for lam in (0.0, 0.5, 1.0, 2.0):
        state.Lambda[:] = lam
        means.append(np.mean([update_phi(state, W, hyper, rng)[0, 0] for _ in range(5000)]))
    assert np.all(np.diff(means) < 0)


def test_delta_zero_loadings():
    state, nc, W, hyper, _ = tiny_instance()
    state.Lambda[:] = 0.0
    M, K = state.Lambda.shape
    rng = np.random.default_rng(8)
    draws = np.array([update_delta(state, W, hyper, rng).copy() for _ in range(20_000)])
    shapes = [hyper.a1 + M * K / 2, hyper.a2 + M * (K - 1) / 2]
    assert np.all(np.abs(mean_z(draws, shapes)) < 4)


def test_delta_single_factor_conjugacy():
    state, nc, W, hyper, _ = tiny_instance(K=1)
    M = state.Lambda.shape[0]
    q = sar_quadratic(state.Lambda[:, 0], state.Rho[0], state.Phi[:, 0], W)
    rng = np.random.default_rng(9)
    draws = np.array([update_delta(state, W, hyper, rng)[0] for _ in range(20_000)])
    shape, rate = hyper.a1 + M / 2, 1 + q / 2
    assert abs(mean_z(draws, shape / rate)[0]) < 4
    assert draws.var(ddof=1) == pytest.approx(shape / rate**2, rel=0.05)


def test_rho_no_loadings_is_prior():
    state, nc, W, hyper, _ = tiny_instance()
    state.Lambda[:, 0] = 0.0
    mean, var = rho_conditional(0, state, W, hyper)
    assert mean == pytest.approx(hyper.m_rho)
    assert var == pytest.approx(hyper.s2_rho)


def test_rho_strictly_inside():
    state, nc, W, hyper, _ = tiny_instance()
    state.Lambda[:, 0] = 50.0 * np.array([1.0, 1.0, 1.0])
    state.Rho[0] = 0.9
    rng = np.random.default_rng(10)
    for mode in ("exact", "conditional"):
        xs = [update_rho(0, state, W, hyper, rng, mode=mode) for _ in range(500)]
        assert np.all(np.abs(xs) < 1)


def test_mu_fixed_mode_raises():
    state, nc, W, hyper, _ = tiny_instance()
    with pytest.raises(RuntimeError):
        update_mu(state, nc, hyper, np.random.default_rng(0))


def test_mu_no_data_is_prior():
    state, nc, W, hyper, _ = tiny_instance(mu_mode="estimated")
    state.Omega[:] = 0.0
    nc.left[:] = nc.total // 2
    nc.total[:] = 2 * nc.left
    rng = np.random.default_rng(11)
    draws = np.array([update_mu(state, nc, hyper, rng).copy() for _ in range(20_000)])
    assert np.all(np.abs(mean_z(draws, np.full(3, hyper.m_mu))) < 4)
    np.testing.assert_allclose(draws.var(axis=0, ddof=1), hyper.s2_mu, rtol=0.05)


def test_mu_flat_prior_scalar():
    state, nc, W, hyper, _ = tiny_instance(M=1, C=2, K=1, mu_mode="estimated")
    flat = Hyperparameters(K=1, mu_mode="estimated", s2_mu=1e12)
    w, kap = state.Omega[0, 0], nc.kappa[0, 0]
    fitted = state.Lambda[0, 0] * state.Eta[0, 0]
    rng = np.random.default_rng(12)
    draws = np.array([update_mu(state, nc, flat, rng)[0] for _ in range(20_000)])
    assert abs(mean_z(draws, kap / w - fitted)[0]) < 4
    assert draws.var(ddof=1) == pytest.approx(1 / w, rel=0.05)


def test_cholesky_escalates_then_fails():
    P = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = _cholesky(P, 1e-10)
    assert np.all(np.isfinite(L))
    with pytest.raises(NumericalFailure):
        _cholesky(np.array([[-1.0, 0.0], [0.0, 1.0]]), 1e-10)


def test_no_retained_draws_is_config_error():
    with pytest.raises(ValueError):
        ChainConfig(iterations=100, burn_in=100)


def _small_problem(seed=0):
    tree = balanced_tree(default_space(4))
    W = lattice_weights(2, 3)
    counts, _ = simulate_from_model(6, tree, W, Hyperparameters(), 2, 200, np.random.default_rng(seed))
    return counts, tree, W


def test_seed_determinism():
    counts, tree, W = _small_problem()
    cfg = ChainConfig(iterations=60, burn_in=20, thinning=2, seed=3)
    a = run_chain(counts, tree, W, Hyperparameters(K=3), cfg)
    b = run_chain(counts, tree, W, Hyperparameters(K=3), cfg)
    for name in ("Lambda", "Eta", "Phi", "Delta", "Rho"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert len(a) == 20
    assert a.metadata["tree_hash"] == tree.digest()


def test_multi_chain_spawned_seeds():
    counts, tree, W = _small_problem()
    cfg = ChainConfig(iterations=30, burn_in=10, thinning=1, seed=3)
    draws = run_chains(counts, tree, W, Hyperparameters(K=2), cfg, n_chains=2)
    assert len(draws) == 40
    assert not np.array_equal(draws.Lambda[:20], draws.Lambda[20:])


def test_estimated_mu_chain_runs():
    counts, tree, W = _small_problem(1)
    cfg = ChainConfig(iterations=40, burn_in=20, thinning=1, seed=0)
    draws = run_chain(counts, tree, W, Hyperparameters(K=2, mu_mode="estimated"), cfg)
    assert np.all(np.isfinite(draws.Mu)) and draws.Mu.std(axis=0).min() > 0


def test_state_invariants_each_sweep():
    counts, tree, W = _small_problem(2)
    nc = aggregate_node_counts(counts.counts, tree)
    seen = []
    run_chain(counts, tree, W, Hyperparameters(K=3), ChainConfig(iterations=30, burn_in=10, thinning=1),
              progress=lambda it, s: (s.check(nc), seen.append(it)))
    assert seen == list(range(1, 31))


def test_geweke_reduced():
    z = geweke(4000, 4000, seed=11)
    assert len(z) == len(GEWEKE_NAMES) >= 10
    assert np.all(np.abs(z) < 4), dict(zip(GEWEKE_NAMES, np.round(z, 2)))
