"""Pólya–Gamma augmented Gibbs sampler for the tree-embedded factor model.

Given the PG latents, every node A contributes the Gaussian pseudo-regression

    kappa(A) / omega(A) = mu(A) 1_M + Lambda eta(A) + eps(A),  eps ~ N(0, Omega(A)^-1)

so Lambda columns, eta(A) and mu(A) have Gaussian full conditionals, Phi and
delta are conjugate gamma, and rho_k is truncated normal (see ``update_rho``
for the determinant correction).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .embedding import CountMatrix, NodeCounts, aggregate_node_counts
from .model import (
    Hyperparameters,
    ModelState,
    PosteriorDraws,
    SpatialWeights,
    init_state,
    lambda_prior_precision,
    sample_truncated_normal,
)
from .polya_gamma import DEFAULT_EXACT_MAX, sample_pg
from .tree import PartitionTree

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class NumericalFailure(RuntimeError):
    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burn_in: int = 2500
    thinning: int = 5
    seed: int = 0
    store_omega: bool = False
    jitter: float = 1e-10
    pg_exact_max: int = DEFAULT_EXACT_MAX
    rho_update: str = "exact"

    def __post_init__(self):
        if self.iterations < 1 or self.thinning < 1 or self.burn_in < 0:
            raise ValueError("iterations and thinning must be positive, burn_in nonnegative")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if not self.jitter > 0:
            raise ValueError("jitter must be positive")
        if self.rho_update not in ("exact", "conditional"):
            raise ValueError("rho_update must be 'exact' or 'conditional'")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning

    def to_dict(self) -> dict:
        return asdict(self)


def _cholesky(P, jitter):
    scale = max(float(np.mean(np.diag(P))), 1.0)
    for eps in (0.0,) + tuple(j for j in JITTER_LADDER if j >= jitter):
        try:
            return np.linalg.cholesky(P + eps * scale * np.eye(P.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailure(
        f"precision matrix not positive definite after jitter {JITTER_LADDER[-1]:g} "
        f"(size {P.shape[0]}, min diag {np.min(np.diag(P)):.3g}, max diag {np.max(np.diag(P)):.3g})"
    )


def sample_gaussian_precision(P, h, rng, jitter=1e-10):
    """Draw from N(P^-1 h, P^-1) through a Cholesky factor of P."""
    L = _cholesky(P, jitter)
    mean = cho_solve((L, True), h)
    return mean + solve_triangular(L.T, rng.standard_normal(h.shape[0]), lower=False)


# -- full conditionals --------------------------------------------------------

def update_omega(state: ModelState, nc: NodeCounts, rng, exact_max=DEFAULT_EXACT_MAX):
    state.Omega = sample_pg(nc.total, state.psi(), rng, exact_max=exact_max)
    return state.Omega


def lambda_conditional(k: int, state: ModelState, nc: NodeCounts, W: SpatialWeights):
    """Precision and precision-times-mean of the column-k full conditional."""
    eta_k = state.Eta[:, k]
    P = lambda_prior_precision(k, state, W)
    P[np.diag_indices_from(P)] += state.Omega @ eta_k**2
    others = state.Mu[None, :] + state.Lambda @ state.Eta.T - np.outer(state.Lambda[:, k], eta_k)
    h = (nc.kappa - state.Omega * others) @ eta_k
    return P, h


def update_lambda_column(k, state, nc, W, rng, jitter=1e-10):
    P, h = lambda_conditional(k, state, nc, W)
    state.Lambda[:, k] = sample_gaussian_precision(P, h, rng, jitter)
    return state.Lambda[:, k]


def eta_conditional(state: ModelState, nc: NodeCounts):
    """Batched (N, K, K) precisions and (N, K) precision-times-means."""
    L = state.Lambda
    P = np.einsum("ik,ia,il->akl", L, state.Omega, L) + np.eye(L.shape[1])
    h = (nc.kappa - state.Omega * state.Mu[None, :]).T @ L
    return P, h


def update_eta(state: ModelState, nc: NodeCounts, rng, jitter=1e-10, nodes=None):
    """Redraw eta(A) for every node (or the listed ones); nodes are
    conditionally independent so the batch draw is exact."""
    P, h = eta_conditional(state, nc)
    nodes = range(P.shape[0]) if nodes is None else nodes
    for a in nodes:
        state.Eta[a] = sample_gaussian_precision(P[a], h[a], rng, jitter)
    return state.Eta


def sar_residuals(state: ModelState, W: SpatialWeights) -> np.ndarray:
    """(I - rho_k W) Lambda[:, k], column by column."""
    return state.Lambda - (W.W @ state.Lambda) * state.Rho[None, :]


def update_phi(state: ModelState, W: SpatialWeights, hyper: Hyperparameters, rng):
    resid = sar_residuals(state, W)
    shape = (hyper.nu + 1.0) / 2.0
    rate = (hyper.nu + state.tau[None, :] * resid**2) / 2.0
    state.Phi = rng.gamma(shape, 1.0 / rate)
    return state.Phi


def update_delta(state: ModelState, W: SpatialWeights, hyper: Hyperparameters, rng):
    """Sequential delta_1..delta_K updates; tau is derived from Delta."""
    M, K = state.Lambda.shape
    quad = np.sum(state.Phi * sar_residuals(state, W) ** 2, axis=0)
    for k in range(K):
        tau_without_k = np.cumprod(state.Delta) / state.Delta[k]
        shape = (hyper.a1 if k == 0 else hyper.a2) + M * (K - k) / 2.0
        rate = 1.0 + 0.5 * np.sum(tau_without_k[k:] * quad[k:])
        state.Delta[k] = rng.gamma(shape, 1.0 / rate)
    return state.Delta


def rho_conditional(k: int, state: ModelState, W: SpatialWeights, hyper: Hyperparameters):
    """Mean and variance of the normal kernel for rho_k (before truncation)."""
    lam = state.Lambda[:, k]
    wl = W.W @ lam
    tau, phi = state.tau[k], state.Phi[:, k]
    precision = 1.0 / hyper.s2_rho + tau * np.sum(phi * wl * wl)
    var = 1.0 / precision
    mean = var * (hyper.m_rho / hyper.s2_rho + tau * np.sum(phi * wl * lam))
    return mean, var


def update_rho(k, state, W, hyper, rng, mode="exact"):
    """Redraw rho_k.

    ``mode="conditional"`` samples the truncated normal kernel directly.  That
    kernel omits |det(I - rho_k W)| from the SAR density of Lambda[:, k], so
    ``mode="exact"`` uses it as an independence Metropolis-Hastings proposal
    and accepts with the determinant ratio, which leaves the exact full
    conditional invariant.
    """
    mean, var = rho_conditional(k, state, W, hyper)
    proposal = float(sample_truncated_normal(mean, var, rng))
    if mode == "exact":
        log_ratio = W.log_abs_det(proposal) - W.log_abs_det(state.Rho[k])
        if np.log(rng.uniform()) >= log_ratio:
            return state.Rho[k]
    state.Rho[k] = proposal
    return proposal


def update_mu(state: ModelState, nc: NodeCounts, hyper: Hyperparameters, rng):
    """Conjugate normal update of mu(A) per node (estimated mode only)."""
    if hyper.mu_mode != "estimated":
        raise RuntimeError("update_mu is only valid when mu_mode='estimated'")
    fitted = state.Lambda @ state.Eta.T
    precision = 1.0 / hyper.s2_mu + state.Omega.sum(axis=0)
    h = hyper.m_mu / hyper.s2_mu + np.sum(nc.kappa - state.Omega * fitted, axis=0)
    state.Mu = h / precision + rng.standard_normal(h.shape) / np.sqrt(precision)
    return state.Mu


def gibbs_sweep(state, nc, W, hyper, config: ChainConfig, rng):
    """omega -> Lambda columns -> eta -> Phi -> delta -> rho -> (mu)."""
    update_omega(state, nc, rng, exact_max=config.pg_exact_max)
    for k in range(state.K):
        update_lambda_column(k, state, nc, W, rng, config.jitter)
    update_eta(state, nc, rng, config.jitter)
    update_phi(state, W, hyper, rng)
    update_delta(state, W, hyper, rng)
    for k in range(state.K):
        update_rho(k, state, W, hyper, rng, mode=config.rho_update)
    if hyper.mu_mode == "estimated":
        update_mu(state, nc, hyper, rng)
    return state


def _data_digest(counts: np.ndarray) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(counts, dtype=np.int64).tobytes()).hexdigest()


def run_chain(
    counts,
    tree: PartitionTree,
    W: SpatialWeights,
    hyper: Hyperparameters,
    config: ChainConfig,
    rng: np.random.Generator | None = None,
    progress=None,
) -> PosteriorDraws:
    c = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts)
    if c.shape[0] != W.size:
        raise ValueError(f"{c.shape[0]} locations in counts but W is {W.size} x {W.size}")
    if config.retained < 1:
        raise ValueError("configuration retains no post-burn-in draws")
    nc = aggregate_node_counts(c, tree)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    state = init_state(hyper, tree, W, rng, node_counts=nc)

    states = []
    for it in range(1, config.iterations + 1):
        try:
            gibbs_sweep(state, nc, W, hyper, config, rng)
        except NumericalFailure as err:
            raise NumericalFailure(str(err), iteration=it) from err
        if it > config.burn_in and (it - config.burn_in) % config.thinning == 0:
            states.append(state.copy())
        if progress is not None:
            progress(it, state)

    meta = {
        "model": "factor",
        "seed": config.seed,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thinning": config.thinning,
        "tree_hash": tree.digest(),
        "data_hash": _data_digest(c),
        "hyperparameters": hyper.to_dict(),
        "chain": config.to_dict(),
    }
    return PosteriorDraws.from_states(states, meta, store_omega=config.store_omega)


def run_chains(counts, tree, W, hyper, config: ChainConfig, n_chains: int = 1) -> PosteriorDraws:
    """Independent chains seeded from ``SeedSequence(config.seed).spawn``."""
    if n_chains == 1:
        return run_chain(counts, tree, W, hyper, config)
    seqs = np.random.SeedSequence(config.seed).spawn(n_chains)
    parts = []
    for seq in seqs:
        draws = run_chain(counts, tree, W, hyper, config, rng=np.random.default_rng(seq))
        draws.metadata["seed"] = [config.seed, *seq.spawn_key]
        parts.append(draws)
    return PosteriorDraws.concatenate(parts)
