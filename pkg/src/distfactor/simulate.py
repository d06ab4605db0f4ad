"""Synthetic data: the two-component mixture vs. two-factor illustration on
three categories, and draws from the full model."""

from __future__ import annotations

import numpy as np

from .embedding import CountMatrix, embed, invert
from .model import Hyperparameters, ModelState, SpatialWeights, default_mu, sample_prior
from .tree import PartitionTree, default_space, node

D1 = np.array([1 / 3, 1 / 3, 1 / 3])
D2 = np.array([1 / 2, 1 / 3, 1 / 6])
MIXTURE_BETA = (0.25, 0.35)


def illustration_tree() -> PartitionTree:
    """{1} | {2, 3}, then {2} | {3}."""
    return PartitionTree(node(0, node(1, 2)), default_space(3))


def simulate_mixture_illustration(n: int, rng, weights=None) -> np.ndarray:
    """Rows w d1 + (1 - w) d2 with w ~ Beta(0.25, 0.35)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    w = rng.beta(*MIXTURE_BETA, size=n) if weights is None else np.asarray(weights, dtype=float)
    return w[:, None] * D1 + (1.0 - w[:, None]) * D2


def simulate_factor_illustration(n: int, rng, loadings=None) -> np.ndarray:
    """Rows invert(l1 E(d1) + l2 E(d2)) with standard normal loadings."""
    if n < 1:
        raise ValueError("n must be at least 1")
    tree = illustration_tree()
    basis = np.vstack([embed(D1, tree), embed(D2, tree)])
    lam = rng.standard_normal((n, 2)) if loadings is None else np.atleast_2d(loadings)
    return invert(lam @ basis, tree)


def simulate_from_model(
    M: int,
    tree: PartitionTree,
    W: SpatialWeights,
    hyper: Hyperparameters,
    k_true: int,
    count_per_location,
    rng,
) -> tuple[CountMatrix, ModelState]:
    """Prior draw of a K = k_true state, then multinomial counts per location."""
    if W.size != M:
        raise ValueError("W does not match M")
    N = tree.n_internal
    if k_true == 0:
        mu = default_mu(tree) if hyper.mu_mode == "fixed" else hyper.m_mu + np.sqrt(hyper.s2_mu) * rng.standard_normal(N)
        truth = ModelState(
            np.zeros((M, 0)), np.zeros((N, 0)), mu, np.zeros((M, 0)), np.zeros(0), np.zeros(0), np.zeros((M, N))
        )
    else:
        truth = sample_prior(hyper.with_K(k_true), tree, W, rng)
    p = invert(truth.psi(), tree)
    totals = np.broadcast_to(np.asarray(count_per_location, dtype=np.int64), (M,))
    counts = rng.multinomial(totals, p)
    labels = tuple(tree.space.labels)
    return CountMatrix(counts, tuple(f"loc{i + 1}" for i in range(M)), labels), truth
