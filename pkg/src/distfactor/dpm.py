"""Dirichlet-process mixture of multinomials, sampled by collapsed Gibbs.

Cluster probability vectors are integrated out against the symmetric
Dirichlet(eta) base measure, so reassignment uses Dirichlet-multinomial
predictives.  The concentration alpha ~ Gamma(a, b) (shape-rate) is updated
with the Escobar-West auxiliary-variable step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .embedding import CountMatrix


@dataclass
class DpmConfig:
    iterations: int = 2000
    burn_in: int = 1000
    thinning: int = 2
    seed: int = 0
    eta: float = 1.0
    a: float = 2.0
    b: float = 1.0
    alpha_init: float = 1.0
    update_alpha: bool = True

    def __post_init__(self):
        if self.burn_in >= self.iterations or self.thinning < 1:
            raise ValueError("need burn_in < iterations and thinning >= 1")
        for name in ("eta", "a", "b", "alpha_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class DpmState:
    """Assignments plus per-cluster sufficient statistics.

    ``labels`` map locations to cluster ids; ``stats[c]`` is the summed count
    row and ``sizes[c]`` the member count of cluster ``c``.  Ids are kept
    compact (0..k-1) by swapping the last cluster into any emptied slot.
    """

    labels: np.ndarray
    stats: np.ndarray
    sizes: np.ndarray
    alpha: float
    eta: float
    a: float = 2.0
    b: float = 1.0

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.size)

    @classmethod
    def single_cluster(cls, counts, alpha=1.0, eta=1.0, a=2.0, b=1.0) -> "DpmState":
        counts = np.asarray(counts, dtype=np.int64)
        M = counts.shape[0]
        return cls(np.zeros(M, dtype=np.int64), counts.sum(axis=0, keepdims=True), np.array([M]), alpha, eta, a, b)

    @classmethod
    def from_labels(cls, counts, labels, alpha=1.0, eta=1.0, a=2.0, b=1.0) -> "DpmState":
        counts = np.asarray(counts, dtype=np.int64)
        _, labels = np.unique(labels, return_inverse=True)
        k = labels.max() + 1
        stats = np.zeros((k, counts.shape[1]), dtype=np.int64)
        np.add.at(stats, labels, counts)
        return cls(labels.astype(np.int64), stats, np.bincount(labels, minlength=k), alpha, eta, a, b)

    def check(self, counts) -> None:
        counts = np.asarray(counts)
        ref = DpmState.from_labels(counts, self.labels)
        order = np.unique(self.labels)
        if order.size != self.n_clusters or not np.array_equal(order, np.arange(self.n_clusters)):
            raise AssertionError("cluster ids are not compact")
        if not (np.array_equal(ref.stats, self.stats) and np.array_equal(ref.sizes, self.sizes)):
            raise AssertionError("cluster statistics out of sync with assignments")


def log_dm_predictive(row, stats, eta) -> np.ndarray:
    """log p(row | cluster stats) under Dirichlet-multinomial, for each
    cluster row of ``stats``; the multinomial coefficient is omitted."""
    row = np.asarray(row, dtype=float)
    stats = np.atleast_2d(np.asarray(stats, dtype=float))
    C = row.shape[-1]
    tot = stats.sum(axis=1)
    return (
        gammaln(C * eta + tot)
        - gammaln(C * eta + tot + row.sum())
        + np.sum(gammaln(eta + stats + row) - gammaln(eta + stats), axis=1)
    )


def _remove(state: DpmState, i: int, row) -> None:
    c = state.labels[i]
    state.stats[c] -= row
    state.sizes[c] -= 1
    if state.sizes[c] == 0:
        last = state.sizes.size - 1
        if c != last:
            state.stats[c] = state.stats[last]
            state.sizes[c] = state.sizes[last]
            state.labels[state.labels == last] = c
        state.stats = state.stats[:last]
        state.sizes = state.sizes[:last]
    state.labels[i] = -1


def _add(state: DpmState, i: int, row, c: int) -> None:
    if c == state.sizes.size:
        state.stats = np.vstack([state.stats, row[None, :]])
        state.sizes = np.append(state.sizes, 1)
    else:
        state.stats[c] += row
        state.sizes[c] += 1
    state.labels[i] = c


def update_assignments(state: DpmState, counts, rng) -> np.ndarray:
    """One collapsed Gibbs scan over locations in index order."""
    counts = np.asarray(counts, dtype=np.int64)
    for i in range(counts.shape[0]):
        row = counts[i]
        _remove(state, i, row)
        logw = np.empty(state.sizes.size + 1)
        if state.sizes.size:
            logw[:-1] = np.log(state.sizes) + log_dm_predictive(row, state.stats, state.eta)
        logw[-1] = np.log(state.alpha) + log_dm_predictive(row, np.zeros((1, row.size)), state.eta)[0]
        w = np.exp(logw - logw.max())
        c = int(np.searchsorted(np.cumsum(w), rng.uniform() * w.sum(), side="right"))
        _add(state, i, row, min(c, state.sizes.size))
    return state.labels


def escobar_west_step(alpha, k, M, a, b, rng):
    """alpha | k via the auxiliary x ~ Beta(alpha + 1, M); vectorizes over alpha."""
    alpha = np.asarray(alpha, dtype=float)
    x = rng.beta(alpha + 1.0, M)
    rate = b - np.log(x)
    odds = (a + k - 1.0) / (M * rate)
    first = rng.uniform(size=alpha.shape) < odds / (1.0 + odds)
    shape = np.where(first, a + k, a + k - 1.0)
    out = np.asarray(rng.gamma(shape, 1.0 / rate))
    return out if out.ndim else float(out)


def update_alpha(state: DpmState, rng) -> float:
    state.alpha = float(escobar_west_step(state.alpha, state.n_clusters, state.labels.size, state.a, state.b, rng))
    return state.alpha


def log_alpha_posterior(alpha, k, M, a, b) -> np.ndarray:
    """Unnormalized log p(alpha | k, M): Gamma(a, b) prior times
    alpha^k Gamma(alpha) / Gamma(alpha + M)."""
    alpha = np.asarray(alpha, dtype=float)
    return (a - 1.0) * np.log(alpha) - b * alpha + k * np.log(alpha) + gammaln(alpha) - gammaln(alpha + M)


@dataclass
class DpmDraws:
    labels: np.ndarray  # (R, M)
    alpha: np.ndarray  # (R,)
    eta: float
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_clusters(self) -> np.ndarray:
        return np.array([np.unique(l).size for l in self.labels])


def run_dpm(counts, config: DpmConfig, rng=None) -> DpmDraws:
    c = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts, dtype=np.int64)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    state = DpmState.single_cluster(c, config.alpha_init, config.eta, config.a, config.b)
    labels, alphas = [], []
    for it in range(1, config.iterations + 1):
        update_assignments(state, c, rng)
        if config.update_alpha:
            update_alpha(state, rng)
        if it > config.burn_in and (it - config.burn_in) % config.thinning == 0:
            labels.append(state.labels.copy())
            alphas.append(state.alpha)
    meta = {
        "model": "dpm",
        "seed": config.seed,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thinning": config.thinning,
        "eta": config.eta,
        "a": config.a,
        "b": config.b,
    }
    return DpmDraws(np.array(labels), np.array(alphas), config.eta, meta)


@dataclass(frozen=True)
class ClusterCountSummary:
    mean: float
    lower: float
    upper: float


def cluster_count_summary(draws) -> ClusterCountSummary:
    k = draws.n_clusters if isinstance(draws, DpmDraws) else np.asarray(draws)
    if k.size < 1:
        raise ValueError("need at least one draw")
    lo, hi = np.quantile(k, [0.025, 0.975])
    return ClusterCountSummary(float(np.mean(k)), float(lo), float(hi))


def dpm_predictive(draws: DpmDraws, counts, rng, replications: int = 1):
    """Replicates per draw: each location's row ~ DirMult(n_i, eta + cluster stats),
    where the cluster statistics include the location itself."""
    counts = np.asarray(counts.counts if isinstance(counts, CountMatrix) else counts, dtype=np.int64)
    totals = counts.sum(axis=1)
    for labels in draws.labels:
        state = DpmState.from_labels(counts, labels)
        conc = draws.eta + state.stats[state.labels]
        for _ in range(replications):
            p = rng.gamma(conc)
            s = p.sum(axis=1, keepdims=True)
            p = p / s
            yield rng.multinomial(totals, p)
