"""Posterior predictive replication and the posterior predictive loss (PPL).

    PPL = (1/M) sum_ij V_ij + (1/(M+1)) sum_ij (y_ij - E_ij)^2

with E_ij, V_ij the predictive mean and variance of cell (i, j).  The weights
1/M and 1/(M+1) are applied exactly as written; they differ from the usual
unweighted Gelfand-Ghosh criterion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .embedding import invert
from .model import PosteriorDraws
from .tree import PartitionTree


@dataclass(frozen=True)
class PredictiveSummary:
    mean: np.ndarray  # E_ij
    variance: np.ndarray  # V_ij
    bias_by_category: np.ndarray  # (1/M) sum_i (y_ij - E_ij)
    variance_by_category: np.ndarray  # (1/M) sum_i V_ij
    ppl: float
    replications: int

    @property
    def variance_term(self) -> float:
        return float(self.variance.sum() / self.variance.shape[0])

    @property
    def bias_term(self) -> float:
        return self.ppl - self.variance_term


def ppl_from_moments(observed, mean, variance) -> float:
    y = np.asarray(observed, dtype=float)
    M = y.shape[0]
    return float(np.sum(variance) / M + np.sum((y - mean) ** 2) / (M + 1))


def multinomial_rows(totals, probs, rng) -> np.ndarray:
    totals = np.asarray(totals, dtype=np.int64)
    return rng.multinomial(totals, probs)


def posterior_predictive(
    draws,
    tree: PartitionTree,
    totals,
    rng,
    replications: int = 1,
    psi=None,
) -> Iterator[np.ndarray]:
    """Yield replicated (M, N+1) count matrices, ``replications`` per draw.

    ``psi`` overrides the per-draw logits (e.g. rank-K* aligned logits).
    """
    psi = draws.psi() if psi is None else psi
    for r in range(psi.shape[0]):
        p = invert(psi[r], tree)
        for _ in range(replications):
            yield multinomial_rows(totals, p, rng)


def ppl(stream: Iterable[np.ndarray], observed) -> PredictiveSummary:
    """Accumulate predictive moments over a replicate stream and score them.

    Moments use Welford updates; variance has denominator (count - 1).
    """
    y = np.asarray(observed, dtype=float)
    n = 0
    mean = np.zeros_like(y)
    m2 = np.zeros_like(y)
    for rep in stream:
        n += 1
        delta = rep - mean
        mean += delta / n
        m2 += delta * (rep - mean)
    if n < 2:
        raise ValueError("need at least two predictive replications to estimate variances")
    var = m2 / (n - 1)
    M = y.shape[0]
    return PredictiveSummary(
        mean=mean,
        variance=var,
        bias_by_category=(y - mean).sum(axis=0) / M,
        variance_by_category=var.sum(axis=0) / M,
        ppl=ppl_from_moments(y, mean, var),
        replications=n,
    )


def evaluate_draws(draws: PosteriorDraws, observed, tree, rng, replications: int = 1, psi=None) -> PredictiveSummary:
    observed = np.asarray(observed)
    stream = posterior_predictive(draws, tree, observed.sum(axis=1), rng, replications, psi=psi)
    return ppl(stream, observed)
