"""Effective factor count and rotation/sign alignment of posterior loadings."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .embedding import invert
from .model import PosteriorDraws
from .tree import PartitionTree


class DegenerateSpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class EigenSummary:
    per_draw: np.ndarray  # (R, K), descending
    mean: np.ndarray  # (K,)
    cumulative: np.ndarray  # (K,), nan when degenerate
    degenerate: bool


def eigen_summary(draws) -> EigenSummary:
    """Ordered eigenvalues of Lambda Lambda^T per draw, via the K x K Gram."""
    Lam = draws.Lambda if isinstance(draws, PosteriorDraws) else np.asarray(draws)
    if Lam.ndim == 2:
        Lam = Lam[None]
    if Lam.shape[0] < 1:
        raise ValueError("need at least one draw")
    gram = np.einsum("rmk,rml->rkl", Lam, Lam)
    ev = np.linalg.eigvalsh(gram)[:, ::-1]
    ev = np.clip(ev, 0.0, None)
    mean = ev.mean(axis=0)
    total = mean.sum()
    if total <= 0:
        return EigenSummary(ev, mean, np.full(mean.shape, np.nan), True)
    cum = np.cumsum(mean) / total
    cum[-1] = 1.0
    return EigenSummary(ev, mean, cum, False)


def select_k_star(summary: EigenSummary, threshold: float = 0.9) -> int:
    """Smallest k whose cumulative share of the mean spectrum reaches ``threshold``."""
    if summary.degenerate:
        raise DegenerateSpectrumError("all loading eigenvalues are zero")
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return int(np.argmax(summary.cumulative >= threshold)) + 1


def procrustes_rotation(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Q with orthonormal columns minimizing ||A Q - B||_F (A: M x K, B: M x K*)."""
    U, _, Vt = np.linalg.svd(A.T @ B, full_matrices=False)
    return U @ Vt


@dataclass
class AlignedDraws:
    k_star: int
    reference: np.ndarray  # (M, K*)
    rotations: np.ndarray  # (R, K, K*)
    loadings: np.ndarray  # (R, M, K*)
    factors: np.ndarray  # (R, N, K*)
    loss_trace: list = field(default_factory=list)
    converged: bool = True
    warning: str = ""

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]

    def mean_loadings(self) -> np.ndarray:
        return self.loadings.mean(axis=0)


def _alignment_loss(Lam, Q, ref):
    return float(np.mean(np.sum((np.einsum("rmk,rkj->rmj", Lam, Q) - ref) ** 2, axis=(1, 2))))


def _align(Lam, ref, tol, max_iter):
    trace = []
    converged = False
    for _ in range(max_iter):
        Q = np.stack([procrustes_rotation(L, ref) for L in Lam])
        rotated = np.einsum("rmk,rkj->rmj", Lam, Q)
        trace.append(float(np.mean(np.sum((rotated - ref) ** 2, axis=(1, 2)))))
        new_ref = rotated.mean(axis=0)
        change = np.linalg.norm(new_ref - ref) / max(np.linalg.norm(ref), 1e-300)
        ref = new_ref
        if change < tol:
            converged = True
            break
    Q = np.stack([procrustes_rotation(L, ref) for L in Lam])
    trace.append(_alignment_loss(Lam, Q, ref))
    return ref, Q, trace, converged


def orthogonal_align(
    draws,
    k_star: int,
    init_index: int = -1,
    tol: float = 1e-8,
    max_iter: int = 1000,
    sensitivity_restarts: int = 3,
    rng=None,
) -> AlignedDraws:
    """Alternate per-draw Procrustes rotations and reference averaging.

    The reference starts from the first ``k_star`` columns of draw
    ``init_index``.  After convergence, reference columns are sign-flipped so
    their largest-magnitude entry is positive, and flips are carried into the
    rotations.  A warning is attached when restarts from randomly chosen draws
    reach a loss differing by more than 1e-4 (relative).
    """
    if isinstance(draws, PosteriorDraws):
        Lam, Eta = draws.Lambda, draws.Eta
    else:
        Lam, Eta = draws
    Lam = np.asarray(Lam, dtype=float)
    R, M, K = Lam.shape
    if R < 2:
        raise ValueError("alignment needs at least two draws")
    if not 1 <= k_star <= K:
        raise ValueError("k_star must lie in 1..K")

    ref0 = Lam[init_index][:, :k_star].copy()
    ref, Q, trace, converged = _align(Lam, ref0, tol, max_iter)

    # Sign convention: largest-magnitude entry of each reference column positive.
    signs = np.sign(ref[np.argmax(np.abs(ref), axis=0), np.arange(k_star)])
    signs[signs == 0] = 1.0
    ref = ref * signs
    Q = Q * signs[None, None, :]

    msg = ""
    if not converged:
        msg = f"alignment did not converge in {max_iter} iterations"
        warnings.warn(msg, RuntimeWarning)
    if sensitivity_restarts and R > 2:
        rng = rng if rng is not None else np.random.default_rng(0)
        starts = rng.choice(R, size=min(sensitivity_restarts, R), replace=False)
        losses = [_align(Lam, Lam[s][:, :k_star].copy(), tol, max_iter)[2][-1] for s in starts]
        spread = max(abs(l - trace[-1]) for l in losses)
        if spread > 1e-4 * max(abs(trace[-1]), 1.0):
            msg = (msg + "; " if msg else "") + (
                f"alignment loss depends on initialization (spread {spread:.3g})"
            )
            warnings.warn(msg, RuntimeWarning)

    loadings = np.einsum("rmk,rkj->rmj", Lam, Q)
    factors = np.einsum("rnk,rkj->rnj", np.asarray(Eta, dtype=float), Q)
    return AlignedDraws(k_star, ref, Q, loadings, factors, trace, converged, msg)


@dataclass(frozen=True)
class TypicalDistribution:
    scale: float  # c_k
    positive_median: np.ndarray
    positive_interval: np.ndarray  # (2, N+1): 5% and 95%
    negative_median: np.ndarray
    negative_interval: np.ndarray
    positive_draws: np.ndarray
    negative_draws: np.ndarray


def factor_scale(aligned: AlignedDraws, k: int) -> float:
    """c_k: twice the sd across locations of posterior-mean column-k loadings."""
    return 2.0 * float(np.std(aligned.mean_loadings()[:, k], ddof=1))


def typical_distributions(mu, aligned: AlignedDraws, k: int, tree: PartitionTree, scale=None) -> TypicalDistribution:
    """Posterior of invert(mu +/- c_k eta_k) per draw, with median and 90% band.

    ``mu`` is (N,) or per-draw (R, N).
    """
    c = factor_scale(aligned, k) if scale is None else float(scale)
    eta_k = aligned.factors[:, :, k]
    mu = np.broadcast_to(np.asarray(mu, dtype=float), eta_k.shape)
    pos = invert(mu + c * eta_k, tree)
    neg = invert(mu - c * eta_k, tree)
    return TypicalDistribution(
        c,
        np.median(pos, axis=0),
        np.quantile(pos, [0.05, 0.95], axis=0),
        np.median(neg, axis=0),
        np.quantile(neg, [0.05, 0.95], axis=0),
        pos,
        neg,
    )


def aligned_psi(draws: PosteriorDraws, aligned: AlignedDraws) -> np.ndarray:
    """(R, M, N) logits using the rank-K* aligned loadings and factors."""
    return draws.Mu[:, None, :] + np.einsum("rmk,rnk->rmn", aligned.loadings, aligned.factors)
