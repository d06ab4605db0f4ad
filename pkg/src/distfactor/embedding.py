"""Logistic-tree embedding of positive distributions and node-count aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import PartitionTree

SUM_TOL = 1e-12


def log_sigmoid(x):
    """log(1 / (1 + exp(-x))) without overflow."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.exp(log_sigmoid(x))


def check_distribution(p, tol: float = SUM_TOL) -> np.ndarray:
    """Validate strictly positive masses summing to one (last axis).

    Rows within ``tol`` of unit sum are renormalized; anything further off
    is rejected rather than silently fixed.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("distribution has non-finite masses")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("every mass must lie strictly inside (0, 1)")
    s = p.sum(axis=-1, keepdims=True)
    if np.any(np.abs(s - 1.0) > tol):
        raise ValueError(f"masses must sum to 1 within {tol}")
    return p / s


def embed(p, tree: PartitionTree) -> np.ndarray:
    """Map distributions (..., N+1) to node logits (..., N) in canonical order."""
    p = check_distribution(p)
    if p.shape[-1] != tree.n_categories:
        raise ValueError(f"expected {tree.n_categories} masses, got {p.shape[-1]}")
    left = p @ tree.left_incidence.T
    right = p @ tree.right_incidence.T
    return np.log(left) - np.log(right)


def invert(psi, tree: PartitionTree) -> np.ndarray:
    """Inverse embedding by propagating mass from the root.

    Each internal node sends ``sigmoid(psi)`` of its mass to the left child
    and the remainder to the right; in log space that is a sum of log-sigmoids
    over the path from the root to each leaf.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape[-1] != tree.n_internal:
        raise ValueError(f"expected {tree.n_internal} logits, got {psi.shape[-1]}")
    if not np.all(np.isfinite(psi)):
        raise ValueError("logits must be finite")
    log_mass = log_sigmoid(psi) @ tree.left_incidence + log_sigmoid(-psi) @ tree.right_incidence
    return np.exp(log_mass)


@dataclass(frozen=True)
class CountMatrix:
    """Observed counts: one row per location, columns in category-space order."""

    counts: np.ndarray
    locations: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValueError("counts must be a 2-D matrix")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise ValueError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if counts.shape != (len(self.locations), len(self.labels)):
            raise ValueError("counts shape does not match location ids and header")
        if len(set(self.locations)) != len(self.locations):
            raise ValueError("location identifiers must be unique")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "locations", tuple(str(x) for x in self.locations))
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n_locations(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class NodeCounts:
    """Per-location, per-node counts: ``total`` is n_i(A), ``left`` n_i(A_l)."""

    total: np.ndarray
    left: np.ndarray

    @property
    def right(self) -> np.ndarray:
        return self.total - self.left

    @property
    def kappa(self) -> np.ndarray:
        return self.left - self.total / 2.0


_INT_LIMIT = np.iinfo(np.int64).max


def aggregate_node_counts(counts, tree: PartitionTree) -> NodeCounts:
    """Bottom-up subset sums of category counts for every internal node."""
    c = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts)
    c = np.atleast_2d(c)
    if c.shape[1] != tree.n_categories:
        raise ValueError(f"expected {tree.n_categories} count columns, got {c.shape[1]}")
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    # Python ints cannot overflow; check before the int64 matrix product.
    if int(np.max(c, initial=0)) * c.shape[1] >= _INT_LIMIT:
        raise OverflowError("row totals would overflow 64-bit integers")
    c = c.astype(np.int64)
    left_inc = tree.left_incidence.astype(np.int64)
    node_inc = left_inc + tree.right_incidence.astype(np.int64)
    return NodeCounts(total=c @ node_inc.T, left=c @ left_inc.T)
