"""Greedy maximum-variance balance trees (principal balances).

At each node every unordered bipartition of the node's categories is scored
by the sample variance, across locations, of its isometric log-ratio balance;
the best split is kept and both halves are split again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import CountMatrix, check_distribution
from .tree import CategorySpace, Node, PartitionTree

SCORE_RTOL = 1e-12


@dataclass(frozen=True)
class TreeBuilderOptions:
    pseudo_mass: float = 0.5
    exhaustive_limit: int = 20
    tie_break: str = "lexicographic-left"

    def __post_init__(self):
        if not self.pseudo_mass > 0:
            raise ValueError("pseudo_mass must be positive")
        if self.exhaustive_limit < 2:
            raise ValueError("exhaustive_limit must be at least 2")
        if self.tie_break != "lexicographic-left":
            raise ValueError(f"unknown tie_break rule {self.tie_break!r}")


@dataclass(frozen=True)
class SplitCandidate:
    left: tuple[int, ...]
    right: tuple[int, ...]
    score: float = float("nan")

    def __post_init__(self):
        l, r = set(self.left), set(self.right)
        if not l or not r or l & r:
            raise ValueError("split halves must be nonempty and disjoint")

    @property
    def parent(self) -> tuple[int, ...]:
        return tuple(sorted(self.left + self.right))


def balance(p, split: SplitCandidate):
    """ilr balance sqrt(r s / (r + s)) * log(g(left) / g(right)).

    ``p`` may be a single distribution or a stack of them (last axis);
    only the masses named by the split are used, so the full vector need not
    be normalized over the split's parent.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("balances need strictly positive masses")
    lp = np.log(p)
    r, s = len(split.left), len(split.right)
    diff = lp[..., list(split.left)].mean(axis=-1) - lp[..., list(split.right)].mean(axis=-1)
    return np.sqrt(r * s / (r + s)) * diff


def split_score(distributions, split: SplitCandidate) -> float:
    """Sample variance (ddof=1) of the split's balance across distributions."""
    b = balance(np.atleast_2d(distributions), split)
    if b.shape[0] < 2:
        raise ValueError("need at least two distributions")
    return float(np.var(b, ddof=1))


def smooth_counts(counts, pseudo_mass: float = 0.5) -> np.ndarray:
    if not pseudo_mass > 0:
        raise ValueError("pseudo_mass must be positive")
    c = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts)
    c = np.atleast_2d(c).astype(float) + pseudo_mass
    return c / c.sum(axis=1, keepdims=True)


def _candidate_masks(size: int) -> np.ndarray:
    """Boolean (n_candidates, size) masks for the left half of every
    unordered bipartition; element 0 is always on the left."""
    n_rest = size - 1
    codes = np.arange(2**n_rest - 1, dtype=np.int64)  # excludes "everything left"
    bits = ((codes[:, None] >> np.arange(n_rest)) & 1).astype(bool)
    return np.hstack([np.ones((codes.size, 1), dtype=bool), bits])


def score_all_splits(log_p: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Scores for every bipartition of the columns of ``log_p`` (M, |A|)."""
    M, size = log_p.shape
    masks = _candidate_masks(size)
    scores = np.empty(masks.shape[0])
    centered = log_p - log_p.mean(axis=0)
    for start in range(0, masks.shape[0], chunk):
        m = masks[start:start + chunk].astype(float)
        r = m.sum(axis=1)
        s = size - r
        diff = centered @ (m / r[:, None]).T - centered @ ((1.0 - m) / s[:, None]).T
        scores[start:start + chunk] = (r * s / (r + s)) * (diff**2).sum(axis=0) / (M - 1)
    return masks, scores


def best_split(distributions, subset) -> SplitCandidate:
    subset = sorted(subset)
    log_p = np.log(np.asarray(distributions, dtype=float)[:, subset])
    masks, scores = score_all_splits(log_p)
    top = scores.max()
    tied = np.flatnonzero(scores >= top - SCORE_RTOL * max(abs(top), 1e-300))
    options = []
    for t in tied:
        left = tuple(subset[j] for j in np.flatnonzero(masks[t]))
        right = tuple(subset[j] for j in np.flatnonzero(~masks[t]))
        options.append((left, right, scores[t]))
    left, right, score = min(options, key=lambda o: o[0])
    return SplitCandidate(left, right, float(score))


def build_mv_tree(distributions, space: CategorySpace, options: TreeBuilderOptions | None = None) -> PartitionTree:
    options = options or TreeBuilderOptions()
    if space.size > options.exhaustive_limit:
        raise ValueError(
            f"{space.size} categories exceed exhaustive_limit={options.exhaustive_limit}; "
            "exhaustive enumeration costs 2^|A| splits per node"
        )
    p = check_distribution(np.atleast_2d(distributions), tol=1e-9)
    if p.shape[1] != space.size:
        raise ValueError("distribution width does not match the category space")
    if p.shape[0] < 2:
        raise ValueError("need at least two distributions")

    def grow(subset: tuple[int, ...]) -> Node:
        if len(subset) == 1:
            return Node(subset)
        split = best_split(p, subset)
        left, right = grow(split.left), grow(split.right)
        return Node(left.categories + right.categories, left, right)

    return PartitionTree(grow(tuple(range(space.size))), space)


def build_tree_from_counts(counts, space: CategorySpace, options: TreeBuilderOptions | None = None) -> PartitionTree:
    options = options or TreeBuilderOptions()
    return build_mv_tree(smooth_counts(counts, options.pseudo_mass), space, options)
