"""Model state, priors and spatial weights for the tree-embedded factor model.

Per internal node A the embedded logits follow

    psi(A) = mu(A) * 1_M + Lambda @ eta(A)

with a SAR + multiplicative-gamma-process prior on each loading column:
(I - rho_k W) Lambda[:, k] ~ N(0, (tau_k Phi_k)^-1), tau_k = prod_{l<=k} delta_l.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import truncnorm

from .embedding import NodeCounts, invert
from .polya_gamma import pg_mean
from .tree import PartitionTree


@dataclass(frozen=True)
class Hyperparameters:
    K: int = 10
    a1: float = 2.1
    a2: float = 3.1
    nu: float = 3.0
    m_rho: float = 0.0
    s2_rho: float = 1.0
    mu_mode: str = "fixed"
    m_mu: float = 0.0
    s2_mu: float = 1.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        for name in ("a1", "a2", "nu", "s2_rho", "s2_mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mu_mode not in ("fixed", "estimated"):
            raise ValueError("mu_mode must be 'fixed' or 'estimated'")

    def with_K(self, K: int) -> "Hyperparameters":
        return replace(self, K=K)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SpatialWeights:
    """Row-normalized adjacency: zero diagonal, rows summing to 1 or all zero."""

    W: np.ndarray
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("W must be square")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValueError("W must be finite and nonnegative")
        if np.any(np.diag(W) != 0):
            raise ValueError("W must have a zero diagonal")
        rows = W.sum(axis=1)
        if not np.all((np.abs(rows - 1.0) < 1e-10) | (rows == 0)):
            raise ValueError("each row of W must sum to 1 or be entirely zero")
        if not np.array_equal(W > 0, (W > 0).T):
            raise ValueError("the adjacency pattern of W must be symmetric")
        W.flags.writeable = False
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "eigenvalues", np.linalg.eigvals(W))

    @classmethod
    def from_adjacency(cls, A) -> "SpatialWeights":
        A = np.asarray(A, dtype=float)
        A = ((A + A.T) > 0).astype(float)
        np.fill_diagonal(A, 0.0)
        rows = A.sum(axis=1, keepdims=True)
        return cls(np.divide(A, rows, out=np.zeros_like(A), where=rows > 0))

    @classmethod
    def from_edges(cls, edges, n: int) -> "SpatialWeights":
        A = np.zeros((n, n))
        for i, j in edges:
            if i != j:
                A[i, j] = A[j, i] = 1.0
        return cls.from_adjacency(A)

    @classmethod
    def isolated(cls, n: int) -> "SpatialWeights":
        return cls(np.zeros((n, n)))

    @property
    def size(self) -> int:
        return self.W.shape[0]

    def log_abs_det(self, rho) -> np.ndarray:
        """log |det(I - rho W)| from the eigenvalues of W."""
        rho = np.asarray(rho, dtype=float)
        return np.sum(np.log(np.abs(1.0 - rho[..., None] * self.eigenvalues)), axis=-1)


def lattice_weights(rows: int, cols: int) -> SpatialWeights:
    """Rook adjacency on a rows x cols grid, locations in row-major order."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return SpatialWeights.from_edges(edges, rows * cols)


@dataclass
class ModelState:
    """One Gibbs configuration.

    Shapes: Lambda (M, K), Eta (N, K) with one row per internal node in
    canonical order, Mu (N,), Phi (M, K), Delta (K,), Rho (K,), Omega (M, N).
    """

    Lambda: np.ndarray
    Eta: np.ndarray
    Mu: np.ndarray
    Phi: np.ndarray
    Delta: np.ndarray
    Rho: np.ndarray
    Omega: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return np.cumprod(self.Delta)

    @property
    def K(self) -> int:
        return self.Lambda.shape[1]

    def psi(self) -> np.ndarray:
        """(M, N) node logits per location."""
        return self.Mu[None, :] + self.Lambda @ self.Eta.T

    def copy(self) -> "ModelState":
        return ModelState(**{k: np.array(v, copy=True) for k, v in vars(self).items()})

    def check(self, node_counts: NodeCounts | None = None) -> None:
        if np.any(self.Phi <= 0) or np.any(self.Delta <= 0):
            raise AssertionError("Phi and Delta must be positive")
        if np.any(np.abs(self.Rho) >= 1):
            raise AssertionError("Rho must lie strictly inside (-1, 1)")
        if np.any(self.Omega < 0):
            raise AssertionError("Omega must be nonnegative")
        if node_counts is not None and np.any(self.Omega[node_counts.total == 0] != 0):
            raise AssertionError("Omega must vanish where node counts are zero")


def default_mu(tree: PartitionTree) -> np.ndarray:
    """log(|A_l| / |A_r|): the logits of the uniform distribution."""
    sizes = tree.child_sizes()
    return np.log(sizes[:, 0] / sizes[:, 1])


def sar_operator(rho: float, W: SpatialWeights) -> np.ndarray:
    return np.eye(W.size) - rho * W.W


def lambda_prior_precision(k: int, state: ModelState, W: SpatialWeights) -> np.ndarray:
    """tau_k (I - rho_k W)^T Phi_k (I - rho_k W) for loading column k."""
    B = sar_operator(state.Rho[k], W)
    P = state.tau[k] * (B.T * state.Phi[:, k]) @ B
    if not np.all(np.isfinite(P)):
        raise FloatingPointError(f"non-finite prior precision for column {k}")
    return P


def sample_truncated_normal(mean, var, rng, lower=-1.0, upper=1.0):
    sd = np.sqrt(var)
    a, b = (lower - mean) / sd, (upper - mean) / sd
    x = truncnorm.rvs(a, b, loc=mean, scale=sd, random_state=rng)
    # guard against the endpoint under extreme truncation
    return np.clip(x, np.nextafter(lower, 0), np.nextafter(upper, 0))


def sample_sar_column(tau, phi, rho, W: SpatialWeights, rng) -> np.ndarray:
    """Lambda_k = (I - rho W)^-1 e with e ~ N(0, (tau Phi)^-1)."""
    e = rng.standard_normal(W.size) / np.sqrt(tau * phi)
    return np.linalg.solve(sar_operator(rho, W), e)


def sample_prior(hyper: Hyperparameters, tree: PartitionTree, W: SpatialWeights, rng) -> ModelState:
    """Draw every parameter from its prior (Omega left at zero)."""
    M, N, K = W.size, tree.n_internal, hyper.K
    Phi = rng.gamma(hyper.nu / 2.0, 2.0 / hyper.nu, size=(M, K))
    Delta = np.concatenate([rng.gamma(hyper.a1, 1.0, size=1), rng.gamma(hyper.a2, 1.0, size=K - 1)])
    tau = np.cumprod(Delta)
    Rho = np.array([sample_truncated_normal(hyper.m_rho, hyper.s2_rho, rng) for _ in range(K)])
    Lambda = np.column_stack([sample_sar_column(tau[k], Phi[:, k], Rho[k], W, rng) for k in range(K)])
    Eta = rng.standard_normal((N, K))
    if hyper.mu_mode == "fixed":
        Mu = default_mu(tree)
    else:
        Mu = hyper.m_mu + np.sqrt(hyper.s2_mu) * rng.standard_normal(N)
    return ModelState(Lambda, Eta, Mu, Phi, Delta, Rho, np.zeros((M, N)))


def init_state(
    hyper: Hyperparameters,
    tree: PartitionTree,
    W: SpatialWeights,
    rng,
    node_counts: NodeCounts | None = None,
) -> ModelState:
    """Prior draw for every parameter, with Omega set to its PG mean.

    The PG mean is a deterministic warm start; it is zero wherever the node
    count is zero.
    """
    state = sample_prior(hyper, tree, W, rng)
    if node_counts is not None:
        state.Omega = pg_mean(node_counts.total, state.psi())
    return state


def location_distributions(state: ModelState, tree: PartitionTree) -> np.ndarray:
    """(M, N+1) category probabilities implied by a state."""
    return invert(state.psi(), tree)


@dataclass
class PosteriorDraws:
    """Thinned chain output; leading axis indexes retained draws."""

    Lambda: np.ndarray
    Eta: np.ndarray
    Mu: np.ndarray
    Phi: np.ndarray
    Delta: np.ndarray
    Rho: np.ndarray
    Omega: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    PARAMETERS = ("Lambda", "Eta", "Mu", "Phi", "Delta", "Rho", "Omega")

    def __len__(self) -> int:
        return self.Lambda.shape[0]

    @property
    def tau(self) -> np.ndarray:
        return np.cumprod(self.Delta, axis=1)

    def psi(self) -> np.ndarray:
        """(R, M, N) node logits per draw."""
        return self.Mu[:, None, :] + np.einsum("rmk,rnk->rmn", self.Lambda, self.Eta)

    def state(self, r: int) -> ModelState:
        omega = self.Omega[r] if self.Omega is not None else np.zeros((self.Lambda.shape[1], self.Eta.shape[1]))
        return ModelState(
            self.Lambda[r], self.Eta[r], self.Mu[r], self.Phi[r], self.Delta[r], self.Rho[r], omega
        )

    @classmethod
    def from_states(cls, states, metadata=None, store_omega=False) -> "PosteriorDraws":
        def stack(name):
            return np.stack([getattr(s, name) for s in states])

        return cls(
            stack("Lambda"), stack("Eta"), stack("Mu"), stack("Phi"), stack("Delta"), stack("Rho"),
            stack("Omega") if store_omega else None,
            dict(metadata or {}),
        )

    @classmethod
    def concatenate(cls, parts) -> "PosteriorDraws":
        parts = list(parts)
        arrays = {}
        for name in cls.PARAMETERS:
            vals = [getattr(p, name) for p in parts]
            arrays[name] = None if any(v is None for v in vals) else np.concatenate(vals)
        meta = dict(parts[0].metadata)
        meta["chains"] = len(parts)
        meta["chain_seeds"] = [p.metadata.get("seed") for p in parts]
        return cls(**arrays, metadata=meta)
