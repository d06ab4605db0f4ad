"""Pólya–Gamma PG(b, c) variates for integer b.

Exact PG(1, c) draws use Devroye's alternating-series rejection sampler for
the Jacobi distribution J*(1, c/2), with PG(1, c) = J*(1, c/2) / 4.  Integer
shapes up to ``exact_max`` are sums of exact unit-shape draws; beyond that a
moment-matched normal, truncated at zero, is used.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_ndtr

TRUNC = 0.64
DEFAULT_EXACT_MAX = 30
_MAX_SERIES_TERMS = 200


def pg_mean(b, c):
    """E[PG(b, c)] = b / (2c) tanh(c / 2), with limit b / 4 at c = 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-4
    cs = np.where(small, 1.0, c)
    exact = np.tanh(cs / 2.0) / (2.0 * cs)
    series = 0.25 - c**2 / 48.0
    out = b * np.where(small, series, exact)
    return out if out.ndim else float(out)


def pg_var(b, c):
    """Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2)); limit b / 24."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-2
    cs = np.where(small, 1.0, c)
    with np.errstate(over="ignore"):
        # sinh(c) / cosh^2(c/2) = 2 tanh(c/2), and c / cosh^2(c/2) underflows gracefully.
        exact = (2.0 * np.tanh(cs / 2.0) - cs / np.cosh(cs / 2.0) ** 2) / (4.0 * cs**3)
    series = 1.0 / 24.0 - c**2 / 240.0
    out = b * np.where(small, series, exact)
    return out if out.ndim else float(out)


def _a_coef(n, x):
    """n-th term of the J*(1, 0) density series, piecewise around TRUNC."""
    k = n + 0.5
    with np.errstate(over="ignore", divide="ignore"):
        left = np.pi * k * (2.0 / (np.pi * x)) ** 1.5 * np.exp(-2.0 * k * k / x)
        right = np.pi * k * np.exp(-k * k * np.pi**2 * x / 2.0)
    return np.where(x > TRUNC, right, left)


def _truncated_inverse_gaussian(z, rng):
    """Inverse-Gaussian(mean 1/z, shape 1) draws restricted to (0, TRUNC)."""
    out = np.empty(z.size)
    pending = np.arange(z.size)
    while pending.size:
        zz = z[pending]
        mu = np.full(zz.shape, np.inf)
        np.divide(1.0, zz, out=mu, where=zz > 0)
        x = np.empty(zz.size)
        # Large mean: scaled inverse chi-square proposal, accept w.p. exp(-z^2 x / 2).
        big = mu > TRUNC
        if big.any():
            nb = int(big.sum())
            xb = np.empty(nb)
            todo = np.arange(nb)
            while todo.size:
                e1 = rng.exponential(size=todo.size)
                e2 = rng.exponential(size=todo.size)
                ok = e1 * e1 <= 2.0 * e2 / TRUNC
                idx = todo[ok]
                xb[idx] = TRUNC / (1.0 + TRUNC * e1[ok]) ** 2
                todo = todo[~ok]
            alpha = np.exp(-0.5 * zz[big] ** 2 * xb)
            xb[rng.uniform(size=nb) > alpha] = np.inf  # rejected, retry below
            x[big] = xb
        small = ~big
        if small.any():
            m = mu[small]
            y = rng.standard_normal(m.size) ** 2
            xs = m + 0.5 * m * m * y - 0.5 * m * np.sqrt(4.0 * m * y + (m * y) ** 2)
            flip = rng.uniform(size=m.size) > m / (m + xs)
            xs[flip] = m[flip] ** 2 / xs[flip]
            x[small] = xs
        ok = x < TRUNC
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def _proposal_left_prob(z):
    """P(proposal from the left piece) for Devroye's two-piece envelope."""
    fz = np.pi**2 / 8.0 + z * z / 2.0
    rt = np.sqrt(1.0 / TRUNC)
    b = rt * (TRUNC * z - 1.0)
    a = -rt * (TRUNC * z + 1.0)
    x0 = np.log(fz) + fz * TRUNC
    xb = x0 - z + log_ndtr(b)
    xa = x0 + z + log_ndtr(a)
    # q/p can overflow for large z; work with its logarithm
    log_q_over_p = np.log(4.0 / np.pi) + np.logaddexp(xb, xa)
    return expit(log_q_over_p)


def _jacobi_star(z, rng):
    """J*(1, z) draws for an array of z >= 0."""
    # at large tilts density and envelope terms underflow to zero, harmlessly
    with np.errstate(under="ignore"):
        return _jacobi_star_draws(np.asarray(z, dtype=float), rng)


def _jacobi_star_draws(z, rng):
    out = np.empty(z.size)
    pending = np.arange(z.size)
    while pending.size:
        zz = z[pending]
        fz = np.pi**2 / 8.0 + zz * zz / 2.0
        from_left = rng.uniform(size=zz.size) < _proposal_left_prob(zz)
        x = np.empty(zz.size)
        if from_left.any():
            x[from_left] = _truncated_inverse_gaussian(zz[from_left], rng)
        right = ~from_left
        x[right] = TRUNC + rng.exponential(size=int(right.sum())) / fz[right]

        s = _a_coef(0, x)
        y = rng.uniform(size=x.size) * s
        decided = np.zeros(x.size, dtype=bool)
        accepted = np.zeros(x.size, dtype=bool)
        for n in range(1, _MAX_SERIES_TERMS):
            live = ~decided
            if not live.any():
                break
            a = _a_coef(n, x[live])
            if n % 2:
                s[live] -= a
                hit = y[live] <= s[live]
                idx = np.flatnonzero(live)[hit]
                accepted[idx] = True
                decided[idx] = True
            else:
                s[live] += a
                miss = y[live] > s[live]
                decided[np.flatnonzero(live)[miss]] = True
        out[pending[accepted]] = x[accepted]
        pending = pending[~accepted]
    return out


def sample_pg1(c, rng: np.random.Generator) -> np.ndarray:
    """Exact PG(1, c) draws, one per entry of ``c``."""
    c = np.asarray(c, dtype=float)
    return 0.25 * _jacobi_star(np.abs(c).ravel() / 2.0, rng).reshape(c.shape)


def sample_pg(b, c, rng: np.random.Generator, exact_max: int = DEFAULT_EXACT_MAX):
    """PG(b, c) draws, elementwise over broadcast ``b`` and ``c``.

    ``b`` must hold nonnegative integers.  PG(0, c) is exactly 0.
    """
    b_arr, c_arr = np.broadcast_arrays(np.asarray(b), np.asarray(c, dtype=float))
    if np.any(b_arr < 0) or np.any(b_arr != np.round(b_arr)):
        raise ValueError("PG shape must be a nonnegative integer")
    if not np.all(np.isfinite(c_arr)):
        raise ValueError("PG tilt must be finite")
    b_flat = b_arr.astype(np.int64).ravel()
    c_flat = c_arr.ravel()
    out = np.zeros(b_flat.size)

    exact = (b_flat > 0) & (b_flat <= exact_max)
    if exact.any():
        reps = b_flat[exact]
        draws = sample_pg1(np.repeat(c_flat[exact], reps), rng)
        starts = np.concatenate([[0], np.cumsum(reps)[:-1]])
        out[exact] = np.add.reduceat(draws, starts)

    approx = b_flat > exact_max
    if approx.any():
        m = pg_mean(b_flat[approx], c_flat[approx])
        sd = np.sqrt(pg_var(b_flat[approx], c_flat[approx]))
        x = m + sd * rng.standard_normal(m.size)
        bad = np.flatnonzero(x <= 0)
        while bad.size:
            x[bad] = m[bad] + sd[bad] * rng.standard_normal(bad.size)
            bad = bad[x[bad] <= 0]
        out[approx] = x

    out = out.reshape(b_arr.shape)
    return out if out.ndim else float(out)


def sample_pg_series(b, c, rng: np.random.Generator, terms: int = 200, size: int = 1, tail_mean: bool = True):
    """Truncated infinite-sum representation (slow; test oracle only).

    PG(b, c) = 1 / (2 pi^2) * sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2)),
    g_k ~ Gamma(b, 1).  The first ``terms`` summands are random; with
    ``tail_mean`` the remaining infinite tail is replaced by its expectation.
    """
    k = np.arange(1, terms + 1)
    d = (k - 0.5) ** 2 + c * c / (4.0 * np.pi**2)
    g = rng.gamma(b, 1.0, size=(size, terms))
    x = (g / d).sum(axis=1) / (2.0 * np.pi**2)
    if tail_mean:
        x = x + b * _series_tail(c, terms) / (2.0 * np.pi**2)
    return x


def _series_tail(c, terms: int, extra: int = 1_000_000) -> float:
    """sum_{k > terms} 1 / ((k - 1/2)^2 + c^2 / (4 pi^2)), by direct summation
    plus an integral bound for the remainder."""
    d = c * c / (4.0 * np.pi**2)
    k = np.arange(terms + 1, terms + extra + 1, dtype=float)
    direct = np.sum(1.0 / ((k - 0.5) ** 2 + d))
    # midpoint rule: sum_{k > E} f(k - 1/2) ~ integral_E^inf f
    edge = float(terms + extra)
    rem = (np.pi / 2.0 - np.arctan(edge / np.sqrt(d))) / np.sqrt(d) if d > 0 else 1.0 / edge
    return float(direct + rem)
