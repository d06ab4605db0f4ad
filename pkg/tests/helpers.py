"""Statistical helpers shared by the test modules."""

import numpy as np


def mean_z(x, target):
    """z-scores of the column means of ``x`` against ``target`` (iid draws)."""
    x = np.asarray(x, dtype=float)
    x = x.reshape(x.shape[0], -1)
    se = x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])
    return (x.mean(axis=0) - np.ravel(target)) / se


def cov_z(x, target):
    """z-scores of sample covariance entries against ``target`` (iid draws).

    The standard error of each entry uses the sample variance of the centred
    products.
    """
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    c = x - x.mean(axis=0)
    prods = c[:, :, None] * c[:, None, :]
    n = x.shape[0]
    est = prods.sum(axis=0) / (n - 1)
    se = prods.std(axis=0, ddof=1) / np.sqrt(n)
    return (est - np.asarray(target).reshape(est.shape)) / se


def batch_means_se(x, n_batches=50):
    """Standard error of the mean of an autocorrelated series (columns)."""
    x = np.asarray(x, dtype=float)
    x = x.reshape(x.shape[0], -1)
    size = x.shape[0] // n_batches
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def total_variation(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * np.abs(p / p.sum() - q / q.sum()).sum()


def gaussian_from_log_density(logf, dim):
    """Mean and covariance of a Gaussian from its (quadratic) log density.

    Central differences are exact for quadratics up to rounding, so this is
    an optimizer-free oracle for conjugate normal conditionals.
    """
    h = 1.0
    eye = np.eye(dim)
    grad = np.array([(logf(h * e) - logf(-h * e)) / (2 * h) for e in eye])
    H = np.empty((dim, dim))
    for i in range(dim):
        for j in range(dim):
            H[i, j] = (logf(h * (eye[i] + eye[j])) - logf(h * (eye[i] - eye[j]))
                       - logf(h * (eye[j] - eye[i])) + logf(-h * (eye[i] + eye[j]))) / (4 * h * h)
    cov = np.linalg.inv(-H)
    return cov @ grad, cov
