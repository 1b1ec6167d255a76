"""Gaussian Parzen-window log-likelihood of test points under generated samples."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError, ShapeError
from .ndnum import as_matrix


@dataclass
class ParzenEstimator:
    samples: np.ndarray
    sigma: float

    def __post_init__(self):
        self.samples = as_matrix(self.samples)
        if self.samples.shape[0] < 1:
            raise ParameterError("Parzen estimator needs at least one sample")
        if not self.sigma > 0:
            raise ParameterError(f"bandwidth must be > 0, got {self.sigma}")

    def log_density(self, test, batch_size=256):
        """Per-point log density, shape ``(n_test,)``."""
        test = as_matrix(test)
        mu = self.samples
        if test.shape[1] != mu.shape[1]:
            raise ShapeError(f"test points have {test.shape[1]} dims, samples have {mu.shape[1]}")
        n, d = mu.shape
        s2 = self.sigma**2
        mu_sq = np.sum(mu * mu, axis=1)[None, :]
        const = np.log(n) + 0.5 * d * np.log(2 * np.pi * s2)
        out = np.empty(test.shape[0])
        for lo in range(0, test.shape[0], batch_size):
            x = test[lo : lo + batch_size]
            sq = np.sum(x * x, axis=1)[:, None] + mu_sq - 2.0 * (x @ mu.T)
            np.maximum(sq, 0.0, out=sq)
            out[lo : lo + batch_size] = logsumexp(-0.5 * sq / s2, axis=1) - const
        return out


def log_likelihood(est, test):
    """``(mean, standard_error)`` of the per-point log density over ``test``."""
    ll = est.log_density(test)
    se = float(ll.std(ddof=1) / np.sqrt(len(ll))) if len(ll) > 1 else 0.0
    return float(ll.mean()), se


def default_grid(lo=0.05, hi=1.0, num=20):
    return list(np.logspace(np.log10(lo), np.log10(hi), num))


def select_bandwidth(samples, validation, grid=None):
    """Grid value maximising mean validation log-likelihood (ties -> smaller)."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ParameterError("bandwidth grid is empty")
    best, best_ll = None, -np.inf
    for sigma in sorted(grid):
        ll, _ = log_likelihood(ParzenEstimator(samples, sigma), validation)
        if ll > best_ll:
            best, best_ll = sigma, ll
    return best


def split_validation(test, fraction=0.1, rng=None):
    """Hold out ``fraction`` of the test rows for bandwidth selection."""
    test = as_matrix(test)
    n = test.shape[0]
    idx = np.arange(n) if rng is None else rng.permutation(n)
    k = max(1, int(round(fraction * n)))
    return test[idx[:k]], test[idx[k:]]


def evaluate(samples, test, grid=None, fraction=0.1, rng=None):
    """Full protocol: pick sigma on a validation split, score the remainder.

    Returns ``(mean, standard_error, sigma)``.
    """
    valid, rest = split_validation(test, fraction, rng)
    sigma = select_bandwidth(samples, valid, grid)
    mean, se = log_likelihood(ParzenEstimator(samples, sigma), rest)
    return mean, se, sigma
