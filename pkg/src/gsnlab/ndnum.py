"""Dense float64 arithmetic and seeded randomness.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and ndim 2.
Row vectors are ``(1, n)``; minibatches put one example per row.

Randomness goes through :class:`Rng`, a thin wrapper over numpy's Philox4x64-10
counter-based generator.  Philox uses fixed round constants
(multipliers 0xD2E7470EE14C6C93 / 0xCA5A826395121157, Weyl increments
0x9E3779B97F4A7C15 / 0xBB67AE8584CAA73B), so a given ``(seed, stream)`` pair
yields the same bit stream on every platform.  Independent streams are derived
through ``numpy.random.SeedSequence(seed, spawn_key=(stream,))`` rather than by
sharing a generator.
"""

import numpy as np

from .errors import ConvergenceError, ParameterError, ShapeError

POWER_MAX_ITER = 100_000
POWER_TOL = 1e-10


class Rng:
    """Seeded random stream.  Single owner; call :meth:`spawn` to split."""

    def __init__(self, seed=0, stream=None):
        self.seed = int(seed)
        self.stream = stream
        key = () if stream is None else (int(stream),)
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def spawn(self, stream):
        """Independent child stream determined by ``(seed, stream)`` only."""
        return Rng(self.seed, stream if self.stream is None else self.stream * 1_000_003 + stream)

    def random(self):
        return float(self.gen.random())

    def uniform(self, rows, cols):
        return self.gen.random((rows, cols))

    def standard_normal(self, rows, cols):
        return self.gen.standard_normal((rows, cols))

    def bernoulli(self, p):
        p = np.asarray(p, dtype=np.float64)
        return (self.gen.random(p.shape) < p).astype(np.float64)

    def permutation(self, n):
        # numpy's shuffle is an in-place Fisher-Yates pass
        idx = np.arange(n)
        self.gen.shuffle(idx)
        return idx

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    elif m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def gaussian_noise(rng, rows, cols, sigma):
    """Matrix of i.i.d. N(0, sigma**2) draws."""
    if not sigma >= 0:
        raise ParameterError(f"noise std must be >= 0, got {sigma}")
    if sigma == 0:
        return np.zeros((rows, cols))
    return sigma * rng.standard_normal(rows, cols)


def salt_and_pepper(rng, x, p):
    """Replace each entry, with probability ``p``, by a fair coin in {0, 1}.

    Two uniform matrices are always drawn (even for ``p == 0``) so the
    stream position does not depend on ``p``.
    """
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"corruption probability must lie in [0, 1], got {p}")
    x = as_matrix(x)
    hit = rng.uniform(*x.shape) < p
    coin = (rng.uniform(*x.shape) < 0.5).astype(np.float64)
    return np.where(hit, coin, x)


def salt_and_pepper_kernel(p):
    """Per-bit corruption probabilities ``C(x~ | x)`` as a 2x2 row-stochastic matrix."""
    keep = 1.0 - p / 2.0
    return np.array([[keep, 1.0 - keep], [1.0 - keep, keep]])


def is_row_stochastic(k, atol=1e-12):
    k = np.asarray(k)
    return (
        k.ndim == 2
        and k.shape[0] == k.shape[1]
        and bool(np.all(k >= -atol))
        and bool(np.allclose(k.sum(axis=1), 1.0, rtol=0.0, atol=atol))
    )


def stationary_distribution(k, tol=POWER_TOL, max_iter=POWER_MAX_ITER, eigen_fallback=True):
    """Row vector ``pi`` with ``pi @ k == pi`` and ``sum(pi) == 1``.

    Power iteration from the uniform distribution.  If it stalls, a dense
    eigen-decomposition is tried, but only accepted when the eigenvalue 1 is
    simple; a reducible or periodic chain raises :class:`ConvergenceError`.
    """
    k = as_matrix(k)
    n = k.shape[0]
    if k.shape != (n, n):
        raise ShapeError(f"transition matrix must be square, got {k.shape}")
    if not is_row_stochastic(k, atol=1e-9):
        raise ParameterError("transition matrix is not row-stochastic")

    pi = np.full((1, n), 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ k
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() <= tol:
            pi = nxt
            break
        pi = nxt
    else:
        if not eigen_fallback:
            raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")
        pi = _eigen_stationary(k)

    if _has_other_unit_modulus(k):
        raise ConvergenceError("stationary distribution not unique (reducible chain)")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(pi @ k - pi).sum()
    if resid > max(tol, 1e-12) * 10:
        raise ConvergenceError(f"residual {resid:.3g} exceeds tolerance {tol:.3g}")
    return pi


def _eigen_stationary(k):
    w, v = np.linalg.eig(k.T)
    close = np.abs(w - 1.0) < 1e-8
    if close.sum() != 1:
        raise ConvergenceError(
            f"no unique stationary distribution: eigenvalue 1 has multiplicity {int(close.sum())}"
        )
    vec = np.real(v[:, np.argmax(close)])
    vec = vec / vec.sum()
    if np.any(vec < -1e-9):
        raise ConvergenceError("stationary eigenvector has negative entries")
    return vec.reshape(1, -1)


def _has_other_unit_modulus(k):
    # only a reducible chain can have eigenvalue 1 with multiplicity > 1;
    # check cheaply for small chains, skip for large ones
    n = k.shape[0]
    if n > 512:
        return False
    w = np.linalg.eigvals(k)
    return int(np.sum(np.abs(w - 1.0) < 1e-9)) > 1
