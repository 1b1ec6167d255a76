"""Exact analysis of finite-state chains built from models or tables.

States of ``d`` bits are enumerated in binary counting order with bit 0 as
the most significant bit, so state ``k`` of a 2-bit space is ``(k >> 1, k & 1)``.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError, SizeError
from .ndnum import Rng, as_matrix, is_row_stochastic, salt_and_pepper_kernel, stationary_distribution

DEFAULT_CAP = 4096


@dataclass
class StateSpace:
    d: int
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError("state space needs at least one bit")
        if self.size > self.cap:
            raise SizeError(f"2^{self.d} = {self.size} states exceeds the cap of {self.cap}")

    @property
    def size(self):
        return 1 << self.d

    def states(self):
        """``(size, d)`` float matrix of bit vectors in enumeration order."""
        k = np.arange(self.size)[:, None]
        shifts = np.arange(self.d - 1, -1, -1)[None, :]
        return ((k >> shifts) & 1).astype(np.float64)

    def index(self, bits):
        bits = np.asarray(bits, dtype=np.int64)
        weights = 1 << np.arange(self.d - 1, -1, -1)
        return bits @ weights


@dataclass
class ChainOperator:
    K: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.K = as_matrix(self.K)
        if not is_row_stochastic(self.K):
            raise NumericalError(f"operator {self.label!r} is not row-stochastic to 1e-12")

    @property
    def size(self):
        return self.K.shape[0]

    def stationary(self, tol=1e-12):
        return stationary_distribution(self.K, tol=tol).ravel()


@dataclass
class ErgodicityReport:
    irreducible: bool
    period: int
    ergodic: bool


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    holds: bool
    z_norm: float = math.nan
    k_diff_norm: float = math.nan


# -- DAE chains -------------------------------------------------------------

def _require_dae(model):
    c = model.config
    if c.depth != 1 or c.visible_kind != "binary":
        raise ParameterError("exact DAE operator needs a 1-layer binary model")
    if not c.corrupt_every_step:
        raise ParameterError("exact DAE operator assumes corruption at every step")


def corruption_matrix(d, p):
    """``C[x, x~]`` for independent per-bit salt-and-pepper corruption."""
    kern = salt_and_pepper_kernel(p)
    out = np.ones((1, 1))
    for _ in range(d):
        out = np.kron(out, kern)
    return out


def reconstruction_matrix(model, space, free=None):
    """``R[x~, x']`` of the factorized reconstruction, optionally marginalised
    to the coordinates in ``free`` (then columns enumerate the free bits)."""
    xt = space.states()
    p = model.params
    q = model.reconstruct(np.tanh(xt @ p.get("W1") + p.get("b1")))
    if free is not None:
        q = q[:, free]
    nb = q.shape[1]
    out_states = StateSpace(nb, cap=max(space.cap, 1 << nb)).states() if nb else np.zeros((1, 0))
    # float64 products, not logs, so rows sum to one to machine precision
    R = np.ones((space.size, out_states.shape[0]))
    for i in range(nb):
        qi = q[:, i : i + 1]
        R *= np.where(out_states[None, :, i] > 0.5, qi, 1.0 - qi)
    return R


def dae_exact_operator(model, space=None):
    """Exact X-chain ``K(x'|x) = sum_x~ C(x~|x) P(x'|x~)`` of a 1-layer binary model."""
    _require_dae(model)
    if space is None:
        space = StateSpace(model.config.visible_size)
    if space.d != model.config.visible_size:
        raise ParameterError("state space dimension differs from the model's visible size")
    C = corruption_matrix(space.d, model.config.input_corruption_p)
    R = reconstruction_matrix(model, space)
    K = C @ R
    K /= K.sum(axis=1, keepdims=True)
    return ChainOperator(K, label="dae")


def clamped_dae_operator(model, mask, values):
    """Exact chain over the free bits when the masked bits are held at ``values``.

    Returns ``(operator, free_indices)``; the operator's states enumerate the
    free bits in binary counting order.
    """
    _require_dae(model)
    d = model.config.visible_size
    mask = np.asarray(mask, dtype=bool).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    free = np.flatnonzero(~mask)
    if free.size == 0:
        raise ParameterError("nothing left to sample: every coordinate is clamped")
    space = StateSpace(d)
    fspace = StateSpace(free.size)
    full = np.tile(values, (fspace.size, 1))
    full[:, free] = fspace.states()
    rows = space.index(full)
    C = corruption_matrix(d, model.config.input_corruption_p)[rows]
    K = C @ reconstruction_matrix(model, space, free=free)
    K /= K.sum(axis=1, keepdims=True)
    return ChainOperator(K, label="dae-clamped"), free


def conditional_of(pi, space, mask, values):
    """``pi(x_free | x_masked = values)`` over the free bits, enumeration order."""
    mask = np.asarray(mask, dtype=bool).ravel()
    values = np.asarray(values).ravel()
    states = space.states()
    keep = np.all(states[:, mask] == values[mask], axis=1)
    cond = np.asarray(pi).ravel()[keep]
    free_states = states[keep][:, ~mask]
    order = np.argsort(StateSpace(int((~mask).sum())).index(free_states))
    cond = cond[order]
    return cond / cond.sum()


# -- ergodicity -------------------------------------------------------------

def _reach(adj, start):
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = list(nxt)
    return seen


def ergodicity_check(op):
    """Irreducibility from reachability on the support graph; the period is
    the gcd of ``level[u] + 1 - level[v]`` over support edges inside the
    communicating class of state 0 (BFS levels from state 0)."""
    K = op.K if isinstance(op, ChainOperator) else as_matrix(op)
    adj = K > 0
    fwd = _reach(adj, 0)
    bwd = _reach(adj.T, 0)
    irreducible = bool(fwd.all() and bwd.all())
    cls = fwd & bwd
    idx = np.flatnonzero(cls)
    sub = adj[np.ix_(idx, idx)]
    level = np.full(len(idx), -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        new = []
        for u in frontier:
            for v in np.flatnonzero(sub[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    new.append(v)
        frontier = new
    u, v = np.nonzero(sub)
    diffs = np.abs(level[u] + 1 - level[v])
    period = int(np.gcd.reduce(diffs)) if diffs.size else 0
    return ErgodicityReport(irreducible, period, irreducible and period == 1)


# -- perturbation bound -----------------------------------------------------

def fundamental_matrix(k, pi):
    """``Z = (I - K + C)^-1`` in column orientation (``K pi = pi``), with C's columns all ``pi``."""
    kc = as_matrix(k).T
    n = kc.shape[0]
    m = np.eye(n) - kc + np.outer(pi, np.ones(n))
    if np.linalg.cond(m) > 1e12:
        raise NumericalError("I - K + C is numerically singular")
    return np.linalg.inv(m)


def _inf_norm(m):
    return float(np.abs(m).sum(axis=1).max())


def schweitzer_bound(k, k_tilde, orientation="row", atol=1e-9):
    """Check ``||pi - pi~||_1 <= ||Z||_inf ||K - K~||_inf``.

    ``Z`` is formed in the column orientation.  The infinity norm (max
    absolute row sum) is applied with both matrices in the row-stochastic
    orientation (``orientation="row"``, i.e. ``Z^T`` and ``K - K~`` as rows =
    from-states), which is the form that provably bounds the 1-norm.
    ``orientation="column"`` applies it to ``Z`` and ``K^T - K~^T`` directly;
    that variant can fail.
    """
    k = k.K if isinstance(k, ChainOperator) else as_matrix(k)
    kt = k_tilde.K if isinstance(k_tilde, ChainOperator) else as_matrix(k_tilde)
    for name, m in (("K", k), ("K~", kt)):
        if not ergodicity_check(m).irreducible:
            raise ParameterError(f"{name} is not irreducible")
    pi = stationary_distribution(k, tol=1e-13).ravel()
    pit = stationary_distribution(kt, tol=1e-13).ravel()
    Z = fundamental_matrix(k, pi)
    if orientation == "row":
        zn, dn = _inf_norm(Z.T), _inf_norm(k - kt)
    elif orientation == "column":
        zn, dn = _inf_norm(Z), _inf_norm((k - kt).T)
    else:
        raise ParameterError(f"unknown orientation {orientation!r}")
    lhs = float(np.abs(pi - pit).sum())
    rhs = zn * dn
    return BoundReport(lhs, rhs, lhs <= rhs + atol, zn, dn)


def random_stochastic(rng, n, sparsity=0.0):
    """Random row-stochastic ``n x n`` matrix whose support always contains
    self-loops and the cycle ``i -> i+1``, so it is ergodic."""
    m = rng.uniform(n, n)
    if sparsity > 0:
        m *= rng.uniform(n, n) >= sparsity
    m[np.arange(n), np.arange(n)] += 0.05
    m[np.arange(n), (np.arange(n) + 1) % n] += 0.05
    return m / m.sum(axis=1, keepdims=True)


def random_ergodic_pair(rng, max_states=16):
    """A random ergodic chain and a perturbation of it (small, large, or an
    unrelated chain of the same size)."""
    n = int(rng.integers(2, max_states + 1))
    k = random_stochastic(rng, n, sparsity=0.7 * rng.random())
    if rng.integers(0, 3) == 0:
        kt = random_stochastic(rng, n, sparsity=0.7 * rng.random())
    else:
        eps = 10.0 ** (-3.0 + 2.0 * rng.random())
        kt = k + eps * rng.uniform(n, n)
        kt /= kt.sum(axis=1, keepdims=True)
    return k, kt


# -- dependency networks ----------------------------------------------------

@dataclass
class DepNetSpec:
    """``conditionals[i][r, v] = P_i(x_i = v | x_{-i} = r)`` with ``r`` the
    remaining bits in binary counting order."""

    d: int
    conditionals: np.ndarray
    scan: str = "random"  # "random" | "ordered"

    def __post_init__(self):
        self.conditionals = np.asarray(self.conditionals, dtype=np.float64)
        if self.conditionals.shape != (self.d, 1 << (self.d - 1), 2):
            raise ParameterError(f"conditionals must have shape {(self.d, 1 << (self.d - 1), 2)}")
        if not np.allclose(self.conditionals.sum(axis=2), 1.0, atol=1e-12) or (self.conditionals < 0).any():
            raise ParameterError("each conditional table row must be a distribution")
        if self.scan not in ("random", "ordered"):
            raise ParameterError(f"unknown scan mode {self.scan!r}")


def _rest_index(states, i):
    d = states.shape[1]
    rest = np.delete(states, i, axis=1)
    weights = 1 << np.arange(d - 2, -1, -1)
    return (rest.astype(np.int64) @ weights) if d > 1 else np.zeros(len(states), dtype=np.int64)


def resample_operator(spec, i):
    """``K_i``: resample variable ``i`` from ``P_i``, keep the others."""
    space = StateSpace(spec.d)
    states = space.states()
    r = _rest_index(states, i)
    K = np.zeros((space.size, space.size))
    for s in range(space.size):
        for v in (0, 1):
            t = states[s].copy()
            t[i] = v
            K[s, space.index(t)] += spec.conditionals[i, r[s], v]
    return K


def depnet_operator(spec):
    """Random scan: ``K = mean_i K_i`` over ``2^d`` states.  Ordered scan: the
    state is ``(x, j)`` (index ``x * d + j``) and step ``j`` resamples
    ``x_j`` then moves to ``j + 1 mod d``."""
    StateSpace(spec.d)
    Ks = [resample_operator(spec, i) for i in range(spec.d)]
    if spec.scan == "random":
        return ChainOperator(sum(Ks) / spec.d, label="depnet-random")
    n, d = Ks[0].shape[0], spec.d
    if n * d > DEFAULT_CAP:
        raise SizeError(f"{n * d} states exceeds the cap of {DEFAULT_CAP}")
    K = np.zeros((n * d, n * d))
    for j in range(d):
        nj = (j + 1) % d
        K[j::d, nj::d] = Ks[j]
    return ChainOperator(K, label="depnet-ordered")


def conditionals_from_joint(p, d):
    """Exact conditionals ``P(x_i | x_{-i})`` of a joint table over ``d`` bits."""
    p = np.asarray(p, dtype=np.float64).ravel()
    states = StateSpace(d).states()
    out = np.zeros((d, 1 << (d - 1), 2))
    for i in range(d):
        r = _rest_index(states, i)
        for s in range(len(p)):
            out[i, r[s], int(states[s, i])] += p[s]
    return out / out.sum(axis=2, keepdims=True)


# -- joint (x, h) chains ----------------------------------------------------

def joint_chain_operator(f, g, cap=DEFAULT_CAP):
    """Exact chain over ``(x, h)`` (index ``x * nh + h``) for the table GSN

    ``H' ~ f[x, h, :]`` then ``X' ~ g[h', :]``.

    Returns ``(operator, x_marginal_of_stationary)``.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    nx, nh, nh2 = f.shape
    if nh2 != nh or g.shape != (nh, nx):
        raise ParameterError(f"f must be (nx, nh, nh) and g (nh, nx); got {f.shape}, {g.shape}")
    if nx * nh > cap:
        raise SizeError(f"{nx * nh} joint states exceeds the cap of {cap}")
    # K[(x,h),(x',h')] = f[x,h,h'] * g[h',x']
    K = np.einsum("abc,cd->abdc", f, g).reshape(nx * nh, nx * nh)
    op = ChainOperator(K, label="joint")
    pi = op.stationary(tol=1e-14)
    return op, pi.reshape(nx, nh).sum(axis=1)


def theorem2_tables(rng, nx, nh, px=None):
    """Random ``(f, g, px)`` satisfying the stationarity hypotheses.

    For each ``x`` the hidden kernel ``f[x]`` has stationary law ``q(.|x)``;
    taking ``H_0 ~ q(.|X_0)`` makes ``H_1`` equal ``H_0`` in law given ``X_0``,
    and ``g(x|h) = P(X_0 = x | H_1 = h)`` is then computed exactly.
    """
    if px is None:
        px = rng.uniform(1, nx).ravel() + 0.05
    px = np.asarray(px, dtype=np.float64)
    px = px / px.sum()
    f = rng.uniform(nx * nh, nh).reshape(nx, nh, nh) + 0.01
    f /= f.sum(axis=2, keepdims=True)
    q = np.stack([stationary_distribution(f[x], tol=1e-15).ravel() for x in range(nx)])
    joint = px[:, None] * q  # P(X0 = x, H1 = h)
    g = (joint / joint.sum(axis=0, keepdims=True)).T
    return f, g, px


# -- reports ----------------------------------------------------------------

REPORT_FIELDS = ("trial", "lhs", "rhs", "holds", "period", "irreducible")


def write_report(path, rows):
    """Rows as CSV (``.csv``) or JSON lines (anything else)."""
    rows = list(rows)
    if str(path).endswith(".csv"):
        fields = list(REPORT_FIELDS) + sorted({k for r in rows for k in r} - set(REPORT_FIELDS))
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields)
            w.writeheader()
            for r in rows:
                w.writerow(r)
    else:
        with open(path, "w") as f:
            for r in rows:
                f.write(json.dumps(r, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def hamming_matrix(d):
    s = StateSpace(d).states()
    return np.abs(s[:, None, :] - s[None, :, :]).sum(axis=2)


def local_dae_operator(d, eps, rng, radius=1):
    """DAE-style chain whose corruption and reconstruction only move within
    Hamming distance ``radius``: ``C(x~|x)`` keeps ``x`` with probability
    ``1 - eps`` and otherwise flips one uniformly chosen bit, and
    ``P(x|x~)`` is a random positive law on the ball around ``x~``."""
    dist = hamming_matrix(d)
    C = np.where(dist == 0, 1.0 - eps, np.where(dist == 1, eps / d, 0.0))
    R = np.where(dist <= radius, rng.uniform(*dist.shape) + 0.05, 0.0)
    R /= R.sum(axis=1, keepdims=True)
    return ChainOperator(C @ R, label="dae-local")
