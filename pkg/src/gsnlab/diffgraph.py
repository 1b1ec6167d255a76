"""Static reverse-mode differentiation graph with noise-injection nodes.

The graph is built once, node by node; insertion order is the topological
order.  Stochastic nodes (``add_noise``, ``corrupt``, ``sample``) draw from the
``Rng`` passed to :meth:`Graph.forward` and record their draw, so a later
``forward(..., frozen=True)`` replays exactly the same noise.  That is what
finite-difference checks need.

Gradient rules for the stochastic nodes:

* ``add_noise``: identity w.r.t. the signal, the noise is a constant offset.
* ``corrupt`` and ``sample``: gradients are blocked entirely.
"""

import numpy as np

from .errors import GraphError, ShapeError, StateError
from .ndnum import as_matrix, gaussian_noise, salt_and_pepper

LOG_EPS = 1e-7


def sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def bernoulli_nll(p, t):
    """-sum(t log p + (1-t) log(1-p)) with ``p`` clamped to [1e-7, 1-1e-7]."""
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"probabilities {p.shape} and targets {t.shape} differ")
    pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
    return float(-np.sum(t * np.log(pc) + (1.0 - t) * np.log1p(-pc)))


def gaussian_nll(mean, t, std=1.0):
    """Negative log density of ``t`` under N(mean, std**2), summed over entries."""
    mean = np.asarray(mean, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if mean.shape != t.shape:
        raise ShapeError(f"means {mean.shape} and targets {t.shape} differ")
    r = (t - mean) / std
    return float(0.5 * np.sum(r * r) + t.size * (np.log(std) + 0.5 * np.log(2 * np.pi)))


class ParameterStore:
    """Named parameter matrices plus transpose aliases that own no storage."""

    def __init__(self):
        self.values = {}
        self.tied = {}

    def add(self, name, value):
        if name in self.values or name in self.tied:
            raise GraphError(f"parameter {name!r} already defined")
        self.values[name] = as_matrix(value).copy()

    def tie_transpose(self, alias, owner):
        if owner not in self.values:
            raise GraphError(f"cannot tie {alias!r} to unknown parameter {owner!r}")
        self.tied[alias] = owner

    def get(self, name):
        if name in self.tied:
            return self.values[self.tied[name]].T
        try:
            return self.values[name]
        except KeyError:
            raise GraphError(f"unknown parameter {name!r}") from None

    def names(self):
        return list(self.values)

    def copy(self):
        other = ParameterStore()
        other.values = {k: v.copy() for k, v in self.values.items()}
        other.tied = dict(self.tied)
        return other

    def __contains__(self, name):
        return name in self.values or name in self.tied

    def __getitem__(self, name):
        return self.get(name)


class Node:
    __slots__ = ("id", "kind", "parents", "attrs", "value", "record")

    def __init__(self, nid, kind, parents, **attrs):
        self.id = nid
        self.kind = kind
        self.parents = tuple(parents)
        self.attrs = attrs
        self.value = None
        self.record = None

    def __repr__(self):
        return f"Node({self.id}, {self.kind}, parents={[p.id for p in self.parents]})"


class Graph:
    def __init__(self, params=None):
        self.params = params if params is not None else ParameterStore()
        self.nodes = []
        self._forward_done = False

    def _add(self, kind, parents=(), **attrs):
        for p in parents:
            if not isinstance(p, Node) or p.id >= len(self.nodes) or self.nodes[p.id] is not p:
                raise GraphError(f"parent {p!r} does not belong to this graph")
        node = Node(len(self.nodes), kind, parents, **attrs)
        self.nodes.append(node)
        self._forward_done = False
        return node

    # -- builders ---------------------------------------------------------
    def input(self, name):
        return self._add("input", name=name)

    def constant(self, value):
        return self._add("constant", value=as_matrix(value))

    def param(self, name):
        if name not in self.params:
            raise GraphError(f"unknown parameter {name!r}")
        return self._add("parameter", name=name)

    def affine(self, terms, bias=None):
        """``sum(x @ w for x, w in terms) + bias`` (bias broadcast over rows)."""
        parents = []
        for x, w in terms:
            parents += [x, w]
        if bias is not None:
            parents.append(bias)
        return self._add("affine", parents, n_terms=len(terms), has_bias=bias is not None)

    def add(self, *nodes):
        return self._add("add", nodes)

    def tanh(self, x):
        return self._add("tanh", [x])

    def sigmoid(self, x):
        return self._add("sigmoid", [x])

    def add_noise(self, x, sigma):
        return self._add("add_noise", [x], sigma=float(sigma))

    def corrupt(self, x, p):
        return self._add("corrupt", [x], p=float(p))

    def sample(self, x, dist="bernoulli", std=0.0):
        """Draw from ``dist`` parametrised by ``x``; blocks gradients.

        ``dist="bernoulli"`` treats ``x`` as probabilities, ``"gaussian"`` as
        means with standard deviation ``std``.
        """
        return self._add("sample", [x], dist=dist, std=float(std))

    def bernoulli_nll(self, p, target, scale=1.0):
        return self._add("bernoulli_nll", [p, target], scale=float(scale))

    def gaussian_nll(self, mean, target, std=1.0, scale=1.0):
        return self._add("gaussian_nll", [mean, target], std=float(std), scale=float(scale))

    def squared_error(self, y, target, scale=1.0):
        """``scale * 0.5 * ||y - target||^2``."""
        return self._add("squared_error", [y, target], scale=float(scale))

    # -- evaluation -------------------------------------------------------
    def forward(self, inputs=None, rng=None, frozen=False):
        """Evaluate every node once, in insertion order.

        With ``frozen=True`` the stochastic nodes replay the draws recorded
        by the previous non-frozen pass instead of consuming ``rng``.
        """
        inputs = inputs or {}
        for node in self.nodes:
            node.value = self._eval(node, inputs, rng, frozen)
        self._forward_done = True
        return {node.id: node.value for node in self.nodes}

    def _eval(self, node, inputs, rng, frozen):
        k = node.kind
        pv = [p.value for p in node.parents]
        if k == "input":
            name = node.attrs["name"]
            if name not in inputs:
                raise GraphError(f"input {name!r} is not bound")
            return as_matrix(inputs[name])
        if k == "constant":
            return node.attrs["value"]
        if k == "parameter":
            return self.params.get(node.attrs["name"])
        if k == "affine":
            n = node.attrs["n_terms"]
            out = None
            for i in range(n):
                x, w = pv[2 * i], pv[2 * i + 1]
                if x.shape[1] != w.shape[0]:
                    raise ShapeError(f"affine term {i}: {x.shape} @ {w.shape}")
                term = x @ w
                out = term if out is None else out + term
            if node.attrs["has_bias"]:
                out = out + pv[-1]
            return out
        if k == "add":
            out = pv[0]
            for v in pv[1:]:
                out = out + v
            return out
        if k == "tanh":
            return np.tanh(pv[0])
        if k == "sigmoid":
            return sigmoid(pv[0])
        if k in ("add_noise", "corrupt", "sample"):
            if frozen:
                if node.record is None:
                    raise GraphError(f"node {node.id} has no recorded draw to replay")
            else:
                if rng is None and self._needs_rng(node):
                    raise GraphError(f"stochastic node {node.id} needs an rng")
                node.record = self._draw(node, pv[0], rng)
            if k == "add_noise":
                return pv[0] + node.record
            return node.record
        if k == "bernoulli_nll":
            return np.array([[node.attrs["scale"] * bernoulli_nll(pv[0], pv[1])]])
        if k == "gaussian_nll":
            return np.array([[node.attrs["scale"] * gaussian_nll(pv[0], pv[1], node.attrs["std"])]])
        if k == "squared_error":
            if pv[0].shape != pv[1].shape:
                raise ShapeError(f"{pv[0].shape} vs {pv[1].shape}")
            d = pv[0] - pv[1]
            return np.array([[node.attrs["scale"] * 0.5 * float(np.sum(d * d))]])
        raise GraphError(f"unknown node kind {k!r}")

    @staticmethod
    def _needs_rng(node):
        a = node.attrs
        if node.kind == "add_noise":
            return a["sigma"] > 0
        if node.kind == "corrupt":
            return True
        return a["dist"] == "bernoulli" or a["std"] > 0

    @staticmethod
    def _draw(node, x, rng):
        a = node.attrs
        if node.kind == "add_noise":
            return gaussian_noise(rng, *x.shape, a["sigma"])
        if node.kind == "corrupt":
            return salt_and_pepper(rng, x, a["p"])
        if a["dist"] == "bernoulli":
            return rng.bernoulli(x)
        if a["dist"] == "gaussian":
            return x + gaussian_noise(rng, *x.shape, a["std"])
        raise GraphError(f"unknown sample distribution {a['dist']!r}")

    def backward(self, loss):
        """Gradients of the scalar ``loss`` node w.r.t. every parameter.

        Returns ``{owner_name: grad}``; tied aliases are folded (transposed)
        into their owner.
        """
        if not self._forward_done:
            raise StateError("backward() called before forward()")
        if loss.value is None or loss.value.shape != (1, 1):
            raise GraphError("loss node must hold a 1x1 value")
        grads = {loss.id: np.ones((1, 1))}
        pgrads = {name: np.zeros_like(v) for name, v in self.params.values.items()}
        for node in reversed(self.nodes[: loss.id + 1]):
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if node.kind == "parameter":
                name = node.attrs["name"]
                if name in self.params.tied:
                    pgrads[self.params.tied[name]] += g.T
                else:
                    pgrads[name] += g
                continue
            for parent, pg in self._local_grads(node, g):
                if pg is None:
                    continue
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = pg
        return pgrads

    def _local_grads(self, node, g):
        k = node.kind
        ps = node.parents
        if k in ("input", "constant", "corrupt", "sample"):
            return ()
        if k == "affine":
            out = []
            for i in range(node.attrs["n_terms"]):
                x, w = ps[2 * i], ps[2 * i + 1]
                out.append((x, g @ w.value.T))
                out.append((w, x.value.T @ g))
            if node.attrs["has_bias"]:
                b = ps[-1]
                out.append((b, _unbroadcast(g, b.value.shape)))
            return out
        if k == "add":
            return [(p, _unbroadcast(g, p.value.shape)) for p in ps]
        if k == "tanh":
            return [(ps[0], g * (1.0 - node.value**2))]
        if k == "sigmoid":
            return [(ps[0], g * node.value * (1.0 - node.value))]
        if k == "add_noise":
            return [(ps[0], g)]
        s = float(g[0, 0]) * node.attrs["scale"]
        if k == "bernoulli_nll":
            p, t = ps[0].value, ps[1].value
            # straight-through clamp: keep a gradient at saturated outputs
            pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
            return [(ps[0], s * (-t / pc + (1.0 - t) / (1.0 - pc))), (ps[1], None)]
        if k == "gaussian_nll":
            std = node.attrs["std"]
            return [(ps[0], s * (ps[0].value - ps[1].value) / std**2), (ps[1], None)]
        if k == "squared_error":
            d = ps[0].value - ps[1].value
            return [(ps[0], s * d), (ps[1], -s * d)]
        raise GraphError(f"no gradient rule for {k!r}")

    def value(self, node):
        return node.value


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def numeric_gradients(graph, loss, inputs=None, h=1e-5):
    """Central finite differences of ``loss`` for every owned parameter,
    replaying the noise recorded by the last forward pass."""
    params = graph.params
    grads = {}
    for name, value in params.values.items():
        g = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + h
            up = graph.forward(inputs, frozen=True)[loss.id].item()
            value[idx] = old - h
            down = graph.forward(inputs, frozen=True)[loss.id].item()
            value[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    graph.forward(inputs, frozen=True)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all shared entries."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(err.max()))
    return worst


def forward(graph, inputs=None, rng=None, frozen=False):
    return graph.forward(inputs, rng, frozen)


def backward(graph, loss):
    return graph.backward(loss)
