"""DBM-shaped generative stochastic networks.

Layer 0 is the visible vector, layers 1..D are tanh hidden layers.  Upward
weights ``W{l}`` map layer l-1 to layer l (shape ``(n_{l-1}, n_l)``, row
convention ``h_l = h_{l-1} @ W{l}``); the downward weights are the tied
transposes ``W{l}T``.  A hidden unit computes::

    h = eta_out + tanh(eta_in + a),   a = below @ W{l} + b{l} + above @ W{l+1}T

with zero-mean Gaussian ``eta_in``/``eta_out`` (layer 1 is always noiseless).
A chain step updates one parity group of hidden layers, then the other,
then resamples the visible from ``P(x | h1)``.  The visible is corrupted on
its way into layer 1.
"""

import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .diffgraph import Graph, ParameterStore, sigmoid
from .errors import FormatError, ParameterError, ShapeError
from .ndnum import Rng, as_matrix, gaussian_noise, salt_and_pepper

CKPT_MAGIC = b"GSNCKPT\x00"
CKPT_VERSION = 1


@dataclass
class GsnConfig:
    visible_size: int
    hidden_sizes: list
    eta_in: object = 2.0  # scalar or per-layer list
    eta_out: object = 2.0
    input_corruption_p: float = 0.4
    walkback_steps: int = 0  # 0 -> 2 * depth
    visible_kind: str = "binary"  # "binary" | "real"
    seed: int = 0
    # real visibles are corrupted by additive Gaussian noise instead
    visible_noise_std: float = 0.5
    corrupt_every_step: bool = True
    odd_first: bool = True
    persist_h0: bool = False

    def __post_init__(self):
        self.hidden_sizes = [int(n) for n in self.hidden_sizes]
        if self.visible_size < 1 or not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ParameterError("need visible_size >= 1 and at least one hidden layer")
        if self.walkback_steps == 0:
            self.walkback_steps = 2 * self.depth
        if self.walkback_steps < 1:
            raise ParameterError("walkback_steps must be >= 1")
        if self.visible_kind not in ("binary", "real"):
            raise ParameterError(f"visible_kind must be 'binary' or 'real', got {self.visible_kind!r}")
        if not 0.0 <= self.input_corruption_p <= 1.0:
            raise ParameterError("input_corruption_p must lie in [0, 1]")
        for name in ("eta_in", "eta_out"):
            v = getattr(self, name)
            stds = [float(v)] * self.depth if np.isscalar(v) else [float(s) for s in v]
            if len(stds) != self.depth or min(stds) < 0:
                raise ParameterError(f"{name} needs {self.depth} non-negative stds")
            stds[0] = 0.0
            setattr(self, name, stds)

    @property
    def depth(self):
        return len(self.hidden_sizes)

    @property
    def sizes(self):
        return [self.visible_size] + self.hidden_sizes

    def noise_std(self, layer):
        """``(eta_in, eta_out)`` std for hidden ``layer`` (1-based)."""
        return self.eta_in[layer - 1], self.eta_out[layer - 1]

    def layer_groups(self):
        odd = list(range(1, self.depth + 1, 2))
        even = list(range(2, self.depth + 1, 2))
        return (odd, even) if self.odd_first else (even, odd)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class GsnState:
    x: np.ndarray
    h: list
    x_mean: np.ndarray = None
    t: int = 0

    def copy(self):
        return GsnState(
            self.x.copy(),
            [hl.copy() for hl in self.h],
            None if self.x_mean is None else self.x_mean.copy(),
            self.t,
        )


class GsnModel:
    def __init__(self, config, params=None):
        self.config = config
        if params is None:
            params = init_params(config)
        self.params = params
        self._check_shapes()

    def _check_shapes(self):
        sizes = self.config.sizes
        for l in range(1, len(sizes)):
            if self.params.get(f"W{l}").shape != (sizes[l - 1], sizes[l]):
                raise ShapeError(f"W{l} has shape {self.params.get(f'W{l}').shape}")
            if self.params.get(f"b{l}").shape != (1, sizes[l]):
                raise ShapeError(f"b{l} has wrong shape")
        if self.params.get("b0").shape != (1, sizes[0]):
            raise ShapeError("b0 has wrong shape")

    @property
    def depth(self):
        return self.config.depth

    def initial_state(self, x):
        x = as_matrix(x)
        h = [np.zeros((x.shape[0], n)) for n in self.config.hidden_sizes]
        return GsnState(x.copy(), h)

    def reconstruct(self, h1):
        """Mean of ``P(x | h1)``: Bernoulli probabilities or Gaussian means."""
        a = h1 @ self.params.get("W1").T + self.params.get("b0")
        return sigmoid(a) if self.config.visible_kind == "binary" else a

    def corrupt(self, x, rng):
        c = self.config
        if c.visible_kind == "binary":
            return salt_and_pepper(rng, x, c.input_corruption_p)
        return x + gaussian_noise(rng, *x.shape, c.visible_noise_std)

    def draw_visible(self, mean, rng):
        if self.config.visible_kind == "binary":
            return rng.bernoulli(mean)
        return mean.copy()

    def loss_and_grads(self, batch, rng, h0=None):
        """Walkback loss on ``batch`` and its parameter gradients (trainer hook)."""
        graph, loss = build_walkback_graph(self, batch, h0=h0)
        graph.forward(graph_inputs(batch, h0), rng)
        grads = graph.backward(loss)
        return float(loss.value[0, 0]), grads, graph

    # -- serialization ----------------------------------------------------
    def to_bytes(self):
        buf = io.BytesIO()
        cfg = json.dumps(self.config.to_dict(), sort_keys=True).encode()
        buf.write(CKPT_MAGIC)
        buf.write(struct.pack("<II", CKPT_VERSION, len(cfg)))
        buf.write(cfg)
        names = self.params.names()
        buf.write(struct.pack("<I", len(names)))
        for name in names:
            v = self.params.values[name]
            enc = name.encode()
            buf.write(struct.pack("<I", len(enc)))
            buf.write(enc)
            buf.write(struct.pack("<II", *v.shape))
            buf.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        view = memoryview(data)
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(view):
                raise FormatError("truncated checkpoint", pos)
            out = bytes(view[pos : pos + n])
            pos += n
            return out

        if take(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise FormatError("bad checkpoint magic", 0)
        version, cfg_len = struct.unpack("<II", take(8))
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", len(CKPT_MAGIC))
        config = GsnConfig(**json.loads(take(cfg_len).decode()))
        params = ParameterStore()
        (count,) = struct.unpack("<I", take(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<I", take(4))
            name = take(nlen).decode()
            rows, cols = struct.unpack("<II", take(8))
            arr = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
            params.add(name, arr.astype(np.float64))
        _tie(params, config.depth)
        return cls(config, params)

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as f:
            f.write(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def checksum(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _tie(params, depth):
    for l in range(1, depth + 1):
        params.tie_transpose(f"W{l}T", f"W{l}")


def init_params(config):
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases; declaration order W1.., b0, b1..."""
    rng = Rng(config.seed, stream=0)
    sizes = config.sizes
    params = ParameterStore()
    for l in range(1, len(sizes)):
        bound = 1.0 / np.sqrt(sizes[l - 1])
        params.add(f"W{l}", bound * (2.0 * rng.uniform(sizes[l - 1], sizes[l]) - 1.0))
    for l in range(len(sizes)):
        params.add(f"b{l}", np.zeros((1, sizes[l])))
    _tie(params, config.depth)
    return params


def layer_update(model, state, layer_index, rng, visible=None, return_noise=False):
    """New activation of hidden layer ``layer_index`` given its neighbours in ``state``.

    ``visible`` overrides ``state.x`` as the input to layer 1 (the chain
    passes the corrupted visible here).
    """
    c = model.config
    if not 1 <= layer_index <= c.depth:
        raise ParameterError(f"layer_index must be in 1..{c.depth}")
    p = model.params
    below = (state.x if visible is None else visible) if layer_index == 1 else state.h[layer_index - 2]
    a = below @ p.get(f"W{layer_index}") + p.get(f"b{layer_index}")
    if layer_index < c.depth:
        a = a + state.h[layer_index] @ p.get(f"W{layer_index + 1}").T
    s_in, s_out = c.noise_std(layer_index)
    eta_in = gaussian_noise(rng, *a.shape, s_in)
    eta_out = gaussian_noise(rng, *a.shape, s_out)
    h = eta_out + np.tanh(eta_in + a)
    if return_noise:
        return h, eta_in, eta_out
    return h


def chain_step(model, state, rng, odd_first=None, clamp=None):
    """One transition ``(x, h) -> (x', h')``.

    ``odd_first`` overrides which parity group of hidden layers moves first.
    ``clamp`` is an optional ``(mask, values)`` pair: masked visible
    coordinates are held at ``values`` instead of being resampled.
    """
    c = model.config
    x_in = model.corrupt(state.x, rng) if (c.corrupt_every_step or state.t == 0) else state.x
    new = GsnState(state.x, list(state.h), state.x_mean, state.t)
    groups = c.layer_groups()
    if odd_first is not None and odd_first != c.odd_first:
        groups = groups[::-1]
    for group in groups:
        fresh = {l: layer_update(model, new, l, rng, visible=x_in) for l in group}
        for l, hl in fresh.items():
            new.h[l - 1] = hl
    mean = model.reconstruct(new.h[0])
    x = model.draw_visible(mean, rng)
    if clamp is not None:
        mask, values = clamp
        x = np.where(mask, values, x)
        mean = np.where(mask, values, mean)
    new.x = x
    new.x_mean = mean
    new.t = state.t + 1
    return new


def build_walkback_graph(model, x0, h0=None):
    """Unrolled training graph for the minibatch ``x0`` (one example per row).

    Returns ``(graph, loss)``.  The graph carries two extra lists,
    ``graph.recon_nodes`` (per-step reconstruction means) and
    ``graph.step_losses``.  The loss is the per-example mean over the batch of
    the summed per-step NLLs of ``x0``.  Bind ``x0`` under the input name
    ``"x0"`` and any ``h0`` rows under ``"h0_{l}"``.
    """
    c = model.config
    x0 = as_matrix(x0)
    n = x0.shape[0]
    g = Graph(model.params)
    target = g.input("x0")
    W = {l: g.param(f"W{l}") for l in range(1, c.depth + 1)}
    WT = {l: g.param(f"W{l}T") for l in range(1, c.depth + 1)}
    b = {l: g.param(f"b{l}") for l in range(c.depth + 1)}
    if h0 is None:
        h = {l: g.constant(np.zeros((n, c.hidden_sizes[l - 1]))) for l in range(1, c.depth + 1)}
    else:
        h = {l: g.input(f"h0_{l}") for l in range(1, c.depth + 1)}

    g.recon_nodes, g.step_losses = [], []
    x_prev = target
    for t in range(c.walkback_steps):
        if t == 0 or c.corrupt_every_step:
            if c.visible_kind == "binary":
                x_in = g.corrupt(x_prev, c.input_corruption_p)
            else:
                x_in = g.add_noise(x_prev, c.visible_noise_std)
        else:
            x_in = x_prev
        for group in c.layer_groups():
            fresh = {}
            for l in group:
                below = x_in if l == 1 else h[l - 1]
                terms = [(below, W[l])]
                if l < c.depth:
                    terms.append((h[l + 1], WT[l + 1]))
                a = g.affine(terms, b[l])
                s_in, s_out = c.noise_std(l)
                if s_in > 0:
                    a = g.add_noise(a, s_in)
                hl = g.tanh(a)
                if s_out > 0:
                    hl = g.add_noise(hl, s_out)
                fresh[l] = hl
            h.update(fresh)
        if t == 0:
            g.first_step_hidden = dict(h)
        pre = g.affine([(h[1], WT[1])], b[0])
        if c.visible_kind == "binary":
            mean = g.sigmoid(pre)
            step_loss = g.bernoulli_nll(mean, target, scale=1.0 / n)
            x_prev = g.sample(mean, "bernoulli")
        else:
            mean = pre
            step_loss = g.gaussian_nll(mean, target, std=1.0, scale=1.0 / n)
            x_prev = g.sample(mean, "gaussian", std=0.0)
        g.recon_nodes.append(mean)
        g.step_losses.append(step_loss)
    g.hidden_nodes = h
    loss = g.add(*g.step_losses) if len(g.step_losses) > 1 else g.step_losses[0]
    return g, loss


def graph_inputs(x0, h0=None):
    inputs = {"x0": as_matrix(x0)}
    if h0 is not None:
        for l, hl in enumerate(h0, start=1):
            inputs[f"h0_{l}"] = hl
    return inputs
