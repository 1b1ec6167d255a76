"""Momentum SGD with a multiplicative per-epoch learning-rate decay.

The trainer is model-agnostic: anything exposing ``params`` (a
:class:`~gsnlab.diffgraph.ParameterStore`) and
``loss_and_grads(batch, rng, h0=None) -> (loss, grads, graph)`` can be trained.
"""

import csv
import hashlib
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, TrainingError
from .ndnum import Rng, as_matrix

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.25
    momentum: float = 0.5
    lr_decay_per_epoch: float = 0.99
    epochs: int = 100
    minibatch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must lie in [0, 1)")
        if not 0 < self.lr_decay_per_epoch <= 1:
            raise ParameterError("lr_decay_per_epoch must lie in (0, 1]")
        if self.epochs < 0 or self.minibatch_size < 1:
            raise ParameterError("epochs must be >= 0 and minibatch_size >= 1")

    def lr_at(self, epoch):
        """Learning rate used during ``epoch`` (0-based)."""
        return self.learning_rate * self.lr_decay_per_epoch**epoch


@dataclass
class TrainReport:
    mean_nll: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    wall_time: float = 0.0
    checksum: str = ""

    def __len__(self):
        return len(self.mean_nll)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "mean_nll", "lr"])
            for e, (nll, lr) in enumerate(zip(self.mean_nll, self.lr), start=1):
                w.writerow([e, repr(nll), repr(lr)])


def param_checksum(params):
    h = hashlib.sha256()
    for name in params.names():
        h.update(name.encode())
        h.update(np.ascontiguousarray(params.values[name], dtype="<f8").tobytes())
    return h.hexdigest()


def momentum_step(params, velocity, grads, lr, momentum):
    """``v <- m*v - lr*g``, ``theta <- theta + v`` for every owned parameter."""
    for name, g in grads.items():
        v = momentum * velocity[name] - lr * g
        velocity[name] = v
        params.values[name] += v


def train(model, data, config, callback=None):
    """Train ``model`` in place on the rows of ``data``; returns a :class:`TrainReport`.

    Each epoch visits the examples in a fresh Fisher-Yates order drawn from the
    trainer's own stream; noise for the model comes from a separate stream, so
    both are fixed by ``config.seed``.
    """
    data = as_matrix(data)
    if data.shape[0] == 0:
        raise ParameterError("dataset is empty")
    cfg = getattr(model, "config", None)
    if cfg is not None and hasattr(cfg, "visible_size") and data.shape[1] != cfg.visible_size:
        raise ParameterError(f"data has {data.shape[1]} columns, model expects {cfg.visible_size}")

    shuffle_rng = Rng(config.seed, stream=1)
    noise_rng = Rng(config.seed, stream=2)
    velocity = {k: np.zeros_like(v) for k, v in model.params.values.items()}
    persist = bool(cfg is not None and getattr(cfg, "persist_h0", False))
    h_cache = {}
    report = TrainReport()
    start = time.perf_counter()
    n = data.shape[0]
    bs = config.minibatch_size

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        total, count = 0.0, 0
        for bi, lo in enumerate(range(0, n, bs)):
            idx = order[lo : lo + bs]
            batch = data[idx]
            h0 = None
            if persist:
                h0 = [
                    np.vstack([h_cache.get(i, {}).get(l, np.zeros(sz)) for i in idx])
                    for l, sz in enumerate(cfg.hidden_sizes, start=1)
                ]
            loss, grads, graph = model.loss_and_grads(batch, noise_rng, h0=h0)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError("non-finite loss or gradient", epoch=epoch + 1, batch=bi)
            if persist:
                _store_h1(graph, idx, h_cache)
            momentum_step(model.params, velocity, grads, lr, config.momentum)
            total += loss * len(idx)
            count += len(idx)
        report.mean_nll.append(total / count)
        report.lr.append(lr)
        log.debug("epoch %d  nll %.6f  lr %.6g", epoch + 1, total / count, lr)
        if callback is not None:
            callback(epoch, report)

    report.wall_time = time.perf_counter() - start
    report.checksum = param_checksum(model.params)
    return report


def _store_h1(graph, idx, cache):
    # hidden values after the first walkback step become the next H0 for these examples
    first = getattr(graph, "first_step_hidden", None)
    if first is None:
        return
    for l, node in first.items():
        for row, i in enumerate(idx):
            cache.setdefault(int(i), {})[l] = node.value[row].copy()
