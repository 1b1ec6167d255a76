"""Running a trained chain: free sampling, clamped (conditional) sampling,
and writing sample sheets."""

import re
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError, ShapeError
from .gsn import chain_step
from .ndnum import as_matrix


@dataclass
class SampleRun:
    burn_in: int = 1000
    num_samples: int = 100
    thinning: int = 1
    clamp_mask: np.ndarray = None
    clamp_values: np.ndarray = None
    collect_mean_field: bool = False
    n_chains: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.num_samples < 0 or self.thinning < 1 or self.n_chains < 1:
            raise ParameterError("burn_in, num_samples >= 0; thinning, n_chains >= 1")
        if (self.clamp_mask is None) != (self.clamp_values is None):
            raise ParameterError("clamp_mask and clamp_values must be given together")


def initial_visible(model, n_chains, rng):
    if model.config.visible_kind == "binary":
        return rng.bernoulli(np.full((n_chains, model.config.visible_size), 0.5))
    return rng.standard_normal(n_chains, model.config.visible_size)


def _run(model, run, rng, clamp, x_init=None):
    v = model.config.visible_size
    x = initial_visible(model, run.n_chains, rng) if x_init is None else as_matrix(x_init).copy()
    if x.shape[1] != v:
        raise ShapeError(f"initial visible has {x.shape[1]} columns, model expects {v}")
    if clamp is not None:
        mask, values = clamp
        x = np.where(mask, values, x)
    state = model.initial_state(x)
    out = []
    if run.num_samples == 0:
        return out
    for _ in range(run.burn_in):
        state = chain_step(model, state, rng, clamp=clamp)
    while len(out) < run.num_samples:
        for _ in range(run.thinning):
            state = chain_step(model, state, rng, clamp=clamp)
        out.append((state.x_mean if run.collect_mean_field else state.x).copy())
    return out


def sample(model, run, rng, x_init=None):
    """Collected states after burn-in, one ``(n_chains, visible)`` matrix each.

    The chain always evolves through sampled visibles; ``collect_mean_field``
    only changes what is recorded.
    """
    return _run(model, run, rng, None, x_init)


def sample_clamped(model, run, rng, x_init=None):
    """Like :func:`sample` but coordinates under ``run.clamp_mask`` are held
    at ``run.clamp_values`` at every step (initialised there too)."""
    if run.clamp_mask is None:
        raise ParameterError("sample_clamped needs clamp_mask and clamp_values")
    v = model.config.visible_size
    mask = np.asarray(run.clamp_mask, dtype=bool).reshape(1, -1)
    if mask.shape[1] != v:
        raise ParameterError(f"clamp_mask has length {mask.shape[1]}, expected {v}")
    values = as_matrix(run.clamp_values)
    if values.shape[1] != v:
        raise ShapeError(f"clamp_values has {values.shape[1]} columns, expected {v}")
    return _run(model, run, rng, (mask, values), x_init)


def stack_samples(samples):
    """List of per-step matrices -> one matrix, chain-major then time."""
    if not samples:
        return np.zeros((0, 0))
    arr = np.stack(samples, axis=1)  # (chains, time, visible)
    return arr.reshape(-1, arr.shape[-1])


def write_csv(path, rows):
    rows = as_matrix(rows) if len(rows) else np.zeros((0, 0))
    np.savetxt(path, rows, delimiter=",", fmt="%.17g")


def to_grid(rows, image_shape, grid_shape, pad=1):
    """Tile images (one per row) into a single 8-bit grid, row-major."""
    rows = as_matrix(rows)
    ih, iw = image_shape
    gr, gc = grid_shape
    if ih * iw != rows.shape[1]:
        raise ShapeError(f"image shape {image_shape} does not match {rows.shape[1]} values")
    grid = np.zeros((gr * (ih + pad) + pad, gc * (iw + pad) + pad), dtype=np.uint8)
    lo, hi = rows.min(initial=0.0), rows.max(initial=1.0)
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    for k in range(min(len(rows), gr * gc)):
        r, c = divmod(k, gc)
        img = np.clip(np.rint((rows[k].reshape(ih, iw) - lo) * scale), 0, 255).astype(np.uint8)
        y, x = pad + r * (ih + pad), pad + c * (iw + pad)
        grid[y : y + ih, x : x + iw] = img
    return grid


def write_pgm(path, image):
    """Binary (P5) 8-bit greyscale PGM."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise FormatError("not a binary PGM", 0)
    w, h, maxval = (int(v) for v in m.groups())
    if maxval != 255:
        raise FormatError("only 8-bit PGM is supported", m.start(3))
    return np.frombuffer(data[m.end() : m.end() + w * h], dtype=np.uint8).reshape(h, w)
