"""Dataset containers, IDX (MNIST-format) I/O and small synthetic generators."""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .ndnum import Rng, as_matrix

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
KINDS = ("binary", "unit", "real")


@dataclass
class Dataset:
    examples: np.ndarray
    kind: str = "real"
    split: np.ndarray = None  # per-row tag: "train" / "valid" / "test"
    table: np.ndarray = None  # exact P(X) for bit-pattern data
    image_shape: tuple = None

    def __post_init__(self):
        self.examples = as_matrix(self.examples)
        if self.kind not in KINDS:
            raise ParameterError(f"unknown value kind {self.kind!r}")
        x = self.examples
        if self.kind == "binary" and not np.all((x == 0) | (x == 1)):
            raise ParameterError("binary dataset contains values other than 0/1")
        if self.kind == "unit" and (x.min(initial=0) < 0 or x.max(initial=0) > 1):
            raise ParameterError("unit-interval dataset has values outside [0, 1]")
        if self.split is None:
            self.split = np.full(len(x), "train", dtype=object)

    def __len__(self):
        return self.examples.shape[0]

    @property
    def dim(self):
        return self.examples.shape[1]

    def subset(self, tag):
        keep = self.split == tag
        return Dataset(self.examples[keep], self.kind, self.split[keep], self.table, self.image_shape)

    def with_splits(self, fractions=(0.8, 0.1, 0.1), rng=None):
        n = len(self)
        idx = np.arange(n) if rng is None else rng.permutation(n)
        tags = np.empty(n, dtype=object)
        a = int(round(fractions[0] * n))
        b = a + int(round(fractions[1] * n))
        tags[idx[:a]] = "train"
        tags[idx[a:b]] = "valid"
        tags[idx[b:]] = "test"
        return Dataset(self.examples, self.kind, tags, self.table, self.image_shape)


def binarize(x, threshold=0.5):
    return (np.asarray(x) >= threshold).astype(np.float64)


# -- IDX --------------------------------------------------------------------

def read_idx_array(path):
    """Raw IDX (ubyte) payload as an integer array with the stored dims."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise FormatError(f"file too short for an IDX header ({len(data)} bytes)", len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic >> 8 != 0x08:
        raise FormatError(f"magic 0x{magic:08x} is not an unsigned-byte IDX file", 0)
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise FormatError("truncated IDX dimension header", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:head])
    size = int(np.prod(dims)) if dims else 0
    if len(data) < head + size:
        raise FormatError(f"truncated IDX payload: need {size} bytes after header", len(data))
    return magic, np.frombuffer(data[head : head + size], dtype=np.uint8).reshape(dims)


def load_idx(path, binary=False, threshold=0.5):
    """IDX image file -> Dataset with pixels scaled to [0, 1] (optionally binarized)."""
    magic, arr = read_idx_array(path)
    if magic != IDX_IMAGES:
        raise FormatError(f"expected image magic 0x{IDX_IMAGES:08x}, found 0x{magic:08x}", 0)
    n, rows, cols = arr.shape
    x = arr.reshape(n, rows * cols).astype(np.float64) / 255.0
    if binary:
        return Dataset(binarize(x, threshold), "binary", image_shape=(rows, cols))
    return Dataset(x, "unit", image_shape=(rows, cols))


def load_idx_labels(path):
    magic, arr = read_idx_array(path)
    if magic != IDX_LABELS:
        raise FormatError(f"expected label magic 0x{IDX_LABELS:08x}, found 0x{magic:08x}", 0)
    return arr.astype(np.int64)


def write_idx(path, array):
    """Write a uint8 array as IDX (images if 3-D, labels if 1-D)."""
    arr = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | arr.ndim
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


# -- CSV --------------------------------------------------------------------

def read_csv(path, kind=None):
    x = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if kind is None:
        if np.all((x == 0) | (x == 1)):
            kind = "binary"
        elif x.min(initial=0) >= 0 and x.max(initial=0) <= 1:
            kind = "unit"
        else:
            kind = "real"
    return Dataset(x, kind)


def write_csv(path, ds):
    x = ds.examples if isinstance(ds, Dataset) else as_matrix(ds)
    np.savetxt(path, x, delimiter=",", fmt="%.17g")


# -- synthetic --------------------------------------------------------------

def prototype_table(d, n_modes=4, flip=0.1, seed=0):
    """P(X) over ``d`` bits: a mixture of random prototypes with independent
    bit flips, i.e. a few damped modes."""
    rng = Rng(seed, stream=7)
    protos = rng.bernoulli(np.full((n_modes, d), 0.5))
    weights = rng.uniform(1, n_modes).ravel() + 0.5
    weights /= weights.sum()
    states = ((np.arange(1 << d)[:, None] >> np.arange(d - 1, -1, -1)[None, :]) & 1).astype(float)
    p = np.zeros(1 << d)
    for w, proto in zip(weights, protos):
        dist = np.abs(states - proto).sum(axis=1)
        p += w * flip**dist * (1 - flip) ** (d - dist)
    return p / p.sum()


def make_toy(kind, n, seed=0, d=4, table=None):
    """Synthetic datasets.

    ``two-gaussians-2d``: equal mixture at (+-2, 0), std 0.3.
    ``bit-patterns``: ``d`` bits drawn from ``table`` (default
    :func:`prototype_table`); the table is stored on the result.
    ``ring``: unit-circle points with radial std 0.1.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = Rng(seed, stream=11)
    if kind == "two-gaussians-2d":
        side = np.where(rng.uniform(n, 1) < 0.5, -2.0, 2.0)
        x = np.hstack([side, np.zeros((n, 1))]) + 0.3 * rng.standard_normal(n, 2)
        return Dataset(x, "real")
    if kind == "bit-patterns":
        if not 1 <= d <= 8:
            raise ParameterError("bit-patterns supports 1..8 bits")
        p = prototype_table(d, seed=seed) if table is None else np.asarray(table, dtype=np.float64)
        if p.shape != (1 << d,) or abs(p.sum() - 1) > 1e-9 or (p < 0).any():
            raise ParameterError(f"table must be a distribution over {1 << d} states")
        idx = np.searchsorted(np.cumsum(p), rng.uniform(n, 1).ravel(), side="right")
        idx = np.minimum(idx, len(p) - 1)
        bits = ((idx[:, None] >> np.arange(d - 1, -1, -1)[None, :]) & 1).astype(np.float64)
        return Dataset(bits, "binary", table=p)
    if kind == "ring":
        theta = 2 * np.pi * rng.uniform(n, 1)
        r = 1.0 + 0.1 * rng.standard_normal(n, 1)
        return Dataset(np.hstack([r * np.cos(theta), r * np.sin(theta)]), "real")
    raise ParameterError(f"unknown toy dataset {kind!r}")


def downsample(ds, factor, threshold=0.5):
    """Block-mean pooling of square images; binary data is re-binarized."""
    x = ds.examples
    side = ds.image_shape[0] if ds.image_shape else int(round(np.sqrt(x.shape[1])))
    shape = ds.image_shape or (side, side)
    if shape[0] * shape[1] != x.shape[1] or shape[0] != shape[1]:
        raise ParameterError(f"rows of length {x.shape[1]} are not square images")
    if factor < 1 or side % factor:
        raise ParameterError(f"image side {side} is not divisible by {factor}")
    s = side // factor
    pooled = x.reshape(-1, s, factor, s, factor).mean(axis=(2, 4)).reshape(-1, s * s)
    if ds.kind == "binary":
        pooled = binarize(pooled, threshold)
    return Dataset(pooled, ds.kind, ds.split, None, (s, s))
