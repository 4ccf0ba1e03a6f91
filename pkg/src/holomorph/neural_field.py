"""Coordinate network mapping normalised (x, y, z) to an object value in (0, 1).

Architecture: fixed Gaussian Fourier features (64 frequencies giving 128
cos/sin features), three swish dense layers of width 128, and a sigmoid
output unit. Gradients are computed by hand; the parameters live in a dict
of float64 arrays so the optimiser can treat them uniformly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .io import FormatError
from .wavefield import OpticalConfig

WIDTH = 128
N_FREQ = WIDTH // 2
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "w_out", "b_out")

HNN_MAGIC = b"HNN1"
_HNN_HEADER = struct.Struct("<4sQdIII")


sigmoid = expit


def swish(u):
    return u * sigmoid(u)


@dataclass
class NeuralField:
    """Parameters of the coordinate network.

    ``B`` is the frozen ``(3, 64)`` Fourier matrix; ``params`` holds the
    trainable blocks named in :data:`PARAM_NAMES`.
    """

    B: np.ndarray
    params: dict
    seed: int = 0
    fourier_scale: float = 10.0

    def copy(self) -> "NeuralField":
        return NeuralField(self.B.copy(), {k: v.copy() for k, v in self.params.items()},
                           self.seed, self.fourier_scale)


@dataclass
class Cache:
    """Activations retained by :func:`forward` for :func:`backward`."""

    h: list = field(default_factory=list)    # inputs to dense layers 1..3 and the head
    pre: list = field(default_factory=list)  # pre-activations of dense layers 1..3
    out: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return 0 if self.out is None else self.out.shape[0]


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init(seed: int, fourier_scale: float = 10.0) -> NeuralField:
    """Fresh network: ``B ~ N(0, scale^2)``, Glorot-uniform weights, zero biases."""
    if not fourier_scale > 0:
        raise ValueError("fourier_scale must be positive")
    rng = np.random.default_rng(seed)
    B = rng.normal(0.0, fourier_scale, size=(3, N_FREQ))
    params = {}
    for n in (1, 2, 3):
        params[f"W{n}"] = _glorot(rng, WIDTH, WIDTH, (WIDTH, WIDTH))
        params[f"b{n}"] = np.zeros(WIDTH)
    params["w_out"] = _glorot(rng, WIDTH, 1, (WIDTH,))
    params["b_out"] = np.zeros(())
    return NeuralField(B, params, int(seed), float(fourier_scale))


def normalize_coords(l, m, i, config: OpticalConfig):
    """Map 1-based pixel indices ``(l, m)`` and slice index ``i`` to ``[0, 1]^3``."""
    l, m, i = np.asarray(l), np.asarray(m), np.asarray(i)
    if (np.any(l < 1) or np.any(l > config.width) or np.any(m < 1) or np.any(m > config.height)
            or np.any(i < 0) or np.any(i > config.depth_slices)):
        raise IndexError("voxel index out of range")
    return l / config.width, m / config.height, i / config.depth_slices


def slice_coords(config: OpticalConfig, i: int, window=None) -> np.ndarray:
    """Normalised coordinates of every voxel of slice ``i``, shape ``(n, 3)``.

    Rows are ordered like ``array[l-1, m-1]`` raveled in C order. ``window``
    optionally restricts to a ``(slice_x, slice_y)`` pair of 0-based slices.
    """
    ls = np.arange(1, config.width + 1)
    ms = np.arange(1, config.height + 1)
    if window is not None:
        ls, ms = ls[window[0]], ms[window[1]]
    X, Y = np.meshgrid(ls / config.width, ms / config.height, indexing="ij")
    Z = np.full(X.shape, i / config.depth_slices)
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def fourier_features(B: np.ndarray, coords: np.ndarray, dtype=np.float64) -> np.ndarray:
    proj = (2 * np.pi) * (np.asarray(coords, dtype=np.float64) @ B)
    return np.concatenate([np.cos(proj), np.sin(proj)], axis=1).astype(dtype, copy=False)


def _check_coords(coords):
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError("coordinates must have shape (n, 3)")
    return coords


def forward(net: NeuralField, coords, dtype=np.float64, keep_cache: bool = True):
    """Evaluate the network on a batch of normalised coordinates.

    Parameters
    ----------
    net : NeuralField
    coords : array_like, shape (n, 3)
    dtype : numpy dtype
        Working precision. ``float32`` is the fast path; parameters stay float64.
    keep_cache : bool
        Retain activations for :func:`backward`.

    Returns
    -------
    o : ndarray, shape (n,), float64
    cache : Cache or None
    """
    coords = _check_coords(coords)
    p = {k: np.asarray(v, dtype=dtype) for k, v in net.params.items()}
    h = fourier_features(net.B, coords, dtype)
    cache = Cache() if keep_cache else None
    for n in (1, 2, 3):
        pre = h @ p[f"W{n}"] + p[f"b{n}"]
        if keep_cache:
            cache.h.append(h)
            cache.pre.append(pre)
        h = swish(pre)
    o = sigmoid(h @ p["w_out"] + p["b_out"])
    if keep_cache:
        cache.h.append(h)
        cache.out = o
    return o.astype(np.float64), cache


def backward(net: NeuralField, cache: Cache, upstream) -> dict:
    """Gradients of ``sum(upstream * o)`` with respect to every trainable block."""
    upstream = np.asarray(upstream)
    if cache is None or cache.out is None:
        raise ValueError("backward needs the cache of a forward pass")
    if upstream.shape != cache.out.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match batch {cache.out.shape}")
    dtype = cache.out.dtype
    o = cache.out
    d = upstream.astype(dtype) * o * (1 - o)
    grads = {}
    h3 = cache.h[3]
    grads["w_out"] = h3.T @ d
    grads["b_out"] = d.sum()
    dh = np.outer(d, np.asarray(net.params["w_out"], dtype=dtype))
    for n in (3, 2, 1):
        pre = cache.pre[n - 1]
        s = sigmoid(pre)
        dpre = dh * (s + pre * s * (1 - s))
        grads[f"W{n}"] = cache.h[n - 1].T @ dpre
        grads[f"b{n}"] = dpre.sum(axis=0)
        if n > 1:
            dh = dpre @ np.asarray(net.params[f"W{n}"], dtype=dtype).T
    return {k: np.asarray(v, dtype=np.float64) for k, v in grads.items()}


def zeros_like_params(net: NeuralField) -> dict:
    return {k: np.zeros_like(v) for k, v in net.params.items()}


def save(net: NeuralField, path) -> None:
    """Write an HNN1 checkpoint: header, then ``B`` and every block as f64 LE."""
    header = _HNN_HEADER.pack(HNN_MAGIC, net.seed, net.fourier_scale, 3, N_FREQ, WIDTH)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(net.B, dtype="<f8").tobytes())
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes())


def _block_shapes(n_freq, width):
    shapes = {}
    for n in (1, 2, 3):
        shapes[f"W{n}"] = (width, width)
        shapes[f"b{n}"] = (width,)
    shapes["w_out"] = (width,)
    shapes["b_out"] = ()
    return shapes


def load(path) -> NeuralField:
    blob = Path(path).read_bytes()
    if len(blob) < _HNN_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, seed, scale, in_dim, n_freq, width = _HNN_HEADER.unpack_from(blob)
    if magic != HNN_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if (in_dim, n_freq, width) != (3, N_FREQ, WIDTH):
        raise FormatError(f"{path}: unsupported layer dims {(in_dim, n_freq, width)}")
    pos = _HNN_HEADER.size

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape, dtype=np.int64))
        end = pos + 8 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated parameter block")
        arr = np.frombuffer(blob[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
        return arr

    B = take((in_dim, n_freq))
    params = {name: take(shape) for name, shape in _block_shapes(n_freq, width).items()}
    if pos != len(blob):
        raise FormatError(f"{path}: trailing bytes after parameter blocks")
    return NeuralField(B, {k: params[k] for k in PARAM_NAMES}, int(seed), float(scale))
