"""Reading and writing rasters: the HFD1 binary format and binary PGM.

HFD1 layout (all little-endian)::

    offset  size  field
    0       4     magic b"HFD1"
    4       4     kind, u32 (0 = intensity, 1 = complex)
    8       4     L (width, x pixels), u32
    12      4     M (height, y pixels), u32
    16      4     pitch_x, f32 [um]
    20      4     pitch_y, f32 [um]
    24      ...   payload, f32

The payload is stored image-style: ``M`` rows of ``L`` samples, so sample
``(l, m)`` sits at position ``m * L + l``. Complex payloads interleave
``re, im`` per sample. In memory, arrays are ``(L, M)`` with x on axis 0.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

HFD_MAGIC = b"HFD1"
_HFD_HEADER = struct.Struct("<4sIIIff")
KIND_INTENSITY = 0
KIND_COMPLEX = 1


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


class Raster(NamedTuple):
    data: np.ndarray
    pitch_x: float
    pitch_y: float


def write_hfd(path, data: np.ndarray, pitch_x: float, pitch_y: float) -> None:
    """Write an intensity (real) or complex ``(L, M)`` array as HFD1."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("HFD1 stores 2-D arrays only")
    L, M = data.shape
    image = data.T  # (M, L), row-major rows of constant y
    if np.iscomplexobj(image):
        kind = KIND_COMPLEX
        payload = np.empty((M, L, 2), dtype="<f4")
        payload[..., 0] = image.real
        payload[..., 1] = image.imag
    else:
        kind = KIND_INTENSITY
        payload = np.ascontiguousarray(image, dtype="<f4")
    header = _HFD_HEADER.pack(HFD_MAGIC, kind, L, M, pitch_x, pitch_y)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_hfd(path) -> Raster:
    """Read an HFD1 file. Intensity loads as float32, complex as complex64."""
    blob = Path(path).read_bytes()
    if len(blob) < _HFD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, kind, L, M, px, py = _HFD_HEADER.unpack_from(blob)
    if magic != HFD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if kind not in (KIND_INTENSITY, KIND_COMPLEX):
        raise FormatError(f"{path}: unknown kind {kind}")
    per_sample = 2 if kind == KIND_COMPLEX else 1
    expected = L * M * per_sample * 4
    body = blob[_HFD_HEADER.size:]
    if len(body) != expected:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f4")
    if kind == KIND_COMPLEX:
        pairs = values.reshape(M, L, 2)
        image = np.empty((M, L), dtype=np.complex64)
        image.real = pairs[..., 0]
        image.imag = pairs[..., 1]
    else:
        image = values.reshape(M, L).astype(np.float32)
    return Raster(np.ascontiguousarray(image.T), float(px), float(py))


def _pgm_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    """Split the first ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    pos = 0
    n = len(blob)
    while len(tokens) < count:
        while pos < n and blob[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise FormatError("truncated PGM header")
        if blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM as an ``(L, M)`` float array scaled to ``[0, 1]``."""
    blob = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(blob, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: unsupported PGM variant {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as err:
        raise FormatError(f"{path}: malformed PGM header") from err
    if not (0 < maxval < 65536) or width <= 0 or height <= 0:
        raise FormatError(f"{path}: malformed PGM header")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    raster = blob[offset:offset + need]
    if len(raster) < need:
        raise FormatError(f"{path}: truncated PGM raster")
    image = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return (image.astype(np.float64) / maxval).T.copy()


def write_pgm(path, data: np.ndarray, bits: int = 8) -> None:
    """Write a real ``(L, M)`` array as P5 PGM, rescaled to the full sample range."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    data = np.asarray(data, dtype=np.float64)
    lo, hi = float(data.min()), float(data.max())
    maxval = 255 if bits == 8 else 65535
    if hi > lo:
        scaled = np.rint((data - lo) / (hi - lo) * maxval)
    else:
        scaled = np.zeros_like(data)
    dtype = "u1" if bits == 8 else ">u2"
    image = scaled.T.astype(dtype)
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(image.tobytes())


def read_image(path) -> Raster:
    """Read an HFD1 or PGM file, dispatching on the leading magic bytes.

    PGM files carry no pitch, so ``pitch_x`` and ``pitch_y`` come back as NaN.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == HFD_MAGIC:
        return read_hfd(path)
    if head[:2] == b"P5":
        return Raster(read_pgm(path), float("nan"), float("nan"))
    raise FormatError(f"{path}: unrecognised image format (magic {head!r})")


def write_image(path, data: np.ndarray, pitch_x: float = 1.0, pitch_y: float = 1.0) -> None:
    """Write by extension: ``.pgm`` exports an 8-bit preview, anything else HFD1."""
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, np.abs(data) if np.iscomplexobj(data) else data)
    else:
        write_hfd(path, data, pitch_x, pitch_y)
