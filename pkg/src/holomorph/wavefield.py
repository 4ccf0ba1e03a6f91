"""Scalar wave fields and angular-spectrum propagation.

Fields are plain complex ``ndarray`` objects of shape ``(L, M)``: axis 0 runs
along x (``L`` pixels of pitch ``pitch_x``) and axis 1 along y. Intensity maps
are real arrays with the same layout. The geometry that goes with an array
lives in :class:`OpticalConfig`.

The FFT pair is numpy's default (unnormalized forward, ``1/(LM)`` inverse), so
a forward/inverse round trip is exact and the transfer kernel is applied in
wrap-around frequency order with DC at index ``[0, 0]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HOLOMORPH_THREADS", "1")))
    except ValueError:
        return 1


def fft2(a: np.ndarray) -> np.ndarray:
    return scipy.fft.fft2(a, workers=_workers())


def ifft2(a: np.ndarray) -> np.ndarray:
    return scipy.fft.ifft2(a, workers=_workers())


@dataclass(frozen=True)
class OpticalConfig:
    """Optical and sampling parameters of a reconstruction volume.

    Parameters
    ----------
    wavelength : float
        Illumination wavelength in vacuum [um].
    n_med : float
        Refractive index of the surrounding medium.
    pitch_x, pitch_y : float
        In-plane pixel pitch (magnified) [um].
    slice_pitch : float
        Distance between neighbouring depth slices [um].
    width, height : int
        Field size ``L`` (x) and ``M`` (y) in pixels.
    depth_slices : int
        ``N``; the volume holds slices ``0..N``.
    z_offset : float
        Depth of slice 0 above the sensor [um]. ``0`` puts slice 0 on the
        sensor plane; a positive value adds one free-space hop from slice 0
        down to the sensor so that a thin volume can sit far from it.
    """

    wavelength: float = 0.532
    n_med: float = 1.33
    pitch_x: float = 0.5
    pitch_y: float = 0.5
    slice_pitch: float = 1.0
    width: int = 128
    height: int = 128
    depth_slices: int = 32
    z_offset: float = 0.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not self.n_med >= 1:
            raise ValueError("n_med must be >= 1")
        if not (self.pitch_x > 0 and self.pitch_y > 0 and self.slice_pitch > 0):
            raise ValueError("pitches must be positive")
        if self.width < 2 or self.height < 2:
            raise ValueError("field must be at least 2x2 pixels")
        if self.depth_slices < 1:
            raise ValueError("depth_slices must be >= 1")
        if not self.z_offset >= 0:
            raise ValueError("z_offset must be >= 0")

    @property
    def k(self) -> float:
        """Wavenumber in the medium, ``2 pi n_med / wavelength`` [rad/um]."""
        return 2 * np.pi * self.n_med / self.wavelength

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.depth_slices + 1)

    @property
    def z_max(self) -> float:
        """Depth of the topmost slice ``z_N`` [um]."""
        return self.z_offset + self.depth_slices * self.slice_pitch

    def slice_depth(self, i) -> float:
        return self.z_offset + i * self.slice_pitch

    def phase_shift(self, n_obj: float) -> float:
        """Phase delay of one fully occupied voxel for object index ``n_obj``."""
        return 2 * np.pi * (n_obj - self.n_med) * self.slice_pitch / self.wavelength

    def with_(self, **changes) -> "OpticalConfig":
        return replace(self, **changes)

    @property
    def power_of_two(self) -> bool:
        return _is_pow2(self.width) and _is_pow2(self.height)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_shape(a: np.ndarray, config: OpticalConfig, what: str = "field"):
    if a.shape != config.shape:
        raise ValueError(f"{what} shape {a.shape} does not match config {config.shape}")


def spatial_frequencies(config: OpticalConfig) -> tuple[np.ndarray, np.ndarray]:
    """Frequency grids ``(f_x, f_y)`` in wrap-around order, shape ``(L, M)``."""
    fx = np.fft.fftfreq(config.width, d=config.pitch_x)
    fy = np.fft.fftfreq(config.height, d=config.pitch_y)
    return np.meshgrid(fx, fy, indexing="ij")


def asm_transfer(config: OpticalConfig, distance: float) -> np.ndarray:
    """Angular-spectrum transfer kernel for propagation over ``distance``.

    ``exp(i k d sqrt(1 - (lambda f_x)^2 - (lambda f_y)^2))`` on the discrete
    frequency grid, with evanescent frequencies set to exactly zero.
    """
    if not np.isfinite(distance):
        raise ValueError("distance must be finite")
    fx, fy = spatial_frequencies(config)
    lam = config.wavelength
    radicand = 1.0 - (lam * fx) ** 2 - (lam * fy) ** 2
    propagating = radicand >= 0
    root = np.sqrt(np.where(propagating, radicand, 0.0))
    kernel = np.exp(1j * config.k * distance * root)
    kernel[~propagating] = 0.0
    return kernel


def propagating_mask(config: OpticalConfig) -> np.ndarray:
    fx, fy = spatial_frequencies(config)
    lam = config.wavelength
    return 1.0 - (lam * fx) ** 2 - (lam * fy) ** 2 >= 0


def band_limit(field: np.ndarray, config: OpticalConfig) -> np.ndarray:
    """Remove evanescent spectral content from ``field``."""
    _check_shape(field, config)
    return ifft2(fft2(field) * propagating_mask(config))


def asm_propagate(field: np.ndarray, distance: float, config: OpticalConfig,
                  kernel: np.ndarray | None = None) -> np.ndarray:
    """Propagate a complex field by ``distance`` um with the angular spectrum method.

    Parameters
    ----------
    field : ndarray, complex, shape (L, M)
    distance : float
        Signed propagation distance [um]. Negative values back-propagate.
    config : OpticalConfig
    kernel : ndarray, optional
        Precomputed :func:`asm_transfer` for the same config and distance.
    """
    field = np.asarray(field)
    _check_shape(field, config)
    if kernel is None:
        kernel = asm_transfer(config, distance)
    return ifft2(fft2(field) * kernel)


def asm_adjoint(field: np.ndarray, distance: float, config: OpticalConfig,
                kernel: np.ndarray | None = None) -> np.ndarray:
    """Hermitian adjoint of :func:`asm_propagate` (conjugate-kernel propagation)."""
    field = np.asarray(field)
    _check_shape(field, config)
    if kernel is None:
        kernel = asm_transfer(config, distance)
    return ifft2(fft2(field) * np.conj(kernel))


def apply_phase_slice(field: np.ndarray, slice_values: np.ndarray, phi: float) -> np.ndarray:
    """Multiply each pixel by ``exp(i phi o)``."""
    field = np.asarray(field)
    slice_values = np.asarray(slice_values)
    if field.shape != slice_values.shape:
        raise ValueError(f"slice shape {slice_values.shape} does not match field {field.shape}")
    return field * np.exp(1j * phi * slice_values)


def intensity(field: np.ndarray) -> np.ndarray:
    field = np.asarray(field)
    return field.real ** 2 + field.imag ** 2


def plane_wave(config: OpticalConfig, amplitude: complex = 1.0) -> np.ndarray:
    return np.full(config.shape, amplitude, dtype=complex)


def multislice(o: np.ndarray, phi: float, incident: np.ndarray, config: OpticalConfig,
               keep_slices: bool = False):
    """Run the thin-screen recursion from slice ``N`` down to the sensor.

    ``U_{i-1} = ASM(U_i exp(i phi o_i); dz)`` for ``i = N..1``, followed by one
    hop of ``z_offset`` when slice 0 is above the sensor. Slice 0 itself never
    modulates the field.

    Parameters
    ----------
    o : ndarray, shape (L, M, N+1)
        Object values per slice.
    phi : float
        Phase delay of a fully occupied voxel [rad].
    incident : ndarray or complex
        Field ``U_N`` entering the top slice.
    keep_slices : bool
        Also return the list of fields ``U_i`` arriving at slices ``N..1``
        (before modulation), ordered by decreasing ``i``.

    Returns
    -------
    ndarray
        Field at the sensor plane.
    """
    if o.shape != config.volume_shape:
        raise ValueError(f"volume shape {o.shape} does not match config {config.volume_shape}")
    kernel = asm_transfer(config, config.slice_pitch)
    u = np.broadcast_to(np.asarray(incident, dtype=complex), config.shape).copy()
    arriving = []
    for i in range(config.depth_slices, 0, -1):
        if keep_slices:
            arriving.append(u)
        u = asm_propagate(apply_phase_slice(u, o[:, :, i], phi), config.slice_pitch, config, kernel)
    if config.z_offset > 0:
        u = asm_propagate(u, config.z_offset, config)
    if keep_slices:
        return u, arriving
    return u
