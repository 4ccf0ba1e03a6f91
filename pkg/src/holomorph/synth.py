"""Synthetic holograms, voxel grids and hologram preprocessing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavefield import (
    OpticalConfig,
    apply_phase_slice,
    asm_propagate,
    intensity,
    multislice,
    plane_wave,
)


@dataclass(frozen=True)
class VoxelGrid:
    """Object values ``o`` on an ``(L, M, N+1)`` grid.

    Voxel ``[j, k, i]`` is centred at ``((j+1) dx, (k+1) dy, z_offset + i dz)``,
    i.e. the in-plane index is the 1-based pixel number minus one.
    """

    values: np.ndarray
    pitch_x: float
    pitch_y: float
    pitch_z: float
    z_offset: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError("voxel grid must be 3-D")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("object values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_config(cls, values, config: OpticalConfig) -> "VoxelGrid":
        return cls(values, config.pitch_x, config.pitch_y, config.slice_pitch, config.z_offset)

    @property
    def shape(self):
        return self.values.shape

    def coordinates(self):
        """Physical voxel-centre coordinates ``(x, y, z)`` as 1-D arrays [um]."""
        L, M, n1 = self.values.shape
        x = np.arange(1, L + 1) * self.pitch_x
        y = np.arange(1, M + 1) * self.pitch_y
        z = self.z_offset + np.arange(n1) * self.pitch_z
        return x, y, z

    def save(self, path) -> None:
        np.savez(path, values=self.values, pitches=np.array(
            [self.pitch_x, self.pitch_y, self.pitch_z, self.z_offset]))

    @classmethod
    def load(cls, path) -> "VoxelGrid":
        with np.load(path) as data:
            px, py, pz, z0 = data["pitches"]
            return cls(data["values"], float(px), float(py), float(pz), float(z0))


@dataclass(frozen=True)
class EllipsoidSpec:
    """Ellipsoid with semi-axes ``(a, b, c)`` along x, y, z before tilting.

    The body is tilted in the xz-plane by ``theta`` degrees, measured from the
    z-axis to the c-axis.
    """

    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float] = (2.0, 2.0, 3.0)
    theta: float = 0.0

    def __post_init__(self):
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")
        if not 0 <= self.theta <= 90:
            raise ValueError("theta must lie in [0, 90] degrees")

    def inside(self, x, y, z) -> np.ndarray:
        cx, cy, cz = self.center
        a, b, c = self.semi_axes
        t = np.deg2rad(self.theta)
        dx, dy, dz = x - cx, y - cy, z - cz
        # rotate the point back into the body frame
        u = dx * np.cos(t) - dz * np.sin(t)
        w = dx * np.sin(t) + dz * np.cos(t)
        return (u / a) ** 2 + (dy / b) ** 2 + (w / c) ** 2 <= 1.0

    def half_extents(self) -> tuple[float, float, float]:
        """Axis-aligned bounding-box half widths [um]."""
        a, b, c = self.semi_axes
        t = np.deg2rad(self.theta)
        ex = np.hypot(a * np.cos(t), c * np.sin(t))
        ez = np.hypot(a * np.sin(t), c * np.cos(t))
        return float(ex), float(b), float(ez)


def voxelize_ellipsoid(spec: EllipsoidSpec, config: OpticalConfig) -> VoxelGrid:
    """Occupancy fraction of each voxel, sampled at 2x2x2 sub-centres."""
    grid = VoxelGrid(np.zeros(config.volume_shape), config.pitch_x, config.pitch_y,
                     config.slice_pitch, config.z_offset)
    x, y, z = grid.coordinates()
    ex, ey, ez = spec.half_extents()
    cx, cy, cz = spec.center
    # boundary voxels are the outermost ones: x = dx, L dx; z = z_0, z_N
    if (cx - ex <= x[0] + config.pitch_x / 2 or cx + ex >= x[-1] - config.pitch_x / 2
            or cy - ey <= y[0] + config.pitch_y / 2 or cy + ey >= y[-1] - config.pitch_y / 2
            or cz - ez <= z[0] + config.slice_pitch / 2 or cz + ez >= z[-1] - config.slice_pitch / 2):
        raise ValueError("ellipsoid touches the grid boundary")

    values = np.zeros(config.volume_shape)
    quarter = np.array([-0.25, 0.25])
    for sx in quarter:
        for sy in quarter:
            for sz in quarter:
                X, Y, Z = np.meshgrid(x + sx * config.pitch_x, y + sy * config.pitch_y,
                                      z + sz * config.slice_pitch, indexing="ij")
                values += spec.inside(X, Y, Z)
    return VoxelGrid(values / 8.0, config.pitch_x, config.pitch_y, config.slice_pitch,
                     config.z_offset)


def _check_grid(grid: VoxelGrid, config: OpticalConfig):
    if grid.shape != config.volume_shape:
        raise ValueError(f"grid shape {grid.shape} does not match config {config.volume_shape}")


def multislice_hologram(grid: VoxelGrid, phi: float, incident_amplitude: float,
                        config: OpticalConfig) -> np.ndarray:
    """Hologram ``|U_0|^2`` of a voxel object lit by a uniform plane wave."""
    _check_grid(grid, config)
    u0 = multislice(grid.values, phi, plane_wave(config, incident_amplitude), config)
    return intensity(u0)


def phase_object_hologram(phase_map: np.ndarray, distance: float, incident_amplitude: float,
                          config: OpticalConfig) -> np.ndarray:
    """Hologram of a thin phase screen recorded ``distance`` um downstream."""
    phase_map = np.asarray(phase_map, dtype=np.float64)
    if phase_map.shape != config.shape:
        raise ValueError("phase map shape does not match config")
    if np.abs(phase_map).max(initial=0) > np.pi + 1e-12:
        raise ValueError("phase values must lie within [-pi, pi]")
    u = apply_phase_slice(plane_wave(config, incident_amplitude), phase_map, 1.0)
    return intensity(asm_propagate(u, distance, config))


def add_noise(hologram: np.ndarray, relative_sigma: float, seed: int,
              reference: float | None = None) -> np.ndarray:
    """Additive Gaussian noise with ``sigma = relative_sigma * reference``.

    ``reference`` defaults to the median of the hologram (its background level).
    The result is clipped at zero.
    """
    rng = np.random.default_rng(seed)
    if reference is None:
        reference = float(np.median(hologram))
    noisy = hologram + rng.normal(0.0, relative_sigma * reference, size=hologram.shape)
    return np.clip(noisy, 0.0, None)


def ensemble_average(frames) -> np.ndarray:
    """Pointwise mean of a stack of equally sized frames."""
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if not frames:
        raise ValueError("need at least one frame")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ValueError("frames differ in shape")
    return np.mean(np.stack(frames), axis=0)


def background_subtract(raw: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Normalise a raw hologram by an (ensemble-averaged) background image."""
    raw = np.asarray(raw, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if raw.shape != background.shape:
        raise ValueError("raw and background differ in shape")
    if np.any(background <= 0):
        raise ValueError("background must be strictly positive")
    return np.clip(raw / background, 0.0, None)


# 7x7 glyphs standing in for the three letter-shaped phase objects.
_GLYPHS = {
    "alpha": [
        ".......",
        ".##..#.",
        "#..#.#.",
        "#...#..",
        "#..#.#.",
        ".##...#",
        ".......",
    ],
    "beta": [
        ".###...",
        ".#..#..",
        ".###...",
        ".#..#..",
        ".#..#..",
        ".###...",
        ".#.....",
    ],
    "gamma": [
        ".......",
        "#....#.",
        ".#..#..",
        "..##...",
        "..#....",
        "..#....",
        "..#....",
    ],
}


def glyph_mask(name: str, scale: int) -> np.ndarray:
    """Binary ``(7 scale, 7 scale)`` mask of a blocky glyph, x on axis 0."""
    rows = _GLYPHS[name]
    cells = np.array([[ch == "#" for ch in row] for row in rows], dtype=np.float64)
    return np.kron(cells, np.ones((scale, scale))).T


def three_phase_objects(config: OpticalConfig, shifts=(np.pi / 2, np.pi / 3, np.pi / 6),
                        scale: int | None = None) -> np.ndarray:
    """Phase map with three glyph-shaped objects placed side by side."""
    L, M = config.shape
    if scale is None:
        scale = max(1, min(L, M) // 32)
    phase = np.zeros(config.shape)
    size = 7 * scale
    gap = max(scale, (L - 3 * size) // 4)
    y0 = (M - size) // 2
    for n, (name, shift) in enumerate(zip(("alpha", "beta", "gamma"), shifts)):
        x0 = gap + n * (size + gap)
        if x0 + size > L:
            raise ValueError("field too small for three glyphs at this scale")
        phase[x0:x0 + size, y0:y0 + size] += shift * glyph_mask(name, scale)
    return phase
