"""Scientific read-outs of a reconstructed object grid.

Refractive-index maps, isosurface meshes, moment-based pose of an
ellipsoidal body, and frame-to-frame tracking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._mc_tables import CORNERS, EDGE_MASKS, EDGES, TRIANGLES
from .synth import VoxelGrid
from .wavefield import OpticalConfig


class NoObjectError(ValueError):
    """Too few voxels above threshold to measure anything."""


def refractive_index_map(o_star: VoxelGrid, phi_star: float, config: OpticalConfig) -> np.ndarray:
    """``n = n_med + lambda phi o / (2 pi dz)`` on every voxel."""
    if not np.isfinite(phi_star):
        raise ValueError("phi must be finite")
    o = o_star.values if isinstance(o_star, VoxelGrid) else np.asarray(o_star, dtype=np.float64)
    return config.n_med + config.wavelength * phi_star * o / (2 * np.pi * config.slice_pitch)


# ---------------------------------------------------------------------------
# marching cubes


@dataclass
class TriMesh:
    vertices: np.ndarray   # (V, 3) float, um
    triangles: np.ndarray  # (F, 3) int

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Undirected edges with their multiplicity, shape ``(E, 3)``: ``(a, b, count)``."""
        if self.n_triangles == 0:
            return np.zeros((0, 3), dtype=np.int64)
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return np.column_stack([uniq, counts])

    def is_watertight(self) -> bool:
        e = self.edges()
        return len(e) > 0 and bool(np.all(e[:, 2] == 2))

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def area(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())

    def volume(self) -> float:
        """Signed enclosed volume (positive for outward-facing triangles)."""
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def marching_cubes(grid: VoxelGrid, iso: float = 0.5) -> TriMesh:
    """Triangulate the ``iso`` level set of a voxel grid.

    Vertices are placed by linear interpolation along cell edges and shared
    between neighbouring cells, so closed surfaces come out watertight.
    Triangles face away from the region where ``o > iso``. Coordinates are
    physical voxel-centre positions in um.
    """
    if not 0 < iso < 1:
        raise ValueError("iso level must lie in (0, 1)")
    values = grid.values if isinstance(grid, VoxelGrid) else np.asarray(grid, dtype=np.float64)
    if min(values.shape) < 2:
        raise ValueError("grid needs at least 2 samples per axis")
    if isinstance(grid, VoxelGrid):
        x, y, z = grid.coordinates()
    else:
        x, y, z = (np.arange(n, dtype=np.float64) for n in values.shape)
    nx, ny, nz = values.shape
    below = values < iso

    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(CORNERS):
        case |= below[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << bit
    active = np.argwhere((case != 0) & (case != 255))

    vertex_ids: dict = {}
    verts: list = []
    tris: list = []

    def edge_vertex(i, j, k, e):
        (ax, ay, az), (bx, by, bz) = CORNERS[EDGES[e][0]], CORNERS[EDGES[e][1]]
        p = (i + ax, j + ay, k + az)
        q = (i + bx, j + by, k + bz)
        vp, vq = values[p], values[q]
        t = 0.5 if vq == vp else (iso - vp) / (vq - vp)
        # a crossing exactly on a sample is shared by every edge meeting there
        if t == 0.0:
            key = p
        elif t == 1.0:
            key = q
        else:
            key = (p, q) if p < q else (q, p)
        vid = vertex_ids.get(key)
        if vid is None:
            pos = np.array([x[p[0]], y[p[1]], z[p[2]]], dtype=np.float64)
            end = np.array([x[q[0]], y[q[1]], z[q[2]]], dtype=np.float64)
            vid = len(verts)
            verts.append(pos + t * (end - pos))
            vertex_ids[key] = vid
        return vid

    for i, j, k in active:
        c = int(case[i, j, k])
        if not EDGE_MASKS[c]:
            continue
        tri = TRIANGLES[c]
        for n in range(0, len(tri), 3):
            a = edge_vertex(i, j, k, tri[n])
            b = edge_vertex(i, j, k, tri[n + 1])
            d = edge_vertex(i, j, k, tri[n + 2])
            if a != b and b != d and a != d:
                tris.append((a, b, d))

    mesh = TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(tris, dtype=np.int64).reshape(-1, 3))
    return _drop_degenerate(mesh)


def _drop_degenerate(mesh: TriMesh) -> TriMesh:
    if mesh.n_triangles == 0:
        return mesh
    a, b, c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
    keep = np.linalg.norm(np.cross(b - a, c - a), axis=1) > 0
    return TriMesh(mesh.vertices, mesh.triangles[keep])


def export_mesh(mesh: TriMesh, path) -> None:
    """ASCII Wavefront OBJ: ``v x y z`` lines then 1-based ``f i j k`` lines."""
    with open(path, "w") as fh:
        fh.write("# holomorph isosurface, units: um\n")
        for vx, vy, vz in mesh.vertices:
            fh.write(f"v {vx:.6f} {vy:.6f} {vz:.6f}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def read_obj(path) -> TriMesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# pose


@dataclass(frozen=True)
class PoseMeasurement:
    theta: float          # degrees from the z-axis, folded into [0, 90]
    semi_major: float     # um
    semi_minor: float     # um
    centroid: tuple       # (x, y, z) um
    volume: float         # um^3
    semi_axes: tuple = ()  # all three, descending
    degenerate: bool = False


def measure_pose(grid: VoxelGrid, threshold: float = 0.5) -> PoseMeasurement:
    """Orientation and semi-axes from the second moments of the object voxels.

    Voxels with ``o >= threshold`` are weighted by ``o``. For a solid
    ellipsoid the covariance eigenvalues are ``a^2 / 5``, so each semi-axis
    is ``sqrt(5 lambda)``. ``theta`` is the angle between the dominant axis
    and z; the volume is ``sum(o) dx dy dz`` over the whole grid.
    """
    values = grid.values
    mask = values >= threshold
    if int(mask.sum()) < 10:
        raise NoObjectError("fewer than 10 voxels above threshold")
    x, y, z = grid.coordinates()
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    w = values[mask]
    pts = np.column_stack([X[mask], Y[mask], Z[mask]])
    total = w.sum()
    centroid = (w[:, None] * pts).sum(axis=0) / total
    d = pts - centroid
    cov = (w[:, None, None] * (d[:, :, None] * d[:, None, :])).sum(axis=0) / total
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    degenerate = bool(evals[0] - evals[-1] <= 1e-9 * max(evals[0], 1e-300))
    if degenerate:
        theta = 0.0
    else:
        theta = float(np.degrees(np.arccos(min(1.0, abs(evecs[2, 0])))))
    axes = tuple(float(np.sqrt(5 * max(ev, 0.0))) for ev in evals)
    voxel = grid.pitch_x * grid.pitch_y * grid.pitch_z
    return PoseMeasurement(theta, axes[0], axes[-1], tuple(float(c) for c in centroid),
                           float(values.sum() * voxel), axes, degenerate)


@dataclass(frozen=True)
class TrackPoint:
    frame: int
    time: float
    pose: PoseMeasurement
    displacement: float  # um moved since the previous frame (nan for the first)
    speed: float         # um/s (nan for the first)


def track_sequence(grids, frame_interval: float, threshold: float = 0.5) -> list[TrackPoint]:
    """Per-frame pose and centroid speed over a sequence of grids."""
    grids = list(grids)
    if not grids:
        raise ValueError("need at least one frame")
    if not frame_interval > 0:
        raise ValueError("frame_interval must be positive")
    out = []
    prev = None
    for n, grid in enumerate(grids):
        pose = measure_pose(grid, threshold)
        if prev is None:
            disp = speed = float("nan")
        else:
            disp = float(np.linalg.norm(np.subtract(pose.centroid, prev.centroid)))
            speed = disp / frame_interval
        out.append(TrackPoint(n, n * frame_interval, pose, disp, speed))
        prev = pose
    return out


TRACK_COLUMNS = ("frame", "time_s", "x_um", "y_um", "z_um", "theta_deg", "semi_major_um",
                 "semi_minor_um", "volume_um3", "speed_um_s")


def write_track_csv(track, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_COLUMNS)
        for p in track:
            cx, cy, cz = p.pose.centroid
            w.writerow([p.frame, f"{p.time:.6g}", f"{cx:.6f}", f"{cy:.6f}", f"{cz:.6f}",
                        f"{p.pose.theta:.4f}", f"{p.pose.semi_major:.6f}",
                        f"{p.pose.semi_minor:.6f}", f"{p.pose.volume:.6f}",
                        "" if np.isnan(p.speed) else f"{p.speed:.6f}"])
    finally:
        if own:
            fh.close()
