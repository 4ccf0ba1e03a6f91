"""Two-stage fitting of the neural field to a single hologram.

Stage one pulls the network towards a Gaussian blob at the autofocus
estimate. Stage two runs the hologram through the thin-screen propagation
model and minimises the intensity mismatch at the sensor plus the
boundary-face penalty, training the network, the global phase delay ``phi``
and the incident field ``U_N`` together with Adam.

Gradients through the optics are written out by hand. For a real loss of a
complex variable ``u`` the code carries ``G = dL/dRe(u) + i dL/dIm(u)``; with
that convention the adjoint of a linear map is its Hermitian adjoint and the
adjoint of ``|u|^2`` is ``2 u dL/dI``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neural_field as nf
from .io import read_hfd, write_hfd
from .wavefield import (
    OpticalConfig,
    apply_phase_slice,
    asm_adjoint,
    asm_propagate,
    asm_transfer,
    intensity,
)

log = logging.getLogger(__name__)

# activations kept in memory across a train step; above this, recompute per slice
CACHE_BUDGET_BYTES = 1 << 30


class DivergenceError(RuntimeError):
    """Loss became non-finite; ``checkpoint`` names the last good bundle, if any."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class PriorSpec:
    """Centre ``(x', y', z')`` and widths ``(sx, sy, sz)`` of the Gaussian prior [um]."""

    center: tuple[float, float, float]
    widths: tuple[float, float, float]

    def __post_init__(self):
        if min(self.widths) <= 0:
            raise ValueError("prior widths must be positive")

    @classmethod
    def default(cls, center, config: OpticalConfig, voxels: float = 3.0) -> "PriorSpec":
        return cls(tuple(center), (voxels * config.pitch_x, voxels * config.pitch_y,
                                   voxels * config.slice_pitch))


@dataclass
class LossRecord:
    stage: str
    l_prior: float = float("nan")
    l_data: float = float("nan")
    l_bc: float = float("nan")


@dataclass
class TrainState:
    """Everything a run owns: parameters, optimiser moments and loss history.

    ``window`` optionally restricts the network to a block of in-plane pixels
    ``(slice_x, slice_y)``; object values outside it are held at zero and the
    boundary penalty acts on the block's faces.

    ``incident_mode`` is ``"field"`` (every pixel of ``U_N`` trained) or
    ``"uniform"`` (one complex amplitude shared by all pixels).
    """

    net: nf.NeuralField
    phi: float
    incident: np.ndarray
    config: OpticalConfig
    window: tuple | None = None
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    adam_step: int = 0
    stage: str = "init"
    history: list = field(default_factory=list)
    bc_weight: float = 1.0
    dtype: str = "float64"
    clip_norm: float | None = None
    incident_mode: str = "field"

    @property
    def epoch(self) -> int:
        return len(self.history)

    def window_slices(self):
        if self.window is None:
            return (slice(0, self.config.width), slice(0, self.config.height))
        return self.window

    def window_shape(self) -> tuple[int, int]:
        sx, sy = self.window_slices()
        return (len(range(*sx.indices(self.config.width))),
                len(range(*sy.indices(self.config.height))))


def make_window(center_um, half_width_um, config: OpticalConfig):
    """In-plane pixel block of half width ``half_width_um`` around ``center_um``.

    ``half_width_um`` is a scalar or an ``(hx, hy)`` pair. The block is
    clipped to the field and always keeps at least 3 pixels a side.
    """
    hx, hy = np.broadcast_to(np.asarray(half_width_um, dtype=np.float64), (2,))
    out = []
    for c, half, pitch, size in ((center_um[0], hx, config.pitch_x, config.width),
                                 (center_um[1], hy, config.pitch_y, config.height)):
        j = int(round(c / pitch)) - 1
        h = max(1, int(round(half / pitch)))
        lo, hi = max(j - h, 0), min(j + h + 1, size)
        out.append(slice(lo, hi))
    return tuple(out)


def volume_config(base: OpticalConfig, z_prime: float, slab_half_depth: float | None = None
                  ) -> OpticalConfig:
    """Choose the depth extent of the training volume from the focus depth.

    Without ``slab_half_depth`` the volume runs from the sensor to
    ``z' + max(8 dz, 0.2 z')``. With it, the volume is a slab of that half
    depth centred on the slice nearest ``z'``.
    """
    dz = base.slice_pitch
    if slab_half_depth is None:
        z_top = z_prime + max(8 * dz, 0.2 * z_prime)
        return base.with_(depth_slices=max(2, int(round(z_top / dz))), z_offset=0.0)
    half = max(1, int(round(slab_half_depth / dz)))
    centre = int(round(z_prime / dz))
    bottom = max(centre - half, 0)
    return base.with_(depth_slices=2 * half if centre >= half else centre + half,
                      z_offset=bottom * dz)


def init_state(hologram: np.ndarray, net: nf.NeuralField, config: OpticalConfig,
               phi_init: float, window=None, bc_weight: float = 1.0,
               dtype: str = "float64", incident_mode: str = "field") -> TrainState:
    """Start a run with ``U_N = sqrt(mean(H))`` everywhere and zeroed moments."""
    hologram = np.asarray(hologram, dtype=np.float64)
    if hologram.shape != config.shape:
        raise ValueError(f"hologram shape {hologram.shape} does not match config {config.shape}")
    mean = float(hologram.mean())
    if not mean > 0:
        raise ValueError("hologram mean intensity must be positive")
    incident = np.full(config.shape, np.sqrt(mean), dtype=complex)
    if incident_mode not in ("field", "uniform"):
        raise ValueError(f"unknown incident mode {incident_mode!r}")
    return TrainState(net.copy(), float(phi_init), incident, config, window=window,
                      bc_weight=float(bc_weight), dtype=dtype, incident_mode=incident_mode)


def gaussian_prior(prior: PriorSpec, l, m, i, config: OpticalConfig):
    """Normalised Gaussian evaluated at voxel ``(l dx, m dy, z_i)``."""
    x = np.asarray(l) * config.pitch_x
    y = np.asarray(m) * config.pitch_y
    z = config.z_offset + np.asarray(i) * config.slice_pitch
    (cx, cy, cz), (sx, sy, sz) = prior.center, prior.widths
    return np.exp(-(x - cx) ** 2 / (2 * sx ** 2) - (y - cy) ** 2 / (2 * sy ** 2)
                  - (z - cz) ** 2 / (2 * sz ** 2))


# ---------------------------------------------------------------------------
# losses


def loss_data(u0: np.ndarray, hologram: np.ndarray) -> float:
    """Mean squared difference between ``|U_0|^2`` and the hologram."""
    return float(np.mean((intensity(u0) - hologram) ** 2))


def loss_bc(o: np.ndarray) -> float:
    """Boundary penalty of an ``(L, M, N+1)`` object grid: sum of three face-pair means."""
    L, M, n1 = o.shape
    lx = (np.sum(o[0] ** 2) + np.sum(o[-1] ** 2)) / (2 * M * n1)
    ly = (np.sum(o[:, 0] ** 2) + np.sum(o[:, -1] ** 2)) / (2 * L * n1)
    lz = (np.sum(o[:, :, 0] ** 2) + np.sum(o[:, :, -1] ** 2)) / (2 * L * M)
    return float(lx + ly + lz)


def loss_bc_grad(o: np.ndarray) -> np.ndarray:
    L, M, n1 = o.shape
    g = np.zeros_like(o)
    g[0] += 2 * o[0] / (2 * M * n1)
    g[-1] += 2 * o[-1] / (2 * M * n1)
    g[:, 0] += 2 * o[:, 0] / (2 * L * n1)
    g[:, -1] += 2 * o[:, -1] / (2 * L * n1)
    g[:, :, 0] += 2 * o[:, :, 0] / (2 * L * M)
    g[:, :, -1] += 2 * o[:, :, -1] / (2 * L * M)
    return g


def loss_prior(o: np.ndarray, f: np.ndarray) -> float:
    return float(np.mean((o - f) ** 2))


# ---------------------------------------------------------------------------
# optimiser


def adam_update(param, grad, m, v, t: int, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8):
    """One Adam step at (1-based) step ``t``; returns ``(param, m, v)`` as new arrays."""
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad ** 2
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def _blocks(state: TrainState, stage: str) -> dict:
    """Current values of the blocks trained in ``stage``, all as real arrays."""
    blocks = dict(state.net.params)
    if stage == "train":
        blocks["phi"] = np.array(state.phi)
        if state.incident_mode == "uniform":
            c = state.incident.flat[0]
            blocks["incident"] = np.array([c.real, c.imag])
        else:
            blocks["incident"] = state.incident.view(np.float64).reshape(*state.incident.shape, 2)
    return blocks


def _apply_adam(state: TrainState, grads: dict, lr: float, stage: str) -> None:
    if state.stage != stage:
        state.m, state.v, state.adam_step = {}, {}, 0
        state.stage = stage
    if state.clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
        if norm > state.clip_norm:
            grads = {k: g * (state.clip_norm / norm) for k, g in grads.items()}
    state.adam_step += 1
    t = state.adam_step
    blocks = _blocks(state, stage)
    new = {}
    for name, value in blocks.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        new[name], state.m[name], state.v[name] = adam_update(value, g, m, v, t, lr)
    state.net.params = {k: new[k] for k in nf.PARAM_NAMES}
    if stage == "train":
        state.phi = float(new["phi"])
        pairs = np.ascontiguousarray(new["incident"])
        if state.incident_mode == "uniform":
            state.incident = np.full(state.config.shape, pairs[0] + 1j * pairs[1])
        else:
            state.incident = pairs[..., 0] + 1j * pairs[..., 1]


# ---------------------------------------------------------------------------
# network over the volume


def _slice_batches(state: TrainState):
    """Normalised coordinates of the windowed voxels, one batch per slice."""
    sx, sy = state.window_slices()
    return [nf.slice_coords(state.config, i, (sx, sy)) for i in range(state.config.depth_slices + 1)]


def _cache_fits(state: TrainState) -> bool:
    wx, wy = state.window_shape()
    n = wx * wy * (state.config.depth_slices + 1)
    itemsize = np.dtype(state.dtype).itemsize
    return n * nf.WIDTH * 7 * itemsize < CACHE_BUDGET_BYTES


def object_volume(state: TrainState, keep_cache: bool = False):
    """Network output on the full ``(L, M, N+1)`` grid (zero outside the window)."""
    cfg = state.config
    sx, sy = state.window_slices()
    wx, wy = state.window_shape()
    o = np.zeros(cfg.volume_shape)
    caches = []
    for i, coords in enumerate(_slice_batches(state)):
        vals, cache = nf.forward(state.net, coords, dtype=np.dtype(state.dtype),
                                 keep_cache=keep_cache)
        o[sx, sy, i] = vals.reshape(wx, wy)
        caches.append(cache)
    return o, caches


def _net_backward(state: TrainState, do: np.ndarray, caches) -> dict:
    """Accumulate network gradients for per-voxel upstream ``do`` slice by slice."""
    sx, sy = state.window_slices()
    grads = nf.zeros_like_params(state.net)
    batches = None
    for i in range(state.config.depth_slices + 1):
        upstream = do[sx, sy, i].ravel()
        if not np.any(upstream):
            continue
        cache = caches[i] if caches and caches[i] is not None else None
        if cache is None:
            if batches is None:
                batches = _slice_batches(state)
            _, cache = nf.forward(state.net, batches[i], dtype=np.dtype(state.dtype))
        for k, g in nf.backward(state.net, cache, upstream).items():
            grads[k] += g
    return grads


# ---------------------------------------------------------------------------
# stage one: prior


def prior_volume(prior: PriorSpec, state: TrainState) -> np.ndarray:
    cfg = state.config
    l = np.arange(1, cfg.width + 1)[:, None, None]
    m = np.arange(1, cfg.height + 1)[None, :, None]
    i = np.arange(cfg.depth_slices + 1)[None, None, :]
    return gaussian_prior(prior, l, m, i, cfg)


def pretrain(state: TrainState, prior: PriorSpec, epochs: int, lr: float = 1e-3) -> TrainState:
    """Fit the network to the Gaussian prior (network parameters only)."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    cfg = state.config
    sx, sy = state.window_slices()
    target = prior_volume(prior, state)
    batches = _slice_batches(state)
    dtype = np.dtype(state.dtype)
    count = target[sx, sy].size
    for _ in range(epochs):
        grads = nf.zeros_like_params(state.net)
        sq = 0.0
        for i, coords in enumerate(batches):
            o, cache = nf.forward(state.net, coords, dtype=dtype)
            resid = o - target[sx, sy, i].ravel()
            sq += float(resid @ resid)
            for k, g in nf.backward(state.net, cache, 2 * resid / count).items():
                grads[k] += g
        loss = sq / count
        if not np.isfinite(loss):
            raise DivergenceError(f"prior loss became {loss} at epoch {state.epoch}")
        state.history.append(LossRecord("pretrain", l_prior=loss))
        _apply_adam(state, grads, lr, "pretrain")
    log.info("pretrain done: L_prior=%.3e after %d epochs (grid %s)", loss, epochs,
             cfg.volume_shape)
    return state


# ---------------------------------------------------------------------------
# stage two: physics


@dataclass
class Forward:
    u0: np.ndarray
    o: np.ndarray
    arriving: list  # U_i entering slices N..1 (before modulation)
    caches: list


def forward_simulate(state: TrainState, keep_cache: bool | None = None) -> Forward:
    """Network volume followed by the thin-screen recursion down to the sensor."""
    if keep_cache is None:
        keep_cache = _cache_fits(state)
    o, caches = object_volume(state, keep_cache=keep_cache)
    cfg = state.config
    kernel = asm_transfer(cfg, cfg.slice_pitch)
    u = state.incident.astype(complex)
    arriving = []
    for i in range(cfg.depth_slices, 0, -1):
        arriving.append(u)
        u = asm_propagate(apply_phase_slice(u, o[:, :, i], state.phi), cfg.slice_pitch, cfg, kernel)
    if cfg.z_offset > 0:
        u = asm_propagate(u, cfg.z_offset, cfg)
    return Forward(u, o, arriving, caches)


def losses_and_grads(state: TrainState, hologram: np.ndarray):
    """Total loss pieces and gradients of ``L_data + w L_bc`` for every trained block."""
    cfg = state.config
    hologram = np.asarray(hologram, dtype=np.float64)
    fwd = forward_simulate(state)
    I0 = intensity(fwd.u0)
    resid = I0 - hologram
    l_data = float(np.mean(resid ** 2))
    sx, sy = state.window_slices()
    o_win = fwd.o[sx, sy]
    l_bc = loss_bc(o_win)

    g = 2 * fwd.u0 * (2 * resid / resid.size)
    if cfg.z_offset > 0:
        g = asm_adjoint(g, cfg.z_offset, cfg)
    kernel = asm_transfer(cfg, cfg.slice_pitch)
    do = np.zeros_like(fwd.o)
    dphi = 0.0
    # walk the recursion backwards: slice 1 first, slice N last
    for i in range(1, cfg.depth_slices + 1):
        u_in = fwd.arriving[cfg.depth_slices - i]
        rot = np.exp(1j * state.phi * fwd.o[:, :, i])
        g_v = asm_adjoint(g, cfg.slice_pitch, cfg, kernel)
        v = u_in * rot
        dtheta = np.real(np.conj(g_v) * 1j * v)
        do[:, :, i] = state.phi * dtheta
        dphi += float(np.sum(dtheta * fwd.o[:, :, i]))
        g = g_v * np.conj(rot)
    g_incident = g

    do[sx, sy] += state.bc_weight * loss_bc_grad(o_win)
    grads = _net_backward(state, do, fwd.caches)
    grads["phi"] = np.array(dphi)
    if state.incident_mode == "uniform":
        total = g_incident.sum()
        grads["incident"] = np.array([total.real, total.imag])
    else:
        grads["incident"] = np.stack([g_incident.real, g_incident.imag], axis=-1)
    return l_data, l_bc, grads, fwd


def train_step(state: TrainState, hologram: np.ndarray, lr: float = 1e-4):
    """One Adam step on ``L_data + w L_bc``; returns ``(state, L_data, L_bc)``."""
    l_data, l_bc, grads, _ = losses_and_grads(state, hologram)
    total = l_data + state.bc_weight * l_bc
    if not np.isfinite(total):
        raise DivergenceError(f"loss became {total} at epoch {state.epoch}")
    state.history.append(LossRecord("train", l_data=l_data, l_bc=l_bc))
    _apply_adam(state, grads, lr, "train")
    return state, l_data, l_bc


def train(state: TrainState, hologram: np.ndarray, epochs: int = 700, lr: float = 1e-4,
          checkpoint_every: int | None = None, out_dir=None) -> TrainState:
    """Run ``epochs`` train steps, checkpointing into ``out_dir`` when given."""
    last_good = None
    for n in range(epochs):
        try:
            _, l_data, l_bc = train_step(state, hologram, lr)
        except DivergenceError as err:
            err.checkpoint = last_good
            raise
        if out_dir is not None and checkpoint_every and (n + 1) % checkpoint_every == 0:
            last_good = save_checkpoint(state, Path(out_dir) / "checkpoint")
        if n % 50 == 0 or n == epochs - 1:
            log.info("epoch %d: L_data=%.3e L_bc=%.3e phi=%.4f", state.epoch, l_data, l_bc,
                     state.phi)
    if out_dir is not None and epochs:
        save_checkpoint(state, Path(out_dir) / "checkpoint")
        write_loss_csv(state, Path(out_dir) / "loss.csv")
    return state


# ---------------------------------------------------------------------------
# checkpoints


def write_loss_csv(state: TrainState, path) -> None:
    """``epoch,L_Data,L_BC`` rows for the physics stage (global epoch numbering)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "L_Data", "L_BC"])
        for epoch, rec in enumerate(state.history):
            if rec.stage == "train":
                w.writerow([epoch, repr(rec.l_data), repr(rec.l_bc)])


def _config_dict(config: OpticalConfig) -> dict:
    return {k: getattr(config, k) for k in OpticalConfig.__dataclass_fields__}


def _window_to_json(window):
    if window is None:
        return None
    return [[s.start, s.stop] for s in window]


def save_checkpoint(state: TrainState, directory) -> Path:
    """Write the checkpoint bundle into ``directory`` (created if missing).

    Contents: ``network.hnn`` (HNN1), ``phi.f64``, ``incident.hfd`` (HFD1
    complex, f32), ``incident.c128`` (exact copy for resuming), ``adam.bin``
    and ``manifest.json``.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nf.save(state.net, d / "network.hnn")
    (d / "phi.f64").write_bytes(np.array(state.phi, dtype="<f8").tobytes())
    write_hfd(d / "incident.hfd", state.incident, state.config.pitch_x, state.config.pitch_y)
    (d / "incident.c128").write_bytes(np.ascontiguousarray(state.incident, dtype="<c16").tobytes())
    names = sorted(state.m)
    with open(d / "adam.bin", "wb") as fh:
        for name in names:
            fh.write(np.ascontiguousarray(state.m[name], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(state.v[name], dtype="<f8").tobytes())
    manifest = {
        "seed": state.net.seed,
        "fourier_scale": state.net.fourier_scale,
        "config": _config_dict(state.config),
        "window": _window_to_json(state.window),
        "epoch": state.epoch,
        "stage": state.stage,
        "adam_step": state.adam_step,
        "adam_blocks": [[n, list(np.shape(state.m[n]))] for n in names],
        "phi": state.phi,
        "bc_weight": state.bc_weight,
        "dtype": state.dtype,
        "incident_mode": state.incident_mode,
        "history": [[r.stage, r.l_prior, r.l_data, r.l_bc] for r in state.history],
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return d


def load_checkpoint(directory) -> TrainState:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    config = OpticalConfig(**manifest["config"])
    net = nf.load(d / "network.hnn")
    phi = float(np.frombuffer((d / "phi.f64").read_bytes(), dtype="<f8")[0])
    raw = (d / "incident.c128").read_bytes() if (d / "incident.c128").exists() else None
    if raw is not None:
        incident = np.frombuffer(raw, dtype="<c16").reshape(config.shape).astype(complex)
    else:
        incident = read_hfd(d / "incident.hfd").data.astype(complex)
    m, v = {}, {}
    blob = (d / "adam.bin").read_bytes()
    pos = 0
    for name, shape in manifest["adam_blocks"]:
        count = int(np.prod(shape, dtype=np.int64)) * 8
        m[name] = np.frombuffer(blob[pos:pos + count], dtype="<f8").reshape(shape).copy()
        pos += count
        v[name] = np.frombuffer(blob[pos:pos + count], dtype="<f8").reshape(shape).copy()
        pos += count
    window = manifest["window"]
    if window is not None:
        window = tuple(slice(a, b) for a, b in window)
    history = [LossRecord(s, a, b, c) for s, a, b, c in manifest["history"]]
    return TrainState(net, phi, incident, config, window=window, m=m, v=v,
                      adam_step=manifest["adam_step"], stage=manifest["stage"],
                      history=history, bc_weight=manifest["bc_weight"], dtype=manifest["dtype"],
                      incident_mode=manifest.get("incident_mode", "field"))
