"""``holomorph`` command line: synthesize, preprocess, focus, reconstruct,
measure, track and export.

Run configuration comes from an INI file (``--config``) with the sections
``[optics]``, ``[focus]``, ``[prior]``, ``[network]`` and ``[training]``;
command-line flags override file values. See the README for every key.

Exit codes: 0 success, 2 usage or configuration error, 3 malformed input
file, 4 training diverged, 5 no object detected.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import autofocus, morphology, synth, trainer
from . import neural_field as nf
from .io import FormatError, read_image, write_hfd, write_pgm
from .wavefield import OpticalConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_DIVERGED = 4
EXIT_NO_OBJECT = 5

log = logging.getLogger("holomorph")


class ConfigError(ValueError):
    """A required configuration key is missing or malformed."""


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

OPTICS_KEYS = {
    "wavelength": float, "n_med": float, "pitch_x": float, "pitch_y": float,
    "slice_pitch": float, "width": int, "height": int, "depth_slices": int, "z_offset": float,
}

DEFAULTS = {
    "focus": {"z_min": 10.0, "z_max": 150.0, "z_step": 1.0, "roi_half_width": 12.0},
    "network": {"seed": 0, "fourier_scale": 10.0},
    "training": {
        "pretrain_epochs": 300, "pretrain_lr": 1e-3, "train_epochs": 700, "train_lr": 1e-4,
        "bc_weight": 1.0, "checkpoint_every": 0, "dtype": "float64", "incident_mode": "field",
        "n_obj": 1.4, "window_half_width": 0.0, "slab_half_depth": 0.0, "iso": 0.5,
    },
}


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        except configparser.Error as err:
            raise ConfigError(f"malformed config {path}: {err}") from err
    return cp


def _get(cp, section, key, kind, default=None, required=False):
    if cp.has_option(section, key):
        raw = cp.get(section, key)
        try:
            return kind(raw)
        except ValueError as err:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from err
    if required:
        raise ConfigError(f"missing config key [{section}] {key}")
    if default is None:
        default = DEFAULTS.get(section, {}).get(key)
    return default


def optics_from(cp, shape=None, pitch=None) -> OpticalConfig:
    """Optical configuration from ``[optics]``; grid size falls back to the input."""
    kw = {}
    for key, kind in OPTICS_KEYS.items():
        value = _get(cp, "optics", key, kind)
        if value is not None:
            kw[key] = value
    if shape is not None:
        for key, n in zip(("width", "height"), shape):
            if key in kw and kw[key] != n:
                raise ConfigError(f"[optics] {key}={kw[key]} does not match the input ({n})")
            kw[key] = n
    if pitch is not None:
        for key, p in zip(("pitch_x", "pitch_y"), pitch):
            if key not in kw and np.isfinite(p):
                kw[key] = float(p)
    try:
        return OpticalConfig(**kw)
    except ValueError as err:
        raise ConfigError(f"[optics] {err}") from err


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cp) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = _get(cp, "network", "seed", int) if args.seed is None else args.seed
    if args.kind == "phase":
        base = optics_from(cp)
        truth = synth.three_phase_objects(base, shifts=tuple(args.shifts))
        holo = synth.phase_object_hologram(truth, args.distance, args.amplitude, base)
        write_hfd(out / "truth_phase.hfd", truth.astype(np.float32), base.pitch_x, base.pitch_y)
        np.save(out / "truth_phase.npy", truth)
    else:
        center = args.center
        base = optics_from(cp)
        if center is None:
            center = ((base.width + 1) * base.pitch_x / 2, (base.height + 1) * base.pitch_y / 2,
                      args.depth)
        spec = synth.EllipsoidSpec(tuple(center), tuple(args.semi_axes), args.theta)
        # volume from the sensor to a few slices above the body
        top = spec.center[2] + spec.half_extents()[2] + 4 * base.slice_pitch
        cfg = base.with_(depth_slices=int(math.ceil(top / base.slice_pitch)), z_offset=0.0)
        grid = synth.voxelize_ellipsoid(spec, cfg)
        phi = cfg.phase_shift(args.n_obj)
        holo = synth.multislice_hologram(grid, phi, args.amplitude, cfg)
        grid.save(out / "truth_grid.npz")
        base = cfg
    if args.sigma:
        holo = synth.add_noise(holo, args.sigma, seed)
    write_hfd(out / "hologram.hfd", holo.astype(np.float32), base.pitch_x, base.pitch_y)
    write_pgm(out / "hologram.pgm", holo)
    print(json.dumps({"hologram": str(out / "hologram.hfd"), "shape": list(holo.shape)}))
    return EXIT_OK


def cmd_preprocess(args, cp) -> int:
    raws = [read_image(p).data for p in args.raw]
    backs = [read_image(p).data for p in args.background]
    shapes = {a.shape for a in raws + backs}
    if len(shapes) != 1:
        raise UsageError(f"input images have mismatched dimensions: {sorted(shapes)}")
    raw = synth.ensemble_average(raws)
    back = synth.ensemble_average(backs)
    pitch = read_image(args.raw[0])
    px = pitch.pitch_x if np.isfinite(pitch.pitch_x) else _get(cp, "optics", "pitch_x", float, 1.0)
    py = pitch.pitch_y if np.isfinite(pitch.pitch_y) else _get(cp, "optics", "pitch_y", float, 1.0)
    write_hfd(args.out, synth.background_subtract(raw, back).astype(np.float32), px, py)
    return EXIT_OK


def _scan_range(args, cp):
    z_min = args.z_min if args.z_min is not None else _get(cp, "focus", "z_min", float)
    z_max = args.z_max if args.z_max is not None else _get(cp, "focus", "z_max", float)
    step = args.z_step if args.z_step is not None else _get(cp, "focus", "z_step", float)
    return z_min, z_max, step


def _load_hologram(path, cp):
    img = read_image(path)
    holo = np.asarray(img.data, dtype=np.float64)
    return holo, optics_from(cp, holo.shape, (img.pitch_x, img.pitch_y))


def cmd_focus(args, cp) -> int:
    holo, config = _load_hologram(args.hologram, cp)
    roi = _get(cp, "focus", "roi_half_width", float)
    res = autofocus.find_focus(holo, config, *_scan_range(args, cp), roi_half_width=roi or None)
    if args.curve:
        with open(args.curve, "w") as fh:
            fh.write("z_um,tamura\n")
            for z, s in res.metric_curve:
                fh.write(f"{z:.6f},{s:.10g}\n")
    print(json.dumps({"z_prime": res.z_prime, "x_prime": res.x_prime, "y_prime": res.y_prime}))
    return EXIT_OK


def _prior_from(args, cp, config, holo):
    center = args.prior
    if center is None and cp.has_section("prior"):
        center = [_get(cp, "prior", k, float, required=True) for k in ("x", "y", "z")]
    if center is None:
        z_min, z_max, step = _scan_range(args, cp)
        roi = _get(cp, "focus", "roi_half_width", float)
        res = autofocus.find_focus(holo, config, z_min, z_max, step, roi_half_width=roi or None)
        center = [res.x_prime, res.y_prime, res.z_prime]
        log.info("focus: x'=%.2f y'=%.2f z'=%.2f um", *center)
    return tuple(float(c) for c in center)


def _widths(args, cp, config, vol):
    if args.sigma is not None:
        return (args.sigma,) * 3
    if cp.has_section("prior") and cp.has_option("prior", "sigma_x"):
        return tuple(_get(cp, "prior", f"sigma_{a}", float, required=True) for a in "xyz")
    return (3 * config.pitch_x, 3 * config.pitch_y, 3 * vol.slice_pitch)


def cmd_reconstruct(args, cp) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    holo, config = _load_hologram(args.hologram, cp)
    seed = _get(cp, "network", "seed", int) if args.seed is None else args.seed
    scale = _get(cp, "network", "fourier_scale", float)
    tr = {k: _get(cp, "training", k, type(v)) for k, v in DEFAULTS["training"].items()}
    if args.pretrain_epochs is not None:
        tr["pretrain_epochs"] = args.pretrain_epochs
    if args.pretrain_lr is not None:
        tr["pretrain_lr"] = args.pretrain_lr
    if args.train_epochs is not None:
        tr["train_epochs"] = args.train_epochs
    if args.train_lr is not None:
        tr["train_lr"] = args.train_lr
    iso = args.iso if args.iso is not None else tr["iso"]

    ckpt = out / "checkpoint"
    if args.resume:
        if not (ckpt / "manifest.json").exists():
            raise UsageError(f"--resume: no checkpoint in {ckpt}")
        state = trainer.load_checkpoint(ckpt)
        if state.config.shape != holo.shape:
            raise ConfigError("checkpoint grid does not match the hologram")
    else:
        center = _prior_from(args, cp, config, holo)
        if cp.has_option("optics", "depth_slices"):
            vol = config
        else:
            vol = trainer.volume_config(config, center[2], tr["slab_half_depth"] or None)
        prior = trainer.PriorSpec(center, _widths(args, cp, config, vol))
        window = None
        if tr["window_half_width"] > 0:
            window = trainer.make_window(center[:2], tr["window_half_width"], vol)
        net = nf.init(seed, scale)
        state = trainer.init_state(holo, net, vol, vol.phase_shift(tr["n_obj"]), window=window,
                                   bc_weight=tr["bc_weight"], dtype=tr["dtype"],
                                   incident_mode=tr["incident_mode"])
        if tr["pretrain_epochs"] > 0:
            trainer.pretrain(state, prior, tr["pretrain_epochs"], tr["pretrain_lr"])
        trainer.save_checkpoint(state, ckpt)

    done = sum(1 for r in state.history if r.stage == "train")
    remaining = max(tr["train_epochs"] - done, 0)
    try:
        trainer.train(state, holo, remaining, tr["train_lr"],
                      checkpoint_every=tr["checkpoint_every"] or None, out_dir=out)
    except trainer.DivergenceError as err:
        where = f" (last good checkpoint: {err.checkpoint})" if err.checkpoint else ""
        print(f"holomorph: training diverged: {err}{where}", file=sys.stderr)
        return EXIT_DIVERGED
    trainer.save_checkpoint(state, ckpt)
    trainer.write_loss_csv(state, out / "loss.csv")

    o, _ = trainer.object_volume(state)
    vol = state.config
    grid = synth.VoxelGrid(np.clip(o, 0.0, 1.0), vol.pitch_x, vol.pitch_y, vol.slice_pitch,
                           vol.z_offset)
    grid.save(out / "object.npz")
    n_map = morphology.refractive_index_map(grid, state.phi, vol)
    np.save(out / "index.npy", n_map)
    if args.mesh:
        try:
            morphology.export_mesh(morphology.marching_cubes(grid, iso), out / "object.obj")
        except ValueError as err:
            log.warning("mesh skipped: %s", err)
    last = state.history[-1] if state.history else None
    summary = {"epoch": state.epoch, "phi": state.phi}
    if last is not None and last.stage == "train":
        summary.update(L_Data=last.l_data, L_BC=last.l_bc)
    elif last is not None:
        summary.update(L_Prior=last.l_prior)
    print(json.dumps(summary))
    return EXIT_OK


def _pose_json(pose, **extra):
    rec = dict(extra)
    rec.update(theta_deg=pose.theta, semi_major_um=pose.semi_major,
               semi_minor_um=pose.semi_minor, centroid_um=list(pose.centroid),
               volume_um3=pose.volume, semi_axes_um=list(pose.semi_axes),
               degenerate=pose.degenerate)
    return json.dumps(rec)


def cmd_measure(args, cp) -> int:
    for path in args.grids:
        pose = morphology.measure_pose(synth.VoxelGrid.load(path), args.threshold)
        print(_pose_json(pose, grid=str(path)))
    return EXIT_OK


def cmd_track(args, cp) -> int:
    if not args.fps > 0:
        raise UsageError("--fps must be positive")
    grids = [synth.VoxelGrid.load(p) for p in args.grids]
    track = morphology.track_sequence(grids, 1.0 / args.fps, args.threshold)
    if args.out:
        morphology.write_track_csv(track, args.out)
    else:
        morphology.write_track_csv(track, sys.stdout)
    return EXIT_OK


def cmd_export(args, cp) -> int:
    grid = synth.VoxelGrid.load(args.grid)
    mesh = morphology.marching_cubes(grid, args.iso)
    morphology.export_mesh(mesh, args.out)
    print(json.dumps({"vertices": mesh.n_vertices, "triangles": mesh.n_triangles,
                      "watertight": mesh.is_watertight()}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holomorph",
                                description="Single-hologram 3D morphology reconstruction.")
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthetic hologram with ground-truth sidecar")
    s.add_argument("kind", choices=("phase", "ellipsoid"))
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--sigma", type=float, default=0.0,
                   help="relative Gaussian noise (fraction of background)")
    s.add_argument("--amplitude", type=float, default=math.sqrt(0.5))
    s.add_argument("--shifts", type=float, nargs=3, default=(math.pi / 2, math.pi / 3, math.pi / 6))
    s.add_argument("--distance", type=float, default=100.0, help="phase screen depth [um]")
    s.add_argument("--theta", type=float, default=0.0, help="tilt from z [deg]")
    s.add_argument("--depth", type=float, default=50.0, help="ellipsoid centre depth [um]")
    s.add_argument("--center", type=float, nargs=3)
    s.add_argument("--semi-axes", type=float, nargs=3, default=(2.0, 2.0, 3.0))
    s.add_argument("--n-obj", type=float, default=1.4)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="background division with ensemble averaging")
    s.add_argument("--raw", nargs="+", required=True)
    s.add_argument("--background", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    def scan_flags(s):
        s.add_argument("--z-min", type=float)
        s.add_argument("--z-max", type=float)
        s.add_argument("--z-step", type=float)

    s = sub.add_parser("focus", help="autofocus depth and lateral position")
    s.add_argument("hologram")
    scan_flags(s)
    s.add_argument("--curve", help="write the focus curve CSV here")
    s.set_defaults(func=cmd_focus)

    s = sub.add_parser("reconstruct", help="fit the neural field to a hologram")
    s.add_argument("hologram")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    scan_flags(s)
    s.add_argument("--prior", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   help="prior centre [um]; skips autofocus")
    s.add_argument("--sigma", type=float, help="isotropic prior width [um]")
    s.add_argument("--pretrain-epochs", type=int)
    s.add_argument("--pretrain-lr", type=float)
    s.add_argument("--train-epochs", "--epochs", dest="train_epochs", type=int)
    s.add_argument("--train-lr", "--lr", dest="train_lr", type=float)
    s.add_argument("--iso", type=float)
    s.add_argument("--mesh", action="store_true", help="also export object.obj")
    s.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("measure", help="pose of reconstructed grids (JSON lines)")
    s.add_argument("grids", nargs="+")
    s.add_argument("--threshold", type=float, default=0.5)
    s.set_defaults(func=cmd_measure)

    s = sub.add_parser("track", help="pose and speed over a sequence (CSV)")
    s.add_argument("grids", nargs="+")
    s.add_argument("--fps", type=float, required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("export", help="isosurface mesh as OBJ")
    s.add_argument("grid")
    s.add_argument("--iso", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cp = load_config(args.config)
        return args.func(args, cp)
    except (ConfigError, UsageError) as err:
        print(f"holomorph: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as err:
        print(f"holomorph: bad input file: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except (autofocus.NoObjectError, morphology.NoObjectError) as err:
        print(f"holomorph: {err}", file=sys.stderr)
        return EXIT_NO_OBJECT
    except FileNotFoundError as err:
        print(f"holomorph: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
