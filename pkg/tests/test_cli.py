import json

import numpy as np
import pytest

from holomorph import cli, synth
from holomorph.io import read_hfd, write_hfd

CONFIG = """\
[optics]
width = 32
height = 32
pitch_x = 0.5
pitch_y = 0.5

[focus]
z_min = 5
z_max = 20
z_step = 1

[network]
seed = 3
fourier_scale = 4.0

[training]
pretrain_epochs = 3
train_epochs = 4
train_lr = 1e-3
checkpoint_every = 2
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(CONFIG)
    return str(p)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_missing_out_is_usage_error(capsys):
    code, _ = run(capsys, "synth", "phase")
    assert code == cli.EXIT_USAGE


def test_unknown_command(capsys):
    assert run(capsys, "frobnicate")[0] == cli.EXIT_USAGE


def test_synth_phase(tmp_path, capsys, cfg_path):
    code, out = run(capsys, "--config", cfg_path, "synth", "phase", "--out", tmp_path / "p")
    assert code == 0
    H = read_hfd(tmp_path / "p" / "hologram.hfd").data
    truth = np.load(tmp_path / "p" / "truth_phase.npy")
    assert H.shape == truth.shape == (32, 32)
    assert sorted(np.unique(truth)) == pytest.approx([0, np.pi / 6, np.pi / 3, np.pi / 2])


def test_synth_ellipsoid_with_noise(tmp_path, capsys, cfg_path):
    args = ["--config", cfg_path, "synth", "ellipsoid", "--depth", "12", "--sigma", "0.01",
            "--seed", "9"]
    assert run(capsys, *args, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b")[0] == 0
    a = (tmp_path / "a" / "hologram.hfd").read_bytes()
    assert a == (tmp_path / "b" / "hologram.hfd").read_bytes()
    grid = synth.VoxelGrid.load(tmp_path / "a" / "truth_grid.npz")
    assert grid.values.sum() > 0


def test_preprocess(tmp_path, capsys):
    write_hfd(tmp_path / "r.hfd", np.full((4, 4), 1.0, np.float32), 0.5, 0.5)
    write_hfd(tmp_path / "b1.hfd", np.full((4, 4), 1.0, np.float32), 0.5, 0.5)
    write_hfd(tmp_path / "b2.hfd", np.full((4, 4), 3.0, np.float32), 0.5, 0.5)
    code, _ = run(capsys, "preprocess", "--raw", tmp_path / "r.hfd", "--background",
                  tmp_path / "b1.hfd", tmp_path / "b2.hfd", "--out", tmp_path / "o.hfd")
    assert code == 0
    assert np.allclose(read_hfd(tmp_path / "o.hfd").data, 0.5)
    write_hfd(tmp_path / "small.hfd", np.ones((3, 3), np.float32), 0.5, 0.5)
    code, out = run(capsys, "preprocess", "--raw", tmp_path / "r.hfd", "--background",
                    tmp_path / "small.hfd", "--out", tmp_path / "x.hfd")
    assert code == cli.EXIT_USAGE and "mismatched" in out.err


def test_focus_curve_and_no_object(tmp_path, capsys, cfg_path):
    run(capsys, "--config", cfg_path, "synth", "ellipsoid", "--depth", "12", "--out", tmp_path / "e")
    code, out = run(capsys, "--config", cfg_path, "focus", tmp_path / "e" / "hologram.hfd",
                    "--z-min", 5, "--z-max", 20, "--z-step", 0.5, "--curve", tmp_path / "c.csv")
    assert code == 0
    res = json.loads(out.out)
    assert set(res) == {"z_prime", "x_prime", "y_prime"}
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "z_um,tamura" and len(rows) - 1 == 31
    write_hfd(tmp_path / "u.hfd", np.full((32, 32), 0.5, np.float32), 0.5, 0.5)
    code, out = run(capsys, "focus", tmp_path / "u.hfd")
    assert code == cli.EXIT_NO_OBJECT and "no object" in out.err


def test_format_error(tmp_path, capsys):
    (tmp_path / "bad.hfd").write_bytes(b"HFD1" + b"\0" * 5)
    assert run(capsys, "focus", tmp_path / "bad.hfd")[0] == cli.EXIT_FORMAT


def test_config_errors(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[optics]\nwidth = lots\n")
    write_hfd(tmp_path / "h.hfd", np.full((8, 8), 0.5, np.float32), 0.5, 0.5)
    code, out = run(capsys, "--config", tmp_path / "bad.ini", "focus", tmp_path / "h.hfd")
    assert code == cli.EXIT_USAGE and "[optics] width" in out.err
    (tmp_path / "prior.ini").write_text("[prior]\nx = 1\ny = 2\n")
    code, out = run(capsys, "--config", tmp_path / "prior.ini", "reconstruct", tmp_path / "h.hfd",
                    "--out", tmp_path / "r")
    assert code == cli.EXIT_USAGE and "missing config key [prior] z" in out.err
    (tmp_path / "dims.ini").write_text("[optics]\nwidth = 16\n")
    code, out = run(capsys, "--config", tmp_path / "dims.ini", "focus", tmp_path / "h.hfd")
    assert code == cli.EXIT_USAGE


def _reconstruct(capsys, tmp_path, cfg_path, name, *extra):
    return run(capsys, "--config", cfg_path, "reconstruct", tmp_path / "e" / "hologram.hfd",
               "--out", tmp_path / name, "--prior", 8.25, 8.25, 12, *extra)


def test_reconstruct_outputs_and_determinism(tmp_path, capsys, cfg_path):
    run(capsys, "--config", cfg_path, "synth", "ellipsoid", "--depth", "12", "--out", tmp_path / "e")
    code, out = _reconstruct(capsys, tmp_path, cfg_path, "r1", "--mesh", "--iso", "0.3")
    assert code == 0
    summary = json.loads(out.out)
    assert summary["epoch"] == 7 and "L_Data" in summary
    r1 = tmp_path / "r1"
    for name in ("loss.csv", "object.npz", "index.npy", "checkpoint/network.hnn",
                 "checkpoint/phi.f64", "checkpoint/incident.hfd", "checkpoint/adam.bin",
                 "checkpoint/manifest.json"):
        assert (r1 / name).exists(), name
    assert len((r1 / "loss.csv").read_text().splitlines()) == 5
    n = np.load(r1 / "index.npy")
    assert n.min() >= 1.33
    _reconstruct(capsys, tmp_path, cfg_path, "r2", "--mesh", "--iso", "0.3")
    for name in ("loss.csv", "checkpoint/network.hnn", "checkpoint/adam.bin",
                 "checkpoint/phi.f64", "checkpoint/incident.hfd"):
        assert (r1 / name).read_bytes() == (tmp_path / "r2" / name).read_bytes(), name


def test_reconstruct_zero_epochs_gives_pretrained(tmp_path, capsys, cfg_path):
    run(capsys, "--config", cfg_path, "synth", "ellipsoid", "--depth", "12", "--out", tmp_path / "e")
    code, out = _reconstruct(capsys, tmp_path, cfg_path, "r", "--epochs", 0)
    assert code == 0
    assert "L_Prior" in json.loads(out.out)
    assert (tmp_path / "r" / "object.npz").exists()


def test_reconstruct_resume_matches(tmp_path, capsys, cfg_path):
    run(capsys, "--config", cfg_path, "synth", "ellipsoid", "--depth", "12", "--out", tmp_path / "e")
    _reconstruct(capsys, tmp_path, cfg_path, "full")
    _reconstruct(capsys, tmp_path, cfg_path, "part", "--epochs", 2)
    code, _ = _reconstruct(capsys, tmp_path, cfg_path, "part", "--resume")
    assert code == 0
    assert ((tmp_path / "full" / "loss.csv").read_text()
            == (tmp_path / "part" / "loss.csv").read_text())
    code, out = _reconstruct(capsys, tmp_path, cfg_path, "nothing", "--resume")
    assert code == cli.EXIT_USAGE


def test_measure_track_export(tmp_path, capsys, cfg_path):
    run(capsys, "--config", cfg_path, "synth", "ellipsoid", "--depth", "12", "--theta", "60",
        "--out", tmp_path / "e")
    g = tmp_path / "e" / "truth_grid.npz"
    code, out = run(capsys, "measure", g, g)
    lines = [json.loads(x) for x in out.out.splitlines()]
    assert code == 0 and len(lines) == 2
    assert abs(lines[0]["theta_deg"] - 60) < 5
    code, out = run(capsys, "track", g, g, "--fps", 20)
    rows = out.out.splitlines()
    assert code == 0 and rows[0].startswith("frame,time_s") and rows[2].split(",")[1] == "0.05"
    assert run(capsys, "track", g, "--fps", 0)[0] == cli.EXIT_USAGE
    code, out = run(capsys, "export", g, "--iso", 0.5, "--out", tmp_path / "m.obj")
    assert code == 0 and json.loads(out.out)["watertight"]
    empty = synth.VoxelGrid(np.zeros((4, 4, 4)), 1, 1, 1)
    empty.save(tmp_path / "empty.npz")
    assert run(capsys, "measure", tmp_path / "empty.npz")[0] == cli.EXIT_NO_OBJECT
