import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holomorph import autofocus, synth
from holomorph.autofocus import NoObjectError, find_focus, scan_depths, tamura_gradient
from holomorph.wavefield import OpticalConfig

from oracles import tamura_loops


def test_scan_depths():
    d = scan_depths(20, 80, 1)
    assert len(d) == 61 and d[0] == 20 and d[-1] == 80
    with pytest.raises(ValueError):
        scan_depths(5, 1, 1)
    with pytest.raises(ValueError):
        scan_depths(0, 1, 0)


def test_tamura_matches_loops(rng):
    img = rng.uniform(size=(9, 7))
    assert tamura_gradient(img) == pytest.approx(tamura_loops(img), rel=1e-12)


def test_tamura_constant_image_is_zero():
    assert tamura_gradient(np.full((5, 5), 3.0)) == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-100, 100))
def test_tamura_offset_invariant(seed, c):
    img = np.random.default_rng(seed).uniform(size=(8, 8))
    assert tamura_gradient(img + c) == pytest.approx(tamura_gradient(img), rel=1e-9)


def test_uniform_hologram_has_no_object():
    cfg = OpticalConfig(width=32, height=32)
    with pytest.raises(NoObjectError):
        find_focus(np.full(cfg.shape, 0.5), cfg, 10, 20, 1)


def test_focus_on_thin_phase_disc():
    cfg = OpticalConfig(width=64, height=64, pitch_x=0.5, pitch_y=0.5)
    x = (np.arange(64) + 1) * 0.5
    X, Y = np.meshgrid(x, x, indexing="ij")
    disc = np.where((X - 14) ** 2 + (Y - 18) ** 2 < 9, 1.0, 0.0)
    H = synth.phase_object_hologram(disc, 30.0, 1.0, cfg)
    res = find_focus(H, cfg, 15, 45, 1)
    assert abs(res.z_prime - 30) <= 2
    assert abs(res.x_prime - 14) < 1.5 and abs(res.y_prime - 18) < 1.5
    assert len(res.metric_curve) == 31


def test_object_centroid_convention():
    cfg = OpticalConfig(width=16, height=16, pitch_x=2.0, pitch_y=2.0)
    img = np.zeros(cfg.shape)
    img[4, 9] = 1.0
    assert autofocus.object_centroid(img, cfg) == pytest.approx((10.0, 20.0))


def test_negative_hologram_rejected():
    cfg = OpticalConfig(width=8, height=8)
    with pytest.raises(ValueError):
        autofocus.reconstruct_stack(-np.ones(cfg.shape), cfg, 1, 2, 1)
