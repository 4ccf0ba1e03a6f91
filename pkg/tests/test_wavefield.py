import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holomorph.wavefield import (
    OpticalConfig,
    asm_adjoint,
    asm_propagate,
    asm_transfer,
    band_limit,
    intensity,
    multislice,
    plane_wave,
    propagating_mask,
)

from conftest import random_field
from oracles import naive_asm


def test_matches_naive_dft(rng):
    cfg = OpticalConfig(width=32, height=32, pitch_x=0.3, pitch_y=0.3)
    u = random_field(rng, cfg.shape)
    ref = naive_asm(u, 7.5, cfg.wavelength, cfg.n_med, cfg.pitch_x, cfg.pitch_y)
    assert np.max(np.abs(asm_propagate(u, 7.5, cfg) - ref)) < 1e-6


def test_matches_naive_dft_rectangular_odd(rng):
    cfg = OpticalConfig(width=9, height=14, pitch_x=0.2, pitch_y=0.35)
    u = random_field(rng, cfg.shape)
    ref = naive_asm(u, -3.0, cfg.wavelength, cfg.n_med, cfg.pitch_x, cfg.pitch_y)
    assert np.max(np.abs(asm_propagate(u, -3.0, cfg) - ref)) < 1e-9


def test_zero_distance_is_identity(rng, small_config):
    u = random_field(rng, small_config.shape)
    out = asm_propagate(u, 0.0, small_config)
    # pitches are coarse enough that every mode propagates
    assert propagating_mask(small_config).all()
    assert np.allclose(out, u, atol=1e-12)


def test_evanescent_entries_exactly_zero():
    cfg = OpticalConfig(width=16, height=16, pitch_x=0.1, pitch_y=0.1)
    K = asm_transfer(cfg, 5.0)
    mask = propagating_mask(cfg)
    assert not mask.all()
    assert np.all(K[~mask] == 0)
    assert np.allclose(np.abs(K[mask]), 1.0)


def test_plane_wave_picks_up_phase():
    cfg = OpticalConfig(width=8, height=8)
    out = asm_propagate(plane_wave(cfg), 2.0, cfg)
    assert np.allclose(out, np.exp(1j * cfg.k * 2.0))


def test_round_trip(rng):
    cfg = OpticalConfig(width=32, height=32, pitch_x=0.1, pitch_y=0.1)
    u = band_limit(random_field(rng, cfg.shape), cfg)
    back = asm_propagate(asm_propagate(u, 12.0, cfg), -12.0, cfg)
    assert np.max(np.abs(back - u)) < 1e-10


def test_energy_conserved_for_propagating_modes(rng):
    cfg = OpticalConfig(width=32, height=32, pitch_x=0.1, pitch_y=0.1)
    u = band_limit(random_field(rng, cfg.shape), cfg)
    out = asm_propagate(u, 30.0, cfg)
    e0, e1 = intensity(u).sum(), intensity(out).sum()
    assert abs(e1 - e0) / e0 < 1e-10


def test_adjoint_identity(rng, small_config):
    u = random_field(rng, small_config.shape)
    v = random_field(rng, small_config.shape)
    lhs = np.vdot(v, asm_propagate(u, 4.0, small_config))
    rhs = np.vdot(asm_adjoint(v, 4.0, small_config), u)
    assert abs(lhs - rhs) < 1e-9 * abs(lhs)


def test_shape_mismatch(small_config):
    with pytest.raises(ValueError):
        asm_propagate(np.zeros((3, 3), complex), 1.0, small_config)
    with pytest.raises(ValueError):
        asm_transfer(small_config, np.inf)


@pytest.mark.parametrize("kw", [dict(wavelength=0), dict(pitch_x=-1), dict(width=1),
                                dict(depth_slices=0), dict(z_offset=-1), dict(n_med=0.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OpticalConfig(**kw)


def test_phase_shift_value():
    cfg = OpticalConfig(wavelength=0.532, n_med=1.33, slice_pitch=1.0)
    assert cfg.phase_shift(1.4) == pytest.approx(0.8267, abs=1e-4)


def test_multislice_empty_volume_is_free_space(rng, small_config):
    inc = random_field(rng, small_config.shape)
    o = np.zeros(small_config.volume_shape)
    out = multislice(o, 1.3, inc, small_config)
    ref = asm_propagate(inc, small_config.depth_slices * small_config.slice_pitch, small_config)
    assert np.allclose(out, ref, atol=1e-12)


def test_multislice_slab_equivalence(rng):
    # a thin slab high above the sensor equals a tall volume with empty lower slices
    tall = OpticalConfig(width=16, height=16, depth_slices=8)
    slab = tall.with_(depth_slices=3, z_offset=5.0)
    o_slab = rng.uniform(size=slab.volume_shape)
    o_tall = np.zeros(tall.volume_shape)
    o_tall[:, :, 5:] = o_slab
    o_tall[:, :, 5] = 0.0  # slice 0 of the slab never modulates
    a = multislice(o_slab, 0.7, 1.0, slab)
    b = multislice(o_tall, 0.7, 1.0, tall)
    assert np.allclose(a, b, atol=1e-12)


def test_multislice_slice_zero_ignored(rng, small_config):
    o = rng.uniform(size=small_config.volume_shape)
    o2 = o.copy()
    o2[:, :, 0] = 1 - o2[:, :, 0]
    assert np.allclose(multislice(o, 1.0, 1.0, small_config), multislice(o2, 1.0, 1.0, small_config))


@settings(max_examples=25, deadline=None)
@given(d1=st.floats(-20, 20), d2=st.floats(-20, 20), seed=st.integers(0, 2**32 - 1))
def test_composition(d1, d2, seed):
    cfg = OpticalConfig(width=8, height=8, pitch_x=0.2, pitch_y=0.2)
    u = random_field(np.random.default_rng(seed), cfg.shape)
    a = asm_propagate(asm_propagate(u, d1, cfg), d2, cfg)
    b = asm_propagate(band_limit(u, cfg), d1 + d2, cfg)
    assert np.allclose(a, b, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       d=st.floats(-50, 50), seed=st.integers(0, 2**32 - 1))
def test_linearity(a, d, seed):
    cfg = OpticalConfig(width=8, height=8)
    rng = np.random.default_rng(seed)
    u, v = random_field(rng, cfg.shape), random_field(rng, cfg.shape)
    lhs = asm_propagate(a * u + v, d, cfg)
    rhs = a * asm_propagate(u, d, cfg) + asm_propagate(v, d, cfg)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + abs(a)))
