import struct

import numpy as np
import pytest

from holomorph.io import FormatError, read_hfd, read_image, read_pgm, write_hfd, write_image, write_pgm


def test_hfd_intensity_round_trip(tmp_path, rng):
    a = rng.uniform(size=(7, 5)).astype(np.float32)
    write_hfd(tmp_path / "a.hfd", a, 0.5, 0.25)
    r = read_hfd(tmp_path / "a.hfd")
    assert r.data.dtype == np.float32
    assert np.array_equal(r.data, a)
    assert (r.pitch_x, r.pitch_y) == (0.5, 0.25)


def test_hfd_complex_round_trip(tmp_path, rng):
    a = (rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))).astype(np.complex64)
    write_hfd(tmp_path / "c.hfd", a, 1.0, 1.0)
    assert np.array_equal(read_hfd(tmp_path / "c.hfd").data, a)


def test_hfd_layout(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(3, 2)  # L=3, M=2
    write_hfd(tmp_path / "a.hfd", a, 1.0, 2.0)
    blob = (tmp_path / "a.hfd").read_bytes()
    assert len(blob) == 24 + 6 * 4
    magic, kind, L, M, px, py = struct.unpack_from("<4sIIIff", blob)
    assert (magic, kind, L, M, px, py) == (b"HFD1", 0, 3, 2, 1.0, 2.0)
    payload = np.frombuffer(blob[24:], dtype="<f4")
    # image-style: m * L + l
    assert payload[1 * 3 + 2] == a[2, 1]


def test_hfd_errors(tmp_path):
    write_hfd(tmp_path / "a.hfd", np.ones((4, 4), np.float32), 1.0, 1.0)
    blob = (tmp_path / "a.hfd").read_bytes()
    (tmp_path / "short.hfd").write_bytes(blob[:-4])
    (tmp_path / "long.hfd").write_bytes(blob + b"\0\0\0\0")
    (tmp_path / "magic.hfd").write_bytes(b"XXXX" + blob[4:])
    (tmp_path / "kind.hfd").write_bytes(blob[:4] + struct.pack("<I", 7) + blob[8:])
    (tmp_path / "hdr.hfd").write_bytes(blob[:10])
    for name in ("short", "long", "magic", "kind", "hdr"):
        with pytest.raises(FormatError):
            read_hfd(tmp_path / f"{name}.hfd")


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_round_trip(tmp_path, bits):
    a = np.linspace(0, 1, 20).reshape(5, 4)
    write_pgm(tmp_path / "a.pgm", a, bits=bits)
    back = read_pgm(tmp_path / "a.pgm")
    assert back.shape == (5, 4)
    assert np.max(np.abs(back - a)) <= 0.5 / (2 ** bits - 1) + 1e-12


def test_pgm_with_comment(tmp_path):
    data = bytes([0, 255, 128, 64, 32, 16])
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 2\n255\n" + data)
    img = read_pgm(tmp_path / "c.pgm")
    assert img.shape == (3, 2)
    assert img[1, 0] == 1.0 and img[0, 1] == pytest.approx(64 / 255)


def test_pgm_errors(tmp_path):
    (tmp_path / "p2.pgm").write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    (tmp_path / "trunc.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    for name in ("p2", "trunc"):
        with pytest.raises(FormatError):
            read_pgm(tmp_path / f"{name}.pgm")


def test_read_image_dispatch(tmp_path, rng):
    a = rng.uniform(size=(4, 3))
    write_image(tmp_path / "a.hfd", a, 0.5, 0.5)
    write_image(tmp_path / "a.pgm", a)
    r = read_image(tmp_path / "a.hfd")
    assert np.allclose(r.data, a, atol=1e-7) and r.pitch_x == 0.5
    p = read_image(tmp_path / "a.pgm")
    assert p.data.shape == (4, 3) and np.isnan(p.pitch_x)
    (tmp_path / "junk").write_bytes(b"hello world")
    with pytest.raises(FormatError):
        read_image(tmp_path / "junk")
