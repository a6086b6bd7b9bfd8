import gzip
import struct

import numpy as np
import pytest

from ofdiffusion.eigenbasis import build_fourier_basis, build_hermite_basis, build_numeric_basis
from ofdiffusion.io import (
    MATRIX_MAGIC,
    FormatError,
    pack_matrix,
    read_container,
    read_csv,
    read_idx,
    read_matrix,
    read_samples,
    save_eigensystem,
    load_eigensystem,
    unpack_matrix,
    write_container,
    write_csv,
    write_idx,
    write_matrix,
    write_samples,
)
from ofdiffusion.potentials import double_well
from ofdiffusion.sample_matrix import SampleMatrix


def test_matrix_layout_is_pinned():
    buf = pack_matrix(np.array([[1.0, 2.0, 3.0]]))
    assert buf[:4] == MATRIX_MAGIC
    assert struct.unpack("<IQQ", buf[4:24]) == (1, 1, 3)
    assert len(buf) == 24 + 3 * 8
    assert buf[24:32] == struct.pack("<d", 1.0)


def test_matrix_round_trip_bit_exact(tmp_path):
    a = np.random.default_rng(0).standard_normal((17, 5))
    a[0, 0], a[1, 1] = np.nextafter(0, 1), -0.0
    p = tmp_path / "a.ofdm"
    write_matrix(p, a)
    b = read_matrix(p)
    assert b.tobytes() == a.tobytes()
    write_matrix(tmp_path / "b.ofdm", b)
    assert (tmp_path / "b.ofdm").read_bytes() == p.read_bytes()


def test_matrix_empty_shape(tmp_path):
    write_matrix(tmp_path / "e.ofdm", np.zeros((0, 3)))
    assert read_matrix(tmp_path / "e.ofdm").shape == (0, 3)


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], "version"),
    (lambda b: b[:-1], "truncated"),
    (lambda b: b[:10], "truncated"),
    (lambda b: b + b"\0", "trailing"),
])
def test_matrix_rejects_malformed(tmp_path, mutate, msg):
    p = tmp_path / "m.ofdm"
    p.write_bytes(mutate(pack_matrix(np.ones((2, 2)))))
    with pytest.raises(FormatError, match=msg):
        read_matrix(p)


def test_unpack_sequential_blocks():
    buf = pack_matrix(np.ones((1, 2))) + pack_matrix(np.zeros((3, 1)))
    a, off = unpack_matrix(buf)
    b, end = unpack_matrix(buf, off)
    assert a.shape == (1, 2) and b.shape == (3, 1) and end == len(buf)


def test_csv_round_trip(tmp_path):
    a = np.random.default_rng(1).standard_normal((50, 3)) * 10.0 ** np.arange(-5, 10, 5)
    write_csv(tmp_path / "a.csv", a)
    b, header = read_csv(tmp_path / "a.csv")
    assert header == ["x0", "x1", "x2"]
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=0)


def test_csv_rejects_text(tmp_path):
    (tmp_path / "bad.csv").write_text("x0\nabc\n")
    with pytest.raises(FormatError, match="non-numeric"):
        read_csv(tmp_path / "bad.csv")


def test_samples_by_extension(tmp_path):
    s = SampleMatrix(np.arange(6.0).reshape(3, 2))
    for name in ["s.csv", "s.ofdm"]:
        write_samples(tmp_path / name, s)
        np.testing.assert_array_equal(read_samples(tmp_path / name).data, s.data)


def _idx_fixture(tmp_path, gz=False):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(4, 28, 28), dtype=np.uint8)
    imgs[0, 0, 0], imgs[0, 0, 1] = 0, 255
    write_idx(tmp_path / "img.idx", imgs)
    write_idx(tmp_path / "lab.idx", np.array([3, 1, 3, 7], dtype=np.uint8))
    if gz:
        raw = (tmp_path / "img.idx").read_bytes()
        (tmp_path / "img.idx.gz").write_bytes(gzip.compress(raw))
    return imgs


def test_idx_four_images(tmp_path):
    imgs = _idx_fixture(tmp_path)
    sm = read_idx(tmp_path / "img.idx")
    assert sm.shape == (4, 784)
    assert sm.data.min() == 0.0 and sm.data.max() == 1.0
    np.testing.assert_array_equal(sm.data * 255, imgs.reshape(4, -1))
    assert sm.meta["shape"] == [28, 28]


def test_idx_gzip_and_label_filter(tmp_path):
    _idx_fixture(tmp_path, gz=True)
    sm = read_idx(tmp_path / "img.idx.gz", tmp_path / "lab.idx", digits=[3, 7], per_digit=1)
    assert sm.meta["labels"] == [3, 7]
    full = read_idx(tmp_path / "img.idx")
    np.testing.assert_array_equal(sm.data, full.data[[0, 3]])


def test_idx_errors(tmp_path):
    _idx_fixture(tmp_path)
    raw = (tmp_path / "img.idx").read_bytes()
    (tmp_path / "t.idx").write_bytes(raw[:-5])
    with pytest.raises(FormatError, match="truncated"):
        read_idx(tmp_path / "t.idx")
    (tmp_path / "m.idx").write_bytes(b"\x01" + raw[1:])
    with pytest.raises(FormatError, match="magic"):
        read_idx(tmp_path / "m.idx")
    with pytest.raises(FormatError, match="label file"):
        read_idx(tmp_path / "img.idx", digits=[1])
    write_idx(tmp_path / "few.idx", np.array([1, 2], dtype=np.uint8))
    with pytest.raises(FormatError, match="count"):
        read_idx(tmp_path / "img.idx", tmp_path / "few.idx")


@pytest.mark.parametrize("make", [
    lambda: build_hermite_basis(1.0, 1.0, 6),
    lambda: build_fourier_basis(3.0, 0.5, 9),
    lambda: build_numeric_basis(double_well, 2.0, np.linspace(-3, 3, 301), 6),
])
def test_eigensystem_round_trip(tmp_path, make):
    sys = make()
    save_eigensystem(tmp_path / "e.bin", sys)
    back = load_eigensystem(tmp_path / "e.bin")
    x = np.linspace(-1.5, 1.5, 31)
    np.testing.assert_array_equal(back.evaluate(x), sys.evaluate(x))
    np.testing.assert_array_equal(back.eigenvalues, sys.eigenvalues)


def test_container_header_errors(tmp_path):
    write_container(tmp_path / "c.bin", {"a": 1}, [np.ones((2, 2))])
    header, blocks = read_container(tmp_path / "c.bin")
    assert header == {"a": 1} and blocks[0].shape == (2, 2)
    (tmp_path / "x.bin").write_bytes(struct.pack("<Q", 3) + b"{{{")
    with pytest.raises(FormatError, match="JSON"):
        read_container(tmp_path / "x.bin")
    (tmp_path / "y.bin").write_bytes(struct.pack("<Q", 300) + b"{}")
    with pytest.raises(FormatError, match="truncated"):
        read_container(tmp_path / "y.bin")
