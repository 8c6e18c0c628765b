import struct

import numpy as np
import pytest

from rpca_side import io
from rpca_side.errors import (BadMagic, DimensionMismatch, ParseError, ShapeOverflow,
                              UnsupportedFormat)


def test_bmat_round_trip_bit_exact(tmp_path):
    M = np.random.default_rng(0).standard_normal((7, 3))
    M[0, 0] = -0.0
    io.write_bmat(tmp_path / "m.bmat", M)
    out = io.read_bmat(tmp_path / "m.bmat")
    assert out.tobytes() == M.tobytes()


def test_bmat_layout(tmp_path):
    io.write_bmat(tmp_path / "m.bmat", np.array([[1.0, 2.0]]))
    raw = (tmp_path / "m.bmat").read_bytes()
    # [DERIVED] magic, u64 LE rows/cols, f64 LE values row-major
    assert raw == b"RPCAMAT1" + struct.pack("<QQdd", 1, 2, 1.0, 2.0)


def test_bmat_errors(tmp_path):
    p = tmp_path / "bad.bmat"
    p.write_bytes(b"NOTMAGIC" + bytes(16))
    with pytest.raises(BadMagic):
        io.read_bmat(p)
    p.write_bytes(b"RPCAMAT1" + struct.pack("<QQ", 3, 3) + bytes(8))
    with pytest.raises(ShapeOverflow):
        io.read_bmat(p)


def test_csv_round_trip(tmp_path):
    M = np.random.default_rng(1).standard_normal((4, 5))
    io.write_csv(tmp_path / "m.csv", M)
    assert np.array_equal(io.read_csv(tmp_path / "m.csv"), M)
    assert np.array_equal(io.read_matrix(tmp_path / "m.csv"), M)


def test_csv_parse_error_location(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2,3\n4,x,6\n")
    with pytest.raises(ParseError, match="line 2.*column 2"):
        io.read_csv(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(ParseError, match="line 2"):
        io.read_csv(p)


def test_csv_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n1,2\n")
    assert io.read_csv(p, header=True).tolist() == [[1.0, 2.0]]


def test_read_matrix_sniffs_magic(tmp_path):
    io.write_bmat(tmp_path / "m.dat", np.eye(2))
    assert np.array_equal(io.read_matrix(tmp_path / "m.dat"), np.eye(2))
    (tmp_path / "x.dat").write_text("1,2\n")
    with pytest.raises(BadMagic):
        io.read_matrix(tmp_path / "x.dat")


def test_pgm_p5_round_trip(tmp_path):
    pix = np.random.default_rng(2).integers(0, 256, size=(5, 7))
    io.write_pgm(tmp_path / "a.pgm", pix)
    out, maxval = io.read_pgm(tmp_path / "a.pgm")
    assert maxval == 255 and np.array_equal(out, pix)


def test_pgm_16_bit(tmp_path):
    pix = np.array([[0, 1000], [65535, 7]])
    io.write_pgm(tmp_path / "a.pgm", pix, maxval=65535)
    out, maxval = io.read_pgm(tmp_path / "a.pgm")
    assert maxval == 65535 and np.array_equal(out, pix)


def test_pgm_p2_with_comments(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_text("P2\n# comment\n3 2\n# another\n15\n0 1 2\n3 4 15\n")
    out, maxval = io.read_pgm(p)
    assert maxval == 15 and out.tolist() == [[0, 1, 2], [3, 4, 15]]


def test_pgm_rejects_other_formats(tmp_path):
    p = tmp_path / "a.ppm"
    p.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(UnsupportedFormat):
        io.read_pgm(p)


def test_stack_and_unstack(tmp_path):
    g = np.random.default_rng(3)
    frames = [g.integers(0, 256, size=(4, 6)) for _ in range(3)]
    paths = []
    for k, f in enumerate(frames):
        paths.append(tmp_path / f"f{k}.pgm")
        io.write_pgm(paths[-1], f)
    stack = io.stack_images(paths)
    assert stack.matrix.shape == (24, 3) and (stack.width, stack.height) == (6, 4)
    assert np.allclose(stack.frame(1), frames[1] / 255)
    out = io.unstack_to_images(stack, tmp_path / "out")
    assert np.array_equal(io.read_pgm(out[2])[0], frames[2])


def test_stack_size_mismatch(tmp_path):
    io.write_pgm(tmp_path / "a.pgm", np.zeros((4, 4), int))
    io.write_pgm(tmp_path / "b.pgm", np.zeros((4, 5), int))
    with pytest.raises(DimensionMismatch):
        io.stack_images([tmp_path / "a.pgm", tmp_path / "b.pgm"])


def test_unstack_clamps(tmp_path):
    stack = io.ImageColumnStack(2, 1, 1, np.array([[-0.5], [1.5]]))
    out = io.unstack_to_images(stack, tmp_path)
    assert io.read_pgm(out[0])[0].tolist() == [[0, 255]]
