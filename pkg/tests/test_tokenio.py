import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from docslim.errors import MalformedTokenFile
from docslim.tokenio import (
    decode_dstk,
    encode_dstk,
    read_csv,
    read_dstk,
    read_tokens,
    write_csv,
    write_dstk,
)

matrices = arrays(
    np.float32,
    st.tuples(st.integers(1, 20), st.integers(1, 20)),
    elements=st.floats(width=32, allow_nan=False, allow_infinity=False),
)


def test_header_layout():
    buf = encode_dstk(np.array([[1.0, -2.0, 0.5]], np.float32))
    assert buf[:4] == b"DSTK"
    assert struct.unpack("<III", buf[4:16]) == (1, 1, 3)
    assert struct.unpack("<3f", buf[16:]) == (1.0, -2.0, 0.5)


@given(matrices)
def test_roundtrip_bit_exact(m):
    out = decode_dstk(encode_dstk(m))
    assert out.dtype == np.float32 and out.shape == m.shape
    assert out.tobytes() == m.tobytes()


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1)])
def test_edge_shapes_roundtrip_via_files(tmp_path, shape):
    m = np.random.default_rng(0).standard_normal(shape).astype(np.float32)
    write_dstk(tmp_path / "m.dstk", m)
    assert np.array_equal(read_dstk(tmp_path / "m.dstk"), m)
    assert np.array_equal(read_tokens(tmp_path / "m.dstk"), m)


@pytest.mark.parametrize(
    "buf,needle",
    [
        (b"DST", "truncated header"),
        (b"XXXX" + struct.pack("<III", 1, 1, 1) + b"\0" * 4, "magic"),
        (b"DSTK" + struct.pack("<III", 2, 1, 1) + b"\0" * 4, "version"),
        (b"DSTK" + struct.pack("<III", 1, 0, 3), "shape"),
        (b"DSTK" + struct.pack("<III", 1, 2, 3) + b"\0" * 20, "expected 40 bytes, got 36"),
        (b"DSTK" + struct.pack("<III", 1, 1, 1) + b"\0" * 8, "expected 20 bytes, got 24"),
    ],
)
def test_malformed(buf, needle):
    with pytest.raises(MalformedTokenFile, match=needle):
        decode_dstk(buf)


def test_encode_rejects_bad_shape():
    with pytest.raises(ValueError):
        encode_dstk(np.zeros(3))


def test_csv_roundtrip(tmp_path):
    m = np.random.default_rng(1).standard_normal((5, 3))
    write_csv(tmp_path / "m.csv", m)
    got = read_tokens(tmp_path / "m.csv")
    assert np.allclose(got, m, rtol=1e-8)
    write_csv(tmp_path / "one.csv", m[:1])
    assert read_csv(tmp_path / "one.csv").shape == (1, 3)


def test_csv_ragged_rejected(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2,3\n4,5\n")
    with pytest.raises(MalformedTokenFile):
        read_tokens(tmp_path / "bad.csv")


def test_magic_detected_regardless_of_suffix(tmp_path):
    m = np.ones((2, 2), np.float32)
    write_dstk(tmp_path / "tokens.csv", m)
    assert np.array_equal(read_tokens(tmp_path / "tokens.csv"), m)
