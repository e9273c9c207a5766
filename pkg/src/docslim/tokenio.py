"""Token matrix files.

Binary layout (all little-endian)::

    b"DSTK" | version: u32 | L: u32 | D: u32 | L*D float32, row-major

Text layout: CSV, one token per line.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import MalformedTokenFile

MAGIC = b"DSTK"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def encode_dstk(tokens: np.ndarray) -> bytes:
    a = np.asarray(tokens)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty L x D matrix, got shape {a.shape}")
    body = np.ascontiguousarray(a, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1]) + body


def decode_dstk(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise MalformedTokenFile(
            f"truncated header: expected at least {_HEADER.size} bytes, got {len(buf)}"
        )
    magic, version, n, d = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise MalformedTokenFile(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise MalformedTokenFile(f"unsupported version {version}, expected {VERSION}")
    if n < 1 or d < 1:
        raise MalformedTokenFile(f"invalid shape L={n}, D={d}")
    expected = _HEADER.size + 4 * n * d
    if len(buf) != expected:
        raise MalformedTokenFile(
            f"size mismatch for L={n}, D={d}: expected {expected} bytes, got {len(buf)}"
        )
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(n, d).astype(np.float32)


def write_dstk(path: str | Path, tokens: np.ndarray) -> None:
    Path(path).write_bytes(encode_dstk(tokens))


def read_dstk(path: str | Path) -> np.ndarray:
    return decode_dstk(Path(path).read_bytes())


def read_csv(path: str | Path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise MalformedTokenFile(f"{path}: {e}") from e
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise MalformedTokenFile(f"{path}: no tokens")
    return a


def write_csv(path: str | Path, tokens: np.ndarray) -> None:
    np.savetxt(path, np.asarray(tokens), delimiter=",", fmt="%.9g")


def read_tokens(path: str | Path) -> np.ndarray:
    """Read a DSTK file, or CSV when the file lacks the DSTK magic."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if head == MAGIC or path.suffix.lower() in (".dstk", ".bin"):
        return read_dstk(path)
    return read_csv(path)
