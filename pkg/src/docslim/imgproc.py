"""Raster primitives: luma conversion, Sobel gradients, gradient maps, bilinear resize.

Images are plain numpy arrays:

* RGB image: ``(H, W, 3)`` uint8
* gray image: ``(H, W)`` uint8
* gradient map: ``(H, W)`` float32, nonnegative
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageTooSmall

__all__ = [
    "to_grayscale",
    "sobel",
    "gradient_map",
    "resize_map",
    "resize_image",
    "axis_taps",
    "axis_mass",
    "read_png",
    "write_png",
]


def _check_rgb(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma, rounded half-up, as uint8."""
    _check_rgb(img)
    # in-place uint32 accumulation; max value 255500 so the result never exceeds 255
    acc = img[..., 0].astype(np.uint32)
    acc *= 299
    tmp = img[..., 1].astype(np.uint32)
    tmp *= 587
    acc += tmp
    np.multiply(img[..., 2], 114, out=tmp, dtype=np.uint32)
    acc += tmp
    acc += 500
    acc //= 1000
    return acc.astype(np.uint8)


def sobel(img: np.ndarray, axis: str) -> np.ndarray:
    """Signed 3x3 Sobel response with edge replication at the borders.

    ``axis="x"`` differentiates along columns (positive where intensity
    increases to the right), ``axis="y"`` along rows. Returns int16.
    """
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {img.shape}")
    h, w = img.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"image is {h}x{w}; Sobel needs at least 3x3")
    p = np.pad(img.astype(np.int16), 1, mode="edge")
    if axis == "x":
        s = p[:-2] + 2 * p[1:-1] + p[2:]
        return s[:, 2:] - s[:, :-2]
    s = p[:, :-2] + 2 * p[:, 1:-1] + p[:, 2:]
    return s[2:] - s[:-2]


def gradient_map(img: np.ndarray, t_n: float) -> np.ndarray:
    """Per-pixel max(|Sobel_x|, |Sobel_y|) with values below ``t_n`` zeroed."""
    if t_n < 0:
        raise ValueError("t_n must be >= 0")
    gx = sobel(img, "x")
    np.abs(gx, out=gx)
    gy = sobel(img, "y")
    np.abs(gy, out=gy)
    np.maximum(gx, gy, out=gx)
    g = gx.astype(np.float32)
    g *= gx >= t_n
    return g


def axis_taps(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear source taps for one axis (pixel-center aligned).

    Returns ``(i0, i1, frac)`` so output sample k is
    ``(1 - frac[k]) * src[i0[k]] + frac[k] * src[i1[k]]``.
    """
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.floor(x).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = x - i0
    return i0, i1, frac


def axis_mass(n_in: int, n_out: int) -> np.ndarray:
    """Total bilinear weight each source index contributes across all outputs."""
    i0, i1, frac = axis_taps(n_in, n_out)
    mass = np.bincount(i0, weights=1.0 - frac, minlength=n_in)
    mass += np.bincount(i1, weights=frac, minlength=n_in)
    return mass


def _resize_axis(a: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = a.shape[axis]
    if n_in == n_out:
        return a
    i0, i1, frac = axis_taps(n_in, n_out)
    shape = [1] * a.ndim
    shape[axis] = n_out
    f = frac.reshape(shape)
    return np.take(a, i0, axis=axis) * (1.0 - f) + np.take(a, i1, axis=axis) * f


def _resize(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    a = _resize_axis(a, out_h, 0)
    return _resize_axis(a, out_w, 1)


def resize_map(gmap: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if gmap.shape == (out_h, out_w):
        return gmap.copy()
    return _resize(gmap.astype(np.float64), out_h, out_w).astype(np.float32)


def resize_image(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if img.shape[:2] == (out_h, out_w):
        return img.copy()
    out = _resize(img.astype(np.float64), out_h, out_w)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def read_png(path: str | Path) -> np.ndarray:
    """Decode an 8-bit PNG to an RGB ``(H, W, 3)`` or gray ``(H, W)`` array."""
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8).copy()
        if im.mode in ("RGB", "RGBA", "P", "LA"):
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
        raise ValueError(f"unsupported PNG mode {im.mode!r}; need 8-bit RGB or gray")


def write_png(path: str | Path, img: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(img)).save(path, format="PNG")
