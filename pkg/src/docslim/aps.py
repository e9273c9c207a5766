"""Adaptive pixel slimming: drop low-gradient row and column bands from a page image.

Pipeline: luma -> Sobel max-magnitude with noise floor -> bilinear normalization
to ``norm_size x norm_size`` -> per-row / per-column gradient sums -> runs of
low-sum lines -> back to original coordinates -> remove whole rows/columns.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyResult, ShapeMismatch
from .imgproc import axis_mass, axis_taps, gradient_map, to_grayscale

# Smallest multiple of the noise floor that reached full planted-band recall with
# zero text-line removals on the seeded synthetic corpus; reproduce with
# scripts/calibrate_value_thresh.py.
DEFAULT_VALUE_THRESH = 50.0

DEFAULT_NORM_SIZE = 2048
DEFAULT_NOISE_THRESH = 50.0
DEFAULT_RUN_THRESH = 10
DEFAULT_MAX_REMOVAL_FRAC = 0.95


@dataclass(frozen=True)
class ApsParams:
    norm_size: int = DEFAULT_NORM_SIZE
    noise_thresh: float = DEFAULT_NOISE_THRESH
    run_thresh: int = DEFAULT_RUN_THRESH
    value_thresh: float = DEFAULT_VALUE_THRESH
    max_removal_frac: float = DEFAULT_MAX_REMOVAL_FRAC

    def __post_init__(self):
        if self.norm_size < 64:
            raise ValueError("norm_size must be >= 64")
        if self.noise_thresh < 0:
            raise ValueError("noise_thresh must be >= 0")
        if self.run_thresh < 1:
            raise ValueError("run_thresh must be >= 1")
        if self.value_thresh < 0:
            raise ValueError("value_thresh must be >= 0")
        if not 0 < self.max_removal_frac < 1:
            raise ValueError("max_removal_frac must lie in (0, 1)")


@dataclass
class BandSet:
    """Half-open ``[start, end)`` line intervals along one image axis."""

    axis: str
    intervals: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.axis not in ("rows", "cols"):
            raise ValueError(f"axis must be 'rows' or 'cols', got {self.axis!r}")
        self.intervals = [(int(s), int(e)) for s, e in self.intervals]
        prev_end = None
        for s, e in self.intervals:
            if e <= s:
                raise ValueError(f"empty interval [{s}, {e})")
            if s < 0 or (prev_end is not None and s < prev_end):
                raise ValueError("intervals must be sorted, disjoint and nonnegative")
            prev_end = e

    @property
    def total(self) -> int:
        return sum(e - s for s, e in self.intervals)

    def mask(self, dim: int) -> np.ndarray:
        """Boolean mask of length ``dim``, True on covered lines."""
        m = np.zeros(dim, dtype=bool)
        for s, e in self.intervals:
            if e > dim:
                raise ValueError(f"interval [{s}, {e}) exceeds dimension {dim}")
            m[s:e] = True
        return m

    def to_list(self) -> list[list[int]]:
        return [[s, e] for s, e in self.intervals]


@dataclass
class SlimResult:
    image: np.ndarray
    row_bands: BandSet
    col_bands: BandSet
    original_pixels: int
    slimmed_pixels: int
    reduction: float
    guard_fired: bool = False

    orig_shape: tuple[int, int] = (0, 0)

    def report(self, input_path: str | None = None) -> dict:
        """JSON-ready per-image report."""
        return {
            "input": input_path,
            "orig": [int(self.orig_shape[0]), int(self.orig_shape[1])],
            "slimmed": [int(self.image.shape[0]), int(self.image.shape[1])],
            "row_bands": self.row_bands.to_list(),
            "col_bands": self.col_bands.to_list(),
            "reduction": float(self.reduction),
            "guard_fired": bool(self.guard_fired),
        }


def profile_sums(gmap: np.ndarray, axis: str, norm_size: int | None = None) -> np.ndarray:
    """Gradient mass per row (``axis="rows"``) or per column (``axis="cols"``)."""
    if gmap.ndim != 2 or gmap.shape[0] != gmap.shape[1]:
        raise ShapeMismatch(f"expected a square normalized map, got {gmap.shape}")
    if norm_size is not None and gmap.shape[0] != norm_size:
        raise ShapeMismatch(f"expected {norm_size}x{norm_size} map, got {gmap.shape}")
    if axis == "rows":
        return gmap.sum(axis=1, dtype=np.float64)
    if axis == "cols":
        return gmap.sum(axis=0, dtype=np.float64)
    raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")


def normalized_profiles(gmap: np.ndarray, norm_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column sums of ``resize_map(gmap, norm_size, norm_size)``.

    Bilinear resize is separable and linear, so the sums are computed without
    materializing the normalized map: weight each source column by its total
    interpolation mass, sum, then interpolate along rows (and vice versa).
    """
    h, w = gmap.shape
    g = gmap.astype(np.float64, copy=False)
    u = g @ axis_mass(w, norm_size)
    v = axis_mass(h, norm_size) @ g
    rows = _interp(u, norm_size)
    cols = _interp(v, norm_size)
    return rows, cols


def _interp(profile: np.ndarray, n_out: int) -> np.ndarray:
    n_in = profile.shape[0]
    if n_in == n_out:
        return profile.copy()
    i0, i1, frac = axis_taps(n_in, n_out)
    return profile[i0] * (1.0 - frac) + profile[i1] * frac


def icr(profile: np.ndarray, value_thresh: float, run_thresh: int) -> list[tuple[int, int]]:
    """Maximal runs with ``profile < value_thresh`` longer than ``run_thresh``."""
    low = np.asarray(profile) < value_thresh
    if low.size == 0:
        return []
    edges = np.diff(np.concatenate(([0], low.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(int(s), int(e)) for s, e in zip(starts, ends) if e - s > run_thresh]


def denormalize_bands(
    intervals: list[tuple[int, int]], norm_size: int, orig_dim: int, axis: str
) -> BandSet:
    """Scale normalized intervals to ``orig_dim``, shrinking to whole covered lines."""
    out = []
    for s, e in intervals:
        if not 0 <= s < e <= norm_size:
            raise ValueError(f"interval [{s}, {e}) outside [0, {norm_size})")
        lo = -(-s * orig_dim // norm_size)
        hi = e * orig_dim // norm_size
        if hi > lo:
            out.append((lo, hi))
    return BandSet(axis, out)


def remove_bands(img: np.ndarray, rows: BandSet, cols: BandSet) -> np.ndarray:
    h, w = img.shape[:2]
    keep_r = ~rows.mask(h)
    keep_c = ~cols.mask(w)
    if not keep_r.any() or not keep_c.any():
        raise EmptyResult("band removal would leave no rows or no columns")
    if keep_r.all() and keep_c.all():
        return img.copy()
    return np.compress(keep_c, np.compress(keep_r, img, axis=0), axis=1)


def _gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    return to_grayscale(img)


def detect_bands(
    img: np.ndarray, params: ApsParams, timings: dict | None = None
) -> tuple[BandSet, BandSet]:
    """Proposed row and column bands, before the degeneracy guard."""
    t0 = time.perf_counter()
    gmap = gradient_map(_gray(img), params.noise_thresh)
    t1 = time.perf_counter()
    row_prof, col_prof = normalized_profiles(gmap, params.norm_size)
    h, w = gmap.shape
    rows = denormalize_bands(
        icr(row_prof, params.value_thresh, params.run_thresh), params.norm_size, h, "rows"
    )
    cols = denormalize_bands(
        icr(col_prof, params.value_thresh, params.run_thresh), params.norm_size, w, "cols"
    )
    t2 = time.perf_counter()
    if timings is not None:
        timings["gradient_ms"] = (t1 - t0) * 1e3
        timings["bands_ms"] = (t2 - t1) * 1e3
    return rows, cols


def aps(img: np.ndarray, params: ApsParams | None = None, timings: dict | None = None) -> SlimResult:
    """Remove redundant whole rows and columns from an RGB (or gray) image."""
    params = params or ApsParams()
    if img.ndim not in (2, 3):
        raise ValueError(f"expected an image array, got shape {img.shape}")
    h, w = img.shape[:2]
    rows, cols = detect_bands(img, params, timings)

    t0 = time.perf_counter()
    guard = rows.total > params.max_removal_frac * h or cols.total > params.max_removal_frac * w
    if guard:
        rows, cols = BandSet("rows"), BandSet("cols")
        out = img.copy()
    else:
        out = remove_bands(img, rows, cols)
    if timings is not None:
        timings["remove_ms"] = (time.perf_counter() - t0) * 1e3

    orig = h * w
    slim = out.shape[0] * out.shape[1]
    return SlimResult(
        image=out,
        row_bands=rows,
        col_bands=cols,
        original_pixels=orig,
        slimmed_pixels=slim,
        reduction=1.0 - slim / orig,
        guard_fired=guard,
        orig_shape=(h, w),
    )


def overlay(
    img: np.ndarray,
    rows: BandSet,
    cols: BandSet,
    color: tuple[int, int, int] = (255, 0, 0),
    alpha: float = 0.45,
) -> np.ndarray:
    """Tint removed bands over the original image."""
    rgb = np.repeat(img[..., None], 3, axis=2) if img.ndim == 2 else img
    h, w = rgb.shape[:2]
    hit = rows.mask(h)[:, None] | cols.mask(w)[None, :]
    out = rgb.astype(np.float32)
    out[hit] = (1 - alpha) * out[hit] + alpha * np.asarray(color, dtype=np.float32)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
