"""Reduction and latency benchmarks over image and token corpora."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aps import ApsParams, BandSet, aps
from .dts import DtsParams, dts
from .errors import MalformedTokenFile
from .imgproc import read_png, to_grayscale
from .tokenio import read_tokens

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INK_LEVEL = 128


@dataclass
class BenchReport:
    kind: str
    method: str
    items: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    skipped: int = 0
    params: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        """Flat per-item summary (nested fields dropped)."""
        keys: list[str] = []
        for it in self.items:
            for k, v in it.items():
                if not isinstance(v, (dict, list)) and k not in keys:
                    keys.append(k)
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=keys, extrasaction="ignore")
            w.writeheader()
            for it in self.items:
                w.writerow({k: it.get(k) for k in keys})


def _mean_fields(items: list[dict]) -> dict:
    """Mean of every numeric per-item field (None values skipped)."""
    out: dict = {"n_items": len(items)}
    keys = {k for it in items for k, v in it.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
    for k in sorted(keys):
        vals = [it[k] for it in items if isinstance(it.get(k), (int, float)) and not isinstance(it.get(k), bool)]
        out[k] = float(np.mean(vals)) if vals else None
    return out


def band_match(
    truth: BandSet, found: BandSet, dim: int, norm_size: int, run_thresh: int
) -> tuple[int, int, int, int]:
    """Return ``(eligible, recalled, detected, detected_on_truth)``.

    A planted band is eligible when its normalized width exceeds the run
    threshold, and recalled when exactly one detected band overlaps it with
    both edges within ``2 * ceil(dim / norm_size)`` lines.
    """
    tol = 2 * math.ceil(dim / norm_size)
    eligible = recalled = 0
    for s, e in truth.intervals:
        if (e - s) * norm_size / dim <= run_thresh:
            continue
        eligible += 1
        hits = [(a, b) for a, b in found.intervals if a < e and s < b]
        if len(hits) == 1 and abs(hits[0][0] - s) <= tol and abs(hits[0][1] - e) <= tol:
            recalled += 1
    on_truth = sum(
        1 for a, b in found.intervals if any(a < e and s < b for s, e in truth.intervals)
    )
    return eligible, recalled, len(found.intervals), on_truth


def ink_lines_removed(img: np.ndarray, rows: BandSet, cols: BandSet) -> int:
    """Removed rows plus removed columns that contain any ink pixel."""
    gray = img if img.ndim == 2 else to_grayscale(img)
    ink = gray < INK_LEVEL
    h, w = gray.shape
    return int((ink.any(axis=1) & rows.mask(h)).sum() + (ink.any(axis=0) & cols.mask(w)).sum())


def aps_item(img: np.ndarray, params: ApsParams, truth: dict | None = None, name: str = "") -> dict:
    timings: dict = {}
    t0 = time.perf_counter()
    res = aps(img, params, timings)
    timings["total_ms"] = (time.perf_counter() - t0) * 1e3
    h, w = img.shape[:2]
    item = {
        "input": name,
        "orig": [h, w],
        "slimmed": list(res.image.shape[:2]),
        "pixel_reduction": res.reduction,
        "guard_fired": res.guard_fired,
        **{f"{k}": v for k, v in timings.items()},
    }
    if truth is not None:
        t_rows = BandSet("rows", [tuple(b) for b in truth["row_bands"]])
        t_cols = BandSet("cols", [tuple(b) for b in truth["col_bands"]])
        er, rr, dr, tr = band_match(t_rows, res.row_bands, h, params.norm_size, params.run_thresh)
        ec, rc, dc, tc = band_match(t_cols, res.col_bands, w, params.norm_size, params.run_thresh)
        item.update(
            planted_fraction=float(truth.get("planted_fraction", 0.0)),
            bands_eligible=er + ec,
            bands_recalled=rr + rc,
            bands_detected=dr + dc,
            bands_detected_on_truth=tr + tc,
            band_recall=(rr + rc) / (er + ec) if er + ec else None,
            band_precision=(tr + tc) / (dr + dc) if dr + dc else None,
            content_lines_removed=ink_lines_removed(img, res.row_bands, res.col_bands),
        )
    return item


def run_aps_bench(corpus_dir: str | Path, params: ApsParams | None = None) -> BenchReport:
    """Slim every PNG in ``corpus_dir``; sibling ``.json`` files supply ground truth."""
    params = params or ApsParams()
    report = BenchReport(kind="aps", method="aps", params=asdict(params))
    for png in sorted(Path(corpus_dir).glob("*.png")):
        try:
            img = read_png(png)
        except Exception as e:  # undecodable input is counted, not fatal
            log.warning("skipping %s: %s", png, e)
            report.skipped += 1
            continue
        truth_path = png.with_suffix(".json")
        truth = json.loads(truth_path.read_text()) if truth_path.exists() else None
        report.items.append(aps_item(img, params, truth, png.name))
    agg = _mean_fields(report.items)
    if any("bands_eligible" in it for it in report.items):
        elig = sum(it["bands_eligible"] for it in report.items)
        det = sum(it["bands_detected"] for it in report.items)
        agg["pooled_band_recall"] = (
            sum(it["bands_recalled"] for it in report.items) / elig if elig else None
        )
        agg["pooled_band_precision"] = (
            sum(it["bands_detected_on_truth"] for it in report.items) / det if det else None
        )
        agg["total_content_lines_removed"] = sum(it["content_lines_removed"] for it in report.items)
    report.aggregate = agg
    return report


def random_baseline(n_in: int, n_keep: int, seed: int) -> np.ndarray:
    """Uniformly sampled kept indices, from a seed stream separate from DTS."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA5E]))
    return np.sort(rng.choice(n_in, size=n_keep, replace=False))


def dts_item(
    tokens: np.ndarray,
    params: DtsParams,
    baseline: str = "none",
    content_idx=None,
    name: str = "",
    projected: np.ndarray | None = None,
) -> dict:
    timings: dict = {}
    t0 = time.perf_counter()
    res = dts(tokens, projected, params, timings)
    timings["total_ms"] = (time.perf_counter() - t0) * 1e3
    n_in, n_out = len(tokens), len(res.kept_idx)
    item = {
        "input": name,
        "method": "dts",
        "L_in": n_in,
        "L_out": n_out,
        "token_reduction": res.reduction,
        **timings,
    }
    content = None if content_idx is None else np.asarray(content_idx, dtype=np.intp)
    if content is not None and len(content):
        item["content_retention"] = float(np.isin(content, res.kept_idx).mean())
    if baseline == "random":
        kept = random_baseline(n_in, n_out, params.seed)
        item["random_token_reduction"] = 1.0 - n_out / n_in
        if content is not None and len(content):
            item["random_content_retention"] = float(np.isin(content, kept).mean())
    elif baseline != "none":
        raise ValueError(f"unknown baseline {baseline!r}")
    return item


def run_dts_bench(
    token_dir: str | Path, params: DtsParams | None = None, baseline: str = "none"
) -> BenchReport:
    """Run DTS on every ``.dstk`` file; sibling ``.json`` with ``content`` indices adds retention."""
    params = params or DtsParams()
    report = BenchReport(
        kind="dts", method="dts" if baseline == "none" else f"dts+{baseline}", params=asdict(params)
    )
    for path in sorted(Path(token_dir).glob("*.dstk")):
        try:
            tokens = read_tokens(path)
        except (MalformedTokenFile, OSError) as e:
            log.warning("skipping %s: %s", path, e)
            report.skipped += 1
            continue
        truth_path = path.with_suffix(".json")
        content = None
        if truth_path.exists():
            content = json.loads(truth_path.read_text()).get("content")
        report.items.append(dts_item(tokens, params, baseline, content, path.name))
    agg = _mean_fields(report.items)
    agg["avg_token_len_before"] = agg.pop("L_in", None)
    agg["avg_token_len_after"] = agg.pop("L_out", None)
    report.aggregate = agg
    return report
