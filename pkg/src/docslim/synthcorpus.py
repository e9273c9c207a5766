"""Seeded synthetic documents and token matrices with planted ground truth.

Also home to the slow reference implementations the tests compare against.
"""
from __future__ import annotations

import json
import math
import operator
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aps import DEFAULT_NOISE_THRESH, BandSet
from .errors import DimTooSmall, SpecConflict

BACKGROUND = 240
INK_MAX = 60


@dataclass
class TextBlock:
    top: int
    left: int
    bottom: int
    right: int
    density: float = 0.4

    @property
    def rect(self) -> tuple[int, int, int, int]:
        return self.top, self.left, self.bottom, self.right


@dataclass
class SynthDocSpec:
    page_h: int
    page_w: int
    text_blocks: list[TextBlock] = field(default_factory=list)
    blank_row_bands: list[tuple[int, int]] = field(default_factory=list)
    blank_col_bands: list[tuple[int, int]] = field(default_factory=list)
    noise_amp: int = 8
    seed: int = 0

    def __post_init__(self):
        self.text_blocks = [
            tb if isinstance(tb, TextBlock) else TextBlock(**tb) if isinstance(tb, dict) else TextBlock(*tb)
            for tb in self.text_blocks
        ]
        self.blank_row_bands = [(int(s), int(e)) for s, e in self.blank_row_bands]
        self.blank_col_bands = [(int(s), int(e)) for s, e in self.blank_col_bands]

    @classmethod
    def from_dict(cls, d: dict) -> "SynthDocSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blank_row_bands"] = [list(b) for b in self.blank_row_bands]
        d["blank_col_bands"] = [list(b) for b in self.blank_col_bands]
        return d

    def validate(self) -> None:
        if self.page_h < 3 or self.page_w < 3:
            raise SpecConflict(f"page {self.page_h}x{self.page_w} is too small")
        # noise peak-to-peak `a` gives Sobel responses up to 4a
        if not 0 <= 4 * self.noise_amp < DEFAULT_NOISE_THRESH:
            raise SpecConflict(
                f"noise_amp={self.noise_amp} can survive the {DEFAULT_NOISE_THRESH:g} noise floor"
            )
        for name, bands, dim in (
            ("row", self.blank_row_bands, self.page_h),
            ("col", self.blank_col_bands, self.page_w),
        ):
            try:
                BandSet("rows", sorted(bands))
            except ValueError as e:
                raise SpecConflict(f"{name} bands invalid: {e}") from None
            for s, e in bands:
                if e > dim:
                    raise SpecConflict(f"{name} band [{s}, {e}) exceeds page dimension {dim}")
        for tb in self.text_blocks:
            if not (0 <= tb.top < tb.bottom <= self.page_h and 0 <= tb.left < tb.right <= self.page_w):
                raise SpecConflict(f"text block {tb.rect} outside the page")
            if not 0 < tb.density <= 1:
                raise SpecConflict(f"text block density {tb.density} not in (0, 1]")
            for s, e in self.blank_row_bands:
                if s < tb.bottom and tb.top < e:
                    raise SpecConflict(f"row band [{s}, {e}) overlaps text block {tb.rect}")
            for s, e in self.blank_col_bands:
                if s < tb.right and tb.left < e:
                    raise SpecConflict(f"col band [{s}, {e}) overlaps text block {tb.rect}")

    @property
    def planted_fraction(self) -> float:
        rb = sum(e - s for s, e in self.blank_row_bands)
        cb = sum(e - s for s, e in self.blank_col_bands)
        return 1.0 - (self.page_h - rb) * (self.page_w - cb) / (self.page_h * self.page_w)


def _render_text(canvas: np.ndarray, tb: TextBlock, rng: np.random.Generator) -> None:
    """Dense pseudo-text: lines of random-pixel glyphs with 2px leading, 1-2px glyph gaps."""
    h, w = tb.bottom - tb.top, tb.right - tb.left
    ink = rng.random((h, w)) < tb.density
    y = 0
    while y < h:
        lh = int(rng.integers(7, 15))
        if h - (y + lh) < 9:
            lh = h - y  # last line runs to the block edge
        widths = rng.integers(4, 11, size=w // 4 + 2)
        gaps = rng.integers(1, 3, size=widths.size)
        starts = np.cumsum(widths + gaps) - gaps
        gap_cols = np.zeros(w + 3, dtype=bool)
        for s, g in zip(starts, gaps):
            if s >= w:
                break
            gap_cols[s : s + g] = True
        ink[y : y + lh, gap_cols[:w]] = False
        ink[y + lh : y + lh + 2] = False
        y += lh + 2
    # block border lines always carry ink
    ink[0, 0] = ink[0, w - 1] = ink[h - 1, 0] = ink[h - 1, w - 1] = True
    region = canvas[tb.top : tb.bottom, tb.left : tb.right]
    region[ink] = rng.integers(0, INK_MAX + 1, size=int(ink.sum()), dtype=np.uint8)


def gen_document(spec: SynthDocSpec) -> tuple[np.ndarray, tuple[BandSet, BandSet]]:
    """Render the page as RGB uint8 and return it with the planted bands."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    canvas = np.full((spec.page_h, spec.page_w), BACKGROUND, dtype=np.uint8)
    if spec.noise_amp > 0:
        canvas += rng.integers(0, spec.noise_amp + 1, size=canvas.shape, dtype=np.uint8)
    for tb in spec.text_blocks:
        _render_text(canvas, tb, rng)
    img = np.repeat(canvas[..., None], 3, axis=2)
    truth = (
        BandSet("rows", sorted(spec.blank_row_bands)),
        BandSet("cols", sorted(spec.blank_col_bands)),
    )
    return img, truth


def _split(rng: np.random.Generator, total: int, parts: int, minimum: int) -> list[int]:
    """Random composition of ``total`` into ``parts`` sizes, each >= ``minimum``."""
    spare = total - parts * minimum
    if spare < 0:
        raise SpecConflict(f"cannot split {total} into {parts} parts of at least {minimum}")
    shares = rng.dirichlet(np.ones(parts))
    sizes = np.floor(shares * spare).astype(int)
    sizes[: spare - sizes.sum()] += 1
    return [minimum + int(s) for s in sizes]


def _axis_layout(
    rng: np.random.Generator, dim: int, blank: int, n_bands: int, min_band: int, min_text: int
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Alternate blank bands and text segments along one axis."""
    if n_bands == 0 or blank == 0:
        return [], [(0, dim)]
    bands = _split(rng, blank, n_bands, min_band)
    # outer text segments are optional (a band at the edge is a page margin)
    lead, trail = bool(rng.random() < 0.3), bool(rng.random() < 0.3)
    n_text = n_bands - 1 + lead + trail
    if n_text == 0:
        lead = True
        n_text = 1
    texts = _split(rng, dim - blank, n_text, min_text)
    seq: list[tuple[str, int]] = []
    ti = 0
    if lead:
        seq.append(("t", texts[ti]))
        ti += 1
    for k, b in enumerate(bands):
        seq.append(("b", b))
        if k < n_bands - 1:
            seq.append(("t", texts[ti]))
            ti += 1
    if trail:
        seq.append(("t", texts[ti]))
    band_iv, text_iv = [], []
    pos = 0
    for kind, size in seq:
        (band_iv if kind == "b" else text_iv).append((pos, pos + size))
        pos += size
    return band_iv, text_iv


def _covered(bands) -> int:
    return sum(e - s for s, e in bands)


def random_doc_spec(
    seed: int,
    page_h: tuple[int, int] = (800, 2400),
    page_w: tuple[int, int] = (800, 2400),
    blank_frac: tuple[float, float] = (0.30, 0.40),
    noise_amp: int = 8,
    norm_size: int = 2048,
) -> SynthDocSpec:
    """Page layout with text everywhere except the planted bands.

    Blank area is split between full-width row bands and full-height column
    bands so the removable fraction is ``1 - (1 - a)(1 - b)``.
    """
    rng = np.random.default_rng(seed)
    h = int(rng.integers(page_h[0], page_h[1] + 1))
    w = int(rng.integers(page_w[0], page_w[1] + 1))
    min_text = 40

    def bands_for(dim: int, frac: float, max_bands: int):
        # keep every band well above the run threshold once normalized
        min_band = max(20, math.ceil(24 * dim / norm_size))
        blank = int(round(frac * dim))
        n = int(rng.integers(1, max_bands + 1)) if blank else 0
        while n > 1 and blank < n * min_band:
            n -= 1
        if blank and blank < min_band:
            blank = 0
            n = 0
        return _axis_layout(rng, dim, blank, n, min_band, min_text)

    # whole-line rounding can push the realized fraction just outside the
    # requested range; redraw the layout from the same stream when it does
    for _ in range(64):
        f = float(rng.uniform(*blank_frac))
        if f > 0:
            a = float(rng.uniform(0.35, 0.75)) * f
            b = 1.0 - (1.0 - f) / (1.0 - a)
        else:
            a = b = 0.0
        row_bands, row_text = bands_for(h, a, 4)
        col_bands, col_text = bands_for(w, b, 3)
        realized = 1.0 - (h - _covered(row_bands)) * (w - _covered(col_bands)) / (h * w)
        if blank_frac[0] <= realized <= blank_frac[1]:
            break
    blocks = [
        TextBlock(r0, c0, r1, c1, float(rng.uniform(0.3, 0.6)))
        for r0, r1 in row_text
        for c0, c1 in col_text
    ]
    return SynthDocSpec(
        page_h=h,
        page_w=w,
        text_blocks=blocks,
        blank_row_bands=row_bands,
        blank_col_bands=col_bands,
        noise_amp=noise_amp,
        seed=int(rng.integers(2**31)),
    )


@dataclass
class SynthTokenSpec:
    n_redundant: int
    n_content: int
    dim: int
    duplicate_jitter: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if self.n_redundant < 0 or self.n_content < 0 or self.n_redundant + self.n_content < 2:
            raise SpecConflict("need at least two tokens in total")
        if self.duplicate_jitter < 0:
            raise SpecConflict("duplicate_jitter must be >= 0")
        if self.dim < 1:
            raise SpecConflict("dim must be >= 1")
        if self.dim < self.n_content:
            raise DimTooSmall(
                f"dim={self.dim} cannot hold {self.n_content} mutually orthogonal content tokens"
            )


def gen_tokens(spec: SynthTokenSpec) -> tuple[np.ndarray, np.ndarray]:
    """Tokens plus a boolean mask that is True on planted redundant tokens.

    Redundant tokens are jittered copies of one base vector; content tokens are
    orthonormalized random directions. All share the same nominal norm.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    scale = math.sqrt(spec.dim)
    base = rng.standard_normal(spec.dim)
    base *= scale / np.linalg.norm(base)
    noise = rng.standard_normal((spec.n_redundant, spec.dim)) / math.sqrt(spec.dim)
    redundant = base + spec.duplicate_jitter * scale * noise
    if spec.n_content:
        q, _ = np.linalg.qr(rng.standard_normal((spec.dim, spec.n_content)))
        content = q.T * scale
    else:
        content = np.empty((0, spec.dim))
    tokens = np.concatenate([redundant, content])
    is_red = np.r_[np.ones(spec.n_redundant, bool), np.zeros(spec.n_content, bool)]
    perm = rng.permutation(len(tokens))
    return tokens[perm], is_red[perm]


# -- reference implementations (pure Python loops, no vectorization) --------


def _rows_and_norms(vp) -> tuple[list[list[float]], list[float]]:
    rows = np.asarray(vp, dtype=np.float64).tolist()
    return rows, [math.sqrt(sum(x * x for x in r)) for r in rows]


def _cos(rows, norms, i: int, j: int) -> float:
    return sum(map(operator.mul, rows[i], rows[j])) / (norms[i] * norms[j])


def oracle_max_similarities(vp) -> list[float]:
    rows, norms = _rows_and_norms(vp)
    n = len(rows)
    out = [-math.inf] * n
    for t in range(n):
        for s in range(t + 1, n):
            c = _cos(rows, norms, t, s)
            if c > out[t]:
                out[t] = c
            if c > out[s]:
                out[s] = c
    return out


def oracle_assign(vp, essential_idx, nonessential_idx) -> list[int]:
    rows, norms = _rows_and_norms(vp)
    out = []
    for j in nonessential_idx:
        best_i, best_c = -1, -math.inf
        for i in essential_idx:
            c = _cos(rows, norms, int(i), int(j))
            if c > best_c:
                best_i, best_c = int(i), c
        out.append(best_i)
    return out


def oracle_aggregate(vp, essential_idx, assignment: dict[int, int]) -> np.ndarray:
    """Direct evaluation of the weighted fold, one scalar at a time."""
    rows, norms = _rows_and_norms(vp)
    out = []
    for i in essential_idx:
        i = int(i)
        members = [j for j, t in sorted(assignment.items()) if t == i]
        if not members:
            out.append(list(rows[i]))
            continue
        expc = [math.exp(_cos(rows, norms, i, j)) for j in members]
        denom = sum(expc) + math.e
        w_i = math.e / denom
        new = []
        for d in range(len(rows[i])):
            acc = w_i * rows[i][d]
            for j, ec in zip(members, expc):
                acc += (ec / denom) * rows[j][d]
            new.append(acc)
        out.append(new)
    return np.array(out, dtype=np.float64).reshape(len(out), -1)


def oracle_dts(vp, labels, vote_r: int = 50) -> tuple[list[int], dict[int, int], np.ndarray]:
    """Reference pipeline after clustering: vote, assign, aggregate.

    Returns ``(kept_idx, assignment, tokens)``.
    """
    labels = [int(x) for x in labels]
    sims = oracle_max_similarities(vp)
    n = len(labels)
    ranked = sorted(range(n), key=lambda t: (-sims[t], t))[: min(vote_r, n)]
    num1 = sum(1 for t in ranked if labels[t] == 0)
    num2 = sum(1 for t in ranked if labels[t] == 1)
    if num1 > num2:
        nonessential = 0
    elif num2 > num1:
        nonessential = 1
    else:
        nonessential = labels[ranked[0]]
    ess = [t for t in range(n) if labels[t] != nonessential]
    non = [t for t in range(n) if labels[t] == nonessential]
    targets = oracle_assign(vp, ess, non)
    assignment = dict(zip(non, targets))
    return ess, assignment, oracle_aggregate(vp, ess, assignment)


# -- corpus materialization --------------------------------------------------


def _range(v, default):
    if v is None:
        return default
    if isinstance(v, (int, float)):
        return (v, v)
    return tuple(v)


def doc_specs_from_json(cfg: dict) -> list[SynthDocSpec]:
    """Expand a corpus description into page specs.

    Either ``{"pages": [spec, ...]}`` or a generator block with ``count``,
    ``seed`` and optional ``page_h``, ``page_w``, ``blank_frac``, ``noise_amp``
    ranges.
    """
    if "pages" in cfg:
        return [SynthDocSpec.from_dict(p) for p in cfg["pages"]]
    seed = int(cfg.get("seed", 0))
    count = int(cfg["count"])
    kw = dict(
        page_h=_range(cfg.get("page_h"), (800, 2400)),
        page_w=_range(cfg.get("page_w"), (800, 2400)),
        blank_frac=_range(cfg.get("blank_frac"), (0.30, 0.40)),
        noise_amp=int(cfg.get("noise_amp", 8)),
    )
    return [random_doc_spec(seed * 1_000_003 + i, **kw) for i in range(count)]


def token_specs_from_json(cfg: dict) -> list[SynthTokenSpec]:
    if "instances" in cfg:
        return [SynthTokenSpec(**d) for d in cfg["instances"]]
    seed = int(cfg.get("seed", 0))
    count = int(cfg["count"])
    rng = np.random.default_rng(seed)
    nr = _range(cfg.get("n_redundant"), (60, 60))
    nc = _range(cfg.get("n_content"), (40, 40))
    out = []
    for i in range(count):
        out.append(
            SynthTokenSpec(
                n_redundant=int(rng.integers(nr[0], nr[1] + 1)),
                n_content=int(rng.integers(nc[0], nc[1] + 1)),
                dim=int(cfg.get("dim", 64)),
                duplicate_jitter=float(cfg.get("duplicate_jitter", 0.05)),
                seed=seed * 1_000_003 + i,
            )
        )
    return out


def doc_truth(spec: SynthDocSpec) -> dict:
    return {
        "page": [spec.page_h, spec.page_w],
        "row_bands": [list(b) for b in sorted(spec.blank_row_bands)],
        "col_bands": [list(b) for b in sorted(spec.blank_col_bands)],
        "text_blocks": [list(tb.rect) for tb in spec.text_blocks],
        "planted_fraction": spec.planted_fraction,
        "spec": spec.to_dict(),
    }


def write_doc_item(out_dir: Path, index: int, spec: SynthDocSpec) -> Path:
    from .imgproc import write_png

    img, _ = gen_document(spec)
    png = out_dir / f"page_{index:04d}.png"
    write_png(png, img)
    (out_dir / f"page_{index:04d}.json").write_text(json.dumps(doc_truth(spec)))
    return png


def write_token_item(out_dir: Path, index: int, spec: SynthTokenSpec) -> Path:
    from .tokenio import write_dstk

    tokens, is_red = gen_tokens(spec)
    path = out_dir / f"tokens_{index:04d}.dstk"
    write_dstk(path, tokens)
    truth = {
        "redundant": [int(i) for i in np.flatnonzero(is_red)],
        "content": [int(i) for i in np.flatnonzero(~is_red)],
        "spec": asdict(spec),
    }
    (out_dir / f"tokens_{index:04d}.json").write_text(json.dumps(truth))
    return path
