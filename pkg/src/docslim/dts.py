"""Dynamic token slimming.

Two-center k-means splits the encoder tokens; the cluster holding more of the
top-R most self-similar tokens is declared nonessential, and every nonessential
token is folded into its most similar essential token with weights

    w_j = exp(c_ij) / (sum_j exp(c_ij) + e),   w_i = e / (sum_j exp(c_ij) + e)

where ``c_ij`` is the cosine similarity and ``e`` is Euler's number.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, TooFewTokens, ZeroNormToken

_BLOCK = 1024


@dataclass(frozen=True)
class DtsParams:
    vote_r: int = 50
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    seed: int = 0
    kmeans_n_init: int = 4

    def __post_init__(self):
        if self.vote_r < 1:
            raise ValueError("vote_r must be >= 1")
        if self.kmeans_max_iters < 1:
            raise ValueError("kmeans_max_iters must be >= 1")
        if self.kmeans_tol < 0:
            raise ValueError("kmeans_tol must be >= 0")
        if self.kmeans_n_init < 1:
            raise ValueError("kmeans_n_init must be >= 1")


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0


@dataclass
class ClusterSplit:
    essential_idx: np.ndarray
    nonessential_idx: np.ndarray
    centroids: np.ndarray
    vote_counts: tuple[int, int]
    essential_label: int


@dataclass
class AggregationResult:
    tokens: np.ndarray
    kept_idx: np.ndarray
    assignment: dict[int, int]
    essential_weights: np.ndarray
    nonessential_weights: dict[int, float]
    split: ClusterSplit | None = None

    @property
    def n_in(self) -> int:
        return len(self.kept_idx) + len(self.assignment)

    @property
    def reduction(self) -> float:
        return 1.0 - len(self.kept_idx) / self.n_in

    def sidecar(self, seed: int) -> dict:
        return {
            "kept_idx": [int(i) for i in self.kept_idx],
            "assignment": {str(j): int(i) for j, i in sorted(self.assignment.items())},
            "weights": {
                "essential": {
                    str(int(i)): float(w) for i, w in zip(self.kept_idx, self.essential_weights)
                },
                "nonessential": {
                    str(j): float(w) for j, w in sorted(self.nonessential_weights.items())
                },
            },
            "L_in": self.n_in,
            "L_out": int(len(self.kept_idx)),
            "reduction": float(self.reduction),
            "seed": int(seed),
        }


def as_token_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeMismatch(f"expected a non-empty L x D matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("token matrix contains non-finite entries")
    return a


def canonical_order(x: np.ndarray) -> np.ndarray:
    """Row order determined by content alone (hash of each row's bytes)."""
    keys = [hashlib.blake2b(row.tobytes(), digest_size=16).digest() for row in x]
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.intp)


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.stack([((x - c) ** 2).sum(axis=1) for c in centroids], axis=1)


def _assign(d: np.ndarray) -> np.ndarray:
    # ties go to the lower centroid index
    return (d[:, 1] < d[:, 0]).astype(np.intp)


def _repair(labels: np.ndarray, d: np.ndarray) -> np.ndarray:
    for k in (0, 1):
        if not (labels == k).any():
            own = d[np.arange(len(labels)), labels]
            labels = labels.copy()
            labels[int(np.argmax(own))] = k
    return labels


def _kmeanspp(x: np.ndarray, rng: np.random.Generator, trials: int = 4) -> np.ndarray:
    """Greedy k-means++ for two centers.

    The second center is the best of ``trials`` D^2-sampled candidates, judged
    by the resulting total squared distance (first candidate wins ties).
    """
    n = len(x)
    first = x[rng.integers(n)]
    d2 = ((x - first) ** 2).sum(axis=1)
    if d2.sum() <= 0:
        return np.stack([first, x[rng.integers(n)]])
    cum = np.cumsum(d2)
    picks = np.searchsorted(cum, rng.random(trials) * cum[-1], side="right")
    picks = np.minimum(picks, n - 1)
    cand = x[picks]
    dc = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ cand.T) + (cand * cand).sum(axis=1)[None, :]
    pot = np.minimum(d2[:, None], np.maximum(dc, 0.0)).sum(axis=0)
    return np.stack([first, cand[int(np.argmin(pot))]])


def _batch_labels(
    xs: np.ndarray, xs32: np.ndarray, xx: np.ndarray, cents: np.ndarray
) -> np.ndarray:
    """Nearest-centroid labels for every run, equal to exact float64 labels.

    The bulk comparison runs as one single-precision matmul; points whose
    margin lies inside a worst-case rounding bound are re-decided with direct
    double-precision distances. Ties go to centroid 0.
    """
    runs, _, dim = cents.shape
    flat = cents.reshape(2 * runs, dim)
    cc = (flat * flat).sum(axis=1)
    cross = (xs32 @ flat.T.astype(np.float32)).astype(np.float64)
    # |x - c1|^2 - |x - c0|^2 without the shared |x|^2 term
    margin = (cc[1::2] - cc[0::2])[None, :] - 2.0 * (cross[:, 1::2] - cross[:, 0::2])
    labels = (margin < 0).astype(np.intp)
    cmax = np.maximum(cc[0::2], cc[1::2])
    bound = 4.0 * (dim + 2) * 2.0**-24 * (xx[:, None] + cmax[None, :])
    unsure = np.abs(margin) <= bound
    for r in np.flatnonzero(unsure.any(axis=0)):
        idx = np.flatnonzero(unsure[:, r])
        d = _sq_dists(xs[idx], cents[r])
        labels[idx, r] = _assign(d)
    return labels


def _lloyd_batch(
    xs: np.ndarray, init: np.ndarray, params: DtsParams, track_inertia: bool
) -> tuple[np.ndarray, list[list[float]], np.ndarray]:
    """Run several two-center Lloyd iterations side by side.

    ``init`` has shape ``(runs, 2, D)``. All runs share each pass over ``xs``;
    a run stops updating once its centroids move less than the tolerance or
    its labels repeat.
    """
    n = len(xs)
    runs = init.shape[0]
    cents = init.copy()
    active = np.ones(runs, dtype=bool)
    prev = None
    history: list[list[float]] = [[] for _ in range(runs)]
    n_iter = np.zeros(runs, dtype=int)
    xs32 = xs.astype(np.float32)
    xx = (xs * xs).sum(axis=1)
    total = xs.sum(axis=0)
    for _ in range(params.kmeans_max_iters):
        labels = _batch_labels(xs, xs32, xx, cents)
        for r in np.flatnonzero(active):
            if labels[:, r].min() == labels[:, r].max():
                labels[:, r] = _repair(labels[:, r], _sq_dists(xs, cents[r]))
        if prev is not None:
            same = (labels == prev).all(axis=0)
            active &= ~same
            if not active.any():
                break
        lab = labels.T.astype(np.float64)
        n1 = lab.sum(axis=1)
        s1 = lab @ xs
        new = np.stack([(total - s1) / (n - n1)[:, None], s1 / n1[:, None]], axis=1)
        shift = np.sqrt(((new - cents) ** 2).sum(axis=2)).max(axis=1)
        for r in np.flatnonzero(active):
            cents[r] = new[r]
            n_iter[r] += 1
            if track_inertia:
                history[r].append(float(((xs - new[r][labels[:, r]]) ** 2).sum()))
            if shift[r] < params.kmeans_tol or shift[r] == 0.0:
                active[r] = False
        if not active.any():
            break
        prev = labels
    return cents, history, n_iter


def kmeans2(v, params: DtsParams | None = None, track_inertia: bool = False) -> KMeansResult:
    """Lloyd's algorithm with k=2 and k-means++ seeding.

    Runs on a content-hash ordering of the rows so the result does not depend
    on the order tokens arrive in, and on mean-centered data to keep distance
    arithmetic well conditioned. ``params.kmeans_n_init`` seedings are drawn
    from one generator and the run with the lowest inertia wins (first on
    ties). Final labels use exact squared distances to the final centroids.
    """
    params = params or DtsParams()
    x = as_token_matrix(v)
    n = len(x)
    if n < 2:
        raise TooFewTokens(f"k-means with two centers needs at least 2 tokens, got {n}")
    order = canonical_order(x)
    xs = np.ascontiguousarray(x[order])
    mu = xs.mean(axis=0)
    xs -= mu
    rng = np.random.default_rng(params.seed)
    init = np.stack([_kmeanspp(xs, rng) for _ in range(params.kmeans_n_init)])
    cents, history, n_iter = _lloyd_batch(xs, init, params, track_inertia)

    inertia = [float(_sq_dists(xs, c).min(axis=1).sum()) for c in cents]
    r = int(np.argmin(inertia))
    d = _sq_dists(xs, cents[r])
    labels_s = _repair(_assign(d), d)
    labels = np.empty(n, dtype=np.intp)
    labels[order] = labels_s
    return KMeansResult(
        labels=labels, centroids=cents[r] + mu, inertia_history=history[r], n_iter=int(n_iter[r])
    )


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.sqrt((x * x).sum(axis=1))
    if (norms == 0).any():
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ZeroNormToken(f"token {bad} has zero norm; cosine similarity undefined")
    return x / norms[:, None]


def _top2(g: np.ndarray, axis: int):
    """Best value, its index and the runner-up along ``axis``."""
    if axis == 1:
        i1 = g.argmax(axis=1)
        r = np.arange(g.shape[0])
        v1 = g[r, i1]
        g[r, i1] = -np.inf
        v2 = g.max(axis=1)
        g[r, i1] = v1
    else:
        # argmax down the columns of a row-major block is slow; locate the
        # column maxima through an equality mask instead (lowest row wins)
        c = np.arange(g.shape[1])
        v1 = g.max(axis=0)
        rows, cols = np.nonzero(g == v1)
        i1 = np.full(g.shape[1], g.shape[0], dtype=np.intp)
        np.minimum.at(i1, cols, rows)
        g[i1, c] = -np.inf
        v2 = g.max(axis=0)
        g[i1, c] = v1
    return v1, i1, v2


def _merge(b1, bi, b2, sl, v1, i1, v2) -> None:
    old = b1[sl]
    new = v1 > old
    b2[sl] = np.where(new, np.maximum(old, v2), np.maximum(b2[sl], v1))
    bi[sl] = np.where(new, i1, bi[sl])
    b1[sl] = np.maximum(old, v1)


def _screened_argmax(q: np.ndarray, k: np.ndarray, self_match: bool = False):
    """Row-wise max and argmax of ``q @ k.T`` for unit-norm rows.

    A single-precision product ranks candidates. Rows whose winner leads the
    runner-up by more than the worst-case rounding error keep that winner,
    scored in double precision; the remaining rows are narrowed with a
    double-precision product and rescore every candidate left in its error
    window. The result equals the brute-force double-precision
    maximum, and exact ties pick the lowest column. With ``self_match``
    (``q`` is ``k``) the diagonal is excluded and only the upper triangle of
    the Gram matrix is formed.
    """
    n, dim = q.shape
    q32 = q.astype(np.float32)
    k32 = q32 if self_match else k.astype(np.float32)
    window = 4.0 * (dim + 2) * 2.0**-24
    window64 = 4.0 * (dim + 2) * 2.0**-53
    b1 = np.full(n, -np.inf, dtype=np.float32)
    b2 = np.full(n, -np.inf, dtype=np.float32)
    bi = np.zeros(n, dtype=np.intp)
    for a in range(0, n, _BLOCK):
        e = min(a + _BLOCK, n)
        if self_match:
            g = q32[a:e] @ k32[a:].T
            r = np.arange(e - a)
            g[r, r] = -np.inf
            v1, i1, v2 = _top2(g, 1)
            _merge(b1, bi, b2, slice(a, e), v1, i1 + a, v2)
            if n > e:
                v1, i1, v2 = _top2(g[:, e - a :], 0)
                _merge(b1, bi, b2, slice(e, n), v1, i1 + a, v2)
        else:
            v1, i1, v2 = _top2(q32[a:e] @ k32.T, 1)
            _merge(b1, bi, b2, slice(a, e), v1, i1, v2)

    args = bi
    vals = np.einsum("ij,ij->i", q, k[bi])
    for chunk in np.array_split(np.flatnonzero(b2 >= b1 - window), max(1, n // _BLOCK)):
        if not len(chunk):
            continue
        # double-precision product narrows the window before exact rescoring
        g = q[chunk] @ k.T
        if self_match:
            g[np.arange(len(chunk)), chunk] = -np.inf
        top = g.max(axis=1)
        rows, cols = np.nonzero(g >= (top - window64)[:, None])
        # near-duplicate rows can have thousands of candidates; gather in
        # cache-sized batches
        exact = np.empty(len(rows))
        step = max(1, (1 << 15) // dim)
        for s in range(0, len(rows), step):
            t = slice(s, s + step)
            exact[t] = np.einsum("ij,ij->i", q[chunk[rows[t]]], k[cols[t]])
        order = np.lexsort((cols, -exact, rows))
        first = order[np.r_[True, rows[order][1:] != rows[order][:-1]]]
        vals[chunk[rows[first]]] = exact[first]
        args[chunk[rows[first]]] = cols[first]
    return vals, args


def max_similarities(vp) -> np.ndarray:
    """For each token, the largest cosine similarity to any *other* token."""
    x = as_token_matrix(vp)
    n = len(x)
    if n < 2:
        raise TooFewTokens("max similarity needs at least 2 tokens")
    u = _unit_rows(x)
    return _screened_argmax(u, u, self_match=True)[0]


def identify_essential(
    labels, max_sims, params: DtsParams | None = None, centroids: np.ndarray | None = None
) -> ClusterSplit:
    """Vote with the top-R most self-similar tokens; the majority cluster is nonessential."""
    params = params or DtsParams()
    labels = np.asarray(labels)
    max_sims = np.asarray(max_sims, dtype=np.float64)
    n = len(labels)
    if len(max_sims) != n:
        raise ShapeMismatch("labels and max_sims differ in length")
    r = min(params.vote_r, n)
    # descending similarity, ties by lower index
    top = np.lexsort((np.arange(n), -max_sims))[:r]
    num1 = int((labels[top] == 0).sum())
    num2 = int((labels[top] == 1).sum())
    if num1 > num2:
        nonessential = 0
    elif num2 > num1:
        nonessential = 1
    else:
        nonessential = int(labels[top[0]])
    essential = 1 - nonessential
    return ClusterSplit(
        essential_idx=np.flatnonzero(labels == essential),
        nonessential_idx=np.flatnonzero(labels == nonessential),
        centroids=centroids if centroids is not None else np.empty((0, 0)),
        vote_counts=(num1, num2),
        essential_label=essential,
    )


def assign_nonessential(vp, split: ClusterSplit) -> np.ndarray:
    """Most similar essential token (original index) for each nonessential token.

    Returned array is aligned with ``split.nonessential_idx``; ties pick the
    lowest essential index.
    """
    x = as_token_matrix(vp)
    ne = split.nonessential_idx
    es = split.essential_idx
    if len(es) == 0:
        raise ValueError("split has no essential tokens")
    if len(ne) == 0:
        return np.empty(0, dtype=np.intp)
    _, best = _screened_argmax(_unit_rows(x[ne]), _unit_rows(x[es]))
    return es[best]


def aggregate(vp, split: ClusterSplit, targets) -> AggregationResult:
    """Similarity-weighted fold of nonessential tokens into essential ones."""
    x = as_token_matrix(vp)
    es = split.essential_idx
    ne = split.nonessential_idx
    targets = np.asarray(targets, dtype=np.intp)
    if len(targets) != len(ne):
        raise ShapeMismatch("one target per nonessential token required")

    out = x[es].copy()
    w_ess = np.ones(len(es))
    w_ne: dict[int, float] = {}
    if len(ne):
        pos = np.searchsorted(es, targets)
        if (pos >= len(es)).any() or (es[np.minimum(pos, len(es) - 1)] != targets).any():
            raise ValueError("assignment targets must be essential tokens")
        ue = _unit_rows(x[es])
        un = _unit_rows(x[ne])
        c = (un * ue[pos]).sum(axis=1)
        ec = np.exp(c)
        denom = np.bincount(pos, weights=ec, minlength=len(es)) + math.e
        hit = np.bincount(pos, minlength=len(es)) > 0

        order = np.argsort(pos, kind="stable")
        grp = pos[order]
        starts = np.flatnonzero(np.r_[True, grp[1:] != grp[:-1]])
        sums = np.add.reduceat(ec[order, None] * x[ne][order], starts, axis=0)
        idx = grp[starts]
        out[idx] = (math.e * x[es][idx] + sums) / denom[idx, None]

        w_ess[hit] = math.e / denom[hit]
        wj = ec / denom[pos]
        w_ne = {int(j): float(w) for j, w in zip(ne, wj)}

    return AggregationResult(
        tokens=out,
        kept_idx=es.copy(),
        assignment={int(j): int(i) for j, i in zip(ne, targets)},
        essential_weights=w_ess,
        nonessential_weights=w_ne,
        split=split,
    )


def dts(v, vp=None, params: DtsParams | None = None, timings: dict | None = None) -> AggregationResult:
    """Cluster on ``v``; vote, assign and aggregate on ``vp`` (defaults to ``v``)."""
    params = params or DtsParams()
    v = as_token_matrix(v)
    vp = v if vp is None else as_token_matrix(vp)
    if vp.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"v has {v.shape[0]} tokens but vp has {vp.shape[0]}")
    t0 = time.perf_counter()
    km = kmeans2(v, params)
    t1 = time.perf_counter()
    sims = max_similarities(vp)
    split = identify_essential(km.labels, sims, params, centroids=km.centroids)
    t2 = time.perf_counter()
    targets = assign_nonessential(vp, split)
    result = aggregate(vp, split, targets)
    t3 = time.perf_counter()
    if timings is not None:
        timings["kmeans_ms"] = (t1 - t0) * 1e3
        timings["vote_ms"] = (t2 - t1) * 1e3
        timings["aggregate_ms"] = (t3 - t2) * 1e3
    return result
