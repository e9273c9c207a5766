"""Sweep the line threshold t_v over a seeded corpus.

For each candidate value, report pooled band recall, ink lines removed and the
gap between mean reduction and mean planted fraction, then the range of values
with full recall and no ink removed.

    python3 scripts/calibrate_value_thresh.py --pages 200
"""
import argparse
from dataclasses import replace

import numpy as np

from docslim.aps import ApsParams, aps
from docslim.bench import band_match, ink_lines_removed
from docslim.synthcorpus import gen_document, random_doc_spec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pages", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--multiples", type=float, nargs="+", default=[0.02, 0.1, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500])
    args = ap.parse_args()

    base = ApsParams()
    grid = [m * base.noise_thresh for m in args.multiples]
    stats = {tv: [0, 0, 0, [], []] for tv in grid}  # eligible, recalled, ink, reduction, planted
    for k in range(args.pages):
        spec = random_doc_spec(args.seed + k)
        img, (t_rows, t_cols) = gen_document(spec)
        h, w = img.shape[:2]
        for tv in grid:
            p = replace(base, value_thresh=tv)
            res = aps(img, p)
            er, rr, *_ = band_match(t_rows, res.row_bands, h, p.norm_size, p.run_thresh)
            ec, rc, *_ = band_match(t_cols, res.col_bands, w, p.norm_size, p.run_thresh)
            s = stats[tv]
            s[0] += er + ec
            s[1] += rr + rc
            s[2] += ink_lines_removed(img, res.row_bands, res.col_bands)
            s[3].append(res.reduction)
            s[4].append(spec.planted_fraction)

    print(f"{'t_v':>8} {'recall':>8} {'ink':>6} {'gap_pp':>8}")
    feasible = []
    for tv in grid:
        elig, rec, ink, red, pl = stats[tv]
        recall = rec / elig if elig else float("nan")
        gap = (np.mean(red) - np.mean(pl)) * 100
        print(f"{tv:8.1f} {recall:8.4f} {ink:6d} {gap:8.2f}")
        if recall == 1.0 and ink == 0:
            feasible.append(tv)
    if feasible:
        print(f"full recall and no ink removed for t_v in [{min(feasible)}, {max(feasible)}]")
    else:
        print("no value reaches full recall without removing ink")


if __name__ == "__main__":
    main()
