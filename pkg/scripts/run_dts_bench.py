"""Token slimming on planted instances, against the random-keep baseline.

Mixes instances where the duplicate cluster is the majority with ones where it
is the minority, then writes a bench report.

    python3 scripts/run_dts_bench.py --instances 200 --out runs/dts
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from docslim.bench import run_dts_bench
from docslim.synthcorpus import SynthTokenSpec, write_token_item


def planted(k: int, dim: int) -> SynthTokenSpec:
    rng = np.random.default_rng([k, 6])
    if k % 2:
        n_red, n_con = int(rng.integers(60, 201)), int(rng.integers(20, 61))
    else:
        n_red, n_con = int(rng.integers(60, 121)), int(rng.integers(130, 241))
    return SynthTokenSpec(n_red, n_con, dim, float(rng.uniform(0.0, 0.2)), seed=k)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        for k in range(args.instances):
            write_token_item(Path(tmp), k, planted(k, args.dim))
        report = run_dts_bench(tmp, baseline="random")

    agg = report.aggregate
    for key in ("avg_token_len_before", "avg_token_len_after", "token_reduction",
                "content_retention", "random_content_retention", "total_ms"):
        print(f"{key:>26}: {agg.get(key)}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        report.write_json(args.out / "report.json")
        report.write_csv(args.out / "items.csv")


if __name__ == "__main__":
    main()
