"""Median single-thread latency of APS on a 2048x2048 page and DTS on 4096x256 tokens."""
import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from docslim.aps import aps
from docslim.dts import dts
from docslim.synthcorpus import gen_document, random_doc_spec


def median_ms(fn, reps: int) -> float:
    fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=9)
    args = ap.parse_args()
    page, _ = gen_document(random_doc_spec(9, page_h=(2048, 2048), page_w=(2048, 2048)))
    tokens = np.random.default_rng(9).standard_normal((4096, 256))
    with threadpool_limits(limits=1):
        print(f"aps 2048x2048: {median_ms(lambda: aps(page), args.reps):.1f} ms")
        print(f"dts 4096x256:  {median_ms(lambda: dts(tokens), args.reps):.1f} ms")


if __name__ == "__main__":
    main()
