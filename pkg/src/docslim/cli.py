"""docslim command line: aps, resize, dts, synth, bench.

Exit codes: 0 ok, 2 bad arguments or spec, 3 I/O or decode failure,
4 image too small, 5 malformed token file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from .aps import ApsParams, aps, detect_bands, overlay
from .bench import run_aps_bench, run_dts_bench
from .dts import DtsParams, dts
from .errors import (
    DegenerateOutput,
    DimTooSmall,
    ImageTooSmall,
    MalformedTokenFile,
    SpecConflict,
    ZeroNormToken,
)
from .flexres import DEFAULT_MAX_PIXELS, ResizePolicy, flexible_resize, parse_max_size
from .imgproc import read_png, write_png
from .synthcorpus import doc_specs_from_json, token_specs_from_json, write_doc_item, write_token_item
from .tokenio import read_tokens, write_dstk

log = logging.getLogger("docslim")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_SMALL, EXIT_TOKENS = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def worker_count() -> int:
    env = os.environ.get("DOCSLIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(EXIT_ARGS, f"DOCSLIM_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _map(fn, items):
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def _load_image(path: str):
    try:
        return read_png(path)
    except (OSError, ValueError) as e:
        raise CliError(EXIT_IO, f"cannot decode {path}: {e}")


def _write_json(path, obj) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2), encoding="utf-8")
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write {path}: {e}")


def _aps_params(args) -> ApsParams:
    try:
        return ApsParams(
            norm_size=args.size,
            noise_thresh=args.tn,
            run_thresh=args.tc,
            value_thresh=args.tv,
            max_removal_frac=args.max_removal_frac,
        )
    except ValueError as e:
        raise CliError(EXIT_ARGS, str(e))


def _dts_params(args) -> DtsParams:
    try:
        return DtsParams(
            vote_r=args.vote_r,
            kmeans_max_iters=args.max_iters,
            kmeans_tol=args.tol,
            seed=args.seed,
            kmeans_n_init=args.n_init,
        )
    except ValueError as e:
        raise CliError(EXIT_ARGS, str(e))


def cmd_aps(args) -> int:
    params = _aps_params(args)
    inputs = args.inputs
    multi = len(inputs) > 1
    out = Path(args.output)
    if multi:
        out.mkdir(parents=True, exist_ok=True)
        if args.overlay:
            Path(args.overlay).mkdir(parents=True, exist_ok=True)

    def one(path: str) -> dict:
        img = _load_image(path)
        try:
            res = aps(img, params)
        except ImageTooSmall as e:
            raise CliError(EXIT_SMALL, f"{path}: {e}")
        dest = out / Path(path).name if multi else out
        ov = None
        if args.overlay:
            ov = Path(args.overlay) / Path(path).name if multi else Path(args.overlay)
        try:
            write_png(dest, res.image)
            if ov is not None:
                # overlay shows the proposed bands even when the guard kept the image whole
                rows, cols = (
                    detect_bands(img, params) if res.guard_fired else (res.row_bands, res.col_bands)
                )
                write_png(ov, overlay(img, rows, cols))
        except OSError as e:
            raise CliError(EXIT_IO, f"cannot write output for {path}: {e}")
        return res.report(str(path))

    reports = _map(one, inputs)
    if args.report:
        _write_json(args.report, reports if multi else reports[0])
    for r in reports:
        log.info(
            "%s: %sx%s -> %sx%s (%.1f%% fewer pixels)%s",
            r["input"], *r["orig"], *r["slimmed"], 100 * r["reduction"],
            " [guard]" if r["guard_fired"] else "",
        )
    return EXIT_OK


def cmd_resize(args) -> int:
    try:
        policy = ResizePolicy(parse_max_size(args.max_size))
    except ValueError as e:
        raise CliError(EXIT_ARGS, str(e))
    img = _load_image(args.input)
    try:
        out, scale = flexible_resize(img, policy)
    except DegenerateOutput as e:
        raise CliError(EXIT_SMALL, str(e))
    try:
        if scale == 1.0:
            shutil.copyfile(args.input, args.output)
        else:
            write_png(args.output, out)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write {args.output}: {e}")
    log.info("%s: %sx%s -> %sx%s (scale %.6f)", args.input, *img.shape[:2], *out.shape[:2], scale)
    return EXIT_OK


def _load_tokens(path: str):
    try:
        return read_tokens(path)
    except MalformedTokenFile as e:
        raise CliError(EXIT_TOKENS, f"{path}: {e}")
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read {path}: {e}")


def cmd_dts(args) -> int:
    params = _dts_params(args)
    v = _load_tokens(args.input)
    vp = _load_tokens(args.projected) if args.projected else None
    if vp is not None and len(vp) != len(v):
        raise CliError(EXIT_TOKENS, f"--projected has {len(vp)} tokens, input has {len(v)}")
    if len(v) < 2:
        raise CliError(EXIT_TOKENS, f"{args.input}: need at least 2 tokens, got {len(v)}")
    try:
        res = dts(v, vp, params)
    except (ZeroNormToken, ValueError) as e:
        raise CliError(EXIT_TOKENS, f"{args.input}: {e}")
    try:
        write_dstk(args.output, res.tokens)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write {args.output}: {e}")
    sidecar = args.sidecar or str(Path(args.output).with_suffix(".json"))
    _write_json(sidecar, res.sidecar(params.seed))
    log.info("%s: %d -> %d tokens", args.input, len(v), len(res.kept_idx))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        cfg = json.loads(Path(args.spec).read_text())
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read {args.spec}: {e}")
    except json.JSONDecodeError as e:
        raise CliError(EXIT_ARGS, f"{args.spec} is not valid JSON: {e}")
    out = Path(args.output)
    kind = cfg.get("kind", "documents")
    try:
        if kind == "documents":
            specs = doc_specs_from_json(cfg)
            for s in specs:
                s.validate()
            writer = write_doc_item
        elif kind == "tokens":
            specs = token_specs_from_json(cfg)
            for s in specs:
                s.validate()
            writer = write_token_item
        else:
            raise CliError(EXIT_ARGS, f"unknown corpus kind {kind!r}")
    except (SpecConflict, DimTooSmall) as e:
        raise CliError(EXIT_ARGS, f"{type(e).__name__}: {e}")
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_ARGS, f"bad corpus spec: {e}")
    try:
        out.mkdir(parents=True, exist_ok=True)
        _map(lambda iv: writer(out, iv[0], iv[1]), list(enumerate(specs)))
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write corpus: {e}")
    log.info("wrote %d %s items to %s", len(specs), kind, out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if not Path(args.corpus).is_dir():
        raise CliError(EXIT_IO, f"{args.corpus} is not a directory")
    if args.target == "aps":
        report = run_aps_bench(args.corpus, _aps_params(args))
    else:
        try:
            report = run_dts_bench(args.corpus, _dts_params(args), args.baseline)
        except MalformedTokenFile as e:
            raise CliError(EXIT_TOKENS, str(e))
    try:
        if args.report:
            report.write_json(args.report)
        else:
            json.dump(report.aggregate, sys.stdout, indent=2)
            sys.stdout.write("\n")
        if args.csv:
            report.write_csv(args.csv)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write report: {e}")
    return EXIT_OK


def _add_aps_flags(p: argparse.ArgumentParser) -> None:
    d = ApsParams()
    p.add_argument("--size", type=int, default=d.norm_size, help="normalization size (default %(default)s)")
    p.add_argument("--tn", type=float, default=d.noise_thresh, help="gradient noise floor (default %(default)s)")
    p.add_argument("--tc", type=int, default=d.run_thresh, help="minimum run length, exclusive (default %(default)s)")
    p.add_argument("--tv", type=float, default=d.value_thresh, help="line gradient-sum threshold (default %(default)s)")
    p.add_argument("--max-removal-frac", type=float, default=d.max_removal_frac)


def _add_dts_flags(p: argparse.ArgumentParser) -> None:
    d = DtsParams()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--vote-r", type=int, default=d.vote_r, help="voters (default %(default)s)")
    p.add_argument("--max-iters", type=int, default=d.kmeans_max_iters)
    p.add_argument("--tol", type=float, default=d.kmeans_tol)
    p.add_argument("--n-init", type=int, default=d.kmeans_n_init)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docslim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aps", help="remove redundant rows/columns from page images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True, help="output PNG (a directory for several inputs)")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--overlay", help="overlay PNG path (a directory for several inputs)")
    _add_aps_flags(p)
    p.set_defaults(func=cmd_aps)

    p = sub.add_parser("resize", help="downscale under a total-pixel cap")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--max-size", default="1728x1728", help="'NxM' or pixel count (default %(default)s)")
    p.set_defaults(func=cmd_resize)

    p = sub.add_parser("dts", help="cluster and aggregate a token matrix")
    p.add_argument("input", help="DSTK or CSV token file")
    p.add_argument("-o", "--output", required=True, help="output DSTK file")
    p.add_argument("--projected", help="projected tokens used for voting and aggregation")
    p.add_argument("--sidecar", help="JSON sidecar path (default: output with .json)")
    _add_dts_flags(p)
    p.set_defaults(func=cmd_dts)

    p = sub.add_parser("synth", help="materialize a synthetic corpus from a JSON spec")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="benchmark a corpus")
    bsub = p.add_subparsers(dest="target", required=True)
    pa = bsub.add_parser("aps")
    pa.add_argument("corpus")
    pa.add_argument("--report")
    pa.add_argument("--csv")
    _add_aps_flags(pa)
    pd = bsub.add_parser("dts")
    pd.add_argument("corpus")
    pd.add_argument("--report")
    pd.add_argument("--csv")
    pd.add_argument("--baseline", choices=("none", "random"), default="none")
    _add_dts_flags(pd)
    for q in (pa, pd):
        q.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except CliError as e:
        print(f"docslim: error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
