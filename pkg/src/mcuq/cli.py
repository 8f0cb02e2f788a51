"""Command-line entry point: ``mcuq {metrics,select,curves,simulate,patches}``.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input,
3 a labelled statistic was requested for unlabelled input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from mcuq import patches as px
from mcuq.errors import MCSError
from mcuq.metrics import METRICS, metric_matrix, normalize_metric
from mcuq.report import build_report, curve_csv, dumps
from mcuq.selective import accuracy_vs_threshold, epsilon_grid, referral_curve
from mcuq.simulator import SimConfig, simulate
from mcuq.tensor import load_mcs, save_mcs

log = logging.getLogger("mcuq")

EXIT_USAGE, EXIT_DATA, EXIT_SEMANTIC = 1, 2, 3


class UsageError(Exception):
    pass


class SemanticError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
        return epsilon_grid(start, stop, step)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected START:STOP:STEP, got {text!r} ({exc})")


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"expected a finite value >= 0, got {text!r}")
    return v


def _read_input(args):
    path = Path(args.input)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MCSError(f"cannot read {path}: {exc}") from None
    fmt = args.format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    mcs, labels = load_mcs(path, fmt)
    return mcs, labels, raw, fmt


def _echo(args, fmt, **extra) -> dict:
    cfg = {"command": args.command, "input": str(args.input), "format": fmt}
    cfg.update(extra)
    return cfg


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_metrics(args) -> None:
    mcs, labels, raw, fmt = _read_input(args)
    cfg = _echo(args, fmt, metric=args.metric, bins=args.bins)
    report = build_report(
        mcs, labels, raw, cfg, metric=args.metric, bins=args.bins, threads=args.threads
    )
    _write(dumps(report), args.out)


def cmd_select(args) -> None:
    mcs, labels, raw, fmt = _read_input(args)
    alpha = 1.0 if args.alpha is None else args.alpha
    beta = 0.0 if args.beta is None else args.beta
    if labels is None and (args.alpha is not None or args.beta is not None):
        raise SemanticError("--alpha/--beta need a labelled input (ARQ is undefined without labels)")
    grid = None
    if args.epsilon is None:
        grid = args.epsilon_grid or epsilon_grid(0.0, 30.0, 0.5)
        if labels is None:
            raise SemanticError("an epsilon sweep reports ARQ and needs a labelled input")
    cfg = _echo(args, fmt, metric=args.metric, bins=args.bins, alpha=alpha, beta=beta)
    if grid is None:
        cfg["epsilon"] = args.epsilon
    else:
        cfg["epsilon_grid"] = grid
    report = build_report(
        mcs, labels, raw, cfg,
        metric=args.metric, bins=args.bins, epsilon=args.epsilon, epsilon_grid=grid,
        alpha=alpha, beta=beta, threads=args.threads,
    )
    _write(dumps(report), args.out)


def cmd_curves(args) -> None:
    mcs, labels, raw, fmt = _read_input(args)
    if labels is None:
        raise SemanticError("curves need a labelled input")
    m = metric_matrix(mcs)
    u = m[args.metric]
    correct = m["pred"] == labels.labels
    fractions = args.fractions or epsilon_grid(0.0, 1.0, 0.1)
    thresholds = args.thresholds or epsilon_grid(0.0, 1.0, 0.1)
    curves = {
        f"referral_{args.metric}.csv": referral_curve(u, correct, fractions),
        f"accuracy_vs_threshold_{args.metric}.csv": accuracy_vs_threshold(
            normalize_metric(u), correct, thresholds
        ),
    }
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    for name, curve in curves.items():
        (outdir / name).write_text(curve_csv(curve), encoding="utf-8")
        log.info("wrote %s", outdir / name)


def cmd_simulate(args) -> None:
    try:
        cfg = SimConfig(
            n_items=args.items, n_classes=args.classes, n_passes=args.passes,
            concentration=args.concentration, noise_scale=args.noise,
            difficulty_mix=args.mix, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mcs, labels = simulate(cfg)
    out = Path(args.out)
    save_mcs(mcs, labels, out, args.format or ("csv" if out.suffix.lower() == ".csv" else "binary"))
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %s and %s", out, sidecar)


def cmd_patches(args) -> None:
    if not 0.0 <= args.threshold <= 1.0:
        raise UsageError("--threshold must lie in [0, 1]")
    if args.size < 1:
        raise UsageError("--size must be >= 1")
    try:
        image = px.load_slide(args.slide)
    except OSError as exc:
        raise MCSError(f"cannot read {args.slide}: {exc}") from None
    slide_id = args.slide_id or Path(args.slide).stem
    kept, manifest = px.extract(
        image, args.size, args.threshold, slide_id,
        luma_max=args.luma_max, chroma_min=args.chroma_min, threads=args.threads,
    )
    path = px.write_patches(kept, manifest, args.outdir)
    log.info("%d of %d patches kept; manifest %s", len(kept), len(manifest), path)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcuq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output path (default stdout)"):
        sp.add_argument("--input", required=True)
        sp.add_argument("--format", choices=("csv", "binary"))
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--metric", choices=METRICS, default="sigma")
        sp.add_argument("--bins", type=int, default=20)
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    sp = sub.add_parser("metrics", help="per-item uncertainty metrics and error statistics")
    common(sp)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("select", help="accept/reject decisions and ARQ")
    common(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--epsilon", type=_nonneg)
    g.add_argument("--epsilon-grid", type=_grid, metavar="START:STOP:STEP",
                   help="sweep epsilon (default 0:30:0.5)")
    sp.add_argument("--alpha", type=_nonneg, help="misclassification cost (default 1)")
    sp.add_argument("--beta", type=_nonneg, help="rejection cost (default 0)")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("curves", help="referral and accuracy-vs-threshold CSVs")
    common(sp, out_help="output directory (default .)")
    sp.add_argument("--fractions", type=_grid, metavar="START:STOP:STEP",
                    help="referral fractions (default 0:1:0.1)")
    sp.add_argument("--thresholds", type=_grid, metavar="START:STOP:STEP",
                    help="normalized uncertainty thresholds (default 0:1:0.1)")
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("simulate", help="write a synthetic labelled sample set")
    d = SimConfig()
    sp.add_argument("--items", type=int, default=d.n_items)
    sp.add_argument("--classes", type=int, default=d.n_classes)
    sp.add_argument("--passes", type=int, default=d.n_passes)
    sp.add_argument("--noise", type=float, default=d.noise_scale)
    sp.add_argument("--mix", type=float, default=d.difficulty_mix)
    sp.add_argument("--concentration", type=float, default=d.concentration)
    sp.add_argument("--seed", type=int, default=d.seed)
    sp.add_argument("--format", choices=("csv", "binary"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("patches", help="tile a slide and keep tissue patches")
    sp.add_argument("--slide", required=True, help=".ppm (P6) or .rgb8 with .json sidecar")
    sp.add_argument("--slide-id")
    sp.add_argument("--size", type=int, default=px.DEFAULT_SIZE)
    sp.add_argument("--threshold", type=float, default=px.DEFAULT_THRESHOLD)
    sp.add_argument("--luma-max", type=int, default=px.DEFAULT_LUMA_MAX)
    sp.add_argument("--chroma-min", type=int, default=px.DEFAULT_CHROMA_MIN)
    sp.add_argument("--outdir", required=True)
    sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sp.set_defaults(func=cmd_patches)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    if getattr(args, "bins", 2) < 2:
        parser.error("--bins must be >= 2")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"mcuq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MCSError, OSError) as exc:
        print(f"mcuq: bad input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SemanticError as exc:
        print(f"mcuq: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
