"""Command-line entry point: ``pslb run | bounds | plot-data``."""

import argparse
import json
import sys
from pathlib import Path

from .algos import ConfigError
from .bounds import hardness_terms
from .env import Instance
from .harness import PLOT_KINDS, PROFILES, ExperimentConfig, emit_plot_data, read_results, run_experiment


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="pslb", description="Best-arm identification in piecewise-stationary "
                                                         "linear bandits.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment sweep")
    r.add_argument("--config", type=Path, help="JSON experiment configuration")
    r.add_argument("--profile", choices=sorted(PROFILES), help="pinned reproduction profile")
    r.add_argument("--seed", type=_u64, help="override the base seed")
    r.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    r.add_argument("--jobs", type=_positive, default=1, help="worker processes (default: 1)")
    r.add_argument("--quiet", action="store_true", help="suppress per-trial progress")

    b = sub.add_parser("bounds", help="print tuning constants and complexity terms")
    b.add_argument("--instance", type=Path, required=True, help="instance JSON file")
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--gamma", type=int, required=True)
    b.add_argument("--w", type=int, help="window (default: L_min / (3 gamma), even)")
    b.add_argument("--format", choices=("text", "kv", "json"), default="text")

    d = sub.add_parser("plot-data", help="write series_*.dat files from a results directory")
    d.add_argument("--in", dest="in_dir", type=Path, required=True)
    d.add_argument("--kind", choices=PLOT_KINDS, required=True)
    d.add_argument("--algorithms", help="comma-separated subset (default: all present)")
    return p


def _cmd_run(args):
    if args.config is None and args.profile is None:
        raise ConfigError("give --config, --profile or both")
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config, profile=args.profile)
    else:
        cfg = ExperimentConfig.from_dict({}, profile=args.profile)
    if args.seed is not None:
        cfg.seed = args.seed

    def progress(rec):
        if not args.quiet:
            arm = "-" if rec.arm is None else rec.arm
            print(f"{rec.algorithm:12s} eps={rec.eps:<10.4g} trial={rec.trial:<4d} tau={rec.tau:<12d} "
                  f"arm={arm} {rec.status}", file=sys.stderr, flush=True)

    records = run_experiment(cfg, args.out, jobs=args.jobs, progress=progress)
    bad = sum(not r.correct for r in records)
    print(f"{len(records)} trials written to {args.out} ({bad} incorrect or failed)")
    return 0


def _format_value(v):
    if isinstance(v, float):
        return format(v, ".9g")
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return "none" if v is None else str(v)


def _cmd_bounds(args):
    inst = Instance.load(args.instance)
    report = hardness_terms(inst, args.eps, args.delta, gamma=args.gamma, w=args.w).as_dict()
    if args.format == "json":
        print(json.dumps(report, indent=2))
    elif args.format == "kv":
        for k, v in report.items():
            print(f"{k}={_format_value(v)}")
    else:
        width = max(map(len, report))
        for k, v in report.items():
            print(f"{k:<{width}}  {_format_value(v)}")
    return 0


def _cmd_plot(args):
    records = read_results(args.in_dir)
    inst = Instance.load(args.in_dir / "instance.json")
    algos = [a.strip() for a in args.algorithms.split(",")] if args.algorithms is not None else None
    for path in emit_plot_data(records, args.kind, args.in_dir, inst, algos):
        print(path)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "bounds": _cmd_bounds, "plot-data": _cmd_plot}[args.command]
    try:
        return handler(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"pslb: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
