"""Command line entry point: ``divopt run | discrepancy | features``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import image, tsp
from .discrepancy import read_points_csv, star_discrepancy
from .harness import ConfigError, default_jobs, load_config, run_experiment


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.seed_instances is not None:
            config.tsp.seed_dir = args.seed_instances
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    out = args.out or config.out
    jobs = args.jobs if args.jobs is not None else default_jobs()
    summary = run_experiment(config, out, jobs=jobs)
    for r in summary.runs:
        print(f"{r.run_id} seed={r.seed} status={r.status} final={r.final_discrepancy:.6f}")
    print(f"min={summary.minimum:.6f} mean={summary.mean:.6f} std={summary.std:.6f} -> {out}")
    return 0 if summary.all_completed else 1


def _cmd_discrepancy(args) -> int:
    points = read_points_csv(args.points)
    print(f"{star_discrepancy(points, one_sided=args.one_sided):.17g}")
    return 0


def _cmd_features(args) -> int:
    if args.domain == "tsp":
        if not args.instance:
            print("error: --instance is required for --domain tsp", file=sys.stderr)
            return 2
        genotype = tsp.read_instance(args.instance)
        table = tsp.FEATURES
    else:
        if not args.image:
            print("error: --image is required for --domain image", file=sys.stderr)
            return 2
        genotype = image.read_ppm(args.image)
        table = image.FEATURES
    names = args.names.split(",") if args.names else list(table)
    for name in names:
        if name not in table:
            print(f"error: unknown {args.domain} feature {name!r}", file=sys.stderr)
            return 2
        print(f"{name},{table[name](genotype):.17g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divopt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (default: config 'out')")
    run.add_argument("--seed", type=int, help="base seed override")
    run.add_argument("--jobs", type=int, help="parallel repetitions (default: $DIVOPT_JOBS or 1)")
    run.add_argument("--seed-instances", help="directory of TSP instance files to start from")
    run.set_defaults(func=_cmd_run)

    disc = sub.add_parser("discrepancy", help="star discrepancy of a point CSV")
    disc.add_argument("--points", required=True)
    disc.add_argument("--one-sided", action="store_true")
    disc.set_defaults(func=_cmd_discrepancy)

    feat = sub.add_parser("features", help="feature vector of one genotype")
    feat.add_argument("--domain", choices=("tsp", "image"), required=True)
    feat.add_argument("--instance", help="TSP instance file")
    feat.add_argument("--image", help="binary PPM image")
    feat.add_argument("--names", help="comma-separated subset of features")
    feat.set_defaults(func=_cmd_features)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
