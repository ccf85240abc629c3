"""Command-line front end for the experiment suites.

Exit codes: 0 on full success, 1 on configuration errors, 2 when any trial
reported divergence.
"""

from __future__ import annotations

import argparse
import sys

from .datagen import save_observations
from .experiments import ConfigError, PRESETS, build_config, run_experiment
from .ratings import ingest_ratings


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH", help="configuration file (key = value sections)")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named parameter preset")
    parser.add_argument("--seed", type=int, help="base seed; trial t uses seed + t")
    parser.add_argument("--trials", type=int, help="number of trials per grid cell")
    parser.add_argument("--out", metavar="PATH", help="output path (default: stdout)")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), help="output format")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="triosplit",
        description="Splitting-solver experiment runner for matrix completion and sparse recovery.")
    sub = parser.add_subparsers(dest="command", required=True)

    mc = sub.add_parser("matcomp", help="matrix-completion experiments")
    _add_common(mc)
    mc.add_argument("--methods", help="comma list from dys,drs,svp,svt")
    mc.add_argument("--n", type=int, help="matrix size (synthetic)")
    mc.add_argument("--r", type=int, help="target rank (synthetic)")
    mc.add_argument("--p", type=float, help="sampling ratio (synthetic)")
    mc.add_argument("--lam", type=float, help="quadratic tail weight")
    mc.add_argument("--k", dest="k_init", type=float, help="initial step multiplier")
    mc.add_argument("--beta", type=float, help="smooth-term constant fed to the step threshold")
    mc.add_argument("--max-iter", dest="max_iter", type=int)
    mc.add_argument("--ratings", dest="ratings_path", metavar="PATH",
                    help="ratings file; switches to the held-out ratings task")
    mc.add_argument("--ranks", help="comma list of ranks (ratings task)")
    mc.add_argument("--test-fraction", dest="test_fraction", type=float)

    cs = sub.add_parser("cs", help="sparse-recovery experiments")
    _add_common(cs)
    cs.add_argument("--methods", help="comma list from admm,dca,dys")
    cs.add_argument("--m", type=int, help="measurement count")
    cs.add_argument("--n", type=int, help="signal length")
    cs.add_argument("--s", dest="sparsity_levels", help="comma list of sparsity levels")
    cs.add_argument("--F", dest="refinement", type=int, help="cosine-frame refinement factor")
    cs.add_argument("--min-sep", dest="min_sep", type=int, help="support separation (default 2F)")
    cs.add_argument("--sigma", dest="sigmas", help="comma list of noise levels")
    cs.add_argument("--lam", type=float, help="sparsity weight for every method")
    cs.add_argument("--k", dest="k_init", type=float, help="initial step multiplier")
    cs.add_argument("--max-iter", dest="max_iter", type=int)

    ing = sub.add_parser("ingest", help="split a ratings file into train/test observation files")
    ing.add_argument("path", help="ratings file (UserID::MovieID::Rating::Timestamp lines)")
    ing.add_argument("--split-seed", type=int, default=0)
    ing.add_argument("--test-fraction", type=float, default=0.2)
    ing.add_argument("--out", required=True, metavar="PREFIX",
                     help="writes PREFIX.train.txt and PREFIX.test.txt")

    dg = sub.add_parser("diagnose", help="step-size threshold report")
    _add_common(dg)
    dg.add_argument("--L", type=float, help="smoothness constant of the first term (default 1)")
    dg.add_argument("--l", type=float, help="weak-convexity modulus of the first term (default 0)")
    dg.add_argument("--beta", type=float, help="smoothness constant of the third term (default 1)")
    return parser


def _experiment_overrides(args):
    skip = {"command", "config", "preset", "out", "fmt"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _infer_task(args):
    if args.command == "diagnose":
        return "diagnose"
    if args.command == "matcomp":
        return "matcomp_ratings" if getattr(args, "ratings_path", None) else "matcomp_synth"
    sigmas = getattr(args, "sigmas", None)
    if sigmas is not None and any(float(s) > 0 for s in str(sigmas).replace(",", " ").split()):
        return "cs_noise"
    return "cs_recovery"


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "ingest":
        try:
            train, test = ingest_ratings(args.path, args.split_seed, args.test_fraction)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        save_observations(args.out + ".train.txt", train)
        save_observations(args.out + ".test.txt", test)
        print(f"train: {len(train)} entries -> {args.out}.train.txt")
        print(f"test: {len(test)} entries -> {args.out}.test.txt")
        return 0

    try:
        config = build_config(preset=args.preset, config_path=args.config,
                              overrides=_experiment_overrides(args),
                              base={"task": _infer_task(args)})
        table = run_experiment(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    fmt = args.fmt or config.fmt
    out = args.out or config.out
    if out:
        table.write(out, fmt)
    else:
        table.write(sys.stdout, fmt)
    return 2 if table.any_diverged else 0


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
