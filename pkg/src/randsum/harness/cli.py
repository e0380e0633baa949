"""Command-line entry point ``simulate``.

    simulate --config cfg.json [--seed N] [--threads K] [--out DIR]
    simulate distance --kind iid --dist rademacher --n 64 128 256 512
    simulate quantities --kind arch --gamma 3 --n 64 128 --reps 20000
    simulate cf-check | gaussmix-check | selftest [...]
    simulate ratefit --input rate.csv --q 2

The exit status is 1 if any invariant check failed, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import ExperimentConfig
from .runner import emit_plotdata, fit_from_csv, run_experiment

_SUB_TO_RECIPE = {
    "quantities": "quantities",
    "distance": "randomized-rate",
    "cf-check": "cf-diagnostics",
    "gaussmix-check": "gaussmix-check",
    "selftest": "sphere-selftest",
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
    p.add_argument("--threads", help="worker threads or 'auto'")
    p.add_argument("--out", help="output directory")


def _generator_opts(p: argparse.ArgumentParser):
    p.add_argument("--kind", choices=("iid", "arch"), default="arch")
    p.add_argument("--dist", choices=("rademacher", "gaussian", "two-point"),
                   help="iid law (with --kind iid)")
    p.add_argument("--a", type=float, help="two-point scale a >= 1")
    p.add_argument("--gamma", type=float, default=3.0, help="ARCH decay exponent (> 2)")
    p.add_argument("--n", type=int, nargs="+", help="row lengths (strictly increasing)")
    p.add_argument("--M", type=int, help="theta draws")
    p.add_argument("--m", type=int, help="inner paths per theta")
    p.add_argument("--delta", type=float, help="DKW confidence level")
    p.add_argument("--reps", type=int, help="paths for moment estimates")
    p.add_argument("--config", help="start from this JSON config and override")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate",
                                description="Monte-Carlo checks of randomized Berry-Esseen rates")
    p.add_argument("--config", help="JSON experiment config")
    _common(p)
    sub = p.add_subparsers(dest="command")
    for name in ("quantities", "distance", "cf-check", "gaussmix-check", "selftest"):
        sp = sub.add_parser(name)
        _generator_opts(sp)
        _common(sp)
        if name == "distance":
            sp.add_argument("--classical", action="store_true",
                            help="equal weights 1/sqrt(n) instead of random theta")
            sp.add_argument("--estimator", choices=("ecdf", "inversion"), default=None)
            sp.add_argument("--q", type=float, help="log power for the rate fit")
        if name == "cf-check":
            sp.add_argument("--T0-rule", dest="T0_rule", help='e.g. "4*sqrt(log n)"')
    rf = sub.add_parser("ratefit")
    rf.add_argument("--input", required=True, help="CSV with n, kappa_mean|value, stderr")
    rf.add_argument("--q", type=float, required=True)
    return p


def _threads(v):
    if v is None or v == "auto":
        return v
    return int(v)


def _config_from_sub(args) -> ExperimentConfig:
    recipe = _SUB_TO_RECIPE[args.command]
    if args.command == "distance" and args.classical:
        recipe = "classical-rate"
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    base["experiment"] = recipe
    if args.kind == "iid":
        gen = {"kind": "iid", "iid_dist": args.dist or "rademacher"}
        if args.a is not None:
            gen["a"] = args.a
    else:
        gen = {"kind": "arch", "arch_gamma": args.gamma}
    if not args.config or args.dist or args.kind == "iid":
        base["generator"] = gen
    overrides = {"n_list": args.n, "M": args.M, "m": args.m, "delta": args.delta,
                 "reps": args.reps, "master_seed": args.seed, "threads": _threads(args.threads),
                 "out_dir": args.out, "estimator": getattr(args, "estimator", None),
                 "q": getattr(args, "q", None), "T0_rule": getattr(args, "T0_rule", None)}
    if args.command == "selftest":
        base.setdefault("n_list", [2, 10])
        base.setdefault("reps", 100_000)
    base.update({k: v for k, v in overrides.items() if v is not None})
    base.setdefault("out_dir", f"results/{recipe}")
    return ExperimentConfig.from_dict(base)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ratefit":
            fit = fit_from_csv(args.input, args.q)
            print(json.dumps(fit.to_dict(), indent=2))
            return 0
        if args.command is None:
            if not args.config:
                parser.error("--config is required without a subcommand")
            cfg = ExperimentConfig.load(args.config).replace(
                master_seed=args.seed, threads=_threads(args.threads), out_dir=args.out)
        else:
            cfg = _config_from_sub(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rec = run_experiment(cfg, verbose=True)
    if rec.rate_table is not None:
        print(f"  plot data: {emit_plotdata(rec)}")
    return 0 if rec.ok else 1


if __name__ == "__main__":
    sys.exit(main())
