"""Command-line entry point.

Subcommands:

* ``run``           coverage experiment from a config file
* ``compare``       same experiment with all applicable methods side by side
* ``diagnose``      gradient-norm histogram and Hill curve at the optimum
* ``demo-singular`` eigenvalue-ratio decay of the second-moment normalizer

Exit codes: 0 success, 2 configuration problems, 3 experiment/runtime
failures, 4 I/O failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import _kernels, diagnostics, harness
from .errors import ConfigError, SgdInferError
from .models import QuadraticModel, mismatched_tails_hessian
from .noise import ParetoSpec, SymmetricParetoNoise
from .rng import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _add_common(p):
    p.add_argument("--config", required=True, help="path to a YAML config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=None, help="parallel replications")
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--paper-scale", action="store_true",
                   help="full-size protocol: n = 1e6, 500 replications")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sgdinfer",
        description="Confidence regions for SGD under heavy-tailed gradient noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a coverage experiment from a config file")
    _add_common(run_p)

    cmp_p = sub.add_parser("compare", help="run every applicable method on one config")
    _add_common(cmp_p)

    diag_p = sub.add_parser("diagnose", help="gradient-norm tail diagnostics")
    diag_p.add_argument("--config", required=True)
    diag_p.add_argument("--seed", type=int, default=None)
    diag_p.add_argument("--out", default="diagnostics",
                        help="output prefix; writes <prefix>.hist.csv and <prefix>.hill.csv")
    diag_p.add_argument("--draws", type=int, default=100_000)

    demo_p = sub.add_parser("demo-singular",
                            help="second-moment eigenvalue-ratio decay under mismatched tails")
    demo_p.add_argument("--out", default="condition_series.csv")
    demo_p.add_argument("--seed", type=int, default=20240809)
    demo_p.add_argument("--n", type=int, default=1_000_000)
    demo_p.add_argument("--alpha1", type=float, default=1.3)
    demo_p.add_argument("--alpha2", type=float, default=1.9)
    return parser


def _load_config(args, *, force_methods=None):
    cfg = harness.ExperimentConfig.from_yaml(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out"] = args.out
    if force_methods is not None:
        overrides["methods"] = force_methods
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "paper_scale", False):
        cfg = harness.paper_scale(cfg)
    return cfg


def _print_report(report):
    print(f"backend: {_kernels.backend_name()}")
    for row in report.results:
        r_txt = "" if row.r is None else f" r={row.r:g}"
        print(f"{row.method}{r_txt}: coverage={row.coverage:.4f} "
              f"length={row.avg_length:.6g} failures={row.failures}")


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    report = harness.run_experiment(cfg)
    _print_report(report)
    if cfg.out:
        print(f"report written to {cfg.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    base = harness.ExperimentConfig.from_yaml(args.config)
    methods = ["subsampling"]
    if base.functional == "coordinates":
        methods.append("random_scaling")
    if base.inject:
        methods.append("oracle_aware")
    cfg = _load_config(args, force_methods=tuple(methods))
    report = harness.run_experiment(cfg)
    _print_report(report)
    if cfg.out:
        print(f"report written to {cfg.out}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    cfg = harness.ExperimentConfig.from_yaml(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    stream = RngStream(seed, 0)
    oracle = harness.build_oracle(cfg, stream.child(0).generator())
    summary = diagnostics.gradient_norm_summary(
        oracle, oracle.theta_star, args.draws, stream.child(1))
    meta = [("seed", seed), ("draws", args.draws)] + sorted(summary.meta.items())
    hist_rows = [
        (repr(float(lo)), repr(float(hi)), int(c))
        for lo, hi, c in zip(summary.bin_edges[:-1], summary.bin_edges[1:], summary.counts)
    ]
    harness.write_csv(f"{args.out}.hist.csv", ("bin_left", "bin_right", "count"),
                      hist_rows, meta)
    hill_rows = [(int(k), repr(float(a)))
                 for k, a in zip(summary.hill.ks, summary.hill.alpha_hat)]
    harness.write_csv(f"{args.out}.hill.csv", ("k", "alpha_hat"), hill_rows, meta)
    tail = summary.hill.alpha_hat[-1]
    print(f"{args.draws} gradient norms; Hill estimate at largest k: {tail:.3f}")
    print(f"wrote {args.out}.hist.csv and {args.out}.hill.csv")
    return EXIT_OK


def _cmd_demo_singular(args) -> int:
    noise = SymmetricParetoNoise((ParetoSpec(args.alpha1), ParetoSpec(args.alpha2)))
    model = QuadraticModel(mismatched_tails_hessian(), noise)
    series = diagnostics.singular_normalizer_demo(
        model, args.n, RngStream(args.seed, 0))
    rows = [(int(n), repr(float(r))) for n, r in zip(series.ns, series.ratios)]
    harness.write_csv(args.out, ("n", "ratio"), rows,
                      [("seed", args.seed), ("alpha1", args.alpha1),
                       ("alpha2", args.alpha2)])
    first, last = series.ratios[0], series.ratios[-1]
    print(f"eigenvalue ratio: {first:.4g} at n={series.ns[0]} -> "
          f"{last:.4g} at n={series.ns[-1]}")
    print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "diagnose": _cmd_diagnose,
    "demo-singular": _cmd_demo_singular,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SgdInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
