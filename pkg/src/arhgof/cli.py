"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .estimate import empirical_cov_operator, estimate_autocorrelation, innovation_cov_h0
from .grid import KernelMatrix, kernel_from_csv, kernel_to_csv, series_from_csv, series_to_csv
from .meptest import TestConfig, run_gof_test
from .simulate import GaussianSpec, RngStream, SimulationConfig, simulate_arh1
from .study import NP_LIST, PRESETS, SAMPLE_SIZES, StudyConfig, emit_table, run_study

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_dgp(args) -> SimulationConfig:
    cfg = SimulationConfig.load(args.config) if args.config else SimulationConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "n", None) is not None and isinstance(args.n, int):
        cfg.n = args.n
    return cfg


def cmd_simulate(args) -> None:
    cfg = _load_dgp(args)
    if args.alternative:
        cfg.gamma_kind = "exp_scaled"
    series = simulate_arh1(cfg.to_spec(), RngStream(cfg.seed, ("series",)))
    _write(series_to_csv(series), args.out)


def _read_inputs(args):
    series = series_from_csv(Path(args.series))
    if args.gamma0:
        gamma0 = kernel_from_csv(Path(args.gamma0), grid=series.grid)
    else:
        gamma0 = KernelMatrix.zeros(series.grid, symmetric=False)
    return series, gamma0


def cmd_test(args) -> None:
    series, gamma0 = _read_inputs(args)
    config = TestConfig(
        n_projections=args.np,
        n_bootstrap=args.boot,
        standardized=args.standardized,
        alpha=args.alpha,
        multiplier=args.multiplier,
    )
    # directions follow the estimated innovation and covariate covariances
    specs = (
        GaussianSpec(innovation_cov_h0(series, gamma0), kl_truncation=5),
        GaussianSpec(empirical_cov_operator(series, 0), kl_truncation=5),
    )
    outcome = run_gof_test(series, gamma0, config, specs, RngStream(args.seed), mode=args.mode)
    _write(outcome.to_csv(), args.out)


def cmd_estimate(args) -> None:
    series = series_from_csv(Path(args.series))
    est = estimate_autocorrelation(series, k_n=args.k_n)
    logging.getLogger(__name__).info("k_n = %d", est.k_n)
    _write(kernel_to_csv(est.operator), args.out)


def _study_config(args, hypothesis: str) -> StudyConfig:
    dgp = _load_dgp(args)
    preset = PRESETS[args.preset]
    test = TestConfig(
        n_bootstrap=preset["n_bootstrap"] if args.boot is None else args.boot,
        standardized=args.standardized,
        alpha=args.alpha,
        multiplier=args.multiplier,
    )
    gamma0 = kernel_from_csv(Path(args.gamma0), grid=dgp.grid()) if args.gamma0 else None
    return StudyConfig(
        dgp=dgp,
        hypothesis=hypothesis,
        gamma0=gamma0,
        sample_sizes=args.n or SAMPLE_SIZES,
        np_list=args.np or NP_LIST,
        reps=preset["reps"] if args.reps is None else args.reps,
        test=test,
        base_seed=args.seed if args.seed is not None else dgp.seed,
        workers=args.workers,
        mode=args.mode,
        checkpoint=args.checkpoint,
    )


def cmd_study(args, hypothesis: str) -> None:
    result = run_study(_study_config(args, hypothesis))
    logging.getLogger(__name__).info("study finished in %.1f s", result.wall_time)
    _write(emit_table(result, args.format, stderr=args.stderr), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arhgof",
        description="Goodness-of-fit testing for the autocorrelation operator of ARH(1) series.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="key = value simulation config file")
        p.add_argument("--out", help="output path (default: stdout)")
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="simulate an ARH(1) series as CSV")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--alternative", action="store_true", help="use the exponential operator")
    p.set_defaults(func=cmd_simulate)

    def test_flags(p):
        p.add_argument("--boot", type=int)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--standardized", action="store_true")
        p.add_argument("--multiplier", choices=("normal", "rademacher"), default="normal")
        p.add_argument("--mode", choices=("specified", "misspecified"), default="specified")
        p.add_argument("--gamma0", help="CSV of the null operator matrix (default: zero)")

    p = sub.add_parser("test", help="test H0: gamma = gamma0 on a series CSV")
    common(p)
    test_flags(p)
    p.add_argument("--series", required=True)
    p.add_argument("--np", type=int, default=1)
    p.set_defaults(func=cmd_test, boot=2000, seed=0)

    p = sub.add_parser("estimate", help="projection estimate of gamma as a kernel CSV")
    common(p, seed=False)
    p.add_argument("--series", required=True)
    p.add_argument("--k-n", type=int, dest="k_n")
    p.set_defaults(func=cmd_estimate)

    for name, hyp in (("mc-size", "null"), ("mc-power", "alternative")):
        p = sub.add_parser(name, help=f"Monte Carlo {'size' if hyp == 'null' else 'power'} table")
        common(p)
        test_flags(p)
        p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
        p.add_argument("--n", type=_int_list, help="sample sizes, e.g. 50,100,200")
        p.add_argument("--np", type=_int_list, help="projection counts, e.g. 1,5,15")
        p.add_argument("--reps", type=int)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("csv", "markdown"), default="csv")
        p.add_argument("--stderr", action="store_true", help="add Monte Carlo standard errors")
        p.add_argument("--checkpoint", help="resumable state file")
        p.set_defaults(func=lambda a, h=hyp: cmd_study(a, h))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (np.linalg.LinAlgError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
