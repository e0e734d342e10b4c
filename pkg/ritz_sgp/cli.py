"""Command line: gen-qp, synth, run and report."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import yaml

from .bench import build_problem, run_experiment_sync
from .config import load_config
from .const import (
    DATA_FILE,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_QP_ACTIVE,
    DEFAULT_QP_SIZE,
    DEFAULT_THRESHOLDS,
    PROBLEM_QP,
    PSF_FILE,
    SPECTRUM_GEOMETRIC,
    SPECTRUM_KINDS,
    SUMMARY_FILE,
    TRUTH_FILE,
)
from .diagnostics import build_report, rebuild_summary
from .errors import ConfigError, RitzSgpError
from .image_ops import write_matrix
from .qp_suite import generate_qp, kkt_residual, save_qp

_LOGGER = logging.getLogger(__name__)


def _names(value: str) -> list[str]:
    names = [name.strip() for name in value.split(",") if name.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected NAME[,NAME...]")
    return names


def _thresholds(value: str) -> list[float]:
    try:
        thresholds = [float(item) for item in value.split(",") if item.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from err
    if not thresholds or any(t <= 0 for t in thresholds):
        raise argparse.ArgumentTypeError("thresholds must be positive numbers")
    return thresholds


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per task."""
    parser = argparse.ArgumentParser(
        prog="ritz_sgp",
        description="Scaled gradient projection experiments with Ritz steplengths.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log per-iteration details"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen_qp = commands.add_parser("gen-qp", help="generate a random QP instance")
    gen_qp.add_argument("--config", type=Path, help="take the problem section")
    gen_qp.add_argument("--n", type=int, default=DEFAULT_QP_SIZE)
    gen_qp.add_argument(
        "--spectrum", choices=SPECTRUM_KINDS, default=SPECTRUM_GEOMETRIC
    )
    gen_qp.add_argument("--n-active", type=int, default=DEFAULT_QP_ACTIVE)
    gen_qp.add_argument("--seed", type=int)
    gen_qp.add_argument("--out", type=Path, default=Path(DEFAULT_OUTPUT_DIR))

    synth = commands.add_parser("synth", help="write truth, PSF and noisy data")
    synth.add_argument("--config", type=Path, required=True)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out", type=Path)

    run = commands.add_parser("run", help="run the configured solvers")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--solver", type=_names, help="NAME[,NAME...]")
    run.add_argument("--threshold", type=_thresholds, help="T[,T...]")

    report = commands.add_parser("report", help="summarize stored traces")
    report.add_argument("--config", type=Path, help="read the output directory")
    report.add_argument("--out", type=Path)
    report.add_argument("--threshold", type=_thresholds)
    return parser


def _gen_qp(args: argparse.Namespace) -> int:
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.problem.kind != PROBLEM_QP:
            raise ConfigError(f"{args.config} does not describe a QP")
        problem = cfg.problem
        inst = generate_qp(
            problem.size,
            problem.spectrum,
            problem.n_active,
            problem.seed if args.seed is None else args.seed,
            problem.xi_min,
            problem.xi_max,
        )
    else:
        inst = generate_qp(args.n, args.spectrum, args.n_active, args.seed or 0)
    save_qp(inst, args.out)
    print(
        f"QP n={inst.n} seed={inst.seed} cond={inst.condition_number:.3g} "
        f"kkt={kkt_residual(inst):.2e} -> {args.out}"
    )
    return 0


def _synth(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, output=args.out)
    problem = build_problem(cfg)
    if problem.qp is not None:
        save_qp(problem.qp, cfg.output)
    else:
        write_matrix(cfg.output / TRUTH_FILE, problem.truth)
        write_matrix(cfg.output / DATA_FILE, problem.data)
        write_matrix(cfg.output / PSF_FILE, problem.psf.weights)
    print(f"{cfg.problem.kind} data (seed {cfg.problem.seed}) -> {cfg.output}")
    return 0


def _run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).with_overrides(
        seed=args.seed,
        output=args.out,
        solvers=args.solver,
        thresholds=args.threshold,
    )
    result = run_experiment_sync(cfg)
    for outcome in result.outcomes:
        iterations = outcome.run.iterations if outcome.run else "-"
        print(f"{outcome.spec.name:<14} {outcome.reason:<17} {iterations}")
    print(f"summary -> {cfg.output / SUMMARY_FILE}")
    return 0


def _report(args: argparse.Namespace) -> int:
    out = args.out
    thresholds = args.threshold
    if args.config is not None:
        cfg = load_config(args.config)
        out = out or cfg.output
        thresholds = thresholds or list(cfg.stop.thresholds)
    out = out or Path(DEFAULT_OUTPUT_DIR)
    report = build_report(out, thresholds or DEFAULT_THRESHOLDS)
    rebuild_summary(report)
    print(yaml.safe_dump(report, sort_keys=False), end="")
    return 0


COMMANDS = {
    "gen-qp": _gen_qp,
    "synth": _synth,
    "run": _run,
    "report": _report,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except RitzSgpError as err:
        _LOGGER.error("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
