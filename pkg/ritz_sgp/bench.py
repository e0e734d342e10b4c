"""Experiment runner: problem setup, data synthesis, solver matrix, CSV reports."""

from __future__ import annotations

import asyncio
import csv
import hashlib
import json
import logging
import threading
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from async_timeout import timeout
from numpy.typing import NDArray

from .config import ExperimentConfig, NoiseSpec, ProblemSpec, ReferenceSpec, SolverSpec
from .const import (
    CACHE_DIR,
    DEFAULT_ALPHA0,
    DEFAULT_LS_MEMORY,
    DEFAULT_MAX_ITERS,
    DEFAULT_QP_ACTIVE,
    DEFAULT_QP_SIZE,
    DEFAULT_SWEEP_LENGTH,
    DEFAULT_THRESHOLDS,
    DEFAULT_X0_FLOOR,
    ITERATE_FILE_PATTERN,
    METHOD_CHAMBOLLE,
    METHOD_GP_EXTRA,
    METHOD_ISRA,
    METHOD_RL,
    METHOD_SGP,
    NOISE_GAUSSIAN,
    NOISE_NONE,
    NOISE_POISSON,
    PROBLEM_KL_DEBLUR,
    PROBLEM_KL_HS,
    PROBLEM_LS_DEBLUR,
    PROBLEM_QP,
    PROBLEM_ROF,
    REASON_FAILED,
    REASON_TIMEOUT,
    REFERENCE_FILE_PATTERN,
    SCALING_IDENTITY,
    SCALING_SPLIT,
    SPECTRUM_GEOMETRIC,
    STEP_ABBMIN1,
    STEP_BB1,
    STEP_RITZ,
    SUMMARY_FILE,
    TIMINGS_FILE,
    TRACE_COLUMNS,
    TRACE_FILE_PATTERN,
)
from .errors import ConfigError, DomainViolationError, RitzSgpError
from .image_ops import (
    BlurOperator,
    PsfKernel,
    delta_psf,
    gaussian_psf,
    pad_psf,
    read_image,
    read_psf,
    write_matrix,
)
from .linesearch import LinesearchConfig
from .objectives import (
    HypersurfacePotential,
    KullbackLeibler,
    LeastSquares,
    Objective,
    Regularized,
    RofDual,
)
from .phantoms import make_phantom
from .qp_suite import QpInstance, generate_qp
from .solvers import (
    SolverRun,
    StopRule,
    chambolle_run,
    gp_extra_run,
    isra_run,
    rl_run,
    sgp_run,
)
from .steplength import StepBounds

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass
class Problem:
    """Objective, starting point and ground truth of one experiment."""

    kind: str
    objective: Objective
    x0: Array
    truth: Array | None = None
    data: Array | None = None
    psf: PsfKernel | None = None
    qp: QpInstance | None = None
    # exact optimum when known in closed form
    f_star: float | None = None
    alpha0: float = DEFAULT_ALPHA0


def synthesize_data(
    truth: Array,
    psf: PsfKernel | BlurOperator,
    noise_spec: NoiseSpec,
    background: float | None = None,
    seed: int = 0,
) -> Array:
    """y = A truth + b + noise, drawn from a seeded PCG64 generator.

    Gaussian noise may leave negative pixels; they are kept and counted in the
    log. Poisson pixels are drawn with mean (A truth + b)_i.
    """
    truth = np.asarray(truth, dtype=np.float64)
    if np.any(truth < 0):
        raise ValueError("truth image has negative entries")
    background = noise_spec.background if background is None else background
    if background < 0:
        raise ValueError(f"background must be non-negative, got {background}")
    if isinstance(psf, PsfKernel):
        psf = BlurOperator.from_psf(pad_psf(psf, truth.shape[0]))
    mean = psf.convolve(truth) + background
    rng = np.random.default_rng(seed)

    if noise_spec.kind == NOISE_NONE:
        return mean
    if noise_spec.kind == NOISE_GAUSSIAN:
        data = mean + rng.normal(0.0, np.sqrt(noise_spec.variance), mean.shape)
        negative = int(np.count_nonzero(data < 0))
        if negative:
            _LOGGER.info("Gaussian data has %d negative pixels (kept)", negative)
        return data
    if noise_spec.kind == NOISE_POISSON:
        if mean.min() < 0:
            raise DomainViolationError(f"Poisson mean < 0 ({mean.min():.3e})")
        return rng.poisson(mean).astype(np.float64)
    raise ConfigError(f"unknown noise kind {noise_spec.kind!r}")


def load_truth(spec: ProblemSpec) -> Array:
    """Image file when configured, otherwise a phantom."""
    if spec.image is not None:
        return read_image(spec.image)
    return make_phantom(spec.phantom, spec.size)


def load_psf(spec: ProblemSpec, n: int) -> PsfKernel:
    """PSF of the problem, embedded in an n x n grid."""
    if spec.kind == PROBLEM_ROF:
        return delta_psf(n)
    if spec.psf is not None:
        return pad_psf(read_psf(spec.psf), n)
    return gaussian_psf(n, spec.psf_sigma)


def constant_start(data: Array, background: float) -> Array:
    """Flat image at the mean of the background-subtracted data."""
    level = max(float(np.mean(data)) - background, DEFAULT_X0_FLOOR)
    return np.full(data.shape, level)


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Set up the objective of an experiment."""
    spec = cfg.problem
    if spec.kind == PROBLEM_QP:
        inst = generate_qp(
            spec.size, spec.spectrum, spec.n_active, spec.seed, spec.xi_min, spec.xi_max
        )
        return Problem(
            PROBLEM_QP,
            inst.objective(),
            np.ones(inst.n),
            truth=inst.x_star,
            qp=inst,
            f_star=inst.f_star,
        )

    truth = load_truth(spec)
    psf = load_psf(spec, truth.shape[0])
    op = BlurOperator.from_psf(psf)
    background = cfg.noise.background
    data = synthesize_data(truth, op, cfg.noise, background, spec.seed)

    if spec.kind == PROBLEM_ROF:
        dual = RofDual(data, spec.beta)
        return Problem(
            PROBLEM_ROF,
            dual,
            np.zeros((2, *data.shape)),
            truth=truth,
            data=data,
            psf=psf,
            alpha0=1.0 / dual.lipschitz(),
        )

    obj: Objective
    if spec.kind == PROBLEM_LS_DEBLUR:
        obj = LeastSquares(op, data, background)
    elif spec.kind == PROBLEM_KL_DEBLUR:
        obj = KullbackLeibler(op, data, background)
    elif spec.kind == PROBLEM_KL_HS:
        obj = Regularized(
            KullbackLeibler(op, data, background),
            HypersurfacePotential(spec.delta),
            spec.beta,
        )
    else:
        raise ConfigError(f"unknown problem kind {spec.kind!r}")
    return Problem(
        spec.kind,
        obj,
        constant_start(data, background),
        truth=truth,
        data=data,
        psf=psf,
    )


def _file_digest(path: Path | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def reference_key(
    problem: ProblemSpec, noise: NoiseSpec, reference: ReferenceSpec
) -> str:
    """SHA-256 of the canonical JSON of everything the reference run depends on."""
    payload = {
        "problem": {
            key: str(value) if isinstance(value, Path) else value
            for key, value in asdict(problem).items()
        },
        "image_sha256": _file_digest(problem.image),
        "psf_sha256": _file_digest(problem.psf),
        "noise": asdict(noise),
        "reference": asdict(reference),
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _reference_run(problem: Problem, reference: ReferenceSpec) -> SolverRun:
    scaling = SCALING_IDENTITY if problem.kind == PROBLEM_ROF else SCALING_SPLIT
    stop = StopRule(
        max_iters=reference.max_iters,
        stagnation_tol=reference.stagnation,
        thresholds=(),
    )
    return sgp_run(
        problem.objective,
        problem.x0,
        scaling,
        STEP_RITZ,
        LinesearchConfig(),
        stop,
        alpha0=problem.alpha0,
        name="reference",
    )


def reference_optimum(cfg: ExperimentConfig, problem: Problem) -> float:
    """Objective value of a long SGP Ritz run, cached under the output directory."""
    if problem.f_star is not None:
        return problem.f_star
    key = reference_key(cfg.problem, cfg.noise, cfg.reference)
    cache_file = cfg.output / CACHE_DIR / REFERENCE_FILE_PATTERN.format(key=key[:16])
    if cache_file.is_file():
        cached = yaml.safe_load(cache_file.read_text(encoding="utf-8")) or {}
        if cached.get("key") == key:
            _LOGGER.info("Using cached reference optimum from %s", cache_file)
            return float(cached["f_star"])

    _LOGGER.info(
        "Computing reference optimum (up to %d iterations)", cfg.reference.max_iters
    )
    run = _reference_run(problem, cfg.reference)
    f_star = float(np.min(run.objective_values))
    cache_file.parent.mkdir(parents=True, exist_ok=True)
    cache_file.write_text(
        yaml.safe_dump(
            {
                "key": key,
                "f_star": f_star,
                "iterations": run.iterations,
                "reason": run.reason,
            },
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return f_star


def run_solver(
    spec: SolverSpec, problem: Problem, stop: StopRule, f_star: float | None
) -> SolverRun:
    """Dispatch one configured solver on a problem."""
    obj = problem.objective
    common: dict[str, Any] = {
        "truth": problem.truth,
        "f_star": f_star,
        "name": spec.name,
    }
    if spec.method == METHOD_SGP:
        ls_cfg = LinesearchConfig(memory=spec.memory) if spec.memory > 0 else None
        return sgp_run(
            obj,
            problem.x0,
            spec.scaling,
            spec.steplength,
            ls_cfg,
            stop,
            bounds=StepBounds(spec.alpha_min, spec.alpha_max),
            alpha0=spec.alpha0 if spec.alpha0 is not None else problem.alpha0,
            m=spec.sweep,
            gamma_uses_lambda=spec.gamma_uses_lambda,
            l1=spec.l1,
            l2=spec.l2,
            disc_eps=spec.eps,
            **common,
        )
    if spec.method == METHOD_GP_EXTRA:
        return gp_extra_run(obj, problem.x0, stop, **common)
    if spec.method == METHOD_ISRA and isinstance(obj, LeastSquares):
        return isra_run(obj, problem.x0, stop, **common)
    if spec.method == METHOD_RL and isinstance(obj, KullbackLeibler):
        return rl_run(obj, problem.x0, stop, **common)
    if spec.method == METHOD_CHAMBOLLE and isinstance(obj, RofDual):
        return chambolle_run(
            obj, problem.x0, spec.tau, stop, literal=spec.literal, **common
        )
    raise ConfigError(f"method {spec.method!r} does not apply to {problem.kind}")


@dataclass
class SolverOutcome:
    """A finished, failed or timed-out solver."""

    spec: SolverSpec
    run: SolverRun | None
    reason: str
    error: str | None = None


@dataclass
class ExperimentResult:
    """What run_experiment produced."""

    outcomes: list[SolverOutcome]
    f_star: float | None
    output: Path
    files: list[Path] = field(default_factory=list)

    def outcome(self, name: str) -> SolverOutcome:
        """Outcome of a solver by name."""
        for outcome in self.outcomes:
            if outcome.spec.name == name:
                return outcome
        raise KeyError(name)


async def _run_guarded(
    spec: SolverSpec,
    problem: Problem,
    stop: StopRule,
    f_star: float | None,
    limit: float,
) -> SolverOutcome:
    loop = asyncio.get_running_loop()
    cancel = threading.Event()
    guarded = replace(stop, cancel=cancel)
    try:
        async with timeout(limit):
            run = await loop.run_in_executor(
                None, partial(run_solver, spec, problem, guarded, f_star)
            )
    except asyncio.TimeoutError:
        # the worker stops at its next iteration
        cancel.set()
        _LOGGER.warning("Solver %s timed out after %s s", spec.name, limit)
        return SolverOutcome(spec, None, REASON_TIMEOUT)
    except (RitzSgpError, ValueError) as err:
        _LOGGER.warning("Solver %s failed: %s", spec.name, err)
        return SolverOutcome(spec, None, REASON_FAILED, str(err))
    return SolverOutcome(spec, run, run.reason or REASON_FAILED)


def format_number(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if np.isnan(value) else f"{value:.17g}"


def threshold_label(prefix: str, threshold: float) -> str:
    """Column name of a first-passage threshold, e.g. rre_1e-04."""
    return f"{prefix}_{threshold:.0e}"


def summary_fields(thresholds: Iterable[float]) -> list[str]:
    """Columns of summary.csv."""
    thresholds = list(thresholds)
    return [
        "solver",
        "method",
        "iterations",
        "reason",
        *(threshold_label("rre", t) for t in thresholds),
        *(threshold_label("gap", t) for t in thresholds),
        "min_rre",
        "min_rre_iter",
        "final_f",
    ]


def summary_row(outcome: SolverOutcome, thresholds: Sequence[float]) -> dict[str, str]:
    """One summary line; wall time is left to timings.csv."""
    row = dict.fromkeys(summary_fields(thresholds), "")
    row.update(
        solver=outcome.spec.name, method=outcome.spec.method, reason=outcome.reason
    )
    run = outcome.run
    if run is None:
        return row
    row["iterations"] = str(run.iterations)
    for t in thresholds:
        row[threshold_label("rre", t)] = format_number(run.first_rre.get(t))
        row[threshold_label("gap", t)] = format_number(run.first_gap.get(t))
    row["min_rre"] = format_number(run.min_rre)
    row["min_rre_iter"] = format_number(run.min_rre_iter)
    row["final_f"] = format_number(run.history[-1].objective)
    return row


def write_trace(run: SolverRun, path: Path) -> Path:
    """Per-iteration history as CSV."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in run.history:
            writer.writerow(
                dict(
                    zip(
                        TRACE_COLUMNS,
                        (
                            str(record.iteration),
                            format_number(record.objective),
                            format_number(record.alpha),
                            format_number(record.lam),
                            format_number(record.rre),
                            format_number(record.gap),
                            f"{record.time_s:.6f}",
                        ),
                        strict=True,
                    )
                )
            )
    return path


def write_reports(
    outcomes: Sequence[SolverOutcome], thresholds: Sequence[float], out_dir: Path
) -> list[Path]:
    """Traces, final iterates, summary.csv and timings.csv."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for outcome in outcomes:
        run = outcome.run
        if run is None:
            continue
        written.append(
            write_trace(run, out_dir / TRACE_FILE_PATTERN.format(name=run.name))
        )
        final = run.primal if run.primal is not None else run.x
        if final is not None:
            iterate_path = out_dir / ITERATE_FILE_PATTERN.format(name=run.name)
            written.append(write_matrix(iterate_path, final))

    summary_path = out_dir / SUMMARY_FILE
    with summary_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=summary_fields(thresholds), lineterminator="\n"
        )
        writer.writeheader()
        for outcome in outcomes:
            writer.writerow(summary_row(outcome, thresholds))
    written.append(summary_path)

    timings_path = out_dir / TIMINGS_FILE
    with timings_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=["solver", "wall_time_s", "products", "error"],
            lineterminator="\n",
        )
        writer.writeheader()
        for outcome in outcomes:
            run = outcome.run
            writer.writerow(
                {
                    "solver": outcome.spec.name,
                    "wall_time_s": f"{run.wall_time:.6f}" if run else "",
                    "products": str(run.products) if run else "",
                    "error": outcome.error or "",
                }
            )
    written.append(timings_path)
    _LOGGER.info("Wrote %d report files to %s", len(written), out_dir)
    return written


async def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every configured solver and write the report files.

    Solvers run concurrently in the default executor, each under the
    configured timeout; reports are written in configuration order.
    """
    loop = asyncio.get_running_loop()
    problem = await loop.run_in_executor(None, build_problem, cfg)
    f_star = await loop.run_in_executor(None, reference_optimum, cfg, problem)
    _LOGGER.info(
        "Running %d solvers on %s (f* = %.12g)",
        len(cfg.solvers),
        problem.kind,
        f_star,
    )
    outcomes = list(
        await asyncio.gather(
            *(
                _run_guarded(spec, problem, cfg.stop, f_star, cfg.timeout)
                for spec in cfg.solvers
            )
        )
    )
    files = write_reports(outcomes, cfg.stop.thresholds, cfg.output)
    return ExperimentResult(outcomes, f_star, cfg.output, files)


def run_experiment_sync(cfg: ExperimentConfig) -> ExperimentResult:
    """Blocking wrapper for the command line."""
    return asyncio.run(run_experiment(cfg))


@dataclass(frozen=True)
class RuleStudyRow:
    """Median first passages of one steplength rule in one QP setting."""

    setting: str
    rule: str
    median_first_rre: dict[float, float]
    active_set_hits: int
    runs: int
    condition_number: float = float("nan")


def _setting_label(setting: Mapping[str, Any]) -> str:
    return ",".join(f"{key}={setting[key]}" for key in sorted(setting))


def qp_rule_study(
    settings: Sequence[Mapping[str, Any]],
    seeds: Iterable[int],
    rules: Sequence[str] = (STEP_BB1, STEP_ABBMIN1, STEP_RITZ),
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> list[RuleStudyRow]:
    """Median first-passage iterations over seeds, per setting and rule.

    A setting may give n, spectrum, n_active, xi_min and xi_max (for the cond
    spectrum), memory (0 for no linesearch), scaling and sweep. A run that
    never reaches a threshold counts as inf.
    """
    seeds = list(seeds)
    rows: list[RuleStudyRow] = []
    for setting in settings:
        label = _setting_label(setting)
        memory = int(setting.get("memory", DEFAULT_LS_MEMORY))
        ls_cfg = LinesearchConfig(memory=memory) if memory > 0 else None
        stop = StopRule(
            max_iters=max_iters, rre_tol=min(thresholds), thresholds=tuple(thresholds)
        )
        passages: dict[str, list[dict[float, int | None]]] = {r: [] for r in rules}
        hits = dict.fromkeys(rules, 0)
        conditions: list[float] = []
        for seed in seeds:
            inst = generate_qp(
                int(setting.get("n", DEFAULT_QP_SIZE)),
                setting.get("spectrum", SPECTRUM_GEOMETRIC),
                int(setting.get("n_active", DEFAULT_QP_ACTIVE)),
                seed,
                xi_min=setting.get("xi_min"),
                xi_max=setting.get("xi_max"),
            )
            conditions.append(inst.condition_number)
            for rule in rules:
                run = sgp_run(
                    inst.objective(),
                    np.ones(inst.n),
                    setting.get("scaling", SCALING_IDENTITY),
                    rule,
                    ls_cfg,
                    stop,
                    m=int(setting.get("sweep", DEFAULT_SWEEP_LENGTH)),
                    truth=inst.x_star,
                    name=f"{rule}[{seed}]",
                )
                passages[rule].append(run.first_rre)
                hits[rule] += run.active_set() == inst.active_set
        for rule in rules:
            medians = {
                t: float(
                    np.median(
                        [np.inf if p[t] is None else p[t] for p in passages[rule]]
                    )
                )
                for t in stop.thresholds
            }
            rows.append(
                RuleStudyRow(
                    label,
                    rule,
                    medians,
                    hits[rule],
                    len(seeds),
                    float(np.median(conditions)),
                )
            )
            _LOGGER.info("QP study %s %s: %s", label, rule, medians)
    return rows


def write_rule_study(rows: Sequence[RuleStudyRow], path: Path) -> Path:
    """QP study table as CSV."""
    thresholds = sorted({t for row in rows for t in row.median_first_rre}, reverse=True)
    fieldnames = [
        "setting",
        "rule",
        *(threshold_label("rre", t) for t in thresholds),
        "active_set_hits",
        "runs",
        "condition_number",
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            line = {"setting": row.setting, "rule": row.rule}
            for t in thresholds:
                line[threshold_label("rre", t)] = f"{row.median_first_rre[t]:g}"
            line["active_set_hits"] = str(row.active_set_hits)
            line["runs"] = str(row.runs)
            line["condition_number"] = f"{row.condition_number:.6g}"
            writer.writerow(line)
    return path
