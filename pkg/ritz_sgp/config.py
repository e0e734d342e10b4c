"""Experiment configuration: YAML files validated with voluptuous."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import voluptuous as vol
import yaml

from .const import (
    CHAMBOLLE_TAU_LIMIT,
    CONF_ALPHA0,
    CONF_ALPHA_MAX,
    CONF_ALPHA_MIN,
    CONF_BACKGROUND,
    CONF_BETA,
    CONF_DELTA,
    CONF_EPS,
    CONF_GAMMA_USES_LAMBDA,
    CONF_GAP_TOL,
    CONF_IMAGE,
    CONF_KIND,
    CONF_L1,
    CONF_L2,
    CONF_LITERAL,
    CONF_MAX_ITERS,
    CONF_MEMORY,
    CONF_METHOD,
    CONF_N_ACTIVE,
    CONF_NOISE,
    CONF_OUTPUT,
    CONF_PHANTOM,
    CONF_PROBLEM,
    CONF_PSF,
    CONF_PSF_SIGMA,
    CONF_REFERENCE,
    CONF_REGULARIZATION,
    CONF_RRE_TOL,
    CONF_SCALING,
    CONF_SEED,
    CONF_SIZE,
    CONF_SOLVERS,
    CONF_SPECTRUM,
    CONF_STAGNATION,
    CONF_STEP_TOL,
    CONF_STEPLENGTH,
    CONF_STOP,
    CONF_SWEEP,
    CONF_TAU,
    CONF_THRESHOLDS,
    CONF_TIMEOUT,
    CONF_VARIANCE,
    CONF_XI_MAX,
    CONF_XI_MIN,
    DEFAULT_ALPHA_MAX,
    DEFAULT_ALPHA_MIN,
    DEFAULT_CHAMBOLLE_TAU,
    DEFAULT_DISC_MASK_EPS,
    DEFAULT_GAUSSIAN_VARIANCE,
    DEFAULT_HS_BETA,
    DEFAULT_HS_DELTA,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_LS_MEMORY,
    DEFAULT_MAX_ITERS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_POISSON_BACKGROUND,
    DEFAULT_PSF_SIGMA,
    DEFAULT_QP_ACTIVE,
    DEFAULT_QP_SIZE,
    DEFAULT_REFERENCE_ITERS,
    DEFAULT_REFERENCE_STAGNATION,
    DEFAULT_ROF_BETA,
    DEFAULT_SCALING_L1,
    DEFAULT_SCALING_L2,
    DEFAULT_SOLVER_TIMEOUT,
    DEFAULT_SWEEP_LENGTH,
    DEFAULT_THRESHOLDS,
    METHOD_CHAMBOLLE,
    METHOD_GP_EXTRA,
    METHOD_ISRA,
    METHOD_RL,
    METHOD_SGP,
    METHODS,
    NOISE_GAUSSIAN,
    NOISE_KINDS,
    NOISE_NONE,
    NOISE_POISSON,
    PHANTOM_OBJECT,
    PHANTOM_SHAPES,
    PHANTOMS,
    PROBLEM_KINDS,
    PROBLEM_KL_DEBLUR,
    PROBLEM_KL_HS,
    PROBLEM_QP,
    PROBLEM_ROF,
    SCALING_IDENTITY,
    SCALING_RULES,
    SCALING_SPLIT,
    SPECTRUM_GEOMETRIC,
    SPECTRUM_KINDS,
    STEP_ABBMIN1,
    STEP_BB1,
    STEP_RITZ,
    STEP_RULES,
)
from .errors import ConfigError
from .solvers import StopRule

_LOGGER = logging.getLogger(__name__)

positive_float = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))
non_negative_float = vol.All(vol.Coerce(float), vol.Range(min=0))
positive_int = vol.All(vol.Coerce(int), vol.Range(min=1))

PROBLEM_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_KIND): vol.In(PROBLEM_KINDS),
        vol.Optional(CONF_SIZE): vol.All(vol.Coerce(int), vol.Range(min=2)),
        vol.Optional(CONF_SEED, default=0): vol.All(vol.Coerce(int), vol.Range(min=0)),
        vol.Optional(CONF_IMAGE): vol.IsFile(),
        vol.Optional(CONF_PSF): vol.IsFile(),
        vol.Optional(CONF_PSF_SIGMA, default=DEFAULT_PSF_SIGMA): positive_float,
        vol.Optional(CONF_PHANTOM): vol.In(PHANTOMS),
        vol.Optional(CONF_SPECTRUM, default=SPECTRUM_GEOMETRIC): vol.In(SPECTRUM_KINDS),
        vol.Optional(CONF_XI_MIN): positive_float,
        vol.Optional(CONF_XI_MAX): positive_float,
        vol.Optional(CONF_N_ACTIVE, default=DEFAULT_QP_ACTIVE): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
    }
)

NOISE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_KIND): vol.In(NOISE_KINDS),
        vol.Optional(
            CONF_VARIANCE, default=DEFAULT_GAUSSIAN_VARIANCE
        ): non_negative_float,
        vol.Optional(CONF_BACKGROUND): non_negative_float,
    }
)

REGULARIZATION_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_BETA): non_negative_float,
        vol.Optional(CONF_DELTA, default=DEFAULT_HS_DELTA): positive_float,
    }
)

SOLVER_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_METHOD): vol.In(METHODS),
        vol.Optional(CONF_SCALING, default=SCALING_IDENTITY): vol.In(SCALING_RULES),
        vol.Optional(CONF_STEPLENGTH, default=STEP_BB1): vol.In(STEP_RULES),
        # 0 disables the linesearch (lambda = 1)
        vol.Optional(CONF_MEMORY, default=DEFAULT_LS_MEMORY): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional(CONF_SWEEP, default=DEFAULT_SWEEP_LENGTH): positive_int,
        vol.Optional(CONF_ALPHA_MIN, default=DEFAULT_ALPHA_MIN): positive_float,
        vol.Optional(CONF_ALPHA_MAX, default=DEFAULT_ALPHA_MAX): positive_float,
        vol.Optional(CONF_ALPHA0): positive_float,
        vol.Optional(CONF_L1, default=DEFAULT_SCALING_L1): positive_float,
        vol.Optional(CONF_L2, default=DEFAULT_SCALING_L2): positive_float,
        vol.Optional(CONF_TAU, default=DEFAULT_CHAMBOLLE_TAU): vol.All(
            vol.Coerce(float),
            vol.Range(
                min=0,
                max=CHAMBOLLE_TAU_LIMIT,
                min_included=False,
                max_included=False,
            ),
        ),
        vol.Optional(CONF_EPS, default=DEFAULT_DISC_MASK_EPS): positive_float,
        vol.Optional(CONF_LITERAL, default=False): vol.Boolean(),
        vol.Optional(CONF_GAMMA_USES_LAMBDA, default=False): vol.Boolean(),
    }
)

STOP_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_MAX_ITERS, default=DEFAULT_MAX_ITERS): positive_int,
        vol.Optional(CONF_GAP_TOL): positive_float,
        vol.Optional(CONF_RRE_TOL): positive_float,
        vol.Optional(CONF_STEP_TOL): positive_float,
        vol.Optional(CONF_THRESHOLDS, default=list(DEFAULT_THRESHOLDS)): [
            positive_float
        ],
    }
)

REFERENCE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_MAX_ITERS, default=DEFAULT_REFERENCE_ITERS): positive_int,
        vol.Optional(
            CONF_STAGNATION, default=DEFAULT_REFERENCE_STAGNATION
        ): positive_float,
    }
)

EXPERIMENT_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_PROBLEM): PROBLEM_SCHEMA,
        vol.Optional(CONF_NOISE, default={}): NOISE_SCHEMA,
        vol.Optional(CONF_REGULARIZATION, default={}): REGULARIZATION_SCHEMA,
        vol.Required(CONF_SOLVERS): vol.Any(
            [str], {str: vol.Any(None, dict)}
        ),
        vol.Optional(CONF_STOP, default={}): STOP_SCHEMA,
        vol.Optional(CONF_REFERENCE, default={}): REFERENCE_SCHEMA,
        vol.Optional(CONF_OUTPUT, default=DEFAULT_OUTPUT_DIR): str,
        vol.Optional(CONF_TIMEOUT, default=DEFAULT_SOLVER_TIMEOUT): positive_float,
    }
)

# Named solver settings; a config block may override any option
SOLVER_PRESETS: dict[str, dict[str, Any]] = {
    "gp_bb1": {CONF_METHOD: METHOD_SGP, CONF_STEPLENGTH: STEP_BB1},
    "gp_abbmin1": {CONF_METHOD: METHOD_SGP, CONF_STEPLENGTH: STEP_ABBMIN1},
    "gp_ritz": {CONF_METHOD: METHOD_SGP, CONF_STEPLENGTH: STEP_RITZ},
    "sgp_bb1": {
        CONF_METHOD: METHOD_SGP,
        CONF_SCALING: SCALING_SPLIT,
        CONF_STEPLENGTH: STEP_BB1,
    },
    "sgp_abbmin1": {
        CONF_METHOD: METHOD_SGP,
        CONF_SCALING: SCALING_SPLIT,
        CONF_STEPLENGTH: STEP_ABBMIN1,
    },
    "sgp_ritz": {
        CONF_METHOD: METHOD_SGP,
        CONF_SCALING: SCALING_SPLIT,
        CONF_STEPLENGTH: STEP_RITZ,
    },
    "gp_extra": {CONF_METHOD: METHOD_GP_EXTRA},
    "isra": {CONF_METHOD: METHOD_ISRA},
    "rl": {CONF_METHOD: METHOD_RL},
    "chambolle": {CONF_METHOD: METHOD_CHAMBOLLE},
}


@dataclass(frozen=True)
class ProblemSpec:
    """Which problem to build and from what."""

    kind: str
    size: int
    seed: int = 0
    image: Path | None = None
    psf: Path | None = None
    psf_sigma: float = DEFAULT_PSF_SIGMA
    phantom: str = PHANTOM_OBJECT
    spectrum: str = SPECTRUM_GEOMETRIC
    xi_min: float | None = None
    xi_max: float | None = None
    n_active: int = DEFAULT_QP_ACTIVE
    beta: float = 0.0
    delta: float = DEFAULT_HS_DELTA


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model of the synthetic data."""

    kind: str = NOISE_NONE
    variance: float = DEFAULT_GAUSSIAN_VARIANCE
    background: float = 0.0


@dataclass(frozen=True)
class SolverSpec:
    """Options of one named solver."""

    name: str
    method: str
    scaling: str = SCALING_IDENTITY
    steplength: str = STEP_BB1
    memory: int = DEFAULT_LS_MEMORY
    sweep: int = DEFAULT_SWEEP_LENGTH
    alpha_min: float = DEFAULT_ALPHA_MIN
    alpha_max: float = DEFAULT_ALPHA_MAX
    alpha0: float | None = None
    l1: float = DEFAULT_SCALING_L1
    l2: float = DEFAULT_SCALING_L2
    tau: float = DEFAULT_CHAMBOLLE_TAU
    eps: float = DEFAULT_DISC_MASK_EPS
    literal: bool = False
    gamma_uses_lambda: bool = False


@dataclass(frozen=True)
class ReferenceSpec:
    """Long run that stands in for the exact optimum."""

    max_iters: int = DEFAULT_REFERENCE_ITERS
    stagnation: float = DEFAULT_REFERENCE_STAGNATION


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment."""

    problem: ProblemSpec
    noise: NoiseSpec
    solvers: tuple[SolverSpec, ...]
    stop: StopRule
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    output: Path = Path(DEFAULT_OUTPUT_DIR)
    timeout: float = DEFAULT_SOLVER_TIMEOUT
    source: dict[str, Any] = field(default_factory=dict, compare=False)

    def solver(self, name: str) -> SolverSpec:
        """Solver block by name."""
        for spec in self.solvers:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def with_overrides(
        self,
        seed: int | None = None,
        output: str | Path | None = None,
        solvers: list[str] | None = None,
        thresholds: list[float] | None = None,
    ) -> ExperimentConfig:
        """Apply command-line overrides."""
        config = self
        if seed is not None:
            config = replace(config, problem=replace(config.problem, seed=seed))
        if output is not None:
            config = replace(config, output=Path(output))
        if solvers:
            known = {spec.name: spec for spec in config.solvers}
            selected = []
            for name in solvers:
                if name in known:
                    selected.append(known[name])
                elif name in SOLVER_PRESETS:
                    selected.append(_solver_spec(name, None))
                else:
                    raise ConfigError(f"unknown solver {name!r}")
            config = replace(config, solvers=tuple(selected))
        if thresholds:
            config = replace(
                config, stop=replace(config.stop, thresholds=tuple(thresholds))
            )
        return config


def _solver_spec(name: str, options: dict[str, Any] | None) -> SolverSpec:
    merged = {**SOLVER_PRESETS.get(name, {}), **(options or {})}
    try:
        validated = SOLVER_SCHEMA(merged)
    except vol.Invalid as err:
        raise ConfigError(f"solver {name!r}: {err}") from err
    if validated[CONF_ALPHA_MIN] >= validated[CONF_ALPHA_MAX]:
        raise ConfigError(f"solver {name!r}: alpha_min must be below alpha_max")
    if validated[CONF_L1] > validated[CONF_L2]:
        raise ConfigError(f"solver {name!r}: l1 must not exceed l2")
    return SolverSpec(name=name, **validated)


def _noise_defaults(kind: str) -> tuple[str, float]:
    if kind == PROBLEM_QP:
        return NOISE_NONE, 0.0
    if kind == PROBLEM_ROF:
        return NOISE_GAUSSIAN, 0.0
    if kind in (PROBLEM_KL_DEBLUR, PROBLEM_KL_HS):
        return NOISE_POISSON, DEFAULT_POISSON_BACKGROUND
    return NOISE_GAUSSIAN, 0.0


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping and fill problem-dependent defaults."""
    try:
        data = EXPERIMENT_SCHEMA(raw or {})
    except vol.Invalid as err:
        raise ConfigError(f"invalid experiment configuration: {err}") from err

    problem = data[CONF_PROBLEM]
    kind = problem[CONF_KIND]
    regularization = data[CONF_REGULARIZATION]
    beta = regularization.get(CONF_BETA)
    if beta is None:
        beta = {PROBLEM_KL_HS: DEFAULT_HS_BETA, PROBLEM_ROF: DEFAULT_ROF_BETA}.get(
            kind, 0.0
        )
    default_size = DEFAULT_QP_SIZE if kind == PROBLEM_QP else DEFAULT_IMAGE_SIZE
    default_phantom = PHANTOM_SHAPES if kind == PROBLEM_ROF else PHANTOM_OBJECT
    problem_spec = ProblemSpec(
        kind=kind,
        size=problem.get(CONF_SIZE, default_size),
        seed=problem[CONF_SEED],
        image=Path(problem[CONF_IMAGE]) if CONF_IMAGE in problem else None,
        psf=Path(problem[CONF_PSF]) if CONF_PSF in problem else None,
        psf_sigma=problem[CONF_PSF_SIGMA],
        phantom=problem.get(CONF_PHANTOM, default_phantom),
        spectrum=problem[CONF_SPECTRUM],
        xi_min=problem.get(CONF_XI_MIN),
        xi_max=problem.get(CONF_XI_MAX),
        n_active=problem[CONF_N_ACTIVE],
        beta=beta,
        delta=regularization[CONF_DELTA],
    )
    if kind == PROBLEM_QP and problem_spec.n_active > problem_spec.size:
        raise ConfigError(
            f"n_active {problem_spec.n_active} exceeds QP size {problem_spec.size}"
        )

    noise = data[CONF_NOISE]
    default_noise, default_background = _noise_defaults(kind)
    noise_spec = NoiseSpec(
        kind=noise.get(CONF_KIND, default_noise),
        variance=noise[CONF_VARIANCE],
        background=noise.get(CONF_BACKGROUND, default_background),
    )

    solvers = data[CONF_SOLVERS]
    if isinstance(solvers, list):
        solvers = {name: None for name in solvers}
    if not solvers:
        raise ConfigError("at least one solver is required")
    solver_specs = tuple(_solver_spec(name, opts) for name, opts in solvers.items())

    stop = data[CONF_STOP]
    stop_rule = StopRule(
        max_iters=stop[CONF_MAX_ITERS],
        gap_tol=stop.get(CONF_GAP_TOL),
        rre_tol=stop.get(CONF_RRE_TOL),
        step_tol=stop.get(CONF_STEP_TOL),
        thresholds=tuple(stop[CONF_THRESHOLDS]),
    )
    reference = data[CONF_REFERENCE]
    return ExperimentConfig(
        problem=problem_spec,
        noise=noise_spec,
        solvers=solver_specs,
        stop=stop_rule,
        reference=ReferenceSpec(reference[CONF_MAX_ITERS], reference[CONF_STAGNATION]),
        output=Path(data[CONF_OUTPUT]),
        timeout=data[CONF_TIMEOUT],
        source=raw,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a YAML experiment file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    _LOGGER.debug("Loaded experiment configuration from %s", path)
    return parse_config(raw)
