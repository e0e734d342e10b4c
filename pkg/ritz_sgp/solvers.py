"""Iteration drivers: SGP/GP, GP Extra, ISRA, RL and fixed-step Chambolle."""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import NDArray

from .const import (
    CHAMBOLLE_TAU_LIMIT,
    DEFAULT_ALPHA0,
    DEFAULT_CHAMBOLLE_TAU,
    DEFAULT_DISC_MASK_EPS,
    DEFAULT_MAX_ITERS,
    DEFAULT_REFERENCE_WINDOW,
    DEFAULT_SCALING_L1,
    DEFAULT_SCALING_L2,
    DEFAULT_SWEEP_LENGTH,
    DEFAULT_THRESHOLDS,
    REASON_DOMAIN,
    REASON_GAP,
    REASON_LINESEARCH,
    REASON_MAX_ITERS,
    REASON_NOT_DESCENT,
    REASON_RRE,
    REASON_STAGNATION,
    REASON_STATIONARY,
    REASON_STEP,
    REASON_TIMEOUT,
    SCALING_IDENTITY,
    SCALING_PR,
    SCALING_SPLIT,
    STEP_CONSTANT,
)
from .errors import (
    DomainViolationError,
    NotDescentDirectionError,
    SplittingError,
    StepParameterError,
)
from .feasible import (
    DiagScaling,
    NonNegativeOrthant,
    ScalingState,
    UnitDiscs,
    build_scaling,
    feasible_set_for,
    pair_norms,
    project_nonneg,
)
from .image_ops import DualField, discrete_divergence, discrete_gradient
from .linesearch import LinesearchConfig, armijo_search
from .metrics import compute_gap, compute_rre, gap_is_relative
from .objectives import KullbackLeibler, LeastSquares, Objective, RofDual
from .steplength import StepBounds, StepContext, SteplengthRule, make_rule

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class IterationRecord:
    """One row of a run history."""

    iteration: int
    objective: float
    alpha: float
    lam: float
    rre: float
    gap: float
    feasibility: float
    time_s: float


@dataclass(frozen=True)
class StopRule:
    """Termination criteria; max_iters is always active.

    A set cancel event ends the run at its next iteration with reason timeout.
    """

    max_iters: int = DEFAULT_MAX_ITERS
    gap_tol: float | None = None
    rre_tol: float | None = None
    step_tol: float | None = None
    stagnation_tol: float | None = None
    stagnation_window: int = DEFAULT_REFERENCE_WINDOW
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    cancel: threading.Event | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")
        object.__setattr__(
            self, "thresholds", tuple(sorted(self.thresholds, reverse=True))
        )


@dataclass
class RunState:
    """What check_stop looks at after each iteration."""

    iteration: int = 0
    objective: float = np.nan
    rre: float = np.nan
    gap: float = np.nan
    step_norm: float = np.inf
    x_norm: float = 0.0
    first_rre: dict[float, int | None] = field(default_factory=dict)
    first_gap: dict[float, int | None] = field(default_factory=dict)
    min_rre: float = np.inf
    min_rre_iter: int | None = None
    recent: deque[float] = field(default_factory=deque)


class StopDecision(NamedTuple):
    """Outcome of check_stop."""

    stop: bool
    reason: str | None


def check_stop(run_state: RunState, stop: StopRule) -> StopDecision:
    """Record threshold first passages, then test max_iters, gap, RRE, step.

    Objective stagnation over a window is tested last, for reference runs.
    """
    k = run_state.iteration
    for threshold in stop.thresholds:
        if run_state.first_rre.get(threshold) is None and run_state.rre <= threshold:
            run_state.first_rre[threshold] = k
        if run_state.first_gap.get(threshold) is None and run_state.gap <= threshold:
            run_state.first_gap[threshold] = k
    if run_state.rre < run_state.min_rre:
        run_state.min_rre, run_state.min_rre_iter = run_state.rre, k
    run_state.recent.append(run_state.objective)
    while len(run_state.recent) > stop.stagnation_window + 1:
        run_state.recent.popleft()

    if stop.cancel is not None and stop.cancel.is_set():
        return StopDecision(True, REASON_TIMEOUT)
    if k >= stop.max_iters:
        return StopDecision(True, REASON_MAX_ITERS)
    if stop.gap_tol is not None and run_state.gap <= stop.gap_tol:
        return StopDecision(True, REASON_GAP)
    if stop.rre_tol is not None and run_state.rre <= stop.rre_tol:
        return StopDecision(True, REASON_RRE)
    if (
        stop.step_tol is not None
        and run_state.step_norm <= stop.step_tol * (1.0 + run_state.x_norm)
    ):
        return StopDecision(True, REASON_STEP)
    window = run_state.recent
    if stop.stagnation_tol is not None and len(window) > stop.stagnation_window:
        if abs(window[0] - window[-1]) <= stop.stagnation_tol * abs(window[-1]):
            return StopDecision(True, REASON_STAGNATION)
    return StopDecision(False, None)


@dataclass
class SolverRun:
    """History, final iterate and termination reason of one run."""

    name: str
    history: list[IterationRecord] = field(default_factory=list)
    x: Array | None = None
    reason: str | None = None
    first_rre: dict[float, int | None] = field(default_factory=dict)
    first_gap: dict[float, int | None] = field(default_factory=dict)
    min_rre: float = np.nan
    min_rre_iter: int | None = None
    wall_time: float = 0.0
    products: int = 0
    primal: Array | None = None

    @property
    def iterations(self) -> int:
        """Number of completed iterations."""
        return len(self.history) - 1

    @property
    def objective_values(self) -> Array:
        """Objective per recorded iteration."""
        return np.array([record.objective for record in self.history])

    def active_set(self) -> tuple[int, ...]:
        """Flat indices where the final iterate sits exactly at zero."""
        if self.x is None:
            return ()
        return tuple(int(i) for i in np.flatnonzero(np.ravel(self.x) == 0))


class RunMonitor:
    """Builds the history and the stop decisions of one run."""

    def __init__(
        self,
        name: str,
        stop: StopRule,
        obj: Objective,
        truth: Array | None = None,
        f_star: float | None = None,
    ):
        self.run = SolverRun(name)
        self.stop = stop
        self.obj = obj
        self.truth = truth
        self.f_star = f_star
        self.state = RunState()
        self._start = time.perf_counter()
        self._gap_warned = False

    def _rre(self, x: Array) -> float:
        if self.truth is None:
            return np.nan
        point = self.obj.primal(x) if isinstance(self.obj, RofDual) else x
        return compute_rre(point, self.truth)

    def _gap(self, f: float) -> float:
        if self.f_star is None:
            return np.nan
        gap = compute_gap(f, self.f_star, warn=False)
        if not self._gap_warned and (gap < 0 or not gap_is_relative(self.f_star)):
            # once per run
            compute_gap(f, self.f_star, warn=True)
            self._gap_warned = True
        return gap

    def observe(
        self,
        k: int,
        x: Array,
        f: float,
        alpha: float,
        lam: float,
        feasibility: float,
        step_norm: float = np.inf,
    ) -> StopDecision:
        """Append a record and decide whether to stop."""
        state = self.state
        state.iteration, state.objective = k, f
        state.rre, state.gap = self._rre(x), self._gap(f)
        state.step_norm, state.x_norm = step_norm, float(np.linalg.norm(x))
        self.run.history.append(
            IterationRecord(
                k,
                f,
                alpha,
                lam,
                state.rre,
                state.gap,
                feasibility,
                time.perf_counter() - self._start,
            )
        )
        self.run.x = x
        return check_stop(state, self.stop)

    def finish(self, reason: str, products: int = 0) -> SolverRun:
        """Close the run."""
        run = self.run
        run.reason = reason
        run.first_rre = {t: self.state.first_rre.get(t) for t in self.stop.thresholds}
        run.first_gap = {t: self.state.first_gap.get(t) for t in self.stop.thresholds}
        run.min_rre = self.state.min_rre if self.truth is not None else np.nan
        run.min_rre_iter = self.state.min_rre_iter
        run.wall_time = time.perf_counter() - self._start
        run.products = products
        if isinstance(self.obj, RofDual) and run.x is not None:
            run.primal = self.obj.primal(run.x)
        _LOGGER.info(
            "%s finished after %d iterations (%s), f=%.10g",
            run.name,
            run.iterations,
            reason,
            self.state.objective,
        )
        return run


def _context(
    feas: NonNegativeOrthant | UnitDiscs, x: Array, g: Array, scaling: DiagScaling
) -> StepContext:
    return StepContext(
        x, g, scaling, lambda alpha: feas.active_mask(x, g, alpha, scaling)
    )


class _ScalingBuilder:
    """Per-run scaling rule with the pieces it needs."""

    def __init__(self, obj: Objective, rule: str, l1: float, l2: float):
        self.obj = obj
        self.rule = rule
        self.l1, self.l2 = l1, l2
        self.hessian_diagonal = obj.hessian_diagonal() if rule == SCALING_PR else None
        self._fixed: DiagScaling | None = None

    def __call__(self, x: Array, g: Array) -> DiagScaling:
        if self.rule == SCALING_IDENTITY:
            if self._fixed is None or self._fixed.d.shape != x.shape:
                self._fixed = build_scaling(
                    self.rule, ScalingState(x), self.l1, self.l2
                )
            return self._fixed
        split = None
        if self.rule == SCALING_SPLIT:
            split = self.obj.split_gradient(x, strict=False)
        state = ScalingState(x, g, split, self.hessian_diagonal)
        return build_scaling(self.rule, state, self.l1, self.l2)


def sgp_run(
    obj: Objective,
    x0: Array,
    scaling_rule: str = SCALING_IDENTITY,
    steplength_rule: str | SteplengthRule = STEP_CONSTANT,
    ls_cfg: LinesearchConfig | None = None,
    stop: StopRule | None = None,
    *,
    bounds: StepBounds | None = None,
    alpha0: float = DEFAULT_ALPHA0,
    m: int = DEFAULT_SWEEP_LENGTH,
    gamma_uses_lambda: bool = False,
    l1: float = DEFAULT_SCALING_L1,
    l2: float = DEFAULT_SCALING_L2,
    disc_eps: float = DEFAULT_DISC_MASK_EPS,
    truth: Array | None = None,
    f_star: float | None = None,
    name: str = "sgp",
) -> SolverRun:
    """Scaled gradient projection

        x+ = x + lambda (P(x - alpha D g) - x)

    with identity scaling this is plain GP. ls_cfg=None takes lambda = 1.
    """
    stop = stop or StopRule()
    feas = feasible_set_for(obj.feasible_set, disc_eps)
    x = np.array(x0, dtype=np.float64)
    if feas.residual(x) > 0:
        raise ValueError("starting point is not feasible")
    rule = (
        steplength_rule
        if isinstance(steplength_rule, SteplengthRule)
        else make_rule(steplength_rule, bounds, alpha0, m, gamma_uses_lambda)
    )
    scaling_of = _ScalingBuilder(obj, scaling_rule, l1, l2)

    f, g = obj.value_grad(x)
    history = deque([f], maxlen=ls_cfg.memory if ls_cfg else 1)
    monitor = RunMonitor(name, stop, obj, truth, f_star)
    decision = monitor.observe(0, x, f, np.nan, np.nan, feas.residual(x))
    scaling = scaling_of(x, g)
    ctx = _context(feas, x, g, scaling)
    _LOGGER.info(
        "Starting %s: scaling=%s, steplength=%s, f0=%.10g",
        name,
        scaling_rule,
        rule.name,
        f,
    )

    k = 0
    while not decision.stop:
        alpha = rule.select(ctx)
        direction = feas.project(x - alpha * scaling.d * g) - x
        if not np.any(direction):
            return monitor.finish(REASON_STATIONARY, rule.cost())

        if ls_cfg is None:
            lam, x_new = 1.0, x + direction
            try:
                f_new, g_new = obj.value_grad(x_new)
            except DomainViolationError:
                _LOGGER.warning("%s left the objective domain at iteration %d", name, k)
                return monitor.finish(REASON_DOMAIN, rule.cost())
        else:
            try:
                result = armijo_search(obj, x, direction, g, history, ls_cfg)
            except NotDescentDirectionError:
                _LOGGER.warning("%s: no descent direction at iteration %d", name, k)
                return monitor.finish(REASON_NOT_DESCENT, rule.cost())
            if result.exhausted:
                # the last trial failed the Armijo test; x is kept
                reason = REASON_DOMAIN if result.grad_new is None else REASON_LINESEARCH
                return monitor.finish(reason, rule.cost())
            lam, x_new = result.lam, result.x_new
            f_new, g_new = result.f_new, result.grad_new

        k += 1
        new_scaling = scaling_of(x_new, g_new)
        new_ctx = _context(feas, x_new, g_new, new_scaling)
        rule.update(ctx, new_ctx, alpha, lam)
        history.append(f_new)
        step_norm = float(np.linalg.norm(x_new - x))
        if _LOGGER.isEnabledFor(logging.DEBUG):
            _LOGGER.debug(
                "%s k=%d f=%.12g alpha=%.4g lambda=%.4g", name, k, f_new, alpha, lam
            )
        x, f, g, scaling, ctx = x_new, f_new, g_new, new_scaling, new_ctx
        decision = monitor.observe(
            k, x, f, alpha, lam, feas.residual(x), step_norm
        )
    return monitor.finish(decision.reason, rule.cost())


def extrapolation_theta(k: int) -> float:
    """theta_k = 2/(k+2) with theta_0 = theta_1."""
    return 2.0 / (max(k, 1) + 2.0)


def extrapolation_eta(k: int) -> float:
    """eta_k = theta_k (1 - theta_{k-1}) / theta_{k-1}; eta_0 = 0."""
    if k == 0:
        return 0.0
    previous = extrapolation_theta(k - 1)
    return extrapolation_theta(k) * (1.0 - previous) / previous


def gp_extra_run(
    obj: Objective,
    x0: Array,
    stop: StopRule | None = None,
    *,
    lipschitz: float | None = None,
    truth: Array | None = None,
    f_star: float | None = None,
    name: str = "gp_extra",
) -> SolverRun:
    """Gradient projection with extrapolation and steplength 1/L."""
    stop = stop or StopRule()
    # raises MissingLipschitzError when the objective has none
    lipschitz = lipschitz if lipschitz is not None else obj.lipschitz()
    step = 1.0 / lipschitz
    feas = feasible_set_for(obj.feasible_set)
    x = np.array(x0, dtype=np.float64)
    x_prev = x.copy()
    f = obj.value(x)
    monitor = RunMonitor(name, stop, obj, truth, f_star)
    decision = monitor.observe(0, x, f, np.nan, np.nan, feas.residual(x))
    k = 0
    while not decision.stop:
        eta = extrapolation_eta(k)
        x_bar = x + eta * (x - x_prev)
        try:
            _, g_bar = obj.value_grad(x_bar)
            x_next = feas.project(x_bar - step * g_bar)
            f_next = obj.value(x_next)
        except DomainViolationError:
            return monitor.finish(REASON_DOMAIN)
        k += 1
        step_norm = float(np.linalg.norm(x_next - x))
        x_prev, x, f = x, x_next, f_next
        decision = monitor.observe(
            k, x, f, step, 1.0, feas.residual(x), step_norm
        )
    return monitor.finish(decision.reason)


def isra_step(obj_ls: LeastSquares, x: Array) -> Array:
    """x * A'y / A'(Ax + b)."""
    split = obj_ls.split_gradient(x, strict=False)
    if np.any(split.v == 0):
        raise SplittingError("ISRA denominator has zero entries")
    return x * split.u / split.v


def rl_step(obj_kl: KullbackLeibler, x: Array) -> Array:
    """x / A'1 * A'(y / (Ax + b))."""
    split = obj_kl.split_gradient(x, strict=False)
    return x / split.v * split.u


def _multiplicative_run(
    obj: LeastSquares | KullbackLeibler,
    step_fn: Callable[[Any, Array], Array],
    x0: Array,
    stop: StopRule | None,
    truth: Array | None,
    f_star: float | None,
    name: str,
) -> SolverRun:
    stop = stop or StopRule()
    x = np.array(x0, dtype=np.float64)
    monitor = RunMonitor(name, stop, obj, truth, f_star)
    decision = monitor.observe(0, x, obj.value(x), np.nan, np.nan, 0.0)
    k = 0
    while not decision.stop:
        try:
            x_next = step_fn(obj, x)
            f = obj.value(x_next)
        except DomainViolationError:
            return monitor.finish(REASON_DOMAIN)
        k += 1
        step_norm = float(np.linalg.norm(x_next - x))
        x = x_next
        decision = monitor.observe(
            k, x, f, 1.0, 1.0, float(max(0.0, -x.min())), step_norm
        )
    return monitor.finish(decision.reason)


def isra_run(
    obj_ls: LeastSquares,
    x0: Array,
    stop: StopRule | None = None,
    *,
    truth: Array | None = None,
    f_star: float | None = None,
    name: str = "isra",
) -> SolverRun:
    """Repeated ISRA steps."""
    return _multiplicative_run(obj_ls, isra_step, x0, stop, truth, f_star, name)


def rl_run(
    obj_kl: KullbackLeibler,
    x0: Array,
    stop: StopRule | None = None,
    *,
    truth: Array | None = None,
    f_star: float | None = None,
    name: str = "rl",
) -> SolverRun:
    """Repeated Richardson-Lucy steps."""
    return _multiplicative_run(obj_kl, rl_step, x0, stop, truth, f_star, name)


def chambolle_step(
    rof_obj: RofDual, p: DualField, tau: float, literal: bool = False
) -> DualField:
    """One fixed-step dual update.

    Standard scheme: p+ = (p + tau q) / (1 + tau |q|) with q = D(div p - y/beta).
    literal=True divides p + tau q by the pair norms of p instead, with 1 where
    a pair is zero; that variant is not guaranteed to stay feasible.
    """
    q = discrete_gradient(
        discrete_divergence(p) - rof_obj.data / rof_obj.beta
    ).stacked()
    if literal:
        norms = pair_norms(p)
        return (p + tau * q) / np.where(norms > 0, norms, 1.0)
    return (p + tau * q) / (1.0 + tau * pair_norms(q))


def chambolle_run(
    rof_obj: RofDual,
    p0: DualField,
    tau: float = DEFAULT_CHAMBOLLE_TAU,
    stop: StopRule | None = None,
    *,
    literal: bool = False,
    truth: Array | None = None,
    f_star: float | None = None,
    name: str = "chambolle",
) -> SolverRun:
    """Fixed-step dual iteration; the primal is y - beta div p."""
    if not 0 < tau < CHAMBOLLE_TAU_LIMIT:
        raise StepParameterError(
            f"Chambolle step must lie in (0, {CHAMBOLLE_TAU_LIMIT}), got {tau}"
        )
    stop = stop or StopRule()
    discs = UnitDiscs()
    p = np.array(p0, dtype=np.float64)
    if discs.residual(p) > 0:
        raise ValueError("starting dual field is not feasible")
    monitor = RunMonitor(name, stop, rof_obj, truth, f_star)
    decision = monitor.observe(0, p, rof_obj.value(p), np.nan, np.nan, 0.0)
    k = 0
    while not decision.stop:
        p_next = chambolle_step(rof_obj, p, tau, literal)
        k += 1
        step_norm = float(np.linalg.norm(p_next - p))
        p = p_next
        decision = monitor.observe(
            k, p, rof_obj.value(p), tau, 1.0, discs.residual(p), step_norm
        )
    return monitor.finish(decision.reason)


def projected_gradient_norm(obj: Objective, x: Array) -> float:
    """|x - P(x - grad J(x))|_inf on the non-negative orthant."""
    _, g = obj.value_grad(x)
    return float(np.max(np.abs(x - project_nonneg(x - g))))
