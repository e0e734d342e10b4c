"""Steplength rules: scaled BB1/BB2, ABBmin1 and the limited-memory Ritz sweep.

The Ritz sweep keeps the last m scaled, masked gradients D^(1/2) g~ as the
columns of G~ and the reciprocals of their steplengths in the lower
bidiagonal matrix Gamma. Once m columns are stored and the queue is empty, a
partially extended Cholesky factorization of G~'[G~ g] gives the
tridiagonal Phi = [R r] Gamma R^-1, whose positive eigenvalues are inverted
into the next m steplengths, smallest first.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cholesky, eigvalsh, solve_triangular

from .const import (
    DEFAULT_ABB_HISTORY,
    DEFAULT_ABB_TAU0,
    DEFAULT_ABB_TAU_DECREASE,
    DEFAULT_ABB_TAU_INCREASE,
    DEFAULT_ALPHA0,
    DEFAULT_ALPHA_MAX,
    DEFAULT_ALPHA_MIN,
    DEFAULT_BB2_WARMUP,
    DEFAULT_SWEEP_LENGTH,
    RANK_TOLERANCE,
    STEP_ABBMIN1,
    STEP_BB1,
    STEP_BB2,
    STEP_CONSTANT,
    STEP_RITZ,
)
from .feasible import DiagScaling

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class StepBounds:
    """Safeguard interval [alpha_min, alpha_max]."""

    alpha_min: float = DEFAULT_ALPHA_MIN
    alpha_max: float = DEFAULT_ALPHA_MAX

    def __post_init__(self) -> None:
        if not 0 < self.alpha_min < self.alpha_max:
            raise ValueError(
                f"invalid steplength bounds [{self.alpha_min}, {self.alpha_max}]"
            )

    def clamp(self, value: float) -> float:
        """Clamp into the interval; non-positive or non-finite values give alpha_max."""
        if not np.isfinite(value) or value <= 0:
            return self.alpha_max
        return float(min(max(value, self.alpha_min), self.alpha_max))


def _ratio(num: float, den: float) -> float:
    return num / den if den != 0 else np.inf


def bb1(s: Array, z: Array, d: DiagScaling, bounds: StepBounds) -> float:
    """Scaled BB1: s'D^-2 s / s'D^-1 z."""
    sd = np.ravel(s) / np.ravel(d.d)
    num, den = float(np.vdot(sd, sd)), float(np.vdot(sd, np.ravel(z)))
    return bounds.clamp(_ratio(num, den))


def bb2(s: Array, z: Array, d: DiagScaling, bounds: StepBounds) -> float:
    """Scaled BB2: s'D z / z'D^2 z."""
    dz = np.ravel(d.d) * np.ravel(z)
    num, den = float(np.vdot(np.ravel(s), dz)), float(np.vdot(dz, dz))
    return bounds.clamp(_ratio(num, den))


@dataclass
class BBState:
    """Adaptive state of the ABBmin1 alternation."""

    bounds: StepBounds = field(default_factory=StepBounds)
    tau: float = DEFAULT_ABB_TAU0
    tau_decrease: float = DEFAULT_ABB_TAU_DECREASE
    tau_increase: float = DEFAULT_ABB_TAU_INCREASE
    history_length: int = DEFAULT_ABB_HISTORY
    warmup: int = DEFAULT_BB2_WARMUP
    iter: int = 0
    bb2_history: deque[float] = field(init=False)

    def __post_init__(self) -> None:
        self.bb2_history = deque(maxlen=self.history_length)


def abbmin1_select(state: BBState, s: Array, z: Array, d: DiagScaling) -> float:
    """BB2 during warm-up, then alternate BB1 and a minimum of recent BB2 values."""
    state.iter += 1
    alpha1 = bb1(s, z, d, state.bounds)
    alpha2 = bb2(s, z, d, state.bounds)
    state.bb2_history.append(alpha2)
    if state.iter <= state.warmup:
        return alpha2
    if alpha2 / alpha1 < state.tau:
        state.tau *= state.tau_decrease
        return state.bounds.clamp(min(state.bb2_history))
    state.tau *= state.tau_increase
    return alpha1


def masked_scaled(g: Array, d: DiagScaling, mask: NDArray[np.bool_]) -> Array:
    """Flattened D^(1/2) g~ with exact zeros on masked components."""
    return np.ravel(np.where(mask, 0.0, g) * d.sqrt)


def ritz_matrix(gram: Array, cross: Array, gamma: Array) -> Array | None:
    """Phi = [R r] Gamma R^-1 from G'G = R'R and R'r = G'g.

    Returns None when the Gram matrix is numerically rank deficient.
    """
    try:
        r_factor = cholesky(gram, lower=False)
    except LinAlgError:
        return None
    pivots = np.diag(r_factor) ** 2
    if np.min(pivots) < RANK_TOLERANCE * np.trace(gram):
        return None
    r_vec = solve_triangular(r_factor, cross, trans="T")
    extended = np.hstack((r_factor, r_vec[:, None])) @ gamma
    return solve_triangular(r_factor, extended.T, trans="T").T


def symmetrize_tridiagonal(phi: Array) -> Array:
    """diag(Phi) + tril(Phi, -1) + tril(Phi, -1)'."""
    lower = np.tril(phi, -1)
    return np.diag(np.diag(phi)) + lower + lower.T


@dataclass
class SweepState:
    """Ring buffer of back gradients and the queue of the current sweep."""

    m: int = DEFAULT_SWEEP_LENGTH
    bounds: StepBounds = field(default_factory=StepBounds)
    fallback: float = DEFAULT_ALPHA0
    gtilde_cols: deque[Array] = field(init=False)
    alpha_recip: deque[float] = field(init=False)
    queue: deque[float] = field(default_factory=deque)
    factorizations: int = 0
    products: int = 0
    last_phi: Array | None = None

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"sweep length must be positive, got {self.m}")
        self.gtilde_cols = deque(maxlen=self.m)
        self.alpha_recip = deque(maxlen=self.m)
        self.fallback = self.bounds.clamp(self.fallback)

    def gamma(self) -> Array:
        """(k+1) x k lower bidiagonal matrix of steplength reciprocals."""
        k = len(self.alpha_recip)
        matrix = np.zeros((k + 1, k))
        for i, recip in enumerate(self.alpha_recip):
            matrix[i, i] = recip
            matrix[i + 1, i] = -recip
        return matrix


def sweep_push(
    state: SweepState,
    g: Array,
    d: DiagScaling,
    active_mask: NDArray[np.bool_],
    alpha_used: float,
) -> None:
    """Store D^(1/2) g~ and 1/alpha_used, evicting the oldest pair when full."""
    if alpha_used <= 0:
        raise ValueError(f"steplength must be positive, got {alpha_used}")
    state.gtilde_cols.append(masked_scaled(g, d, active_mask))
    state.alpha_recip.append(1.0 / alpha_used)
    state.fallback = state.bounds.clamp(alpha_used)


def sweep_compute_ritz(
    state: SweepState, g_current_scaled_masked: Array, bounds: StepBounds | None = None
) -> list[float]:
    """Steplengths of the next sweep, in increasing order; empty if none survive."""
    bounds = bounds or state.bounds
    columns = list(state.gtilde_cols)
    current = np.ravel(g_current_scaled_masked)
    k = len(columns)
    if k == 0:
        return []

    gram = np.empty((k, k))
    cross = np.empty(k)
    for i in range(k):
        for j in range(i, k):
            gram[i, j] = gram[j, i] = np.vdot(columns[i], columns[j])
            state.products += 1
        cross[i] = np.vdot(columns[i], current)
        state.products += 1
    gamma = state.gamma()
    state.factorizations += 1

    phi = ritz_matrix(gram, cross, gamma)
    while phi is None:
        k -= 1
        _LOGGER.debug("Rank-deficient sweep, dropping oldest column (%d left)", k)
        if k == 0:
            state.last_phi = None
            return []
        gram, cross, gamma = gram[1:, 1:], cross[1:], gamma[1:, 1:]
        phi = ritz_matrix(gram, cross, gamma)
    state.last_phi = phi

    ritz_values = eigvalsh(symmetrize_tridiagonal(phi))
    positive = ritz_values[ritz_values > 0]
    if positive.size < ritz_values.size:
        _LOGGER.debug(
            "Discarded %d non-positive Ritz values", ritz_values.size - positive.size
        )
    return [bounds.clamp(1.0 / value) for value in np.sort(positive)[::-1]]


def sweep_next_alpha(
    state: SweepState, g_current_scaled_masked: Array | None = None
) -> float:
    """Pop the next steplength, refilling the queue when a full sweep is stored."""
    if not state.queue and g_current_scaled_masked is not None:
        if len(state.gtilde_cols) == state.m:
            state.queue.extend(sweep_compute_ritz(state, g_current_scaled_masked))
            if not state.queue:
                _LOGGER.warning(
                    "No positive Ritz values, using fallback steplength %s",
                    state.fallback,
                )
    if state.queue:
        return state.queue.popleft()
    return state.fallback


@dataclass
class StepContext:
    """Iterate, gradient and scaling seen by a steplength rule."""

    x: Array
    grad: Array
    scaling: DiagScaling
    mask_for: Callable[[float], NDArray[np.bool_]]


class SteplengthRule(ABC):
    """Chooses alpha_k and learns from each accepted step."""

    name: str

    def __init__(
        self, bounds: StepBounds | None = None, alpha0: float = DEFAULT_ALPHA0
    ):
        self.bounds = bounds or StepBounds()
        self.next_alpha = self.bounds.clamp(alpha0)
        self.products = 0

    def cost(self) -> int:
        """Vector-vector products spent choosing steplengths so far."""
        return self.products

    def select(self, ctx: StepContext) -> float:
        """Steplength for the current iterate."""
        return self.next_alpha

    @abstractmethod
    def update(
        self, old: StepContext, new: StepContext, alpha: float, lam: float
    ) -> None:
        """Record the accepted step from old to new."""


class ConstantStep(SteplengthRule):
    """alpha_k = alpha0."""

    name = STEP_CONSTANT

    def update(
        self, old: StepContext, new: StepContext, alpha: float, lam: float
    ) -> None:
        pass


class BB1Step(SteplengthRule):
    """Scaled BB1."""

    name = STEP_BB1

    def update(
        self, old: StepContext, new: StepContext, alpha: float, lam: float
    ) -> None:
        s, z = new.x - old.x, new.grad - old.grad
        self.next_alpha = bb1(s, z, new.scaling, self.bounds)
        self.products += 2


class BB2Step(SteplengthRule):
    """Scaled BB2."""

    name = STEP_BB2

    def update(
        self, old: StepContext, new: StepContext, alpha: float, lam: float
    ) -> None:
        s, z = new.x - old.x, new.grad - old.grad
        self.next_alpha = bb2(s, z, new.scaling, self.bounds)
        self.products += 2


class ABBmin1Step(SteplengthRule):
    """Adaptive alternation of BB1 and min of recent BB2."""

    name = STEP_ABBMIN1

    def __init__(
        self,
        bounds: StepBounds | None = None,
        alpha0: float = DEFAULT_ALPHA0,
        **bb_options: float,
    ):
        super().__init__(bounds, alpha0)
        self.state = BBState(bounds=self.bounds, **bb_options)

    def update(
        self, old: StepContext, new: StepContext, alpha: float, lam: float
    ) -> None:
        self.next_alpha = abbmin1_select(
            self.state, new.x - old.x, new.grad - old.grad, new.scaling
        )
        self.products += 4


class RitzStep(SteplengthRule):
    """Limited-memory Ritz steplengths over sweeps of m iterations."""

    name = STEP_RITZ

    def __init__(
        self,
        bounds: StepBounds | None = None,
        alpha0: float = DEFAULT_ALPHA0,
        m: int = DEFAULT_SWEEP_LENGTH,
        gamma_uses_lambda: bool = False,
    ):
        super().__init__(bounds, alpha0)
        self.sweep = SweepState(m=m, bounds=self.bounds, fallback=alpha0)
        self.gamma_uses_lambda = gamma_uses_lambda

    def cost(self) -> int:
        return self.sweep.products

    def select(self, ctx: StepContext) -> float:
        mask = ctx.mask_for(self.sweep.fallback)
        return sweep_next_alpha(self.sweep, masked_scaled(ctx.grad, ctx.scaling, mask))

    def update(
        self, old: StepContext, new: StepContext, alpha: float, lam: float
    ) -> None:
        used = lam * alpha if self.gamma_uses_lambda else alpha
        sweep_push(self.sweep, old.grad, old.scaling, old.mask_for(alpha), used)


RULES: dict[str, type[SteplengthRule]] = {
    STEP_CONSTANT: ConstantStep,
    STEP_BB1: BB1Step,
    STEP_BB2: BB2Step,
    STEP_ABBMIN1: ABBmin1Step,
    STEP_RITZ: RitzStep,
}


def make_rule(
    name: str,
    bounds: StepBounds | None = None,
    alpha0: float = DEFAULT_ALPHA0,
    m: int = DEFAULT_SWEEP_LENGTH,
    gamma_uses_lambda: bool = False,
) -> SteplengthRule:
    """Fresh rule instance for one solver run."""
    if name not in RULES:
        raise ValueError(f"unknown steplength rule {name!r}")
    if name == STEP_RITZ:
        return RitzStep(bounds, alpha0, m=m, gamma_uses_lambda=gamma_uses_lambda)
    return RULES[name](bounds, alpha0)
