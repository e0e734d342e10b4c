"""Feasible sets, projections and diagonal scaling matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .const import (
    DEFAULT_DISC_MASK_EPS,
    DEFAULT_SCALING_L1,
    DEFAULT_SCALING_L2,
    SCALING_CL,
    SCALING_IDENTITY,
    SCALING_PR,
    SCALING_SPLIT,
    SCALING_XK,
    SPLIT_DENOMINATOR_FLOOR,
)
from .errors import ScalingError, SizeMismatchError
from .image_ops import DualField
from .objectives import FEASIBLE_DISC, FEASIBLE_NONNEG, SplitGradient

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class DiagScaling:
    """Diagonal of D_k, with entries inside [l1, l2]."""

    d: Array
    l1: float = DEFAULT_SCALING_L1
    l2: float = DEFAULT_SCALING_L2

    def __post_init__(self) -> None:
        if not 0 < self.l1 <= self.l2:
            raise ScalingError(f"invalid scaling bounds [{self.l1}, {self.l2}]")
        if np.any(self.d < self.l1) or np.any(self.d > self.l2):
            raise ScalingError("scaling entries outside their bounds")

    @classmethod
    def identity(cls, shape: tuple[int, ...]) -> DiagScaling:
        """D = I."""
        return cls(np.ones(shape), 1.0, 1.0)

    @property
    def sqrt(self) -> Array:
        """Diagonal of D^(1/2)."""
        return np.sqrt(self.d)


def project_nonneg(x: Array, d: DiagScaling | None = None) -> Array:
    """Projection onto x >= 0; for a diagonal metric it does not depend on D."""
    if d is not None and d.d.shape != x.shape:
        raise SizeMismatchError(f"scaling {d.d.shape} does not match {x.shape}")
    return np.maximum(x, 0.0)


def pair_norms(p: DualField) -> Array:
    """Per-pixel norms of the dual pairs."""
    return np.hypot(p[0], p[1])


def project_disc(p: DualField) -> DualField:
    """Scale every pair with norm above 1 back onto the unit circle."""
    return p / np.maximum(pair_norms(p), 1.0)


class NonNegativeOrthant:
    """x >= 0 componentwise."""

    name = FEASIBLE_NONNEG

    def project(self, x: Array) -> Array:
        """Projected point."""
        return project_nonneg(x)

    def active_mask(
        self, x: Array, g: Array, alpha: float, scaling: DiagScaling
    ) -> NDArray[np.bool_]:
        """Components held at the bound; exact zeros come from the projection."""
        return x == 0

    def residual(self, x: Array) -> float:
        """Largest constraint violation."""
        return float(max(0.0, -np.min(x)))


class UnitDiscs:
    """Per-pixel unit discs of the ROF dual."""

    name = FEASIBLE_DISC

    def __init__(self, eps: float = DEFAULT_DISC_MASK_EPS):
        self.eps = eps

    def project(self, p: DualField) -> DualField:
        """Projected point."""
        return project_disc(p)

    def active_mask(
        self, p: DualField, g: DualField, alpha: float, scaling: DiagScaling
    ) -> NDArray[np.bool_]:
        """Components the projection moves away from the plain gradient step."""
        step = alpha * scaling.d * g
        direction = project_disc(p - step) - p
        threshold = self.eps * (1.0 + float(np.max(np.abs(g))))
        return np.abs(direction + step) >= threshold

    def residual(self, p: DualField) -> float:
        """Largest pair-norm excess over 1."""
        return float(max(0.0, np.max(pair_norms(p)) - 1.0))


def feasible_set_for(
    name: str, eps: float = DEFAULT_DISC_MASK_EPS
) -> NonNegativeOrthant | UnitDiscs:
    """Feasible set object for an objective's set name."""
    if name == FEASIBLE_DISC:
        return UnitDiscs(eps)
    return NonNegativeOrthant()


@dataclass(frozen=True)
class ScalingState:
    """What the scaling rules may look at."""

    x: Array
    grad: Array | None = None
    split: SplitGradient | None = None
    hessian_diagonal: Array | None = None


def build_scaling(
    rule: str,
    state: ScalingState,
    l1: float = DEFAULT_SCALING_L1,
    l2: float = DEFAULT_SCALING_L2,
) -> DiagScaling:
    """Diagonal scaling for the current iterate, clamped into [l1, l2]."""
    if not 0 < l1 <= l2:
        raise ScalingError(f"invalid scaling bounds [{l1}, {l2}]")
    x = state.x
    if rule == SCALING_IDENTITY:
        raw = np.ones_like(x)
    elif rule == SCALING_PR:
        if state.hessian_diagonal is None:
            raise ScalingError("PR scaling needs the Hessian diagonal")
        with np.errstate(divide="ignore"):
            raw = 1.0 / np.broadcast_to(state.hessian_diagonal, x.shape)
    elif rule == SCALING_CL:
        if state.grad is None:
            raise ScalingError("CL scaling needs the gradient")
        raw = np.where(state.grad >= 0, x, 1.0)
    elif rule == SCALING_XK:
        raw = x.copy()
    elif rule == SCALING_SPLIT:
        if state.split is None:
            raise ScalingError("split scaling needs the gradient splitting")
        denominator = np.maximum(state.split.v, SPLIT_DENOMINATOR_FLOOR)
        if not np.all(np.isfinite(denominator)):
            raise ScalingError("split scaling has an undefined denominator")
        raw = x / denominator
    else:
        raise ScalingError(f"unknown scaling rule {rule!r}")

    d = np.clip(np.nan_to_num(raw, nan=l2, posinf=l2), l1, l2)
    if _LOGGER.isEnabledFor(logging.DEBUG):
        _LOGGER.debug(
            "Scaling %s: %d entries clamped to l1, %d to l2",
            rule,
            int(np.count_nonzero(raw <= l1)),
            int(np.count_nonzero(raw >= l2)),
        )
    return DiagScaling(d, l1, l2)
