"""Objective functions with gradients and U/V gradient splittings."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from numpy.typing import NDArray
from scipy.special import kl_div

from .const import KL_MODEL_FLOOR
from .errors import (
    DomainViolationError,
    MissingLipschitzError,
    ScalingError,
    SizeMismatchError,
    SplittingError,
)
from .image_ops import BlurOperator, DualField, discrete_divergence, discrete_gradient

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]
# A blur operator or a dense matrix acting on vectors
Operator = BlurOperator | NDArray[np.float64]

FEASIBLE_NONNEG = "nonneg"
FEASIBLE_DISC = "disc"


def _forward(op: Operator, x: Array) -> Array:
    if isinstance(op, BlurOperator):
        return op.convolve(x)
    if op.shape[1] != x.shape[0]:
        raise SizeMismatchError(f"matrix {op.shape} cannot act on vector {x.shape}")
    return op @ x


def _adjoint(op: Operator, y: Array) -> Array:
    if isinstance(op, BlurOperator):
        return op.convolve_adjoint(y)
    if op.shape[0] != y.shape[0]:
        raise SizeMismatchError(f"matrix {op.shape}' cannot act on vector {y.shape}")
    return op.T @ y


@dataclass(frozen=True)
class SplitGradient:
    """Decomposition -grad J = u - v."""

    u: Array
    v: Array

    @property
    def neg_grad(self) -> Array:
        """Return u - v."""
        return self.u - self.v


def _checked_split(u: Array, v: Array, strict: bool, kind: str) -> SplitGradient:
    if strict and np.any(v <= 0):
        raise SplittingError(
            f"{kind} splitting has {int(np.count_nonzero(v <= 0))} non-positive "
            "V entries"
        )
    return SplitGradient(u, v)


class Objective(ABC):
    """Value and gradient provider over a convex feasible set."""

    kind: ClassVar[str]
    feasible_set: ClassVar[str] = FEASIBLE_NONNEG

    @abstractmethod
    def value_grad(self, x: Array) -> tuple[float, Array]:
        """Return J(x) and its gradient."""

    def value(self, x: Array) -> float:
        """Return J(x)."""
        return self.value_grad(x)[0]

    def split_gradient(self, x: Array, strict: bool = True) -> SplitGradient:
        """Return (U, V) with U - V = -grad J(x)."""
        raise SplittingError(f"{self.kind} objective has no gradient splitting")

    def lipschitz(self) -> float:
        """Lipschitz constant of the gradient."""
        raise MissingLipschitzError(f"{self.kind} objective has no Lipschitz constant")

    def hessian_diagonal(self) -> Array:
        """Diagonal of the Hessian, for the PR scaling."""
        raise ScalingError(f"{self.kind} objective has no constant Hessian diagonal")


class LeastSquares(Objective):
    """J(x) = 1/2 |Ax + b - y|^2."""

    kind = "LS"

    def __init__(self, op: Operator, data: Array, background: Array | float = 0.0):
        self.op = op
        self.data = np.asarray(data, dtype=np.float64)
        self.background = background

    def value_grad(self, x: Array) -> tuple[float, Array]:
        residual = _forward(self.op, x) + self.background - self.data
        return 0.5 * float(np.vdot(residual, residual)), _adjoint(self.op, residual)

    def split_gradient(self, x: Array, strict: bool = True) -> SplitGradient:
        u = _adjoint(self.op, self.data)
        v = _adjoint(self.op, _forward(self.op, x) + self.background)
        return _checked_split(u, v, strict, self.kind)

    def lipschitz(self) -> float:
        if isinstance(self.op, BlurOperator):
            return float(np.max(np.abs(self.op.spectrum) ** 2))
        return float(np.linalg.norm(self.op, 2) ** 2)

    def hessian_diagonal(self) -> Array:
        if isinstance(self.op, BlurOperator):
            return np.full(
                (self.op.n, self.op.n), float(np.mean(np.abs(self.op.spectrum) ** 2))
            )
        return np.sum(self.op**2, axis=0)


class KullbackLeibler(Objective):
    """Generalized KL divergence of Ax + b from the data, with 0 ln 0 = 0."""

    kind = "KL"

    def __init__(self, op: Operator, data: Array, background: Array | float = 0.0):
        self.op = op
        self.data = np.asarray(data, dtype=np.float64)
        self.background = background
        self._ones_adjoint = _adjoint(op, np.ones_like(self.data))

    def model(self, x: Array) -> Array:
        """Return Ax + b, raising outside the domain."""
        model = _forward(self.op, x) + self.background
        if np.min(model) < KL_MODEL_FLOOR:
            raise DomainViolationError()
        return model

    def value_grad(self, x: Array) -> tuple[float, Array]:
        model = self.model(x)
        value = float(np.sum(kl_div(self.data, model)))
        return value, self._ones_adjoint - _adjoint(self.op, self.data / model)

    def split_gradient(self, x: Array, strict: bool = True) -> SplitGradient:
        u = _adjoint(self.op, self.data / self.model(x))
        return _checked_split(u, self._ones_adjoint.copy(), strict, self.kind)


class HypersurfacePotential(Objective):
    """Smoothed total variation sum sqrt(|Dx|^2 + delta^2), periodic."""

    kind = "HS"

    def __init__(self, delta: float):
        if delta <= 0:
            raise ValueError(f"HS smoothing delta must be positive, got {delta}")
        self.delta = delta

    def _norms(self, x: Array) -> Array:
        field = discrete_gradient(x)
        return np.sqrt(field.comp1**2 + field.comp2**2 + self.delta**2)

    def _split(self, x: Array, norms: Array) -> tuple[Array, Array]:
        up = np.roll(norms, 1, axis=0)
        left = np.roll(norms, 1, axis=1)
        u = (
            (np.roll(x, -1, axis=0) + np.roll(x, -1, axis=1)) / norms
            + np.roll(x, 1, axis=1) / left
            + np.roll(x, 1, axis=0) / up
        )
        v = x * (2.0 / norms + 1.0 / left + 1.0 / up)
        return u, v

    def value_grad(self, x: Array) -> tuple[float, Array]:
        norms = self._norms(x)
        u, v = self._split(x, norms)
        return float(norms.sum()), v - u

    def split_gradient(self, x: Array, strict: bool = True) -> SplitGradient:
        u, v = self._split(x, self._norms(x))
        return _checked_split(u, v, strict, self.kind)


class Regularized(Objective):
    """Composite J0 + beta * JR."""

    kind = "composite"

    def __init__(self, fidelity: Objective, regularizer: Objective, beta: float):
        if beta < 0:
            raise ValueError(f"regularization weight must be non-negative, got {beta}")
        self.fidelity = fidelity
        self.regularizer = regularizer
        self.beta = beta

    def value_grad(self, x: Array) -> tuple[float, Array]:
        f0, g0 = self.fidelity.value_grad(x)
        fr, gr = self.regularizer.value_grad(x)
        return f0 + self.beta * fr, g0 + self.beta * gr

    def split_gradient(self, x: Array, strict: bool = True) -> SplitGradient:
        s0 = self.fidelity.split_gradient(x, strict=False)
        sr = self.regularizer.split_gradient(x, strict=False)
        return _checked_split(
            s0.u + self.beta * sr.u, s0.v + self.beta * sr.v, strict, self.kind
        )


class RofDual(Objective):
    """W(p) = |beta div p - y|^2 over per-pixel unit discs."""

    kind = "ROF-dual"
    feasible_set = FEASIBLE_DISC

    def __init__(self, data: Array, beta: float):
        self.data = np.asarray(data, dtype=np.float64)
        self.beta = beta

    def residual(self, p: DualField) -> Array:
        """Return beta div p - y."""
        return self.beta * discrete_divergence(p) - self.data

    def value_grad(self, p: DualField) -> tuple[float, DualField]:
        residual = self.residual(p)
        grad = -2.0 * self.beta * discrete_gradient(residual).stacked()
        return float(np.vdot(residual, residual)), grad

    def primal(self, p: DualField) -> Array:
        """Primal image y - beta div p."""
        return self.data - self.beta * discrete_divergence(p)

    def lipschitz(self) -> float:
        # |div|^2 <= 8 on periodic grids
        return 16.0 * self.beta**2


class QuadraticObjective(Objective):
    """J(x) = 1/2 x'Ax - y'x with A symmetric positive definite."""

    kind = "QP"

    def __init__(self, matrix: Array, linear: Array):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.linear = np.asarray(linear, dtype=np.float64)

    def value_grad(self, x: Array) -> tuple[float, Array]:
        ax = self.matrix @ x
        return 0.5 * float(x @ ax) - float(self.linear @ x), ax - self.linear

    def lipschitz(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[-1])

    def hessian_diagonal(self) -> Array:
        return np.diag(self.matrix).copy()


def ls_value_grad(obj: LeastSquares, x: Array) -> tuple[float, Array]:
    """Least-squares value and gradient."""
    return obj.value_grad(x)


def kl_value_grad(obj: KullbackLeibler, x: Array) -> tuple[float, Array]:
    """KL value and gradient."""
    return obj.value_grad(x)


def hs_value_grad(obj: HypersurfacePotential, x: Array) -> tuple[float, Array]:
    """Hypersurface potential value and gradient."""
    return obj.value_grad(x)


def rof_dual_value_grad(obj: RofDual, p: DualField) -> tuple[float, DualField]:
    """ROF dual value and gradient."""
    return obj.value_grad(p)


def split_gradient(obj: Objective, x: Array) -> SplitGradient:
    """Strict U/V splitting; raises SplittingError when V has non-positive entries."""
    return obj.split_gradient(x, strict=True)


def ls_lipschitz(obj: LeastSquares) -> float:
    """Largest eigenvalue of A'A."""
    return obj.lipschitz()
