"""Armijo backtracking along a feasible direction, monotone or nonmonotone."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .const import (
    DEFAULT_LS_GAMMA,
    DEFAULT_LS_MAX_BACKTRACKS,
    DEFAULT_LS_MEMORY,
    DEFAULT_LS_SIGMA,
)
from .errors import DomainViolationError, NotDescentDirectionError
from .objectives import Objective

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class LinesearchConfig:
    """Memory M, sufficient decrease gamma, backtracking factor sigma."""

    memory: int = DEFAULT_LS_MEMORY
    gamma: float = DEFAULT_LS_GAMMA
    sigma: float = DEFAULT_LS_SIGMA
    max_backtracks: int = DEFAULT_LS_MAX_BACKTRACKS

    def __post_init__(self) -> None:
        if self.memory < 1:
            raise ValueError(f"linesearch memory must be >= 1, got {self.memory}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be non-negative")


class LinesearchResult(NamedTuple):
    """Accepted step."""

    lam: float
    x_new: Array
    f_new: float
    grad_new: Array | None
    exhausted: bool


def armijo_search(
    obj: Objective,
    x: Array,
    d: Array,
    g: Array,
    history: Sequence[float],
    cfg: LinesearchConfig,
) -> LinesearchResult:
    """Largest lambda in {1, sigma, sigma^2, ...} with
    J(x + lambda d) <= J_ref + gamma lambda g'd, J_ref = max of the last M values.

    A trial point outside the objective's domain counts as a rejection. When the
    backtrack limit is hit the smallest tried lambda is returned with
    exhausted set; its objective may be inf if it never entered the domain.
    """
    if not history:
        raise ValueError("linesearch history is empty")
    if not np.any(d):
        f, grad = obj.value_grad(x)
        return LinesearchResult(1.0, x.copy(), f, grad, False)
    slope = float(np.vdot(g, d))
    if slope >= 0:
        raise NotDescentDirectionError()

    window = list(history)[-cfg.memory :]
    f_ref = max(window)
    lam = 1.0
    x_new, f_new, grad_new = x, np.inf, None
    for backtrack in range(cfg.max_backtracks + 1):
        x_new = x + lam * d
        try:
            f_new, grad_new = obj.value_grad(x_new)
        except DomainViolationError:
            f_new, grad_new = np.inf, None
        if f_new <= f_ref + cfg.gamma * lam * slope:
            if backtrack:
                _LOGGER.debug(
                    "Armijo accepted lambda=%s after %d backtracks", lam, backtrack
                )
            return LinesearchResult(lam, x_new, f_new, grad_new, False)
        if backtrack < cfg.max_backtracks:
            lam *= cfg.sigma

    _LOGGER.warning(
        "Armijo backtrack limit %d reached at lambda=%s", cfg.max_backtracks, lam
    )
    return LinesearchResult(lam, x_new, f_new, grad_new, True)
