"""Reconstruction error and objective gap."""

from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray

from .errors import ZeroTruthError

_LOGGER = logging.getLogger(__name__)


def compute_rre(x: NDArray[np.float64], x_truth: NDArray[np.float64]) -> float:
    """|x - x_truth| / |x_truth|."""
    scale = float(np.linalg.norm(x_truth))
    if scale == 0:
        raise ZeroTruthError("relative error against an all-zero truth")
    return float(np.linalg.norm(x - x_truth)) / scale


def gap_is_relative(f_star: float) -> bool:
    """Whether compute_gap divides by the reference value."""
    return f_star > 0


def compute_gap(f_k: float, f_star: float, warn: bool = True) -> float:
    """(f_k - f_star) / f_star, or f_k - f_star when f_star <= 0."""
    if gap_is_relative(f_star):
        gap = (f_k - f_star) / f_star
    else:
        if warn:
            _LOGGER.warning(
                "Reference optimum %s is not positive, reporting the absolute gap",
                f_star,
            )
        gap = f_k - f_star
    if warn and gap < 0:
        _LOGGER.warning(
            "Objective %s is below the reference optimum %s (gap %.3e)",
            f_k,
            f_star,
            gap,
        )
    return gap
