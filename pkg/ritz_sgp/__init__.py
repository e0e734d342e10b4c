"""Scaled gradient projection with limited-memory Ritz steplengths.

Solvers for non-negatively constrained quadratic, least-squares and
Kullback-Leibler deblurring problems, and for the unit-disc constrained
dual of ROF denoising.
"""

from __future__ import annotations

from .errors import RitzSgpError
from .linesearch import LinesearchConfig, armijo_search
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
from .steplength import StepBounds, make_rule

__version__ = "0.1.0"

__all__ = [
    "LinesearchConfig",
    "QpInstance",
    "RitzSgpError",
    "SolverRun",
    "StepBounds",
    "StopRule",
    "armijo_search",
    "chambolle_run",
    "generate_qp",
    "gp_extra_run",
    "isra_run",
    "make_rule",
    "rl_run",
    "sgp_run",
]
