"""Exceptions raised by the toolkit."""

from __future__ import annotations


class RitzSgpError(Exception):
    """Base class for all toolkit errors."""


class SizeMismatchError(RitzSgpError, ValueError):
    """Operand shapes do not agree."""


class DegeneratePsfError(RitzSgpError, ValueError):
    """PSF weights are negative or sum to zero."""

    def __init__(self, message: str = "degenerate PSF") -> None:
        super().__init__(message)


class DomainViolationError(RitzSgpError, ArithmeticError):
    """A point lies outside the domain of the objective."""

    def __init__(self, message: str = "KL domain violation") -> None:
        super().__init__(message)


class SplittingError(RitzSgpError, ArithmeticError):
    """The V part of a gradient splitting is not strictly positive."""


class ScalingError(RitzSgpError, ValueError):
    """A diagonal scaling cannot be built from the given state."""


class NotDescentDirectionError(RitzSgpError, ArithmeticError):
    """Linesearch direction is not a descent direction."""

    def __init__(self, message: str = "not a descent direction") -> None:
        super().__init__(message)


class MissingLipschitzError(RitzSgpError, ValueError):
    """The objective provides no Lipschitz constant for its gradient."""


class StepParameterError(RitzSgpError, ValueError):
    """A fixed step parameter is outside its admissible range."""


class ZeroTruthError(RitzSgpError, ValueError):
    """Relative error requested against an all-zero reference."""


class ConfigError(RitzSgpError, ValueError):
    """Experiment configuration is invalid."""
