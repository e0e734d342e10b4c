"""Random non-negatively constrained QPs with a known solution.

A = Q diag(xi) Q' with Q from the QR factorization of a standard normal
matrix. The solution x* is zero on the active set I_a and uniform in (0, 1)
elsewhere; multipliers are 1 on I_a, and y = A x* - mu makes x* the
minimizer of 1/2 x'Ax - y'x over x >= 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from numpy.typing import NDArray

from .const import (
    DEFAULT_QP_ACTIVE,
    DEFAULT_QP_SIZE,
    SPECTRUM_A1,
    SPECTRUM_A2,
    SPECTRUM_A3,
    SPECTRUM_COND,
    SPECTRUM_GEOMETRIC,
    SPECTRUM_KINDS,
)
from .image_ops import read_matrix, write_matrix
from .objectives import QuadraticObjective

_LOGGER = logging.getLogger(__name__)

Array = NDArray[np.float64]

QP_META_FILE = "qp.yaml"
_BANDS = {
    SPECTRUM_A1: (0.0, 1.0 / 3.0),
    SPECTRUM_A2: (1.0 / 3.0, 2.0 / 3.0),
    SPECTRUM_A3: (2.0 / 3.0, 1.0),
}


@dataclass(frozen=True)
class QpInstance:
    """Generated problem with its exact solution and multipliers."""

    A: Array
    y: Array
    x_star: Array
    mu: Array
    active_set: tuple[int, ...]
    xi: Array
    seed: int
    spectrum: str

    @property
    def n(self) -> int:
        """Problem size."""
        return self.y.shape[0]

    def objective(self) -> QuadraticObjective:
        """1/2 x'Ax - y'x, the form x* minimizes."""
        return QuadraticObjective(self.A, self.y)

    @property
    def f_star(self) -> float:
        """Optimal value of the solver objective."""
        return self.objective().value(self.x_star)

    @property
    def condition_number(self) -> float:
        """xi_max / xi_min."""
        return float(self.xi.max() / self.xi.min())


def spectrum_values(
    spectrum: str,
    n: int,
    rng: np.random.Generator,
    xi_min: float | None = None,
    xi_max: float | None = None,
) -> Array:
    """Eigenvalues of A, increasing.

    geometric: (sqrt 2)^0 .. (sqrt 2)^(n-1).
    A1/A2/A3: xi_1 = 1, xi_n = (sqrt 2)^(n-1), interior values uniform in the
    lower, middle or upper third of (0, xi_n) (A1 starts at xi_1).
    cond: interior values uniform in (xi_min, xi_max).
    """
    top = np.sqrt(2.0) ** (n - 1)
    if spectrum == SPECTRUM_GEOMETRIC:
        return np.sqrt(2.0) ** np.arange(n)
    if spectrum in _BANDS:
        low_frac, high_frac = _BANDS[spectrum]
        low, high = max(1.0, low_frac * top), high_frac * top
        interior = rng.uniform(low, high, n - 2)
        return np.concatenate(([1.0], np.sort(interior), [top]))
    if spectrum == SPECTRUM_COND:
        low = 1.0 if xi_min is None else xi_min
        high = top if xi_max is None else xi_max
        if not 0 < low < high:
            raise ValueError(
                f"cond spectrum needs 0 < xi_min < xi_max, got {low}, {high}"
            )
        interior = rng.uniform(low, high, n - 2)
        return np.concatenate(([low], np.sort(interior), [high]))
    raise ValueError(f"unknown spectrum {spectrum!r}, expected one of {SPECTRUM_KINDS}")


def generate_qp(
    n: int = DEFAULT_QP_SIZE,
    spectrum: str = SPECTRUM_GEOMETRIC,
    n_active: int = DEFAULT_QP_ACTIVE,
    seed: int = 0,
    xi_min: float | None = None,
    xi_max: float | None = None,
) -> QpInstance:
    """Seeded instance satisfying the KKT conditions at x*."""
    if n < 2:
        raise ValueError(f"QP size must be at least 2, got {n}")
    if not 0 <= n_active <= n:
        raise ValueError(f"n_active must lie in [0, {n}], got {n_active}")
    rng = np.random.default_rng(seed)
    xi = spectrum_values(spectrum, n, rng, xi_min, xi_max)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = (q * xi) @ q.T
    a = 0.5 * (a + a.T)

    active = np.sort(rng.choice(n, size=n_active, replace=False))
    x_star = rng.uniform(0.0, 1.0, n)
    x_star[active] = 0.0
    mu = np.zeros(n)
    mu[active] = 1.0
    y = a @ x_star - mu
    _LOGGER.debug(
        "Generated QP n=%d spectrum=%s n_active=%d seed=%d", n, spectrum, n_active, seed
    )
    return QpInstance(
        a, y, x_star, mu, tuple(int(i) for i in active), xi, seed, spectrum
    )


def qp_value_grad(inst: QpInstance, x: Array) -> tuple[float, Array]:
    """x'Ax - y'x and its gradient 2Ax - y."""
    ax = inst.A @ x
    return float(x @ ax) - float(inst.y @ x), 2.0 * ax - inst.y


def kkt_residual(inst: QpInstance) -> float:
    """Largest violation of stationarity, sign and complementarity at x*."""
    stationarity = np.max(np.abs(inst.A @ inst.x_star - inst.y - inst.mu))
    return float(
        max(
            stationarity,
            max(0.0, -inst.mu.min()),
            max(0.0, -inst.x_star.min()),
            abs(float(inst.mu @ inst.x_star)),
        )
    )


def save_qp(inst: QpInstance, out_dir: str | Path) -> Path:
    """Write A, y, x*, mu as text matrices plus a metadata block."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, values in (
        ("A", inst.A),
        ("y", inst.y),
        ("x_star", inst.x_star),
        ("mu", inst.mu),
        ("xi", inst.xi),
    ):
        write_matrix(out_dir / f"{name}.txt", values)
    meta: dict[str, Any] = {
        "n": inst.n,
        "seed": inst.seed,
        "spectrum": inst.spectrum,
        "active_set": list(inst.active_set),
        "condition_number": inst.condition_number,
    }
    meta_path = out_dir / QP_META_FILE
    meta_path.write_text(yaml.safe_dump(meta, sort_keys=True), encoding="utf-8")
    _LOGGER.info("Saved QP instance (seed %d) to %s", inst.seed, out_dir)
    return meta_path


def load_qp(in_dir: str | Path) -> QpInstance:
    """Read an instance written by save_qp."""
    in_dir = Path(in_dir)
    meta = yaml.safe_load((in_dir / QP_META_FILE).read_text(encoding="utf-8"))
    arrays = {
        name: read_matrix(in_dir / f"{name}.txt")
        for name in ("A", "y", "x_star", "mu", "xi")
    }
    return QpInstance(
        arrays["A"],
        arrays["y"].ravel(),
        arrays["x_star"].ravel(),
        arrays["mu"].ravel(),
        tuple(meta["active_set"]),
        arrays["xi"].ravel(),
        int(meta["seed"]),
        str(meta["spectrum"]),
    )
