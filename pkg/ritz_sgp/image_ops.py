"""Periodic image operators: blur, discrete gradient and divergence, matrix files.

All arrays are float64. The PSF origin is rolled to index (0, 0) before the
transform, so a delta kernel at the centre acts as the exact identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .const import DEFAULT_PSF_SIGMA
from .errors import DegeneratePsfError, SizeMismatchError

_LOGGER = logging.getLogger(__name__)

ImageGrid = NDArray[np.float64]
# Shape (2, n, n); flattening gives component i paired with i + n*n
DualField = NDArray[np.float64]


def as_image(values: ArrayLike) -> ImageGrid:
    """Return a finite square float64 array."""
    image = np.asarray(values, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise SizeMismatchError(f"expected a square image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image has non-finite entries")
    return image


@dataclass(frozen=True)
class PsfKernel:
    """Non-negative blur kernel with an explicit origin."""

    weights: NDArray[np.float64]
    center: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        weights = as_image(self.weights)
        if np.any(weights < 0):
            raise DegeneratePsfError("degenerate PSF: negative weights")
        object.__setattr__(self, "weights", weights)
        if self.center is None:
            n = weights.shape[0]
            object.__setattr__(self, "center", (n // 2, n // 2))

    @property
    def n(self) -> int:
        """Side length."""
        return self.weights.shape[0]

    @property
    def total(self) -> float:
        """Sum of the weights."""
        return float(self.weights.sum())


def psf_normalize(psf: PsfKernel) -> PsfKernel:
    """Scale the kernel to unit sum, so that A'1 = 1."""
    total = psf.total
    if total <= 0:
        raise DegeneratePsfError()
    return PsfKernel(psf.weights / total, psf.center)


def gaussian_psf(n: int, sigma: float = DEFAULT_PSF_SIGMA) -> PsfKernel:
    """Sampled, normalized Gaussian centred at (n // 2, n // 2)."""
    coords = np.arange(n) - n // 2
    profile = np.exp(-0.5 * (coords / sigma) ** 2)
    return psf_normalize(PsfKernel(np.outer(profile, profile)))


def delta_psf(n: int) -> PsfKernel:
    """Identity kernel."""
    weights = np.zeros((n, n))
    weights[n // 2, n // 2] = 1.0
    return PsfKernel(weights)


def pad_psf(psf: PsfKernel, n: int) -> PsfKernel:
    """Embed a small kernel in an n x n grid keeping its origin at the centre."""
    if psf.n == n:
        return psf
    if psf.n > n:
        raise SizeMismatchError(f"PSF of size {psf.n} exceeds image size {n}")
    weights = np.zeros((n, n))
    offset = n // 2 - psf.center[0], n // 2 - psf.center[1]
    rows = (np.arange(psf.n) + offset[0]) % n
    cols = (np.arange(psf.n) + offset[1]) % n
    weights[np.ix_(rows, cols)] = psf.weights
    return PsfKernel(weights)


@dataclass(frozen=True)
class BlurOperator:
    """Circular convolution by a PSF, applied through its 2-D spectrum."""

    spectrum: NDArray[np.complex128]
    nonnegative: bool = True
    n: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", self.spectrum.shape[0])

    @classmethod
    def from_psf(cls, psf: PsfKernel) -> BlurOperator:
        """Build the operator of a kernel (not normalized here)."""
        shifted = np.roll(psf.weights, (-psf.center[0], -psf.center[1]), axis=(0, 1))
        return cls(np.fft.fft2(shifted), nonnegative=bool(np.all(psf.weights >= 0)))

    def _check(self, x: ImageGrid) -> None:
        if x.shape != (self.n, self.n):
            raise SizeMismatchError(
                f"image shape {x.shape} does not match operator size {self.n}"
            )

    def _apply(self, spectrum: NDArray[np.complex128], x: ImageGrid) -> ImageGrid:
        self._check(x)
        out = np.real(np.fft.ifft2(spectrum * np.fft.fft2(x)))
        if self.nonnegative and x.min() >= 0:
            # FFT roundoff may leave tiny negatives
            np.maximum(out, 0.0, out=out)
        return out

    def convolve(self, x: ImageGrid) -> ImageGrid:
        """Return A x."""
        return self._apply(self.spectrum, x)

    def convolve_adjoint(self, y: ImageGrid) -> ImageGrid:
        """Return A' y."""
        return self._apply(np.conj(self.spectrum), y)

    def column_sums(self) -> ImageGrid:
        """Return A' 1."""
        return np.full((self.n, self.n), np.real(self.spectrum[0, 0]))


def convolve(op: BlurOperator, x: ImageGrid) -> ImageGrid:
    """Return A x with periodic boundaries."""
    return op.convolve(x)


def convolve_adjoint(op: BlurOperator, y: ImageGrid) -> ImageGrid:
    """Return A' y, the exact adjoint of convolve."""
    return op.convolve_adjoint(y)


@dataclass(frozen=True)
class GradientField:
    """Forward differences of an image along both axes."""

    comp1: ImageGrid
    comp2: ImageGrid

    @property
    def n(self) -> int:
        """Side length."""
        return self.comp1.shape[0]

    def stacked(self) -> DualField:
        """Return the (2, n, n) array form."""
        return np.stack((self.comp1, self.comp2))


def discrete_gradient(x: ImageGrid) -> GradientField:
    """Forward differences with periodic wrap."""
    return GradientField(
        np.roll(x, -1, axis=0) - x,
        np.roll(x, -1, axis=1) - x,
    )


def discrete_divergence(p: DualField | GradientField) -> ImageGrid:
    """Negative adjoint of discrete_gradient."""
    if isinstance(p, GradientField):
        p1, p2 = p.comp1, p.comp2
    else:
        p1, p2 = p[0], p[1]
    return p1 - np.roll(p1, 1, axis=0) + p2 - np.roll(p2, 1, axis=1)


def read_matrix(path: str | Path) -> NDArray[np.float64]:
    """Read a text matrix: a "rows cols" header, then whitespace-separated rows."""
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'rows cols'")
        rows, cols = int(header[0]), int(header[1])
        values = np.loadtxt(handle, dtype=np.float64, ndmin=2)
    if values.shape != (rows, cols):
        raise SizeMismatchError(
            f"{path}: header says {rows}x{cols}, found {values.shape}"
        )
    return values


def write_matrix(path: str | Path, values: ArrayLike) -> Path:
    """Write a 2-D (or 1-D, as a column) array in the text matrix format."""
    path = Path(path)
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        path,
        array,
        fmt="%.17g",
        header=f"{array.shape[0]} {array.shape[1]}",
        comments="",
    )
    _LOGGER.debug("Wrote %dx%d matrix to %s", array.shape[0], array.shape[1], path)
    return path


def read_image(path: str | Path) -> ImageGrid:
    """Read a square image file."""
    return as_image(read_matrix(path))


def read_psf(path: str | Path) -> PsfKernel:
    """Read a PSF file; the origin is taken at the centre."""
    return PsfKernel(read_matrix(path))
