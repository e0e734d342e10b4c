"""Common test utilities: oracles and small problem builders."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from ritz_sgp.feasible import DiagScaling
from ritz_sgp.image_ops import BlurOperator, PsfKernel
from ritz_sgp.steplength import SweepState, sweep_push


def central_difference_gradient(
    func: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6
) -> np.ndarray:
    """Central finite differences of func at x, step scaled by |x|."""
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    scale = max(1.0, float(np.max(np.abs(x))))
    h = step * scale
    for i in range(x.size):
        forward, backward = x.copy(), x.copy()
        forward.reshape(-1)[i] += h
        backward.reshape(-1)[i] -= h
        flat[i] = (func(forward) - func(backward)) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """|a - b| / max(|b|, tiny)."""
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def circular_convolution(weights: np.ndarray, x: np.ndarray, center=None) -> np.ndarray:
    """Direct O(n^4) periodic convolution with the kernel origin at center."""
    n = x.shape[0]
    c0, c1 = center if center is not None else (n // 2, n // 2)
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(n):
        for j in range(n):
            total = 0.0
            for k in range(n):
                for m in range(n):
                    total += weights[k, m] * x[(i - (k - c0)) % n, (j - (m - c1)) % n]
            out[i, j] = total
    return out


def dense_blur_matrix(op: BlurOperator) -> np.ndarray:
    """Explicit n^2 x n^2 matrix of a blur operator."""
    n = op.n
    columns = []
    for index in range(n * n):
        basis = np.zeros(n * n)
        basis[index] = 1.0
        columns.append(op.convolve(basis.reshape(n, n)).ravel())
    return np.column_stack(columns)


def random_psf(rng: np.random.Generator, n: int, support: int = 3) -> PsfKernel:
    """Random non-negative kernel with a small support around the centre."""
    weights = np.zeros((n, n))
    c = n // 2
    half = support // 2
    weights[c - half : c + half + 1, c - half : c + half + 1] = rng.uniform(
        0.1, 1.0, (support, support)
    )
    return PsfKernel(weights / weights.sum())


def random_spd(
    rng: np.random.Generator, n: int, low: float = 1.0, high: float = 10.0
) -> tuple[np.ndarray, np.ndarray]:
    """SPD matrix with eigenvalues uniform in [low, high], and the eigenvalues."""
    eigenvalues = np.sort(rng.uniform(low, high, n))
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * eigenvalues) @ q.T, eigenvalues


def steepest_descent_gradients(
    a: np.ndarray, g0: np.ndarray, alphas: list[float]
) -> list[np.ndarray]:
    """g_{i+1} = g_i - alpha_i A g_i for an unconstrained quadratic."""
    gradients = [g0]
    for alpha in alphas:
        gradients.append(gradients[-1] - alpha * (a @ gradients[-1]))
    return gradients


def filled_sweep(
    a: np.ndarray, g0: np.ndarray, alphas: list[float]
) -> tuple[SweepState, np.ndarray]:
    """Sweep state holding len(alphas) gradients of a quadratic, and the next one."""
    gradients = steepest_descent_gradients(a, g0, alphas)
    state = SweepState(m=len(alphas))
    identity = DiagScaling.identity(g0.shape)
    no_mask = np.zeros(g0.shape, dtype=bool)
    for g, alpha in zip(gradients[:-1], alphas, strict=True):
        sweep_push(state, g, identity, no_mask, alpha)
    return state, gradients[-1]


def gram_schmidt_projection(a: np.ndarray, columns: list[np.ndarray]) -> np.ndarray:
    """Q'AQ with Q from classical Gram-Schmidt (twice) on the columns."""
    basis: list[np.ndarray] = []
    for column in columns:
        v = column.astype(np.float64)
        for _ in range(2):
            for q in basis:
                v = v - np.vdot(q, v) * q
        basis.append(v / np.linalg.norm(v))
    q = np.column_stack(basis)
    return q.T @ a @ q
