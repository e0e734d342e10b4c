"""Synthetic truth images."""

from __future__ import annotations

import numpy as np

from .const import PHANTOM_OBJECT, PHANTOM_SHAPES
from .image_ops import ImageGrid


def _grid(n: int) -> tuple[ImageGrid, ImageGrid]:
    coords = (np.arange(n) + 0.5) / n
    return np.meshgrid(coords, coords, indexing="ij")


def object_phantom(n: int, peak: float = 1000.0, floor: float = 10.0) -> ImageGrid:
    """Extended body with bright compact features on a positive floor."""
    rows, cols = _grid(n)
    image = np.full((n, n), floor)
    body = ((rows - 0.5) / 0.32) ** 2 + ((cols - 0.5) / 0.18) ** 2 <= 1.0
    image[body] += 0.3 * peak
    panel = (np.abs(rows - 0.5) <= 0.06) & (np.abs(cols - 0.5) <= 0.42)
    image[panel] += 0.2 * peak
    for r0, c0, width, weight in ((0.3, 0.45, 0.03, 0.7), (0.68, 0.56, 0.05, 0.4)):
        image += weight * peak * np.exp(
            -((rows - r0) ** 2 + (cols - c0) ** 2) / (2 * width**2)
        )
    return image


def shapes_phantom(n: int, level: float = 200.0) -> ImageGrid:
    """Piecewise constant rectangle, disc and triangle on a zero background."""
    rows, cols = _grid(n)
    image = np.zeros((n, n))
    image[(np.abs(rows - 0.3) <= 0.15) & (np.abs(cols - 0.3) <= 0.2)] = level
    image[(rows - 0.65) ** 2 + (cols - 0.7) ** 2 <= 0.18**2] = 0.6 * level
    in_rows = (rows >= 0.55) & (rows <= 0.9)
    triangle = in_rows & (np.abs(cols - 0.25) <= (rows - 0.55) / 2)
    image[triangle] = 0.35 * level
    return image


PHANTOM_BUILDERS = {
    PHANTOM_OBJECT: object_phantom,
    PHANTOM_SHAPES: shapes_phantom,
}


def make_phantom(kind: str, n: int) -> ImageGrid:
    """Phantom of the given kind and size."""
    if kind not in PHANTOM_BUILDERS:
        raise ValueError(f"unknown phantom {kind!r}")
    return PHANTOM_BUILDERS[kind](n)
