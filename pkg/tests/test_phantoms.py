"""Tests for synthetic truth images."""

from __future__ import annotations

import numpy as np
import pytest

from ritz_sgp.phantoms import make_phantom, object_phantom, shapes_phantom


def test_object_phantom_positive() -> None:
    """Test the object phantom is strictly positive with a bright peak."""
    image = object_phantom(32)
    assert image.shape == (32, 32)
    assert image.min() >= 10.0
    assert image.max() > 300.0


def test_shapes_phantom_piecewise_constant() -> None:
    """Test the shapes phantom takes a few levels on a zero background."""
    image = shapes_phantom(32)
    assert image.min() == 0.0
    assert len(np.unique(image)) == 4


@pytest.mark.parametrize("kind", ["object", "shapes"])
def test_make_phantom(kind: str) -> None:
    """Test phantoms are chosen by name."""
    assert make_phantom(kind, 8).shape == (8, 8)


def test_unknown_phantom() -> None:
    """Test an unknown kind raises."""
    with pytest.raises(ValueError):
        make_phantom("galaxy", 8)
