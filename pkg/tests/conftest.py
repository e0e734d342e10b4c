"""Shared fixtures for ritz_sgp tests."""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml

from ritz_sgp.config import ExperimentConfig, parse_config
from ritz_sgp.image_ops import BlurOperator, gaussian_psf
from ritz_sgp.objectives import (
    HypersurfacePotential,
    KullbackLeibler,
    LeastSquares,
    QuadraticObjective,
    Regularized,
    RofDual,
)
from ritz_sgp.qp_suite import QpInstance, generate_qp

from .fixtures.experiment_configs import QP_THREE_RULES

TEST_IMAGE_SIZE = 8
TEST_SEED = 1234


def create_experiment_config_data(
    base: dict[str, Any] | None = None,
    output: Path | str | None = None,
    **sections: Any,
) -> dict[str, Any]:
    """Create raw experiment configuration data for testing."""
    data = copy.deepcopy(base if base is not None else QP_THREE_RULES)
    data.update(copy.deepcopy(sections))
    if output is not None:
        data["output"] = str(output)
    return data


def create_experiment_config(
    base: dict[str, Any] | None = None,
    output: Path | str | None = None,
    **sections: Any,
) -> ExperimentConfig:
    """Create a validated experiment configuration for testing."""
    return parse_config(create_experiment_config_data(base, output, **sections))


def write_config_file(path: Path, data: dict[str, Any]) -> Path:
    """Write raw configuration data as YAML."""
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for random test data."""
    return np.random.default_rng(TEST_SEED)


@pytest.fixture
def blur_op() -> BlurOperator:
    """Normalized Gaussian blur on the test grid."""
    return BlurOperator.from_psf(gaussian_psf(TEST_IMAGE_SIZE, 1.3))


@pytest.fixture
def positive_image(rng: np.random.Generator) -> np.ndarray:
    """Strictly positive random image."""
    return rng.uniform(1.0, 10.0, (TEST_IMAGE_SIZE, TEST_IMAGE_SIZE))


@pytest.fixture
def ls_objective(blur_op: BlurOperator, rng: np.random.Generator) -> LeastSquares:
    """Least squares with blurred, noisy data and a constant background."""
    truth = rng.uniform(0.0, 20.0, (TEST_IMAGE_SIZE, TEST_IMAGE_SIZE))
    data = blur_op.convolve(truth) + 1.0 + rng.normal(0.0, 0.5, truth.shape)
    return LeastSquares(blur_op, np.maximum(data, 0.0), 1.0)


@pytest.fixture
def kl_objective(blur_op: BlurOperator, rng: np.random.Generator) -> KullbackLeibler:
    """KL divergence with Poisson data and background 5."""
    truth = rng.uniform(1.0, 50.0, (TEST_IMAGE_SIZE, TEST_IMAGE_SIZE))
    data = rng.poisson(blur_op.convolve(truth) + 5.0).astype(np.float64)
    return KullbackLeibler(blur_op, data, 5.0)


@pytest.fixture
def hs_objective() -> HypersurfacePotential:
    """Hypersurface potential with delta = 0.1."""
    return HypersurfacePotential(0.1)


@pytest.fixture
def composite_objective(
    kl_objective: KullbackLeibler, hs_objective: HypersurfacePotential
) -> Regularized:
    """KL + beta HS with a visible regularization weight."""
    return Regularized(kl_objective, hs_objective, 0.05)


@pytest.fixture
def rof_objective(rng: np.random.Generator) -> RofDual:
    """ROF dual on a noisy random image with beta = 2."""
    data = rng.uniform(0.0, 10.0, (TEST_IMAGE_SIZE, TEST_IMAGE_SIZE))
    return RofDual(data, 2.0)


@pytest.fixture
def qp_instance() -> QpInstance:
    """Default QP: n = 20, geometric spectrum, 8 active constraints."""
    return generate_qp(20, "geometric", 8, seed=7)


@pytest.fixture
def qp_objective(qp_instance: QpInstance) -> QuadraticObjective:
    """Objective of the default QP instance."""
    return qp_instance.objective()


@pytest.fixture
def experiment_config(tmp_path: Path) -> ExperimentConfig:
    """QP experiment writing into a temporary directory."""
    return create_experiment_config(output=tmp_path / "results")
