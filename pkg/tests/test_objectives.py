"""Tests for objective values, gradients and splittings."""

from __future__ import annotations

import numpy as np
import pytest

from ritz_sgp.errors import (
    DomainViolationError,
    MissingLipschitzError,
    SplittingError,
)
from ritz_sgp.image_ops import BlurOperator, PsfKernel, delta_psf, gaussian_psf
from ritz_sgp.objectives import (
    HypersurfacePotential,
    KullbackLeibler,
    LeastSquares,
    Objective,
    QuadraticObjective,
    RofDual,
    hs_value_grad,
    kl_value_grad,
    ls_lipschitz,
    ls_value_grad,
    rof_dual_value_grad,
    split_gradient,
)

from .common import central_difference_gradient, relative_error
from .conftest import TEST_IMAGE_SIZE


class TestLeastSquares:
    """Tests for the least-squares objective."""

    def test_exact_fit(self, blur_op: BlurOperator, positive_image) -> None:
        """Test Ax + b = y gives value 0 and gradient 0."""
        obj = LeastSquares(blur_op, blur_op.convolve(positive_image) + 2.0, 2.0)
        value, grad = ls_value_grad(obj, positive_image)
        assert value == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_identity_operator(self, rng: np.random.Generator) -> None:
        """Test A = I, b = 0, y = 0 gives 1/2 |x|^2 and gradient x."""
        x = rng.standard_normal((5, 5))
        obj = LeastSquares(BlurOperator.from_psf(delta_psf(5)), np.zeros((5, 5)))
        value, grad = ls_value_grad(obj, x)
        assert value == pytest.approx(0.5 * np.sum(x**2), rel=1e-12)
        np.testing.assert_allclose(grad, x, atol=1e-12)

    def test_dense_matrix_operator(self, rng: np.random.Generator) -> None:
        """Test a dense matrix works in place of a blur."""
        a = rng.uniform(0.0, 1.0, (6, 4))
        y = rng.uniform(1.0, 2.0, 6)
        x = rng.uniform(0.0, 1.0, 4)
        obj = LeastSquares(a, y)
        value, grad = obj.value_grad(x)
        assert value == pytest.approx(0.5 * np.sum((a @ x - y) ** 2))
        np.testing.assert_allclose(grad, a.T @ (a @ x - y))

    def test_lipschitz_of_delta_psf(self) -> None:
        """Test A = I gives L = 1."""
        obj = LeastSquares(BlurOperator.from_psf(delta_psf(6)), np.zeros((6, 6)))
        assert ls_lipschitz(obj) == pytest.approx(1.0, abs=1e-12)

    def test_lipschitz_of_normalized_psf(self, rng: np.random.Generator) -> None:
        """Test a unit-sum PSF gives L = 1, confirmed by power iteration."""
        op = BlurOperator.from_psf(gaussian_psf(8, 1.3))
        obj = LeastSquares(op, np.zeros((8, 8)))
        v = rng.standard_normal((8, 8))
        for _ in range(500):
            v = op.convolve_adjoint(op.convolve(v))
            v /= np.linalg.norm(v)
        power = np.vdot(v, op.convolve_adjoint(op.convolve(v)))
        assert ls_lipschitz(obj) == pytest.approx(1.0, abs=1e-12)
        assert power == pytest.approx(ls_lipschitz(obj), abs=1e-8)

    def test_lipschitz_scales_quadratically(self) -> None:
        """Test scaling the kernel by c scales L by c^2."""
        psf = gaussian_psf(8, 1.3)
        scaled = PsfKernel(3.0 * psf.weights)
        base = ls_lipschitz(LeastSquares(BlurOperator.from_psf(psf), np.zeros((8, 8))))
        scaled_op = BlurOperator.from_psf(scaled)
        big = ls_lipschitz(LeastSquares(scaled_op, np.zeros((8, 8))))
        assert big == pytest.approx(9.0 * base, rel=1e-12)


class TestKullbackLeibler:
    """Tests for the generalized KL divergence."""

    def test_exact_fit(self, blur_op: BlurOperator, positive_image) -> None:
        """Test Ax + b = y gives value 0 and gradient 0."""
        obj = KullbackLeibler(blur_op, blur_op.convolve(positive_image) + 1.0, 1.0)
        value, grad = kl_value_grad(obj, positive_image)
        assert value == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_scalar_case(self) -> None:
        """Test A = 1, b = 0, x = 1, y = 2 gives 2 ln 2 - 1."""
        obj = KullbackLeibler(np.eye(1), np.array([2.0]))
        assert obj.value(np.array([1.0])) == pytest.approx(2 * np.log(2) - 1, rel=1e-14)

    def test_zero_data_pixel_contributes_model(self) -> None:
        """Test y_i = 0 with model 1 adds exactly 1."""
        obj = KullbackLeibler(np.eye(2), np.array([0.0, 1.0]))
        assert obj.value(np.array([1.0, 1.0])) == pytest.approx(1.0, rel=1e-14)

    def test_domain_violation(self) -> None:
        """Test a zero model raises."""
        obj = KullbackLeibler(np.eye(2), np.array([1.0, 1.0]))
        with pytest.raises(DomainViolationError, match="KL domain violation"):
            obj.value_grad(np.array([1.0, 0.0]))

    def test_no_lipschitz_constant(self, kl_objective: KullbackLeibler) -> None:
        """Test KL has no global Lipschitz constant."""
        with pytest.raises(MissingLipschitzError):
            kl_objective.lipschitz()


class TestHypersurfacePotential:
    """Tests for the smoothed total variation."""

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_constant_image_value(self, n: int) -> None:
        """Test a constant image has value n^2 delta and zero gradient."""
        value, grad = hs_value_grad(HypersurfacePotential(0.1), np.full((n, n), 3.0))
        assert value == pytest.approx(n * n * 0.1, rel=1e-12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_non_positive_delta(self) -> None:
        """Test delta must be positive."""
        with pytest.raises(ValueError):
            HypersurfacePotential(0.0)


class TestRofDual:
    """Tests for the ROF dual objective."""

    def test_zero_field_value(self, rof_objective: RofDual) -> None:
        """Test p = 0 gives |y|^2."""
        value, _ = rof_dual_value_grad(rof_objective, np.zeros((2, 8, 8)))
        assert value == pytest.approx(np.sum(rof_objective.data**2), rel=1e-14)

    def test_zero_data(self) -> None:
        """Test y = 0, p = 0 gives value 0 and gradient 0."""
        value, grad = RofDual(np.zeros((4, 4)), 20.0).value_grad(np.zeros((2, 4, 4)))
        assert value == 0.0
        assert not np.any(grad)

    def test_primal_recovery(self, rof_objective: RofDual, rng) -> None:
        """Test the primal is y - beta div p."""
        p = rng.uniform(-0.5, 0.5, (2, 8, 8))
        np.testing.assert_allclose(
            rof_objective.primal(p), -rof_objective.residual(p), atol=1e-12
        )

    def test_lipschitz(self) -> None:
        """Test L = 16 beta^2."""
        assert RofDual(np.zeros((3, 3)), 20.0).lipschitz() == 6400.0


class TestSplitGradient:
    """Tests for the U/V splittings."""

    def test_ls_identity_operator(self, rng: np.random.Generator) -> None:
        """Test A = I, b = 0 gives U = y and V = x."""
        x = rng.uniform(1.0, 2.0, (4, 4))
        y = rng.uniform(1.0, 2.0, (4, 4))
        obj = LeastSquares(BlurOperator.from_psf(delta_psf(4)), y)
        split = split_gradient(obj, x)
        np.testing.assert_allclose(split.u, y, atol=1e-12)
        np.testing.assert_allclose(split.v, x, atol=1e-12)

    def test_kl_unit_column_sums(self, kl_objective: KullbackLeibler, positive_image):
        """Test V = 1 when A'1 = 1."""
        split = split_gradient(kl_objective, positive_image)
        np.testing.assert_allclose(split.v, 1.0, rtol=1e-12)

    def test_hs_constant_image(self) -> None:
        """Test U = V = 4c/delta on a constant image."""
        split = split_gradient(HypersurfacePotential(0.1), np.full((5, 5), 2.0))
        np.testing.assert_allclose(split.u, 80.0, rtol=1e-12)
        np.testing.assert_allclose(split.v, 80.0, rtol=1e-12)

    @pytest.mark.parametrize(
        "fixture_name",
        ["ls_objective", "kl_objective", "hs_objective", "composite_objective"],
    )
    def test_splitting_identity(
        self, fixture_name: str, positive_image, request: pytest.FixtureRequest
    ) -> None:
        """Test U - V = -grad J with U >= 0 and V > 0."""
        obj = request.getfixturevalue(fixture_name)
        _, grad = obj.value_grad(positive_image)
        split = split_gradient(obj, positive_image)
        tolerance = 1e-10 * (1.0 + np.max(np.abs(grad)))
        np.testing.assert_allclose(split.u - split.v, -grad, atol=tolerance)
        assert np.all(split.u >= 0)
        assert np.all(split.v > 0)

    def test_strict_split_rejects_zero_v(self) -> None:
        """Test a zero V entry raises unless strict is off."""
        obj = LeastSquares(np.eye(2), np.array([1.0, 1.0]))
        x = np.array([0.0, 1.0])
        with pytest.raises(SplittingError):
            split_gradient(obj, x)
        assert obj.split_gradient(x, strict=False).v[0] == 0.0

    def test_rof_has_no_splitting(self, rof_objective: RofDual) -> None:
        """Test the dual objective has no splitting."""
        with pytest.raises(SplittingError):
            split_gradient(rof_objective, np.zeros((2, 8, 8)))


class TestQuadraticObjective:
    """Tests for the QP solver objective."""

    def test_value_and_gradient(self, rng: np.random.Generator) -> None:
        """Test 1/2 x'Ax - y'x and Ax - y."""
        a = np.diag([1.0, 2.0, 3.0])
        y = rng.standard_normal(3)
        x = rng.standard_normal(3)
        obj = QuadraticObjective(a, y)
        value, grad = obj.value_grad(x)
        assert value == pytest.approx(0.5 * x @ a @ x - y @ x)
        np.testing.assert_allclose(grad, a @ x - y)
        assert obj.lipschitz() == pytest.approx(3.0)
        np.testing.assert_array_equal(obj.hessian_diagonal(), [1.0, 2.0, 3.0])


OBJECTIVE_FIXTURES = [
    "ls_objective",
    "kl_objective",
    "hs_objective",
    "composite_objective",
    "rof_objective",
    "qp_objective",
]


def _feasible_point(obj: Objective, rng: np.random.Generator) -> np.ndarray:
    """Random point inside the objective's feasible set and domain."""
    if isinstance(obj, RofDual):
        return rng.uniform(-0.5, 0.5, (2, *obj.data.shape))
    if isinstance(obj, QuadraticObjective):
        return rng.uniform(0.0, 1.0, obj.linear.shape)
    return rng.uniform(1.0, 10.0, (TEST_IMAGE_SIZE, TEST_IMAGE_SIZE))


class TestGradientAccuracy:
    """Tests for analytic gradients against central differences."""

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("fixture_name", OBJECTIVE_FIXTURES)
    def test_gradient_matches_finite_differences(
        self, fixture_name: str, seed: int, request: pytest.FixtureRequest
    ) -> None:
        """Test the gradient at a seeded random feasible point."""
        obj = request.getfixturevalue(fixture_name)
        x = _feasible_point(obj, np.random.default_rng(seed))
        _, grad = obj.value_grad(x)
        numeric = central_difference_gradient(obj.value, x)
        assert relative_error(grad, numeric) <= 1e-5


class TestConvexity:
    """Tests for the midpoint inequality on feasible pairs."""

    @pytest.mark.parametrize("fixture_name", OBJECTIVE_FIXTURES)
    def test_midpoint_inequality(
        self, fixture_name: str, request: pytest.FixtureRequest
    ) -> None:
        """Test J((x + y) / 2) <= (J(x) + J(y)) / 2 on 50 random pairs."""
        obj = request.getfixturevalue(fixture_name)
        rng = np.random.default_rng(99)
        for _ in range(50):
            x, y = _feasible_point(obj, rng), _feasible_point(obj, rng)
            fx, fy = obj.value(x), obj.value(y)
            slack = 1e-12 * (1.0 + abs(fx) + abs(fy))
            assert obj.value(0.5 * (x + y)) <= 0.5 * (fx + fy) + slack
