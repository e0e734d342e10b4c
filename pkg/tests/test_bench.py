"""Tests for data synthesis, reference optima and the experiment runner."""

from __future__ import annotations

import asyncio
import csv
import threading
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ritz_sgp import bench
from ritz_sgp.bench import (
    build_problem,
    qp_rule_study,
    reference_key,
    reference_optimum,
    run_experiment,
    synthesize_data,
    write_rule_study,
)
from ritz_sgp.config import ExperimentConfig, NoiseSpec
from ritz_sgp.const import (
    CACHE_DIR,
    NOISE_GAUSSIAN,
    NOISE_NONE,
    NOISE_POISSON,
    REASON_FAILED,
    REASON_RRE,
    REASON_TIMEOUT,
    SPECTRUM_COND,
    SUMMARY_FILE,
    TIMINGS_FILE,
)
from ritz_sgp.image_ops import BlurOperator, delta_psf, gaussian_psf, read_matrix
from ritz_sgp.objectives import LeastSquares, RofDual

from .conftest import create_experiment_config
from .fixtures.experiment_configs import LS_DEBLUR_SMALL, MISMATCHED_METHOD, ROF_SMALL


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


class TestSynthesizeData:
    """Tests for noisy data generation."""

    def test_no_noise(self, blur_op: BlurOperator, positive_image) -> None:
        """Test zero noise gives A truth + b exactly."""
        data = synthesize_data(positive_image, blur_op, NoiseSpec(NOISE_NONE), 3.0)
        np.testing.assert_array_equal(data, blur_op.convolve(positive_image) + 3.0)

    def test_zero_variance_gaussian(self, blur_op: BlurOperator, positive_image):
        """Test Gaussian noise with variance 0 adds nothing."""
        data = synthesize_data(
            positive_image, blur_op, NoiseSpec(NOISE_GAUSSIAN, variance=0.0)
        )
        np.testing.assert_array_equal(data, blur_op.convolve(positive_image))

    def test_poisson_zero_mean_pixels(self) -> None:
        """Test pixels with mean 0 draw 0."""
        truth = np.zeros((4, 4))
        truth[1, 2] = 50.0
        data = synthesize_data(truth, delta_psf(4), NoiseSpec(NOISE_POISSON), 0.0)
        assert np.count_nonzero(data) <= 1
        assert data[0, 0] == 0.0

    def test_fixed_seed_is_reproducible(self, positive_image) -> None:
        """Test the same seed gives bitwise-identical data."""
        psf = gaussian_psf(8, 1.3)
        noise = NoiseSpec(NOISE_POISSON, background=5.0)
        first = synthesize_data(positive_image, psf, noise, seed=4)
        second = synthesize_data(positive_image, psf, noise, seed=4)
        np.testing.assert_array_equal(first, second)
        assert not np.array_equal(first, synthesize_data(positive_image, psf, noise))

    def test_small_psf_is_padded(self, positive_image) -> None:
        """Test a 3x3 kernel is embedded in the image grid."""
        data = synthesize_data(positive_image, gaussian_psf(3, 1.3), NoiseSpec())
        assert data.shape == positive_image.shape

    def test_negative_truth(self, blur_op: BlurOperator) -> None:
        """Test a negative truth pixel raises."""
        with pytest.raises(ValueError):
            synthesize_data(-np.ones((8, 8)), blur_op, NoiseSpec())

    def test_negative_background(self, blur_op: BlurOperator, positive_image):
        """Test a negative background raises."""
        with pytest.raises(ValueError):
            synthesize_data(positive_image, blur_op, NoiseSpec(), -1.0)


class TestBuildProblem:
    """Tests for problem setup."""

    def test_qp(self, experiment_config: ExperimentConfig) -> None:
        """Test a QP problem carries its exact solution and optimum."""
        problem = build_problem(experiment_config)
        assert problem.qp is not None
        np.testing.assert_array_equal(problem.x0, np.ones(20))
        np.testing.assert_array_equal(problem.truth, problem.qp.x_star)
        assert problem.f_star == problem.qp.f_star < 0

    def test_ls_deblur(self, tmp_path: Path) -> None:
        """Test LS deblurring starts from a flat positive image."""
        cfg = create_experiment_config(LS_DEBLUR_SMALL, output=tmp_path)
        problem = build_problem(cfg)
        assert isinstance(problem.objective, LeastSquares)
        assert problem.x0.shape == (16, 16)
        assert np.ptp(problem.x0) == 0.0 and problem.x0[0, 0] > 0

    def test_rof(self, tmp_path: Path) -> None:
        """Test ROF starts from the zero dual field with alpha0 = 1/L."""
        cfg = create_experiment_config(ROF_SMALL, output=tmp_path)
        problem = build_problem(cfg)
        assert isinstance(problem.objective, RofDual)
        assert not np.any(problem.x0) and problem.x0.shape == (2, 16, 16)
        assert problem.alpha0 == pytest.approx(1 / (16 * 20.0**2))


class TestReferenceOptimum:
    """Tests for the cached long-run reference."""

    def test_key_depends_on_seed(self, tmp_path: Path) -> None:
        """Test the cache key is stable and changes with the seed."""
        cfg = create_experiment_config(LS_DEBLUR_SMALL, output=tmp_path)
        key = reference_key(cfg.problem, cfg.noise, cfg.reference)
        assert key == reference_key(cfg.problem, cfg.noise, cfg.reference)
        other = cfg.with_overrides(seed=2)
        assert key != reference_key(other.problem, other.noise, other.reference)

    def test_cached_after_first_run(self, tmp_path: Path, monkeypatch) -> None:
        """Test a second call reads the cache instead of running again."""
        cfg = create_experiment_config(LS_DEBLUR_SMALL, output=tmp_path)
        problem = build_problem(cfg)
        f_star = reference_optimum(cfg, problem)
        assert len(list((tmp_path / CACHE_DIR).iterdir())) == 1

        def no_rerun(*args, **kwargs):
            raise AssertionError("reference recomputed")

        monkeypatch.setattr(bench, "_reference_run", no_rerun)
        assert reference_optimum(cfg, problem) == f_star
        assert f_star <= problem.objective.value(problem.x0)

    def test_known_optimum_skips_run(self, experiment_config) -> None:
        """Test a QP uses its exact optimum and writes no cache."""
        problem = build_problem(experiment_config)
        assert reference_optimum(experiment_config, problem) == problem.f_star
        assert not (experiment_config.output / CACHE_DIR).exists()


class TestRunExperiment:
    """Tests for the solver matrix and its reports."""

    async def test_qp_three_rules(self, experiment_config: ExperimentConfig) -> None:
        """Test three QP solvers give three summary rows and their traces."""
        result = await run_experiment(experiment_config)
        assert [o.reason for o in result.outcomes] == [REASON_RRE] * 3
        rows = _read_csv(experiment_config.output / SUMMARY_FILE)
        assert [row["solver"] for row in rows] == ["gp_bb1", "gp_abbmin1", "gp_ritz"]
        for row in rows:
            passages = [int(row[f"rre_{t:.0e}"]) for t in (1e-4, 1e-6, 1e-8)]
            assert passages == sorted(passages)
        for name in ("gp_bb1", "gp_abbmin1", "gp_ritz"):
            assert (experiment_config.output / f"trace_{name}.csv").is_file()
            assert (experiment_config.output / f"x_{name}.txt").is_file()
        timings = _read_csv(experiment_config.output / TIMINGS_FILE)
        assert all(float(row["wall_time_s"]) >= 0 for row in timings)
        assert int(timings[2]["products"]) > 0

    async def test_reports_are_deterministic(self, tmp_path: Path) -> None:
        """Test a rerun with the same seed writes an identical summary."""
        first = create_experiment_config(output=tmp_path / "a")
        second = create_experiment_config(output=tmp_path / "b")
        await run_experiment(first)
        await run_experiment(second)
        assert (tmp_path / "a" / SUMMARY_FILE).read_bytes() == (
            tmp_path / "b" / SUMMARY_FILE
        ).read_bytes()

    async def test_failed_solver_is_recorded(self, tmp_path: Path) -> None:
        """Test a solver that does not apply fails without stopping the others."""
        cfg = create_experiment_config(MISMATCHED_METHOD, output=tmp_path)
        result = await run_experiment(cfg)
        failed = result.outcome("rl")
        assert failed.reason == REASON_FAILED
        assert "does not apply" in failed.error
        assert result.outcome("gp_ritz").run is not None
        rows = {row["solver"]: row for row in _read_csv(tmp_path / SUMMARY_FILE)}
        assert rows["rl"]["reason"] == REASON_FAILED
        assert rows["rl"]["iterations"] == ""
        timings = {row["solver"]: row for row in _read_csv(tmp_path / TIMINGS_FILE)}
        assert "does not apply" in timings["rl"]["error"]

    async def test_timeout_is_recorded(self, experiment_config) -> None:
        """Test a solver exceeding its time limit is reported as timed out."""
        cfg = replace(experiment_config, timeout=1e-6)
        result = await run_experiment(cfg)
        assert {o.reason for o in result.outcomes} == {REASON_TIMEOUT}
        rows = _read_csv(cfg.output / TIMINGS_FILE)
        assert all(row["wall_time_s"] == "" for row in rows)

    async def test_timed_out_worker_stops(
        self, experiment_config, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Test a timed-out solver thread ends at its next iteration."""
        runs = []
        done = threading.Event()
        solve = bench.run_solver

        def held_solver(spec, problem, stop, f_star):
            assert stop.cancel.wait(30)
            runs.append(solve(spec, problem, stop, f_star))
            if len(runs) == len(experiment_config.solvers):
                done.set()
            return runs[-1]

        monkeypatch.setattr(bench, "run_solver", held_solver)
        cfg = replace(
            experiment_config,
            timeout=0.01,
            stop=replace(experiment_config.stop, max_iters=10**7, rre_tol=None),
        )
        await run_experiment(cfg)
        assert await asyncio.to_thread(done.wait, 30)
        assert [run.reason for run in runs] == [REASON_TIMEOUT] * len(runs)
        assert all(run.iterations == 0 for run in runs)

    async def test_rof_writes_primal_image(self, tmp_path: Path) -> None:
        """Test the ROF iterate file holds the recovered primal image."""
        cfg = create_experiment_config(ROF_SMALL, output=tmp_path)
        result = await run_experiment(cfg)
        run = result.outcome("gp_ritz").run
        image = read_matrix(tmp_path / "x_gp_ritz.txt")
        assert image.shape == (16, 16)
        np.testing.assert_array_equal(image, run.primal)
        assert result.f_star > 0


class TestQpRuleStudy:
    """Tests for the multi-seed steplength comparison."""

    def test_small_study(self, tmp_path: Path) -> None:
        """Test one setting over two seeds gives one row per rule."""
        rows = qp_rule_study(
            [{"n": 10, "n_active": 3, "memory": 10}],
            seeds=[0, 1],
            thresholds=(1e-4, 1e-8),
            max_iters=3000,
        )
        assert [row.rule for row in rows] == ["bb1", "abbmin1", "ritz"]
        for row in rows:
            assert row.runs == 2
            assert row.active_set_hits == 2
            assert row.median_first_rre[1e-4] <= row.median_first_rre[1e-8] < np.inf
        path = write_rule_study(rows, tmp_path / "study.csv")
        table = _read_csv(path)
        assert len(table) == 3
        assert table[0]["setting"] == "memory=10,n=10,n_active=3"

    def test_unconverged_counts_as_infinite(self) -> None:
        """Test a run that never reaches a threshold reports inf."""
        rows = qp_rule_study(
            [{"n": 10, "n_active": 3}],
            seeds=[0],
            rules=("ritz",),
            thresholds=(1e-12,),
            max_iters=2,
        )
        assert rows[0].median_first_rre[1e-12] == np.inf

    @pytest.mark.parametrize("xi_max", [72.4, 724.0, 7240.0])
    def test_cond_setting_controls_conditioning(
        self, tmp_path: Path, xi_max: float
    ) -> None:
        """Test xi_min and xi_max of a cond setting reach the generated QP."""
        setting = {"n": 10, "spectrum": SPECTRUM_COND, "xi_min": 1.0, "xi_max": xi_max}
        rows = qp_rule_study(
            [setting], seeds=[0, 1], rules=("bb1",), thresholds=(1e-4,), max_iters=50
        )
        assert rows[0].condition_number == pytest.approx(xi_max)
        table = _read_csv(write_rule_study(rows, tmp_path / "study.csv"))
        assert float(table[0]["condition_number"]) == pytest.approx(xi_max, rel=1e-5)
