import math

import numpy as np
import pytest

from mckean.kernels import Kernel
from mckean.linking import (
    ZERO_LAMBDA,
    EmpiricalPathMeasure,
    LambdaField,
    PicardNonConvergenceError,
    check_stability_inequality,
    integral_equation_residual,
    nonuniqueness_demo,
    picard_contraction_factors,
    solve_picard,
    stability_constant_clamped,
    stability_constants,
)


def clipped_density_lambda():
    return LambdaField(fn=lambda t, pts, z: np.clip(z, 0.0, 1.0), m_bound=1.0, l_bound=1.0)


def brownian_measure(n_paths, n_steps, rng, scale=0.4, dim=1):
    grid = np.linspace(0.0, 1.0, n_steps + 1)
    steps = rng.normal(size=(n_paths, n_steps, dim)) * scale
    paths = np.concatenate([np.zeros((n_paths, 1, dim)), np.cumsum(steps, axis=1)], axis=1)
    paths += rng.normal(size=(n_paths, 1, dim))
    return EmpiricalPathMeasure(grid, paths)


class TestMeasureValidation:
    def test_grid_must_start_at_zero(self):
        with pytest.raises(ValueError):
            EmpiricalPathMeasure(np.array([0.5, 1.0]), np.zeros((2, 2, 1)))

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            EmpiricalPathMeasure(np.array([0.0, 0.5, 0.5]), np.zeros((2, 3, 1)))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            EmpiricalPathMeasure(
                np.array([0.0, 1.0]), np.zeros((2, 2, 1)), weights=np.array([0.6, 0.6])
            )

    def test_default_weights_uniform(self):
        m = EmpiricalPathMeasure(np.array([0.0, 1.0]), np.zeros((4, 2, 1)))
        np.testing.assert_array_equal(m.weights, np.full(4, 0.25))


class TestPicard:
    def test_constant_rate_closed_form(self):
        # single path frozen at the origin with constant rate: the fixed point
        # is K(y) e^{rate * t_k} exactly at grid times (left-endpoint sums of a
        # constant are exact)
        rate = 0.7
        kernel = Kernel(1, 1.0)
        grid = np.linspace(0.0, 1.0, 17)  # dt = 1/16, exact in binary
        measure = EmpiricalPathMeasure(grid, np.zeros((1, 17, 1)))
        lam = LambdaField(fn=lambda t, pts, z: np.full(len(pts), rate), m_bound=rate, l_bound=0.0)
        ld = solve_picard(measure, kernel, lam)
        for k, t in enumerate(grid):
            assert ld.u_on_paths[0, k] == pytest.approx(
                kernel.eval(np.zeros(1)) * math.exp(rate * t), rel=1e-13
            )
            y = np.array([0.8])
            assert ld.evaluate(k, y[None, :])[0] == pytest.approx(
                kernel.eval(y) * math.exp(rate * t), rel=1e-13
            )

    def test_zero_rate_is_plain_kde_bitwise(self):
        rng = np.random.default_rng(5)
        measure = brownian_measure(12, 8, rng)
        kernel = Kernel(1, 0.6)
        ld = solve_picard(measure, kernel, ZERO_LAMBDA)
        assert ld.iterations <= 2
        # direct kernel-density table with unit weights, same reduction
        diff = measure.paths[:, None, :, :] - measure.paths[None, :, :, :]
        sq = np.einsum("ijkd,ijkd->ijk", diff, diff)
        kmats = kernel.eval_sq_dist(np.moveaxis(sq, 2, 0))
        kde = np.einsum("kij,jk->ik", kmats, np.tile(measure.weights[:, None], (1, 9)))
        np.testing.assert_array_equal(ld.u_on_paths, kde)
        assert np.all(ld.v_weights == 1.0)

    def test_fixed_point_against_brute_force_oracle(self):
        # independent straight-loop iteration, pure python, run to 1e-12
        kernel = Kernel(1, 1.0)
        grid = np.linspace(0.0, 1.0, 17)
        paths = np.concatenate(
            [np.full((1, 17, 1), 1.0), np.full((1, 17, 1), -1.0)], axis=0
        )
        measure = EmpiricalPathMeasure(grid, paths)
        lam = clipped_density_lambda()
        ld = solve_picard(measure, kernel, lam, tol=1e-12)

        n_paths, n_times = 2, 17
        table = [[0.0] * n_times for _ in range(n_paths)]
        for _ in range(10_000):
            new = [[0.0] * n_times for _ in range(n_paths)]
            for i in range(n_paths):
                for k in range(n_times):
                    acc = 0.0
                    for j in range(n_paths):
                        logv = 0.0
                        for l in range(k):
                            dt = grid[l + 1] - grid[l]
                            zjl = min(max(table[j][l], 0.0), 1.0)
                            logv += dt * zjl
                        dy = paths[i, k, 0] - paths[j, k, 0]
                        acc += 0.5 * kernel.eval(np.array([dy])) * math.exp(logv)
                    new[i][k] = acc
            delta = max(
                abs(new[i][k] - table[i][k]) for i in range(n_paths) for k in range(n_times)
            )
            table = new
            if delta < 1e-13:
                break
        oracle = np.array(table)
        np.testing.assert_allclose(ld.u_on_paths, oracle, atol=1e-10)

    def test_contraction_factor_bound(self):
        # measured per-iteration contraction in the weighted norm stays below
        # 1/2 + slack when M doubles the theoretical threshold
        rng = np.random.default_rng(11)
        kernel = Kernel(1, 0.5)
        lam = clipped_density_lambda()
        horizon = 1.0
        m_norm = 2.0 * kernel.sup_bound() * math.exp(horizon * lam.m_bound) * lam.l_bound
        for trial in range(5):
            measure = brownian_measure(8, 10, np.random.default_rng(trial))
            ld = solve_picard(measure, kernel, lam, tol=1e-12)
            factors = picard_contraction_factors(ld, m_norm)
            assert len(factors) >= 2
            assert np.max(factors) <= 0.55

    def test_values_within_exponential_bound(self):
        rng = np.random.default_rng(3)
        kernel = Kernel(1, 0.4)
        lam = clipped_density_lambda()
        measure = brownian_measure(10, 12, rng)
        ld = solve_picard(measure, kernel, lam)
        bound = kernel.sup_bound() * math.exp(1.0 * lam.m_bound)
        assert np.all(ld.u_on_paths >= 0.0)
        assert np.all(ld.u_on_paths <= bound * (1 + 1e-12))

    def test_non_anticipativity(self):
        # cutting the paths after t_k and re-solving leaves the table on
        # [0, t_k] unchanged
        rng = np.random.default_rng(9)
        kernel = Kernel(1, 0.7)
        lam = clipped_density_lambda()
        measure = brownian_measure(6, 10, rng)
        full = solve_picard(measure, kernel, lam, tol=1e-12)
        for k in (3, 7):
            part = solve_picard(measure.truncated(k), kernel, lam, tol=1e-12)
            np.testing.assert_allclose(
                full.u_on_paths[:, : k + 1], part.u_on_paths, atol=1e-9
            )

    def test_nonconvergence_error_carries_residual(self):
        kernel = Kernel(1, 0.05)  # huge sup bound
        lam = LambdaField(fn=lambda t, pts, z: np.clip(z, 0.0, 50.0), m_bound=50.0, l_bound=1.0)
        measure = brownian_measure(4, 6, np.random.default_rng(0), scale=0.01)
        with pytest.raises(PicardNonConvergenceError) as exc:
            solve_picard(measure, kernel, lam, tol=1e-12, max_iter=3)
        assert exc.value.residual > 0.0


class TestStabilityConstants:
    def test_time_zero_values(self):
        kernel = Kernel(1, 0.8)
        lam = clipped_density_lambda()
        lk = kernel.lipschitz_bound()
        cp, c = stability_constants(kernel, lam, 0.0)
        assert cp == pytest.approx(2 * lk**2, rel=1e-14)
        assert c == pytest.approx(16 * lk**2, rel=1e-14)

    def test_zero_rate_time_independent_prefactor(self):
        kernel = Kernel(1, 0.8)
        lk = kernel.lipschitz_bound()
        for t in (0.0, 0.7, 2.0):
            cp, _ = stability_constants(kernel, ZERO_LAMBDA, t)
            assert cp == pytest.approx(2 * lk**2, rel=1e-14)

    def test_unit_bounds_hand_value(self):
        # all four constants equal to one at t = 1: C' = 6 e^2
        class UnitKernel:
            def sup_bound(self):
                return 1.0

            def lipschitz_bound(self):
                return 1.0

        lam = LambdaField(fn=None, m_bound=1.0, l_bound=1.0)
        cp, _ = stability_constants(UnitKernel(), lam, 1.0)
        assert cp == pytest.approx(6 * math.e**2, rel=1e-12)
        assert cp == pytest.approx(44.3343, abs=5e-4)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            stability_constants(Kernel(1, 1.0), ZERO_LAMBDA, -0.5)


class TestStabilityInequality:
    def test_identical_measures_and_points(self):
        rng = np.random.default_rng(2)
        measure = brownian_measure(8, 6, rng)
        kernel = Kernel(1, 0.9)
        lam = clipped_density_lambda()
        ld = solve_picard(measure, kernel, lam)
        _, c = stability_constants(kernel, lam, 0.5)
        y = np.array([[0.2]])
        assert ld.evaluate(3, y)[0] == ld.evaluate(3, y)[0]
        report = check_stability_inequality(measure, measure, kernel, lam, samples=50)
        assert report.max_ratio == 0.0 or report.max_ratio <= 1.0

    def test_randomized_measures(self):
        kernel = Kernel(1, 0.8)
        lam = clipped_density_lambda()
        rng = np.random.default_rng(31)
        a = brownian_measure(8, 6, np.random.default_rng(100))
        b = brownian_measure(8, 6, np.random.default_rng(200))
        report = check_stability_inequality(a, b, kernel, lam, samples=1000, rng=rng)
        assert report.passed
        assert report.max_ratio <= 1.0

    def test_zero_rate_reduces_to_kde_difference(self):
        kernel = Kernel(1, 0.8)
        rng = np.random.default_rng(8)
        a = brownian_measure(10, 5, np.random.default_rng(4))
        b = brownian_measure(10, 5, np.random.default_rng(5))
        report = check_stability_inequality(a, b, kernel, ZERO_LAMBDA, samples=500, rng=rng)
        assert report.passed

    def test_clamped_variant(self):
        kernel = Kernel(1, 0.8)
        lam = clipped_density_lambda()
        rng = np.random.default_rng(77)
        a = brownian_measure(8, 6, np.random.default_rng(6), scale=1.5)
        b = brownian_measure(8, 6, np.random.default_rng(7), scale=1.5)
        report = check_stability_inequality(a, b, kernel, lam, samples=500, rng=rng, clamped=True)
        assert report.passed
        assert stability_constant_clamped(kernel, lam, 1.0) > 0

    def test_mismatched_grids_rejected(self):
        kernel = Kernel(1, 0.8)
        a = brownian_measure(4, 6, np.random.default_rng(1))
        b = brownian_measure(4, 5, np.random.default_rng(1))
        with pytest.raises(ValueError):
            check_stability_inequality(a, b, kernel, ZERO_LAMBDA, samples=10)


class TestNonUniqueness:
    def test_two_solutions(self):
        times, phi1, phi2 = nonuniqueness_demo(0.5, 4.0, 2.0, 1e-3)
        assert np.all(phi1 == 1.0)
        assert phi2[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(phi2) > 0.0)

    def test_closed_form_inverse_for_sqrt_rate(self):
        # alpha = 1/2: F(u) = 2 arctan(sqrt(u - 1)), so phi2(t) = 1 + tan(t/2)^2
        times, _, phi2 = nonuniqueness_demo(0.5, 10.0, 1.6, 1e-3)
        expected = 1.0 + np.tan(times / 2.0) ** 2
        np.testing.assert_allclose(phi2, expected, atol=5e-5)
        # the two solutions separate by about 0.2985 at t = 1
        k = int(round(1.0 / 1e-3))
        assert phi2[k] - 1.0 == pytest.approx(math.tan(0.5) ** 2, abs=1e-5)

    def test_integral_equation_residuals(self):
        alpha, cap, dt = 0.5, 4.0, 1e-3
        times, phi1, phi2 = nonuniqueness_demo(alpha, cap, 2.0, dt)
        assert integral_equation_residual(times, phi1, alpha, cap) == 0.0
        assert integral_equation_residual(times, phi2, alpha, cap) <= 5 * dt

    def test_cap_branch(self):
        # with a low cap the rate freezes and growth turns exponential
        times, _, phi2 = nonuniqueness_demo(0.5, 1.5, 3.0, 1e-3)
        assert phi2[-1] > 1.5

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            nonuniqueness_demo(0.0, 2.0, 1.0, 1e-3)
        with pytest.raises(ValueError):
            nonuniqueness_demo(1.0, 2.0, 1.0, 1e-3)
        with pytest.raises(ValueError):
            nonuniqueness_demo(0.5, 1.0, 1.0, 1e-3)
