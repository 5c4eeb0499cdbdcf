"""Tests for the receive-scalar design."""

import math

import numpy as np
import pytest

from hybrid_rate_ris.errors import DegenerateChannelError, MseInfeasibleError
from hybrid_rate_ris.model.config import NetworkConfig
from hybrid_rate_ris.solvers.backend import GridProblem, brute_force_oracle
from hybrid_rate_ris.solvers.receive import (
    closed_form_scalar,
    feasible_scalar_on_ray,
    mse_reachable_scalar,
    sca_scalar,
)


def _config(num_airfl: int, **changes) -> NetworkConfig:
    return NetworkConfig(
        num_airfl=num_airfl,
        num_noma=0,
        num_elements=1,
        power_budget_w=(1.0,) * num_airfl,
        **changes,
    )


def _objective(products: np.ndarray):
    def evaluate(points: np.ndarray) -> np.ndarray:
        z = points[:, 0] + 1j * points[:, 1]
        return np.sum(np.abs(z[:, None] - products[None, :]) ** 2, axis=1)

    return evaluate


class TestClosedForm:
    def test_single_user_reciprocal(self):
        assert closed_form_scalar(np.array([0.5]), np.array([1.0]), 1) == pytest.approx(2.0)

    def test_two_users(self):
        assert closed_form_scalar(np.array([1.0, 3.0]), np.ones(2), 2) == pytest.approx(0.5)

    def test_zero_sum(self):
        with pytest.raises(DegenerateChannelError):
            closed_form_scalar(np.array([1.0, -1.0]), np.ones(2), 2)

    def test_minimizes_alignment_error(self, rng):
        products = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        a_bar = 1.0 / closed_form_scalar(products, np.ones(4), 4)
        mean = np.mean(products)
        grid = GridProblem(
            objective=_objective(products),
            bounds=[(mean.real - 0.5, mean.real + 0.5), (mean.imag - 0.5, mean.imag + 0.5)],
        )
        reference = brute_force_oracle(grid, 1e-3)
        value = float(np.sum(np.abs(a_bar - products) ** 2))
        assert value <= reference.objective + 1e-4


class TestSca:
    def test_relaxed_mse_returns_closed_form(self, rng):
        config = _config(4, mse_tolerance=math.inf)
        for _ in range(100):
            h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            p = rng.uniform(0.1, 1.0, 4)
            state = sca_scalar(h, p, config)
            expected = 4 / np.sum(h * p)
            assert abs(state.a - expected) <= 1e-8 * abs(expected)

    def test_single_user_noise_free(self):
        config = _config(1, noise_power_w=1e-30, mse_tolerance=0.01)
        h = np.array([0.6 - 0.3j])
        state = sca_scalar(h, np.array([1.0]), config)
        assert state.a == pytest.approx(1.0 / h[0], rel=1e-9)

    def test_tight_bound_matches_constrained_grid(self):
        eps, noise = 0.0185, 0.01
        config = _config(2, noise_power_w=noise, mse_tolerance=eps)
        products = np.array([1.0, 1.4 + 0.2j])
        state = sca_scalar(products, np.ones(2), config)

        def feasible(points: np.ndarray) -> np.ndarray:
            z = points[:, 0] + 1j * points[:, 1]
            error = np.sum(np.abs(z[:, None] - products[None, :]) ** 2, axis=1)
            return error + noise <= eps * 4 * np.abs(z) ** 2

        grid = GridProblem(
            objective=_objective(products), bounds=[(0.8, 1.6), (-0.3, 0.5)], feasible=feasible
        )
        reference = brute_force_oracle(grid, 1e-3)
        value = float(np.sum(np.abs(state.a_bar - products) ** 2))
        assert value == pytest.approx(reference.objective, abs=1e-3)
        error = float(np.sum(np.abs(state.a_bar - products) ** 2)) + noise
        assert error <= eps * 4 * abs(state.a_bar) ** 2 * (1 + 1e-9)

    def test_trace_nondecreasing(self, rng):
        config = _config(3, noise_power_w=0.05, mse_tolerance=0.05)
        products = 1.0 + 0.2 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
        state = sca_scalar(products, np.ones(3), config)
        assert np.all(np.diff(state.trace) >= -1e-9 * max(state.trace))
        assert state.iterations == len(state.iterates) - 1

    def test_unreachable_bound(self):
        config = _config(2, noise_power_w=0.01, mse_tolerance=1e-4)
        with pytest.raises(MseInfeasibleError):
            sca_scalar(np.array([1.0, 2.0j]), np.ones(2), config)

    def test_ray_point_is_feasible(self):
        config = _config(2, noise_power_w=0.01, mse_tolerance=0.0185)
        products = np.array([1.0, 1.4 + 0.2j])
        a_bar = feasible_scalar_on_ray(products, np.ones(2), config)
        error = float(np.sum(np.abs(a_bar - products) ** 2)) + 0.01
        assert error <= 0.0185 * 4 * abs(a_bar) ** 2 * (1 + 1e-9)
        assert np.angle(a_bar) == pytest.approx(np.angle(np.mean(products)))


def _aligned_mse(t: float, coefficients: np.ndarray, amplitude: np.ndarray, noise: float) -> float:
    return float(np.sum((t * np.abs(coefficients) * amplitude - 1.0) ** 2)) + t**2 * noise


class TestMseReachableScalar:
    def test_noise_limited_scalar(self):
        config = _config(2)
        coefficients = np.array([1e-4, 3e-4j])
        t, amplitude = mse_reachable_scalar(coefficients, np.ones(2), config)
        assert t == pytest.approx(math.sqrt(0.04 * (1 - 1e-6) / config.noise_power_w))
        np.testing.assert_allclose(t * np.abs(coefficients) * amplitude, 1.0)
        assert np.all(amplitude <= 1.0)

    def test_budget_limited_user(self):
        config = _config(2, noise_power_w=5e-11, mse_tolerance=0.1)
        coefficients = np.array([1e-4, 1e-4])
        budget = np.array([1.0, 0.01])
        t, amplitude = mse_reachable_scalar(coefficients, budget, config)
        assert t < 1e5
        assert amplitude[1] == pytest.approx(0.1)
        value = _aligned_mse(t, coefficients, amplitude, config.noise_power_w)
        assert value == pytest.approx(0.4, rel=1e-5)
        assert value <= 0.4

    def test_unreachable_bound(self):
        config = _config(2, noise_power_w=1e-9)
        with pytest.raises(MseInfeasibleError):
            mse_reachable_scalar(np.array([1e-4, 3e-4]), np.ones(2), config)

    def test_relaxed_bound_saturates_weakest_user(self):
        config = _config(2, mse_tolerance=math.inf)
        t, amplitude = mse_reachable_scalar(np.array([1e-4, 3e-4]), np.ones(2), config)
        assert t == pytest.approx(1e4)
        np.testing.assert_allclose(amplitude, [1.0, 1.0 / 3.0])

    def test_zero_channel(self):
        with pytest.raises(DegenerateChannelError):
            mse_reachable_scalar(np.array([0.0, 1.0]), np.ones(2), _config(2))
