"""Tests for NOMA and AirFL power allocation."""

import math

import numpy as np
import pytest

from hybrid_rate_ris.errors import MseInfeasibleError, QosInfeasibleError
from hybrid_rate_ris.model.config import NetworkConfig
from hybrid_rate_ris.model.metrics import TransceiverState, check_feasibility, hybrid_rate
from hybrid_rate_ris.solvers.backend import GridProblem, brute_force_oracle, solve
from hybrid_rate_ris.solvers.power import (
    aligned_phases,
    allocate_power,
    build_noma_program,
    minimal_noma_fractions,
    solve_airfl_power,
    solve_noma_power,
)
from hybrid_rate_ris.solvers.receive import closed_form_scalar

B = 1e6


def _config(**changes) -> NetworkConfig:
    base = {
        "num_airfl": 2,
        "num_noma": 2,
        "num_elements": 4,
        "noise_power_w": 1e-2,
        "power_budget_w": (1.0, 1.0, 1.0, 1.0),
        "min_rate_bps": 1e6,
        "mse_tolerance": 0.5,
    }
    base.update(changes)
    return NetworkConfig(**base)


class TestNomaPower:
    def test_full_power_without_qos(self, rng):
        for _ in range(100):
            budget = tuple(rng.uniform(0.1, 3.0, 4))
            config = _config(min_rate_bps=0.0, power_budget_w=budget)
            gains = rng.exponential(1.0, 4)
            p = solve_noma_power(gains, rng.uniform(0.0, 1.0, 2), config)
            np.testing.assert_allclose(p, np.sqrt(budget[2:]), rtol=0, atol=1e-10)

    def test_single_user_unreachable(self):
        config = _config(num_airfl=0, num_noma=1, power_budget_w=(1.0,), noise_power_w=1.0)
        with pytest.raises(QosInfeasibleError) as excinfo:
            solve_noma_power(np.array([0.5]), np.zeros(0), config)
        assert excinfo.value.user == 0
        assert excinfo.value.constraint == "qos"

    def test_matches_vertex_enumeration(self, rng):
        config = _config()
        gains = np.concatenate([rng.uniform(0.01, 0.05, 2), rng.uniform(0.5, 2.0, 2)])
        p_airfl = rng.uniform(0.2, 1.0, 2)
        program = build_noma_program(gains, p_airfl, config)
        reference = brute_force_oracle(program)
        solution = solve(program.to_problem())
        assert solution.objective == pytest.approx(reference.objective, abs=1e-6)

        p = solve_noma_power(gains, p_airfl, config)
        state = TransceiverState(p=np.concatenate([p_airfl, p]), a=1.0)
        report = check_feasibility(state, np.sqrt(gains), config.replace(mse_tolerance=math.inf))
        assert report.qos_ok, report.violations

    def test_minimal_fractions_meet_qos_exactly(self):
        config = _config(num_airfl=0, num_noma=2, power_budget_w=(1.0, 1.0))
        gains = np.array([1.0, 0.5])
        x = minimal_noma_fractions(gains, np.zeros(0), config)
        # weaker user 1 decodes first: 0.5/0.01 * x1 = ζ
        assert x[1] == pytest.approx(0.01 / 0.5)
        assert x[0] == pytest.approx((0.5 * x[1] + 0.01) / 1.0)


class TestAirflPower:
    def test_perfect_single_user_alignment(self):
        config = _config(
            num_airfl=1, num_noma=0, power_budget_w=(1.0,), noise_power_w=1e-3,
            mse_tolerance=math.inf, weight_lambda=1.0, min_rate_bps=0.0,
        )
        h = np.array([0.8 * np.exp(0.3j)])
        a = 1.0 / (h[0] * 1.0)
        result = solve_airfl_power(h, a, np.zeros(0), None, config)
        assert result.p[0] == pytest.approx(1.0, rel=1e-3)
        assert result.beta < 1e-4

    def test_two_users_match_grid(self):
        config = _config(
            num_noma=0, power_budget_w=(1.0, 1.0), mse_tolerance=math.inf,
            weight_lambda=1.0, min_rate_bps=0.0,
        )
        h = np.array([2.0, 1.5])
        result = solve_airfl_power(h, 1.0, np.zeros(0), None, config)
        g = np.abs(h)
        noise = config.noise_power_w

        def rate(points: np.ndarray) -> np.ndarray:
            signal = points @ g**2 + noise
            error = np.sum((g * np.sqrt(points) - 1.0) ** 2, axis=1) + noise
            return B * np.maximum(np.log2(signal / error), 0.0)

        grid = GridProblem(objective=rate, bounds=[(0.0, 1.0), (0.0, 1.0)], maximize=True)
        reference = brute_force_oracle(grid, 1e-3)
        assert result.trace[-1] == pytest.approx(reference.objective, rel=1e-3)
        assert np.all(np.diff(result.trace) >= -1e-6 * result.trace[0])

    def test_mse_unreachable(self):
        config = _config(num_noma=0, power_budget_w=(1.0, 1.0), mse_tolerance=1e-4)
        with pytest.raises(MseInfeasibleError):
            solve_airfl_power(np.array([0.01, 0.02]), 1.0, np.zeros(0), None, config)

    def test_aligned_phases_rotate_products_to_real_axis(self, rng):
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        a = 0.7 - 0.2j
        phases = aligned_phases(h, a, 2)
        products = a * h[:2] * np.exp(1j * phases[:2])
        np.testing.assert_allclose(products.imag, 0.0, atol=1e-12)
        assert np.all(products.real > 0)
        np.testing.assert_array_equal(phases[2:], 0.0)


class TestAllocatePower:
    def _mixed(self):
        coefficients = np.array([0.3, 0.25 * np.exp(1j), 1.0, 1.5 * np.exp(-0.5j)])
        a = closed_form_scalar(coefficients[:2], np.ones(2), 2)
        return coefficients, TransceiverState(p=np.ones(4), a=a)

    def test_pure_noma_reduces_to_lp(self):
        config = _config(num_airfl=0, num_noma=2, power_budget_w=(1.0, 1.0))
        coefficients = np.array([1.0, 0.7j])
        init = TransceiverState(p=np.ones(2), a=1.0)
        allocation = allocate_power(coefficients, 1.0, init, config)
        expected = solve_noma_power(np.abs(coefficients) ** 2, np.zeros(0), config)
        np.testing.assert_allclose(allocation.state.p, expected)

    def test_pure_airfl_reduces_to_dc(self):
        config = _config(num_noma=0, power_budget_w=(1.0, 1.0))
        coefficients = np.array([0.3, 0.25 * np.exp(1j)])
        a = closed_form_scalar(coefficients, np.ones(2), 2)
        init = TransceiverState(p=np.ones(2), a=a)
        allocation = allocate_power(coefficients, a, init, config)
        expected = solve_airfl_power(coefficients, a, np.zeros(0), init.p, config)
        np.testing.assert_allclose(allocation.state.p, expected.p)

    def test_mixed_trace_nondecreasing_and_feasible(self):
        config = _config()
        coefficients, init = self._mixed()
        allocation = allocate_power(coefficients, init.a, init, config)
        trace = np.asarray(allocation.trace)
        assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[:-1]))
        state = allocation.state
        assert trace[-1] == pytest.approx(hybrid_rate(state, coefficients, config).rate_hybrid)
        report = check_feasibility(state, coefficients, config)
        assert report.power_ok and report.qos_ok and report.mse_ok, report.violations

    def test_scalar_is_untouched(self):
        config = _config()
        coefficients, init = self._mixed()
        allocation = allocate_power(coefficients, init.a, init, config)
        assert allocation.state.a == init.a
