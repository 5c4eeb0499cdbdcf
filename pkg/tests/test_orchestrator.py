"""Tests for the alternating optimization and the scheme suite."""

import math

import numpy as np
import pytest

from hybrid_rate_ris.errors import InfeasibleError, ScenarioInfeasibleError
from hybrid_rate_ris.model.channel import (
    ReflectionMode,
    ReflectionState,
    combined_channel,
    ordering_satisfied,
    sample_channels,
)
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings
from hybrid_rate_ris.model.metrics import TransceiverState, check_feasibility, decoding_order
from hybrid_rate_ris.orchestrator import (
    Scheme,
    SchemeSpec,
    SolveReport,
    Step,
    TerminationReason,
    alternating_optimize,
    check_step_scaling,
    initialize,
    run_scheme_suite,
)
from hybrid_rate_ris.solvers.power import aligned_phases, solve_noma_power
from hybrid_rate_ris.solvers.receive import mse_reachable_scalar


def _assert_nondecreasing(trace: list[float], slack: float = 1e-9) -> None:
    values = np.asarray(trace)
    assert np.all(np.diff(values) >= -slack * np.maximum(np.abs(values[:-1]), 1.0))


def _feasible_witness(realization, config, settings, draws: int = 200) -> TransceiverState | None:
    """Hand-built feasible point: aligned AirFL users at an MSE-reachable scalar."""
    K, N = config.num_airfl, config.num_noma
    rng = np.random.default_rng(0)
    for _ in range(draws):
        reflection = ReflectionState.random_discrete(
            config.num_elements, config.phase_bits, rng
        )
        coefficients = combined_channel(realization, reflection).coefficients
        gains = np.abs(coefficients) ** 2
        if not ordering_satisfied(gains[decoding_order(gains, K)], K, N):
            continue
        try:
            t, amplitude = mse_reachable_scalar(coefficients[:K], config.power_budget[:K], config)
            p_noma = solve_noma_power(gains, amplitude, config, settings)
        except InfeasibleError:
            continue
        state = TransceiverState(
            p=np.concatenate([amplitude, p_noma]), a=t,
            tx_phase=aligned_phases(coefficients, t, K),
        )
        if check_feasibility(state, coefficients, config).feasible:
            return state
    return None


class TestSchemeSpec:
    def test_overrides(self):
        config = NetworkConfig()
        assert SchemeSpec.for_scheme("relaxed-qos").apply(config).min_rate_bps == 0.0
        assert SchemeSpec.for_scheme("relaxed-mse").apply(config).mse_relaxed
        assert SchemeSpec.for_scheme("discrete-ris").apply(config) is config
        assert SchemeSpec.for_scheme(Scheme.CONTINUOUS_RIS).mode == ReflectionMode.CONTINUOUS
        assert SchemeSpec.for_scheme(Scheme.RANDOM_RIS).freeze_reflection

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            SchemeSpec.for_scheme("ideal-ris")


class TestAlternatingOptimize:
    @pytest.mark.parametrize("seed", [7, 11])
    def test_trace_nondecreasing_and_feasible(self, small_config, fast_settings, seed):
        realization = sample_channels(small_config, seed)
        report = alternating_optimize(realization, small_config, settings=fast_settings)
        _assert_nondecreasing(report.trace)
        assert report.feasible
        assert report.termination in (TerminationReason.TOLERANCE, TerminationReason.CAP)
        assert len(report.trace) == report.iterations + 1
        assert report.breakdown is not None
        assert report.objective == pytest.approx(report.breakdown.rate_hybrid)

    def test_pure_noma_skips_scalar_step(self, fast_settings):
        config = NetworkConfig(
            num_airfl=0, num_noma=2, num_elements=4, weight_lambda=0.0, path_loss_ref=0.1
        )
        realization = sample_channels(config, 3)
        report = alternating_optimize(realization, config, settings=fast_settings)
        assert report.step2_skipped
        assert all(record.step != Step.SCALAR for record in report.steps)
        assert report.breakdown.rate_airfl == 0.0
        _assert_nondecreasing(report.trace)

    def test_pure_airfl(self, fast_settings):
        config = NetworkConfig(
            num_airfl=2, num_noma=0, num_elements=4, weight_lambda=1.0, path_loss_ref=0.1
        )
        realization = sample_channels(config, 5)
        report = alternating_optimize(realization, config, settings=fast_settings)
        assert report.feasible
        assert not report.step2_skipped
        assert report.breakdown.rate_noma_sum == 0.0
        assert report.objective == pytest.approx(report.breakdown.rate_airfl)
        assert report.breakdown.mse <= config.mse_tolerance + 1e-8
        _assert_nondecreasing(report.trace)

    def test_random_ris_freezes_reflection(self, small_config, small_realization, fast_settings):
        init = initialize(small_realization, small_config, fast_settings)
        report = alternating_optimize(
            small_realization, small_config, Scheme.RANDOM_RIS, init, fast_settings
        )
        np.testing.assert_array_equal(report.reflection.theta, init.reflection.theta)
        assert all(record.step != Step.REFLECTION for record in report.steps)

    def test_step_records(self, small_config, small_realization, fast_settings):
        report = alternating_optimize(small_realization, small_config, settings=fast_settings)
        assert {record.step for record in report.steps} == set(Step)
        for record in report.steps:
            if record.accepted:
                assert record.objective_after >= record.objective_before * (1 - 1e-9)
        assert set(report.timings) == {str(step) for step in Step}


class TestInitialize:
    def test_unreachable_qos(self, small_config, small_realization):
        config = small_config.replace(min_rate_bps=1e8)
        with pytest.raises(ScenarioInfeasibleError) as excinfo:
            initialize(small_realization, config, SolverSettings(ordering_retries=3))
        assert excinfo.value.constraint == "initialization"

    def test_grows_scalar_when_full_power_misses_mse(self, small_config, fast_settings):
        realization = sample_channels(small_config, 11)
        assert _feasible_witness(realization, small_config, fast_settings) is not None
        point = initialize(realization, small_config, fast_settings)
        coefficients = combined_channel(realization, point.reflection).coefficients
        assert check_feasibility(point.transceiver, coefficients, small_config).feasible

    def test_reproduction_scenario_initializes(self, reproduction):
        config, settings = reproduction
        started = 0
        for seed in range(5):
            try:
                initialize(sample_channels(config, seed), config, settings)
            except ScenarioInfeasibleError:
                continue
            started += 1
        assert started >= 3

    def test_deterministic(self, small_config, small_realization, fast_settings):
        first = initialize(small_realization, small_config, fast_settings)
        second = initialize(small_realization, small_config, fast_settings)
        np.testing.assert_array_equal(first.reflection.theta, second.reflection.theta)
        np.testing.assert_allclose(first.transceiver.p, second.transceiver.p)


class TestSchemeSuite:
    def test_all_schemes(self, small_config, small_realization, fast_settings):
        reports = run_scheme_suite(
            small_realization, small_config, list(Scheme), fast_settings, seed=7
        )
        assert [r.scheme for r in reports] == list(Scheme)
        assert {r.seed for r in reports} == {7}
        assert len({r.digest for r in reports}) == 1

        by_scheme = {r.scheme: r for r in reports}
        baseline = by_scheme[Scheme.DISCRETE_RIS].objective
        for scheme in (Scheme.CONTINUOUS_RIS, Scheme.RELAXED_QOS, Scheme.RELAXED_MSE):
            assert by_scheme[scheme].objective >= baseline * (1 - 1e-9)
            assert by_scheme[scheme].trace[0] == pytest.approx(baseline, rel=1e-12)

    def test_report_round_trip(self, small_config, small_realization, fast_settings, tmp_path):
        report = alternating_optimize(small_realization, small_config, settings=fast_settings)
        path = tmp_path / "report.jsonl"
        report.write_jsonl(path)
        frame = SolveReport.read_jsonl(path)
        assert len(frame) == len(report.trace)
        np.testing.assert_allclose(frame["objective"], report.trace, rtol=1e-12)
        assert "power_seconds" in frame.columns


class TestStepScaling:
    def _report(self, elements: int, seconds: float) -> SolveReport:
        config = NetworkConfig(num_elements=elements)
        realization = sample_channels(config, 0)
        report = SolveReport.infeasible(Scheme.DISCRETE_RIS, realization, config)
        report.timings = {str(Step.REFLECTION): seconds}
        report.iterations = 1
        return report

    def test_ratio(self):
        ratio = check_step_scaling([self._report(10, 0.5)], [self._report(20, 2.0)])
        assert ratio == pytest.approx(4.0)

    def test_zero_baseline(self):
        ratio = check_step_scaling([self._report(10, 0.0)], [self._report(20, 1.0)])
        assert math.isinf(ratio)


@pytest.mark.slow
def test_traces_converge_over_seeds():
    """Every run is monotone and settles within 20 outer iterations."""
    config = NetworkConfig(
        num_airfl=2, num_noma=1, num_elements=8, phase_bits=2, path_loss_ref=0.1
    )
    settings = SolverSettings(outer_tolerance=1e-6, outer_max_iters=20)
    solved = []
    for seed in range(50):
        realization = sample_channels(config, seed)
        try:
            report = alternating_optimize(realization, config, settings=settings)
        except ScenarioInfeasibleError:
            continue
        _assert_nondecreasing(report.trace)
        assert report.termination == TerminationReason.TOLERANCE
        assert report.iterations <= 20
        solved.append(seed)
    assert len(solved) >= 40


@pytest.mark.slow
def test_relaxed_schemes_dominate_over_seeds(small_config):
    """Relaxing a constraint never lowers the objective on paired channel draws."""
    settings = SolverSettings(outer_max_iters=20, randomization_count=20)
    schemes = [Scheme.DISCRETE_RIS, Scheme.CONTINUOUS_RIS, Scheme.RELAXED_QOS, Scheme.RELAXED_MSE]
    compared = 0
    for seed in range(100):
        realization = sample_channels(small_config, seed)
        try:
            reports = run_scheme_suite(realization, small_config, schemes, settings, seed=seed)
        except ScenarioInfeasibleError:
            continue
        baseline = reports[0].objective
        for report in reports[1:]:
            assert report.objective >= baseline * (1 - 1e-9), (seed, report.scheme)
        compared += 1
    assert compared >= 80
