"""Tests for Monte Carlo sweeps."""

import math

import numpy as np
import pandas as pd
import pytest

from hybrid_rate_ris.errors import ConfigError, DegenerateChannelError
from hybrid_rate_ris.experiments import sweep
from hybrid_rate_ris.experiments.sweep import (
    PLACEMENT_USER_CENTER,
    RESULT_COLUMNS,
    SweepParameter,
    SweepSpec,
    configure_point,
    read_results,
    relative_gain,
    run_sweep,
    summarize,
)
from hybrid_rate_ris.model.config import NetworkConfig, dbm_to_watts
from hybrid_rate_ris.orchestrator import Scheme, run_scheme_suite


def _trials() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "sweep_value": [1.0, 1.0, 1.0, 1.0, 2.0, 2.0],
            "scheme": ["discrete-ris", "discrete-ris", "random-ris", "random-ris",
                       "discrete-ris", "discrete-ris"],
            "trial": [0, 1, 0, 1, 0, 1],
            "seed": [0, 1, 0, 1, 0, 1],
            "digest": ["a", "b", "a", "b", "c", "d"],
            "feasible": [True, True, True, False, True, True],
            "rate_hybrid": [2.0, 4.0, 1.0, math.nan, 5.0, 5.0],
            "rate_noma": [1.0, 1.0, 1.0, math.nan, 2.0, 2.0],
            "rate_airfl": [3.0, 3.0, 1.0, math.nan, 4.0, 4.0],
            "iterations": [3, 5, 1, 0, 2, 2],
        }
    )


class TestSweepSpec:
    def test_coerces_values(self):
        spec = SweepSpec(parameter="num_elements", values=[10, 20], schemes=["discrete-ris"])
        assert spec.parameter == SweepParameter.NUM_ELEMENTS
        assert spec.values == (10.0, 20.0)
        assert spec.schemes == (Scheme.DISCRETE_RIS,)

    @pytest.mark.parametrize(
        "changes",
        [
            {"values": []},
            {"values": [2.0, 1.0]},
            {"values": [1.0, 1.0]},
            {"trials": 0},
            {"schemes": []},
            {"workers": 0},
        ],
    )
    def test_invalid(self, changes):
        kwargs = {"parameter": "weight_lambda", "values": [0.5], **changes}
        with pytest.raises(ConfigError):
            SweepSpec(**kwargs)


class TestConfigurePoint:
    def test_placement(self):
        config = configure_point(NetworkConfig(), SweepParameter.RIS_Y, 30.0)
        assert config.ris_pos == (0.0, 30.0, 0.0)
        assert config.user_center == PLACEMENT_USER_CENTER

    def test_power_budget(self):
        config = configure_point(NetworkConfig(), SweepParameter.POWER_BUDGET_DBM, 10.0)
        np.testing.assert_allclose(config.power_budget, dbm_to_watts(10.0))

    def test_elements_and_weight(self):
        assert configure_point(NetworkConfig(), "num_elements", 30.0).num_elements == 30
        assert configure_point(NetworkConfig(), "weight_lambda", 0.2).weight_lambda == 0.2

    def test_iterations_leave_config(self):
        config = NetworkConfig()
        assert configure_point(config, SweepParameter.ITERATIONS, 5.0) is config


class TestSummarize:
    def test_aggregates(self):
        summary = summarize(_trials(), SweepParameter.WEIGHT_LAMBDA)
        assert list(summary.columns) == RESULT_COLUMNS
        assert len(summary) == 3

        first = summary.iloc[0]
        assert first["mean_rate"] == pytest.approx(3.0)
        assert first["std_err"] == pytest.approx(math.sqrt(2.0) / math.sqrt(2.0))
        assert first["mean_iters"] == pytest.approx(4.0)
        assert first["parameter"] == "weight_lambda"

        random = summary[summary["scheme"] == "random-ris"].iloc[0]
        assert random["infeasible_trials"] == 1
        assert random["std_err"] == 0.0

    def test_digest_is_shared_across_schemes(self):
        summary = summarize(_trials(), SweepParameter.WEIGHT_LAMBDA)
        at_one = summary[summary["sweep_value"] == 1.0]
        assert at_one["realization_digest"].nunique() == 1

    def test_relative_gain(self):
        summary = summarize(_trials(), SweepParameter.WEIGHT_LAMBDA)
        gain = relative_gain(summary[summary["sweep_value"] == 1.0], "discrete-ris", "random-ris")
        np.testing.assert_allclose(gain, [2.0])

    def test_csv_round_trip(self, tmp_path):
        summary = summarize(_trials(), SweepParameter.WEIGHT_LAMBDA)
        path = tmp_path / "results.csv"
        summary.to_csv(path, index=False)
        loaded = read_results(path)
        np.testing.assert_array_equal(loaded["mean_rate"], summary["mean_rate"])


class TestRunSweep:
    async def test_single_point(self, small_config, fast_settings, tmp_path):
        spec = SweepSpec(
            parameter="weight_lambda", values=[0.5], trials=1,
            schemes=["discrete-ris", "random-ris"], output_dir=tmp_path, seed=7,
        )
        summary = await run_sweep(spec, small_config, fast_settings)
        assert len(summary) == 2
        assert set(summary["scheme"]) == {"discrete-ris", "random-ris"}
        assert (tmp_path / "results.csv").exists()
        trials = pd.read_csv(tmp_path / "trials.csv")
        assert len(trials) == 2
        assert set(trials["seed"]) == {7}

    async def test_iterations(self, small_config, fast_settings, tmp_path):
        spec = SweepSpec(
            parameter="iterations", values=[0, 1, 2], trials=1,
            schemes=["discrete-ris"], output_dir=tmp_path, seed=7,
        )
        summary = await run_sweep(spec, small_config, fast_settings)
        assert list(summary["sweep_value"]) == [0.0, 1.0, 2.0]
        if summary["infeasible_trials"].sum() == 0:
            assert np.all(np.diff(summary["mean_rate"]) >= 0)

    async def test_failed_trial_recorded_with_cause(
        self, small_config, fast_settings, tmp_path, monkeypatch
    ):
        def flaky_suite(realization, config, schemes, settings, seed):
            if seed == 8:
                raise DegenerateChannelError("Sum of effective AirFL channels is zero")
            return run_scheme_suite(realization, config, schemes, settings, seed)

        monkeypatch.setattr(sweep, "run_scheme_suite", flaky_suite)
        spec = SweepSpec(
            parameter="weight_lambda", values=[0.5], trials=2, schemes=["discrete-ris"],
            output_dir=tmp_path, seed=7,
        )
        summary = await run_sweep(spec, small_config, fast_settings)
        assert summary["infeasible_trials"].iloc[0] == 1
        assert np.isfinite(summary["mean_rate"].iloc[0])
        trials = pd.read_csv(tmp_path / "trials.csv")
        failed = trials[trials["seed"] == 8]
        assert failed["cause"].tolist() == ["DegenerateChannelError"]
        assert not failed["feasible"].iloc[0]

    async def test_config_error_aborts(self, small_config, fast_settings, tmp_path, monkeypatch):
        def broken_suite(*args, **kwargs):
            raise ConfigError("phase_bits must be >= 1")

        monkeypatch.setattr(sweep, "run_scheme_suite", broken_suite)
        spec = SweepSpec(
            parameter="weight_lambda", values=[0.5], trials=1, schemes=["discrete-ris"],
            output_dir=tmp_path,
        )
        with pytest.raises(ConfigError):
            await run_sweep(spec, small_config, fast_settings)

    async def test_user_count_override(self, small_config, fast_settings, tmp_path):
        spec = SweepSpec(
            parameter="weight_lambda", values=[0.0], trials=1, schemes=["discrete-ris"],
            output_dir=tmp_path, num_airfl=0, num_noma=2,
        )
        summary = await run_sweep(spec, small_config, fast_settings)
        assert len(summary) == 1



def _rates(summary: pd.DataFrame, scheme: str = "discrete-ris") -> np.ndarray:
    rows = summary[summary["scheme"] == scheme]
    assert np.all(np.isfinite(rows["mean_rate"])), rows
    return rows["mean_rate"].to_numpy()


@pytest.mark.slow
async def test_midpoint_placement_is_worst(reproduction, tmp_path):
    """Double path loss is largest when the RIS sits halfway between BS and users."""
    config, settings = reproduction
    spec = SweepSpec(
        parameter="ris_y", values=[10, 20, 30, 40, 50], trials=10, schemes=["discrete-ris"],
        output_dir=tmp_path,
    )
    summary = await run_sweep(spec, config, settings)
    rates = _rates(summary)
    assert int(np.argmin(rates)) == 2


@pytest.mark.slow
async def test_more_elements_raise_rate(reproduction, tmp_path):
    config, settings = reproduction
    spec = SweepSpec(
        parameter="num_elements", values=[5, 10, 15, 20], trials=8, schemes=["discrete-ris"],
        output_dir=tmp_path,
    )
    summary = await run_sweep(spec, config.replace(phase_bits=1), settings)
    assert np.all(np.diff(_rates(summary)) > 0)


@pytest.mark.slow
async def test_finer_phases_raise_rate(reproduction, tmp_path):
    config, settings = reproduction
    rates = {}
    for bits in (1, 2):
        spec = SweepSpec(
            parameter="weight_lambda", values=[0.5], trials=10, schemes=["discrete-ris"],
            output_dir=tmp_path / f"b{bits}",
        )
        summary = await run_sweep(spec, config.replace(phase_bits=bits), settings)
        rates[bits] = _rates(summary)[0]
    assert rates[2] > rates[1]


@pytest.mark.slow
async def test_optimized_reflection_beats_random(reproduction, tmp_path):
    """At 25 dBm with 20 one-bit elements the optimized RIS gains at least 10%."""
    config, settings = reproduction
    spec = SweepSpec(
        parameter="power_budget_dbm", values=[25], trials=8,
        schemes=["discrete-ris", "random-ris"], output_dir=tmp_path,
    )
    summary = await run_sweep(spec, config.replace(num_elements=20, phase_bits=1), settings)
    _rates(summary, "random-ris")
    gain = relative_gain(summary, "discrete-ris", "random-ris")
    assert gain[0] >= 0.10
