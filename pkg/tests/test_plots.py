"""Tests for sweep plots."""

import pandas as pd
import pytest

from hybrid_rate_ris.errors import DomainError
from hybrid_rate_ris.experiments.plots import PlotStyle, emit_plots


def _results() -> pd.DataFrame:
    rows = [
        {
            "sweep_value": float(m),
            "scheme": scheme,
            "mean_rate": (2.0 if scheme == "discrete-ris" else 1.0) * 1e6 * (1 + m / 50),
            "parameter": "num_elements",
        }
        for scheme in ("discrete-ris", "random-ris")
        for m in (10, 20, 30, 40, 50)
    ]
    return pd.DataFrame(rows)


def test_one_image_per_parameter(tmp_path):
    written = emit_plots(_results(), tmp_path)
    assert written == [tmp_path / "num_elements.png"]
    assert written[0].read_bytes().startswith(b"\x89PNG")


def test_deterministic(tmp_path):
    first = emit_plots(_results(), tmp_path / "a", PlotStyle(dpi=80))[0]
    second = emit_plots(_results(), tmp_path / "b", PlotStyle(dpi=80))[0]
    assert first.read_bytes() == second.read_bytes()


def test_two_parameters(tmp_path):
    other = _results().assign(parameter="weight_lambda")
    written = emit_plots(pd.concat([_results(), other]), tmp_path)
    assert {p.name for p in written} == {"num_elements.png", "weight_lambda.png"}


def test_empty_table(tmp_path):
    with pytest.raises(DomainError):
        emit_plots(pd.DataFrame(columns=["sweep_value", "scheme", "mean_rate"]), tmp_path)


def test_missing_columns(tmp_path):
    with pytest.raises(DomainError, match="parameter"):
        emit_plots(_results().drop(columns="parameter"), tmp_path)
