"""Monte Carlo parameter sweeps over the benchmark schemes."""

import asyncio
import hashlib
import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from tqdm import tqdm

from hybrid_rate_ris.errors import ConfigError, HybridRateError, ScenarioInfeasibleError
from hybrid_rate_ris.model.channel import realization_digest, sample_channels
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings, dbm_to_watts
from hybrid_rate_ris.orchestrator import Scheme, run_scheme_suite

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "sweep_value",
    "scheme",
    "mean_rate",
    "std_err",
    "mean_iters",
    "mean_rate_noma",
    "mean_rate_airfl",
    "infeasible_trials",
    "realization_digest",
    "parameter",
]

# Placement sweep geometry: BS at the origin, users around a point 60 m away,
# RIS moved along the line between them.
PLACEMENT_BS = (0.0, 0.0, 0.0)
PLACEMENT_USER_CENTER = (0.0, 60.0, 0.0)
PLACEMENT_USER_RADIUS = 5.0


class SweepParameter(StrEnum):
    ITERATIONS = "iterations"
    RIS_Y = "ris_y"
    NUM_ELEMENTS = "num_elements"
    POWER_BUDGET_DBM = "power_budget_dbm"
    WEIGHT_LAMBDA = "weight_lambda"


@dataclass
class SweepSpec:
    """One swept parameter with its grid and Monte Carlo controls."""

    parameter: SweepParameter
    values: tuple[float, ...]
    trials: int = 200
    schemes: tuple[Scheme, ...] = tuple(Scheme)
    output_dir: Path = field(default_factory=lambda: Path("results"))
    seed: int = 0
    workers: int = 1
    num_airfl: int | None = None
    num_noma: int | None = None

    def __post_init__(self) -> None:
        self.parameter = SweepParameter(self.parameter)
        self.values = tuple(float(v) for v in self.values)
        self.schemes = tuple(Scheme(s) for s in self.schemes)
        self.output_dir = Path(self.output_dir)
        if not self.values:
            raise ConfigError("Sweep grid is empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:], strict=False)):
            raise ConfigError(f"Sweep grid must be strictly increasing: {self.values}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.schemes:
            raise ConfigError("At least one scheme is required")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")


def configure_point(
    config: NetworkConfig, parameter: SweepParameter, value: float
) -> NetworkConfig:
    """Scenario for one grid point of a sweep."""
    match parameter:
        case SweepParameter.RIS_Y:
            return config.replace(
                bs_pos=PLACEMENT_BS,
                ris_pos=(0.0, value, 0.0),
                user_center=PLACEMENT_USER_CENTER,
                user_radius=PLACEMENT_USER_RADIUS,
                user_pos=None,
            )
        case SweepParameter.NUM_ELEMENTS:
            return config.replace(num_elements=int(value))
        case SweepParameter.POWER_BUDGET_DBM:
            return config.replace(power_budget_w=(dbm_to_watts(value),) * config.num_users)
        case SweepParameter.WEIGHT_LAMBDA:
            return config.replace(weight_lambda=value)
        case SweepParameter.ITERATIONS:
            return config


def run_trial(
    config: NetworkConfig,
    settings: SolverSettings,
    schemes: tuple[Scheme, ...],
    parameter: SweepParameter,
    value: float,
    trial: int,
    seed: int,
    iteration_grid: tuple[float, ...] = (),
) -> list[dict[str, Any]]:
    """Run every scheme on one channel draw and return one row per scheme.

    The iterations sweep instead returns one row per scheme and grid
    iteration, holding the objective after that many outer iterations.

    A trial whose solve fails is recorded as infeasible with the exception
    name in ``cause``; only configuration errors propagate.
    """
    base = {"trial": trial, "seed": seed, "digest": ""}
    try:
        realization = sample_channels(config, seed)
        base["digest"] = realization_digest(realization)
        reports = run_scheme_suite(realization, config, schemes, settings, seed)
    except ConfigError:
        raise
    except HybridRateError as exc:
        if isinstance(exc, ScenarioInfeasibleError):
            logger.debug(f"Trial {trial} at {parameter}={value}: {exc}")
        else:
            logger.warning(f"Trial {trial} at {parameter}={value} failed: {exc}")
        values = iteration_grid or (value,)
        return [
            {**base, "sweep_value": v, "scheme": str(s), "feasible": False,
             "rate_hybrid": math.nan, "rate_noma": math.nan, "rate_airfl": math.nan,
             "iterations": 0, "cause": type(exc).__name__}
            for s in schemes
            for v in values
        ]

    rows = []
    for report in reports:
        breakdown = report.breakdown
        common = {
            **base,
            "scheme": str(report.scheme),
            "feasible": report.feasible,
            "rate_noma": breakdown.rate_noma_sum if breakdown else math.nan,
            "rate_airfl": breakdown.rate_airfl if breakdown else math.nan,
            "iterations": report.iterations,
            "cause": "",
        }
        if iteration_grid:
            for it in iteration_grid:
                index = min(int(it), len(report.trace) - 1)
                rows.append({**common, "sweep_value": it, "rate_hybrid": report.trace[index]})
        else:
            rows.append({**common, "sweep_value": value, "rate_hybrid": report.objective})
    return rows


def _point_digest(digests: pd.Series) -> str:
    joined = "".join(sorted(digests.astype(str)))
    return hashlib.sha256(joined.encode()).hexdigest()[:16]


def summarize(trials: pd.DataFrame, parameter: SweepParameter | str) -> pd.DataFrame:
    """Aggregate per-trial rows into one row per (grid value, scheme)."""
    rows = []
    for (value, scheme), group in trials.groupby(["sweep_value", "scheme"], sort=True):
        ok = group[group["feasible"].astype(bool)]
        count = len(ok)
        std = float(ok["rate_hybrid"].std(ddof=1)) if count > 1 else 0.0
        rows.append(
            {
                "sweep_value": value,
                "scheme": scheme,
                "mean_rate": float(ok["rate_hybrid"].mean()) if count else math.nan,
                "std_err": std / math.sqrt(count) if count else math.nan,
                "mean_iters": float(ok["iterations"].mean()) if count else math.nan,
                "mean_rate_noma": float(ok["rate_noma"].mean()) if count else math.nan,
                "mean_rate_airfl": float(ok["rate_airfl"].mean()) if count else math.nan,
                "infeasible_trials": int(len(group) - count),
                "realization_digest": _point_digest(group["digest"]),
                "parameter": str(parameter),
            }
        )
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def read_results(path: str | Path) -> pd.DataFrame:
    """Load a results table written by ``run_sweep``."""
    return pd.read_csv(path, float_precision="round_trip")


def _executor(workers: int) -> Executor:
    if workers > 1:
        return ProcessPoolExecutor(max_workers=workers)
    return ThreadPoolExecutor(max_workers=1)


async def run_sweep(
    spec: SweepSpec,
    config: NetworkConfig,
    settings: SolverSettings | None = None,
) -> pd.DataFrame:
    """Run a sweep and write ``results.csv`` and ``trials.csv``.

    Trial i uses seed ``spec.seed + i`` at every grid point and for every
    scheme, so all schemes see identical channel draws.

    Args:
        spec: Swept parameter, grid and Monte Carlo controls
        config: Baseline scenario
        settings: Solver settings shared by every trial

    Returns:
        The summary table, one row per grid value and scheme
    """
    settings = settings or SolverSettings()
    overrides = {
        key: value
        for key, value in (("num_airfl", spec.num_airfl), ("num_noma", spec.num_noma))
        if value is not None
    }
    base = config.replace(**overrides) if overrides else config
    try:
        spec.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"Cannot create output directory {spec.output_dir}: {exc}") from exc

    if spec.parameter == SweepParameter.ITERATIONS:
        points = [(0.0, base)]
        iteration_grid = spec.values
    else:
        points = [(v, configure_point(base, spec.parameter, v)) for v in spec.values]
        iteration_grid = ()

    logger.info(
        f"Sweeping {spec.parameter} over {len(spec.values)} values, "
        f"{spec.trials} trials, schemes {[str(s) for s in spec.schemes]}"
    )
    loop = asyncio.get_running_loop()
    rows: list[dict[str, Any]] = []
    with _executor(spec.workers) as executor:
        tasks = [
            loop.run_in_executor(
                executor, run_trial, point_config, settings, spec.schemes, spec.parameter,
                value, trial, spec.seed + trial, iteration_grid,
            )
            for value, point_config in points
            for trial in range(spec.trials)
        ]
        with tqdm(total=len(tasks), desc=f"Sweep {spec.parameter}", unit="trial") as progress:
            for task in asyncio.as_completed(tasks):
                try:
                    rows.extend(await task)
                except ConfigError as exc:
                    logger.error(f"Trial failed: {exc}")
                    raise
                progress.update(1)

    trials = pd.DataFrame(rows).sort_values(["sweep_value", "scheme", "trial"], ignore_index=True)
    summary = summarize(trials, spec.parameter)
    trials_path = spec.output_dir / "trials.csv"
    results_path = spec.output_dir / "results.csv"
    trials.to_csv(trials_path, index=False)
    summary.to_csv(results_path, index=False)
    logger.info(f"Wrote {len(summary)} summary rows to {results_path}")

    infeasible = int(summary["infeasible_trials"].sum())
    if infeasible:
        logger.warning(f"{infeasible} scheme-trials had no feasible solution")
    for row in summary[summary["mean_rate"].isna()].itertuples():
        logger.warning(f"No feasible trial for {row.scheme} at {spec.parameter}={row.sweep_value}")
    return summary


def relative_gain(
    results: pd.DataFrame, scheme: Scheme | str, baseline: Scheme | str
) -> np.ndarray:
    """Per grid value (mean_rate[scheme] - mean_rate[baseline]) / mean_rate[baseline]."""
    table = results.pivot(index="sweep_value", columns="scheme", values="mean_rate")
    return ((table[str(scheme)] - table[str(baseline)]) / table[str(baseline)]).to_numpy()
