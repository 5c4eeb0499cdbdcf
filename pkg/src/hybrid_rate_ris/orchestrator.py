"""Alternating optimization of power, receive scalar and RIS reflection.

Each outer iteration runs three blocks in turn. A block's output is kept
only if the resulting operating point is feasible and the hybrid rate does
not drop; otherwise the previous value of that block is retained.
"""

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from hybrid_rate_ris.errors import (
    InfeasibleError,
    OrderingInfeasibleError,
    ScenarioInfeasibleError,
)
from hybrid_rate_ris.model.channel import (
    ChannelRealization,
    ReflectionMode,
    ReflectionState,
    combined_channel,
    ordering_satisfied,
    realization_digest,
)
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings
from hybrid_rate_ris.model.metrics import (
    RateBreakdown,
    TransceiverState,
    check_feasibility,
    decoding_order,
    hybrid_rate,
    rate_upper_bound,
)
from hybrid_rate_ris.solvers.power import aligned_phases, allocate_power
from hybrid_rate_ris.solvers.receive import closed_form_scalar, mse_reachable_scalar, sca_scalar
from hybrid_rate_ris.solvers.reflection import design_reflection

logger = logging.getLogger(__name__)


class Scheme(StrEnum):
    DISCRETE_RIS = "discrete-ris"
    CONTINUOUS_RIS = "continuous-ris"
    RANDOM_RIS = "random-ris"
    RELAXED_QOS = "relaxed-qos"
    RELAXED_MSE = "relaxed-mse"


# Schemes whose feasible set contains the discrete-ris one; they start from its solution.
WARM_STARTED = (Scheme.CONTINUOUS_RIS, Scheme.RELAXED_QOS, Scheme.RELAXED_MSE)

Block = Callable[[], tuple[TransceiverState, ReflectionState, str]]


@dataclass(frozen=True)
class SchemeSpec:
    """Overrides that turn the baseline problem into a benchmark scheme."""

    scheme: Scheme
    relax_qos: bool = False
    relax_mse: bool = False
    continuous: bool = False
    freeze_reflection: bool = False

    @classmethod
    def for_scheme(cls, scheme: Scheme | str) -> "SchemeSpec":
        scheme = Scheme(scheme)
        return cls(
            scheme=scheme,
            relax_qos=scheme == Scheme.RELAXED_QOS,
            relax_mse=scheme == Scheme.RELAXED_MSE,
            continuous=scheme == Scheme.CONTINUOUS_RIS,
            freeze_reflection=scheme == Scheme.RANDOM_RIS,
        )

    @property
    def mode(self) -> ReflectionMode:
        return ReflectionMode.CONTINUOUS if self.continuous else ReflectionMode.DISCRETE

    def apply(self, config: NetworkConfig) -> NetworkConfig:
        changes: dict[str, Any] = {}
        if self.relax_qos:
            changes["min_rate_bps"] = 0.0
        if self.relax_mse:
            changes["mse_tolerance"] = math.inf
        return config.replace(**changes) if changes else config


class TerminationReason(StrEnum):
    TOLERANCE = "tolerance"
    CAP = "cap"
    INFEASIBLE = "infeasible"


class Step(StrEnum):
    POWER = "power"
    SCALAR = "scalar"
    REFLECTION = "reflection"


@dataclass
class StepRecord:
    iteration: int
    step: Step
    objective_before: float
    objective_after: float
    accepted: bool
    seconds: float
    note: str = ""


@dataclass
class InitialPoint:
    transceiver: TransceiverState
    reflection: ReflectionState


@dataclass
class SolveReport:
    """Result of one alternating-optimization run.

    ``trace[0]`` is the hybrid rate at the starting point and ``trace[l]`` the
    rate after outer iteration l.
    """

    scheme: Scheme
    transceiver: TransceiverState
    reflection: ReflectionState
    trace: list[float] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    iterations: int = 0
    termination: TerminationReason = TerminationReason.CAP
    timings: dict[str, float] = field(default_factory=dict)
    step2_skipped: bool = False
    feasible: bool = True
    breakdown: RateBreakdown | None = None
    seed: int | None = None
    digest: str = ""
    num_elements: int = 0

    @property
    def objective(self) -> float:
        return self.trace[-1] if self.trace else math.nan

    @classmethod
    def infeasible(
        cls, scheme: Scheme, realization: ChannelRealization, config: NetworkConfig
    ) -> "SolveReport":
        """Placeholder report for a scenario with no feasible starting point."""
        return cls(
            scheme=scheme,
            transceiver=TransceiverState(p=np.zeros(config.num_users), a=1.0),
            reflection=ReflectionState(theta=np.zeros(config.num_elements)),
            termination=TerminationReason.INFEASIBLE,
            feasible=False,
            seed=realization.seed,
            digest=realization_digest(realization),
            num_elements=config.num_elements,
        )

    def to_rows(self) -> list[dict[str, Any]]:
        """One record per outer iteration, with per-step timings."""
        rows = []
        for iteration, objective in enumerate(self.trace):
            steps = [s for s in self.steps if s.iteration == iteration]
            row: dict[str, Any] = {
                "scheme": str(self.scheme),
                "seed": self.seed,
                "digest": self.digest,
                "iteration": iteration,
                "objective": objective,
                "termination": str(self.termination),
            }
            for record in steps:
                row[f"{record.step}_accepted"] = record.accepted
                row[f"{record.step}_seconds"] = record.seconds
            rows.append(row)
        return rows

    def write_jsonl(self, path: str | Path) -> None:
        pd.DataFrame(self.to_rows()).to_json(
            path, orient="records", lines=True, double_precision=15
        )
        logger.info(f"Wrote {len(self.trace)} iteration records to {path}")

    @staticmethod
    def read_jsonl(path: str | Path) -> pd.DataFrame:
        return pd.read_json(path, orient="records", lines=True)


def _objective(
    state: TransceiverState, reflection: ReflectionState, realization: ChannelRealization,
    config: NetworkConfig,
) -> tuple[float, bool, RateBreakdown]:
    coefficients = combined_channel(realization, reflection).coefficients
    breakdown = hybrid_rate(state, coefficients, config)
    feasibility = check_feasibility(state, coefficients, config, breakdown)
    return breakdown.rate_hybrid, feasibility.feasible, breakdown


def _restore_scalar(
    state: TransceiverState, coefficients: np.ndarray, config: NetworkConfig,
    settings: SolverSettings,
) -> TransceiverState:
    K = config.num_airfl
    if K == 0:
        return state
    amplitude, h_airfl = state.amplitude[:K], coefficients[:K]
    if config.mse_relaxed:
        return state.with_scalar(closed_form_scalar(h_airfl, amplitude, K))
    return state.with_scalar(sca_scalar(h_airfl, amplitude, config, state.a_bar, settings).a)


def _settle(
    state: TransceiverState, coefficients: np.ndarray, config: NetworkConfig,
    settings: SolverSettings,
) -> TransceiverState:
    state = allocate_power(coefficients, state.a, state, config, settings).state
    state = _restore_scalar(state, coefficients, config, settings)
    feasibility = check_feasibility(state, coefficients, config)
    if not feasibility.feasible:
        raise InfeasibleError(f"Initial point infeasible: {'; '.join(feasibility.violations)}")
    return state


def _initial_point(
    realization: ChannelRealization,
    config: NetworkConfig,
    settings: SolverSettings,
    rng: np.random.Generator,
) -> InitialPoint:
    K, N = config.num_airfl, config.num_noma
    reflection = ReflectionState.random_discrete(config.num_elements, config.phase_bits, rng)
    coefficients = combined_channel(realization, reflection).coefficients
    gains = np.abs(coefficients) ** 2
    if not ordering_satisfied(gains[decoding_order(gains, K)], K, N):
        raise OrderingInfeasibleError("Random reflection violates the decoding order")

    p = np.sqrt(config.power_budget)
    if not K:
        state = TransceiverState(p=p, a=1.0, tx_phase=np.zeros(config.num_users))
        return InitialPoint(_settle(state, coefficients, config, settings), reflection)

    a = closed_form_scalar(coefficients[:K], p[:K], K)
    phases = aligned_phases(coefficients, a, K)
    a = closed_form_scalar(coefficients[:K], p[:K] * np.exp(1j * phases[:K]), K)
    try:
        state = TransceiverState(p=p, a=a, tx_phase=phases)
        return InitialPoint(_settle(state, coefficients, config, settings), reflection)
    except InfeasibleError as exc:
        if config.mse_relaxed:
            raise
        logger.debug(f"Full-power start rejected ({exc}); growing the receive scalar")

    # Scale the scalar up until the MSE bound is reachable with the least AirFL power.
    t, amplitude = mse_reachable_scalar(coefficients[:K], config.power_budget[:K], config)
    state = TransceiverState(
        p=np.concatenate([amplitude, p[K:]]), a=t, tx_phase=aligned_phases(coefficients, t, K)
    )
    return InitialPoint(_settle(state, coefficients, config, settings), reflection)


def initialize(
    realization: ChannelRealization,
    config: NetworkConfig,
    settings: SolverSettings | None = None,
    rng: np.random.Generator | None = None,
) -> InitialPoint:
    """Feasible starting point from a random discrete reflection.

    Reflections are redrawn until the decoding order holds and one power and
    scalar pass reaches a feasible transceiver. When the full-power start
    misses the MSE bound, the pass is retried from the largest receive scalar
    at which the bound is reachable.

    Raises:
        ScenarioInfeasibleError: When every attempt up to the retry cap fails
    """
    settings = settings or SolverSettings()
    rng = rng or np.random.default_rng(realization.seed)
    retrying = Retrying(
        stop=stop_after_attempt(settings.ordering_retries),
        retry=retry_if_exception_type((OrderingInfeasibleError, InfeasibleError)),
    )
    point: InitialPoint | None = None
    try:
        for attempt in retrying:
            with attempt:
                point = _initial_point(realization, config, settings, rng)
    except RetryError as exc:
        raise ScenarioInfeasibleError(
            f"No feasible initialization after {settings.ordering_retries} reflection draws"
        ) from exc
    if point is None:
        raise ScenarioInfeasibleError("Initialization did not produce a point")
    return point


def alternating_optimize(
    realization: ChannelRealization,
    config: NetworkConfig,
    scheme: Scheme | str = Scheme.DISCRETE_RIS,
    init: InitialPoint | None = None,
    settings: SolverSettings | None = None,
    rng: np.random.Generator | None = None,
) -> SolveReport:
    """Run power, scalar and reflection blocks until the hybrid rate settles.

    Args:
        realization: Channel draw
        config: Baseline scenario; the scheme's overrides are applied on top
        scheme: Benchmark scheme
        init: Starting point; drawn with ``initialize`` when omitted
        settings: Tolerances and caps of every block
        rng: Generator for initialization and Gaussian randomization

    Returns:
        The final operating point with its objective trace and step records
    """
    settings = settings or SolverSettings()
    spec = SchemeSpec.for_scheme(scheme)
    config = spec.apply(config)
    rng = rng or np.random.default_rng(realization.seed)
    K = config.num_airfl

    if init is None:
        init = initialize(realization, config, settings, rng)
    state, reflection = init.transceiver, init.reflection
    value, feasible, breakdown = _objective(state, reflection, realization, config)
    report = SolveReport(
        scheme=spec.scheme,
        transceiver=state,
        reflection=reflection,
        trace=[value],
        timings={str(step): 0.0 for step in Step},
        step2_skipped=K == 0,
        seed=realization.seed,
        digest=realization_digest(realization),
        num_elements=config.num_elements,
    )
    if not feasible:
        logger.warning(f"{spec.scheme}: starting point is infeasible")
    logger.info(f"{spec.scheme}: starting alternating optimization at {value:.6e} bit/s")

    def guarded(iteration: int, step: Step, build: Block) -> None:
        nonlocal state, reflection, value, breakdown
        started = time.perf_counter()
        before = value
        accepted, note, after = False, "", value
        try:
            new_state, new_reflection, note = build()
            after, ok, new_breakdown = _objective(new_state, new_reflection, realization, config)
            accepted = ok and after >= value - settings.monotone_slack * abs(value)
            if accepted:
                state, reflection = new_state, new_reflection
                value, breakdown = after, new_breakdown
            else:
                logger.debug(f"{step} block rejected ({after:.6e} vs {value:.6e}, feasible={ok})")
        except InfeasibleError as exc:
            note = f"{exc.constraint}: {exc}"
            logger.warning(
                f"{spec.scheme}: {step} block infeasible ({note}); keeping previous value"
            )
        seconds = time.perf_counter() - started
        report.timings[str(step)] += seconds
        report.steps.append(
            StepRecord(iteration, step, before, after, accepted, seconds, note)
        )

    def power_block() -> tuple[TransceiverState, ReflectionState, str]:
        coefficients = combined_channel(realization, reflection).coefficients
        allocation = allocate_power(coefficients, state.a, state, config, settings)
        return allocation.state, reflection, f"{allocation.iterations} alternations"

    def scalar_block() -> tuple[TransceiverState, ReflectionState, str]:
        coefficients = combined_channel(realization, reflection).coefficients
        return _restore_scalar(state, coefficients, config, settings), reflection, ""

    def reflection_block() -> tuple[TransceiverState, ReflectionState, str]:
        design = design_reflection(
            realization, state, reflection, config, spec.mode, rng, settings
        )
        return state, design.reflection, str(design.method)

    report.termination = TerminationReason.CAP
    for iteration in range(1, settings.outer_max_iters + 1):
        previous = value
        guarded(iteration, Step.POWER, power_block)
        if K > 0:
            guarded(iteration, Step.SCALAR, scalar_block)
        if not spec.freeze_reflection:
            guarded(iteration, Step.REFLECTION, reflection_block)

        report.trace.append(value)
        report.iterations = iteration
        logger.debug(f"{spec.scheme}: iteration {iteration} hybrid rate {value:.6e}")
        if abs(value - previous) <= settings.outer_tolerance * max(abs(previous), 1e-12):
            report.termination = TerminationReason.TOLERANCE
            break

    final_value, final_feasible, breakdown = _objective(state, reflection, realization, config)
    report.transceiver, report.reflection = state, reflection
    report.breakdown, report.feasible = breakdown, final_feasible
    if not final_feasible:
        report.termination = TerminationReason.INFEASIBLE
    bound = rate_upper_bound(realization, config)
    if final_value > bound:
        logger.warning(f"{spec.scheme}: rate {final_value:.6e} exceeds analytic cap {bound:.6e}")
    logger.info(
        f"{spec.scheme}: {report.termination} after {report.iterations} iterations, "
        f"hybrid rate {final_value:.6e} bit/s"
    )
    return report


def run_scheme_suite(
    realization: ChannelRealization,
    config: NetworkConfig,
    schemes: Sequence[Scheme | str],
    settings: SolverSettings | None = None,
    seed: int | None = None,
) -> list[SolveReport]:
    """Run several schemes on one channel draw for paired comparison.

    Baseline and random-RIS runs share one initialization. Schemes whose
    feasible set contains the baseline's start from the baseline's final
    point, so their objective never falls below it.

    Returns:
        One report per requested scheme, in request order
    """
    settings = settings or SolverSettings()
    seed = realization.seed if seed is None else seed
    requested = [Scheme(s) for s in schemes]
    init = initialize(realization, config, settings, np.random.default_rng(seed))

    reports: dict[Scheme, SolveReport] = {}

    def run(scheme: Scheme, start: InitialPoint) -> SolveReport:
        report = alternating_optimize(
            realization, config, scheme, start, settings, np.random.default_rng(seed)
        )
        report.seed = seed
        return report

    needs_baseline = Scheme.DISCRETE_RIS in requested or any(s in WARM_STARTED for s in requested)
    if needs_baseline:
        reports[Scheme.DISCRETE_RIS] = run(Scheme.DISCRETE_RIS, init)
    baseline = reports.get(Scheme.DISCRETE_RIS)
    for scheme in requested:
        if scheme in reports:
            continue
        if scheme in WARM_STARTED and baseline is not None:
            start = InitialPoint(baseline.transceiver, baseline.reflection)
        else:
            start = init
        reports[scheme] = run(scheme, start)
    return [reports[scheme] for scheme in requested]


def check_step_scaling(small: Sequence[SolveReport], large: Sequence[SolveReport]) -> float:
    """Compare mean reflection-step time between two element counts.

    Logs a warning when the growth exceeds the (M_large/M_small)^6 worst case.

    Returns:
        The observed time ratio
    """
    def mean_time(reports: Sequence[SolveReport]) -> tuple[float, int]:
        seconds = [r.timings.get(str(Step.REFLECTION), 0.0) / max(r.iterations, 1) for r in reports]
        return float(np.mean(seconds)), reports[0].num_elements

    small_time, m_small = mean_time(small)
    large_time, m_large = mean_time(large)
    ratio = large_time / small_time if small_time > 0 else math.inf
    limit = (m_large / m_small) ** 6
    if ratio > limit:
        logger.warning(
            f"Reflection step grew {ratio:.1f}x from M={m_small} to M={m_large}; "
            f"expected at most {limit:.1f}x"
        )
    else:
        logger.info(f"Reflection step time ratio {ratio:.2f} (limit {limit:.1f})")
    return ratio
