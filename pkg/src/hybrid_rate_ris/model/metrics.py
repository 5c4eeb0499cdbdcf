"""Closed-form NOMA, AirFL and hybrid rate evaluation.

Users are indexed AirFL first, then NOMA. NOMA users are decoded in ascending
order of combined gain; every function that takes a decoding position expects
its arrays already arranged in that order (see ``decoding_order``).
"""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from hybrid_rate_ris.errors import DimensionError, DomainError
from hybrid_rate_ris.model.channel import ChannelRealization, ordering_satisfied
from hybrid_rate_ris.model.config import NetworkConfig

logger = logging.getLogger(__name__)

QOS_RELATIVE_SLACK = 1e-6
MSE_ABSOLUTE_SLACK = 1e-8
POWER_SLACK = 1e-9


@dataclass(frozen=True)
class TransceiverState:
    """Transmit amplitudes and phases of all users plus the BS receive scalar.

    The transmitted complex amplitude of user i is ``p[i] * exp(1j * tx_phase[i])``.
    """

    p: np.ndarray
    a: complex
    tx_phase: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float).reshape(-1)
        phase = np.asarray(self.tx_phase, dtype=float).reshape(-1)
        if phase.size == 0:
            phase = np.zeros_like(p)
        if phase.shape != p.shape:
            raise DimensionError(f"tx_phase has shape {phase.shape}, p has {p.shape}")
        if np.any(p < 0):
            raise DomainError("Transmit amplitudes must be non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "tx_phase", phase)
        object.__setattr__(self, "a", complex(self.a))

    @property
    def amplitude(self) -> np.ndarray:
        return self.p * np.exp(1j * self.tx_phase)

    @property
    def power(self) -> np.ndarray:
        return self.p**2

    @property
    def a_bar(self) -> complex:
        if self.a == 0:
            raise DomainError("Receive scalar is zero; a_bar is undefined")
        return 1.0 / self.a

    def with_powers(self, p: np.ndarray, tx_phase: np.ndarray | None = None) -> "TransceiverState":
        return TransceiverState(
            p=p, a=self.a, tx_phase=self.tx_phase if tx_phase is None else tx_phase
        )

    def with_scalar(self, a: complex) -> "TransceiverState":
        return TransceiverState(p=self.p, a=a, tx_phase=self.tx_phase)


@dataclass(frozen=True)
class RateBreakdown:
    """Every rate-like quantity of one operating point.

    NOMA arrays are indexed by NOMA user (user ``K + n`` is entry ``n``).
    """

    sinr: np.ndarray
    rate_noma_user: np.ndarray
    rate_noma_sum: float
    mse: float
    signal_power: float
    rate_airfl: float
    rate_hybrid: float
    airfl_clamped: bool = False

    def to_row(self) -> dict[str, float]:
        """Flatten to one CSV-ready row."""
        row = asdict(self)
        sinr = row.pop("sinr")
        rates = row.pop("rate_noma_user")
        for n, (gamma, rate) in enumerate(zip(sinr, rates, strict=True)):
            row[f"sinr_{n}"] = float(gamma)
            row[f"rate_noma_{n}"] = float(rate)
        return row


def decoding_order(gains: np.ndarray, num_airfl: int) -> np.ndarray:
    """User permutation: AirFL users unchanged, NOMA users by ascending gain."""
    gains = np.asarray(gains, dtype=float)
    noma = num_airfl + np.argsort(gains[num_airfl:], kind="stable")
    return np.concatenate([np.arange(num_airfl), noma]).astype(int)


def noma_sinr(
    n: int, p: np.ndarray, gains: np.ndarray, noise_power: float, num_airfl: int
) -> float:
    """SINR of the NOMA user at decoding position ``n``.

    Args:
        n: Position in the decoding-ordered arrays, K <= n < K + N
        p: Transmit amplitudes in decoding order
        gains: Combined gains |h̄_i|² in decoding order
        noise_power: σ² in watts
        num_airfl: K; every AirFL user interferes with every NOMA user

    Returns:
        p_n²|h̄_n|² over the received power of all lower-indexed users plus noise
    """
    p = np.asarray(p, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if not num_airfl <= n < gains.shape[0]:
        raise DomainError(f"Index {n} is outside the NOMA range [{num_airfl}, {gains.shape[0]})")
    received = p**2 * gains
    return float(received[n] / (np.sum(received[:n]) + noise_power))


def noma_rate(
    n: int,
    p: np.ndarray,
    gains: np.ndarray,
    noise_power: float,
    bandwidth_hz: float,
    num_airfl: int,
) -> float:
    return bandwidth_hz * math.log2(1.0 + noma_sinr(n, p, gains, noise_power, num_airfl))


def noma_sum_rate(
    p: np.ndarray, gains: np.ndarray, noise_power: float, bandwidth_hz: float, num_airfl: int
) -> float:
    return sum(
        noma_rate(n, p, gains, noise_power, bandwidth_hz, num_airfl)
        for n in range(num_airfl, len(gains))
    )


def telescoped_noma_sum_rate(
    p: np.ndarray, gains: np.ndarray, noise_power: float, bandwidth_hz: float, num_airfl: int
) -> float:
    """NOMA sum rate as one logarithm: B·log2(1 + Σ_n ρ_n g_n / (Σ_k ρ_k g_k + σ²))."""
    received = np.asarray(p, dtype=float) ** 2 * np.asarray(gains, dtype=float)
    airfl = float(np.sum(received[:num_airfl]))
    noma = float(np.sum(received[num_airfl:]))
    return bandwidth_hz * math.log2(1.0 + noma / (airfl + noise_power))


def _alignment(amplitude: np.ndarray, a: complex, coefficients: np.ndarray) -> np.ndarray:
    amplitude = np.asarray(amplitude)
    coefficients = np.asarray(coefficients)
    if amplitude.shape != coefficients.shape:
        raise DimensionError(
            f"Amplitudes {amplitude.shape} and coefficients {coefficients.shape} differ"
        )
    return a * coefficients * amplitude


def aggregation_mse(
    amplitude: np.ndarray, a: complex, coefficients: np.ndarray, noise_power: float, num_airfl: int
) -> float:
    """Aggregation MSE (1/K²)·(Σ_k |a h̄_k x_k - 1|² + |a|²σ²).

    Args:
        amplitude: Complex transmit amplitudes x_k of the AirFL users
        a: Receive scalar
        coefficients: Combined coefficients h̄_k of the AirFL users
        noise_power: σ²
        num_airfl: K

    Returns:
        The mean squared aggregation error
    """
    if num_airfl < 1:
        raise DomainError("Aggregation MSE needs at least one AirFL user")
    terms = _alignment(amplitude, a, coefficients)
    return float((np.sum(np.abs(terms - 1.0) ** 2) + abs(a) ** 2 * noise_power) / num_airfl**2)


def aggregation_signal_power(
    amplitude: np.ndarray, a: complex, coefficients: np.ndarray, noise_power: float, num_airfl: int
) -> float:
    """Received power of the reconstructed aggregate, E|ŝ|²."""
    if num_airfl < 1:
        raise DomainError("Aggregation signal power needs at least one AirFL user")
    terms = _alignment(amplitude, a, coefficients)
    return float((np.sum(np.abs(terms) ** 2) + abs(a) ** 2 * noise_power) / num_airfl**2)


def _airfl_rate_clamped(
    amplitude: np.ndarray,
    a: complex,
    coefficients: np.ndarray,
    noise_power: float,
    num_airfl: int,
    bandwidth_hz: float,
) -> tuple[float, bool]:
    mse = aggregation_mse(amplitude, a, coefficients, noise_power, num_airfl)
    signal = aggregation_signal_power(amplitude, a, coefficients, noise_power, num_airfl)
    if mse <= 0:
        if signal <= 0:
            raise DomainError("Computation rate undefined: zero MSE and zero signal power")
        return math.inf, False
    rate = bandwidth_hz * math.log2(signal / mse)
    if rate < 0:
        return 0.0, True
    return rate, False


def airfl_rate(
    amplitude: np.ndarray,
    a: complex,
    coefficients: np.ndarray,
    noise_power: float,
    num_airfl: int,
    bandwidth_hz: float,
) -> float:
    """Computation rate B·log2(E|ŝ|² / MSE), clamped at zero."""
    rate, clamped = _airfl_rate_clamped(
        amplitude, a, coefficients, noise_power, num_airfl, bandwidth_hz
    )
    if clamped:
        logger.warning("Aggregation MSE exceeds received power; computation rate clamped to 0")
    return rate


def hybrid_rate(
    state: TransceiverState, coefficients: np.ndarray, config: NetworkConfig
) -> RateBreakdown:
    """Full rate breakdown for the given transceiver and combined channel.

    Args:
        state: Transmit amplitudes/phases and receive scalar
        coefficients: Combined coefficients h̄_i of all users
        config: Scenario parameters

    Returns:
        A RateBreakdown with rate_hybrid = (1-λ)·R_NOMA + λ·R_AirFL
    """
    coefficients = np.asarray(coefficients, dtype=complex)
    K, N = config.num_airfl, config.num_noma
    if coefficients.shape != (config.num_users,) or state.p.shape != (config.num_users,):
        raise DimensionError(
            f"Expected {config.num_users} users, got coefficients {coefficients.shape} "
            f"and amplitudes {state.p.shape}"
        )

    gains = np.abs(coefficients) ** 2
    order = decoding_order(gains, K)
    p_sorted, g_sorted = state.p[order], gains[order]
    sinr = np.zeros(N)
    rates = np.zeros(N)
    for position in range(K, K + N):
        user = order[position] - K
        sinr[user] = noma_sinr(position, p_sorted, g_sorted, config.noise_power_w, K)
        rates[user] = config.bandwidth_hz * math.log2(1.0 + sinr[user])
    rate_noma = float(np.sum(rates))

    mse, signal, rate_airfl, clamped = math.nan, math.nan, 0.0, False
    if K > 0:
        amplitude, h_airfl = state.amplitude[:K], coefficients[:K]
        mse = aggregation_mse(amplitude, state.a, h_airfl, config.noise_power_w, K)
        signal = aggregation_signal_power(amplitude, state.a, h_airfl, config.noise_power_w, K)
        rate_airfl, clamped = _airfl_rate_clamped(
            amplitude, state.a, h_airfl, config.noise_power_w, K, config.bandwidth_hz
        )
        if clamped:
            logger.debug("Computation rate clamped to 0 at this operating point")

    lam = config.weight_lambda
    return RateBreakdown(
        sinr=sinr,
        rate_noma_user=rates,
        rate_noma_sum=rate_noma,
        mse=mse,
        signal_power=signal,
        rate_airfl=rate_airfl,
        rate_hybrid=(1.0 - lam) * rate_noma + lam * rate_airfl,
        airfl_clamped=clamped,
    )


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of checking an operating point against the original constraints."""

    power_ok: bool
    ordering_ok: bool
    qos_ok: bool
    mse_ok: bool
    violations: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.power_ok and self.ordering_ok and self.qos_ok and self.mse_ok


def check_feasibility(
    state: TransceiverState,
    coefficients: np.ndarray,
    config: NetworkConfig,
    breakdown: RateBreakdown | None = None,
) -> FeasibilityReport:
    """Check power boxes, decoding order, NOMA QoS and the aggregation MSE bound."""
    K, N = config.num_airfl, config.num_noma
    breakdown = breakdown or hybrid_rate(state, coefficients, config)
    gains = np.abs(np.asarray(coefficients)) ** 2
    violations: list[str] = []

    power_ok = bool(np.all(state.power <= config.power_budget + POWER_SLACK))
    if not power_ok:
        over = np.flatnonzero(state.power > config.power_budget + POWER_SLACK)
        violations.append(f"power budget exceeded by users {over.tolist()}")

    ordering_ok = ordering_satisfied(gains[decoding_order(gains, K)], K, N)
    if not ordering_ok:
        violations.append("an AirFL gain exceeds the weakest NOMA gain")

    threshold = config.min_rate_bps * (1.0 - QOS_RELATIVE_SLACK)
    short = np.flatnonzero(breakdown.rate_noma_user < threshold)
    qos_ok = short.size == 0
    if not qos_ok:
        violations.append(f"QoS violated for NOMA users {(short + K).tolist()}")

    mse_ok = (
        K == 0 or config.mse_relaxed or breakdown.mse <= config.mse_tolerance + MSE_ABSOLUTE_SLACK
    )
    if not mse_ok:
        violations.append(f"MSE {breakdown.mse:.3e} exceeds {config.mse_tolerance:.3e}")

    return FeasibilityReport(power_ok, ordering_ok, qos_ok, mse_ok, tuple(violations))


def evaluate_candidates(
    realization: ChannelRealization,
    candidates: np.ndarray,
    state: TransceiverState,
    config: NetworkConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Hybrid rate and feasibility of many reflection vectors at once.

    Args:
        realization: Channel draw
        candidates: (C, M) complex reflection vectors
        state: Fixed transceiver
        config: Scenario parameters

    Returns:
        Tuple of (hybrid rates, feasibility mask), both of length C
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=complex))
    if candidates.shape[1] != realization.num_elements:
        raise DimensionError(
            f"Candidates have {candidates.shape[1]} elements, expected {realization.num_elements}"
        )
    K, N = config.num_airfl, config.num_noma
    sigma2, bandwidth = config.noise_power_w, config.bandwidth_hz

    coefficients = np.conj(candidates) @ realization.phi_scaled.T
    gains = np.abs(coefficients) ** 2
    received = state.power[None, :] * gains
    interference_airfl = np.sum(received[:, :K], axis=1)

    order = np.argsort(gains[:, K:], axis=1, kind="stable")
    noma_sorted = np.take_along_axis(received[:, K:], order, axis=1)
    before = interference_airfl[:, None] + np.cumsum(noma_sorted, axis=1) - noma_sorted
    noma_rates = bandwidth * np.log2(1.0 + noma_sorted / (before + sigma2))
    rate_noma = np.sum(noma_rates, axis=1)

    power_ok = bool(np.all(state.power <= config.power_budget + POWER_SLACK))
    feasible = np.full(candidates.shape[0], power_ok)
    if N > 0:
        feasible &= np.all(noma_rates >= config.min_rate_bps * (1.0 - QOS_RELATIVE_SLACK), axis=1)
    if K > 0 and N > 0:
        feasible &= np.max(gains[:, :K], axis=1) <= np.min(gains[:, K:], axis=1)

    rate_airfl = np.zeros(candidates.shape[0])
    if K > 0:
        terms = state.a * coefficients[:, :K] * state.amplitude[None, :K]
        noise = abs(state.a) ** 2 * sigma2
        mse = (np.sum(np.abs(terms - 1.0) ** 2, axis=1) + noise) / K**2
        signal = (np.sum(np.abs(terms) ** 2, axis=1) + noise) / K**2
        with np.errstate(divide="ignore"):
            rate_airfl = np.maximum(bandwidth * np.log2(signal / mse), 0.0)
        if not config.mse_relaxed:
            feasible &= mse <= config.mse_tolerance + MSE_ABSOLUTE_SLACK

    lam = config.weight_lambda
    return (1.0 - lam) * rate_noma + lam * rate_airfl, feasible


def rate_upper_bound(realization: ChannelRealization, config: NetworkConfig) -> float:
    """Crude analytic cap B·(N+1)·log2(1 + Σ_i P_i·max_gain/σ²) on the hybrid rate."""
    max_gain = float(np.max(np.sum(np.abs(realization.phi_scaled), axis=1) ** 2))
    total = float(np.sum(config.power_budget)) * max_gain / config.noise_power_w
    return config.bandwidth_hz * (config.num_noma + 1) * math.log2(1.0 + total)
