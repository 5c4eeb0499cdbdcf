"""Receive-scalar design for over-the-air aggregation.

Works in the reciprocal variable ``ā = 1/a``. With ``c_k = h̄_k x_k`` the
computation rate is maximized by minimizing ``Σ_k |ā - c_k|²`` and the MSE
bound reads ``Σ_k |c_k - ā|² + σ² <= ε₀ K² |ā|²``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from hybrid_rate_ris.errors import DegenerateChannelError, DomainError, MseInfeasibleError
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-12
# Relative headroom kept under the MSE cap by the interference-limited start.
START_MARGIN = 1e-6


@dataclass
class ScalarSolveState:
    """Iterates of the receive-scalar SCA loop."""

    a_bar: complex
    iterates: list[complex] = field(default_factory=list)
    trace: list[float] = field(default_factory=list)
    tolerance: float = 1e-6
    max_iters: int = 30

    @property
    def a(self) -> complex:
        return 1.0 / self.a_bar

    @property
    def iterations(self) -> int:
        return max(len(self.iterates) - 1, 0)


def _products(coefficients: np.ndarray, amplitude: np.ndarray) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=complex).reshape(-1)
    amplitude = np.asarray(amplitude, dtype=complex).reshape(-1)
    if coefficients.shape != amplitude.shape:
        raise DomainError(
            f"Coefficients {coefficients.shape} and amplitudes {amplitude.shape} differ"
        )
    if coefficients.size == 0:
        raise DomainError("Receive-scalar design needs at least one AirFL user")
    return coefficients * amplitude


def closed_form_scalar(
    coefficients: np.ndarray, amplitude: np.ndarray, num_airfl: int
) -> complex:
    """Reciprocal of the average effective channel, a = K / Σ_k h̄_k x_k."""
    total = complex(np.sum(_products(coefficients, amplitude)))
    if total == 0:
        raise DegenerateChannelError("Sum of effective AirFL channels is zero")
    return num_airfl / total


def _constraint_gap(
    products: np.ndarray, a_bar: complex, noise_power: float, bound: float
) -> float:
    """Σ|c_k - ā|² + σ² - ε₀K²|ā|²; non-positive when the MSE bound holds."""
    K = products.shape[0]
    error = float(np.sum(np.abs(products - a_bar) ** 2))
    return error + noise_power - bound * K**2 * abs(a_bar) ** 2


def _rate(products: np.ndarray, a_bar: complex, noise_power: float, bandwidth_hz: float) -> float:
    signal = float(np.sum(np.abs(products) ** 2)) + noise_power
    error = float(np.sum(np.abs(products - a_bar) ** 2)) + noise_power
    return max(bandwidth_hz * math.log2(signal / error), 0.0)


def feasible_scalar_on_ray(
    coefficients: np.ndarray, amplitude: np.ndarray, config: NetworkConfig
) -> complex:
    """Best MSE-feasible ā on the line through the average effective channel.

    The feasible set is symmetric about that line, so this is the exact
    optimum of the receive-scalar problem.

    Raises:
        MseInfeasibleError: When no ā meets the MSE bound
    """
    products = _products(coefficients, amplitude)
    K = products.shape[0]
    mean = complex(np.mean(products))
    m = abs(mean) ** 2
    if m == 0:
        raise DegenerateChannelError("Average effective AirFL channel is zero")
    if config.mse_relaxed:
        return mean

    spread = float(np.sum(np.abs(products - mean) ** 2))
    eps = config.mse_tolerance
    # (K - ε₀K²) m t² - 2 K m t + (K m + S + σ²) <= 0 for ā = t·mean
    qa = (K - eps * K**2) * m
    qb = -2.0 * K * m
    qc = K * m + spread + config.noise_power_w

    if abs(qa) <= 1e-15 * abs(qb):
        t = max(1.0, -qc / qb)
        return t * mean
    disc = qb**2 - 4.0 * qa * qc
    if disc < 0:
        raise MseInfeasibleError(
            f"No receive scalar reaches MSE {eps:.3e} for these transmit amplitudes"
        )
    roots = sorted([(-qb - math.sqrt(disc)) / (2 * qa), (-qb + math.sqrt(disc)) / (2 * qa)])
    if qa > 0:
        t = min(max(1.0, roots[0]), roots[1])
    else:
        t = 1.0 if (1.0 <= roots[0] or 1.0 >= roots[1]) else min(roots, key=lambda r: abs(r - 1))
    return t * mean


def mse_reachable_scalar(
    coefficients: np.ndarray, budget: np.ndarray, config: NetworkConfig
) -> tuple[float, np.ndarray]:
    """Largest real receive scalar whose aligned amplitudes meet the MSE bound.

    For a scalar t every AirFL user transmits p_k = min(√P_k, 1/(t|h̄_k|)),
    which zeroes its alignment error unless its budget runs out. The MSE at t,
    ``Σ_k (min(t c_k, 1) - 1)² + t²σ²`` with ``c_k = |h̄_k|√P_k``, is convex
    in t. Among the scalars that meet the bound the largest is returned; it
    asks for the least AirFL power and so leaves NOMA users the least
    interference.

    Args:
        coefficients: Combined coefficients of the AirFL users
        budget: Power budgets of the AirFL users in watts
        config: Scenario parameters

    Returns:
        The scalar t and the AirFL amplitudes; users must pre-rotate by
        -arg(h̄_k) so that t·h̄_k·e^{jψ_k} is real

    Raises:
        MseInfeasibleError: When the MSE bound is out of reach at every scalar
    """
    magnitude = np.abs(np.asarray(coefficients, dtype=complex).reshape(-1))
    budget = np.asarray(budget, dtype=float).reshape(-1)
    if magnitude.size == 0:
        raise DomainError("Receive-scalar design needs at least one AirFL user")
    if magnitude.shape != budget.shape:
        raise DomainError(f"Coefficients {magnitude.shape} and budgets {budget.shape} differ")
    reach = magnitude * np.sqrt(budget)
    if not np.all(reach > 0):
        raise DegenerateChannelError("An AirFL user has no effective channel")

    K = magnitude.size
    sigma2 = config.noise_power_w
    cap = math.inf if config.mse_relaxed else config.mse_tolerance * K**2 * (1.0 - START_MARGIN)
    saturation = 1.0 / float(np.min(reach))

    def mse(t: float) -> float:
        return float(np.sum((np.minimum(t * reach, 1.0) - 1.0) ** 2)) + t**2 * sigma2

    def amplitudes(t: float) -> np.ndarray:
        return np.minimum(np.sqrt(budget), 1.0 / (t * magnitude))

    if mse(saturation) <= cap:
        # Past saturation only the noise term grows.
        t = saturation
        if sigma2 > 0 and math.isfinite(cap):
            t = max(saturation, math.sqrt(cap / sigma2))
        return t, amplitudes(t)

    best = minimize_scalar(
        mse, bounds=(0.0, saturation), method="bounded",
        options={"xatol": 1e-12 * saturation},
    )
    if best.fun > cap:
        raise MseInfeasibleError(
            f"Aggregation MSE bottoms out at {best.fun / K**2:.3e} "
            f"above {config.mse_tolerance:.3e}"
        )
    t = float(brentq(lambda s: mse(s) - cap, best.x, saturation, xtol=1e-14 * saturation))
    if mse(t) > cap:
        t = float(best.x)
    return t, amplitudes(t)


def sca_scalar(
    coefficients: np.ndarray,
    amplitude: np.ndarray,
    config: NetworkConfig,
    init: complex | None = None,
    settings: SolverSettings | None = None,
) -> ScalarSolveState:
    """Successive convex approximation of the receive scalar under the MSE bound.

    Each iterate lower-bounds ε₀K²|ā|² by its tangent at ā_l, which turns the
    MSE bound into a disc; the step projects the unconstrained optimum onto it.

    Args:
        coefficients: Combined coefficients of the AirFL users
        amplitude: Complex transmit amplitudes of the AirFL users
        config: Scenario parameters
        init: Starting ā; defaults to the average effective channel
        settings: Tolerance ε₂ and cap L₂

    Returns:
        The final ā with its iterate and computation-rate traces
    """
    settings = settings or SolverSettings()
    products = _products(coefficients, amplitude)
    K = products.shape[0]
    sigma2, bandwidth = config.noise_power_w, config.bandwidth_hz
    state = ScalarSolveState(
        a_bar=0j, tolerance=settings.scalar_tolerance, max_iters=settings.scalar_max_iters
    )

    if config.mse_relaxed:
        state.a_bar = 1.0 / closed_form_scalar(coefficients, amplitude, K)
        state.iterates.append(state.a_bar)
        state.trace.append(_rate(products, state.a_bar, sigma2, bandwidth))
        return state

    eps = config.mse_tolerance
    mean = complex(np.mean(products))
    spread = float(np.sum(np.abs(products - mean) ** 2))
    a_bar = mean if init is None else complex(init)
    if a_bar == 0 or _constraint_gap(products, a_bar, sigma2, eps) > FEASIBILITY_TOLERANCE:
        logger.debug("Receive-scalar start violates the MSE bound; projecting along the ray")
        a_bar = feasible_scalar_on_ray(coefficients, amplitude, config)

    objective = float(np.sum(np.abs(products - a_bar) ** 2))
    state.iterates.append(a_bar)
    state.trace.append(_rate(products, a_bar, sigma2, bandwidth))

    for iteration in range(1, settings.scalar_max_iters + 1):
        center = mean + eps * K * a_bar
        radius_sq = (
            2.0 * eps * K**2 * (np.conj(a_bar) * mean).real
            + eps**2 * K**3 * abs(a_bar) ** 2
            - eps * K**2 * abs(a_bar) ** 2
            - spread
            - sigma2
        ) / K
        if radius_sq < 0:
            logger.debug(f"Linearized MSE disc is empty at iteration {iteration}")
            break
        offset = mean - center
        distance = abs(offset)
        radius = math.sqrt(radius_sq)
        candidate = mean if distance <= radius else center + offset * (radius / distance)

        value = float(np.sum(np.abs(products - candidate) ** 2))
        if value > objective + settings.monotone_slack * max(objective, 1.0):
            break
        rate_before = state.trace[-1]
        a_bar, objective = candidate, value
        state.iterates.append(a_bar)
        state.trace.append(_rate(products, a_bar, sigma2, bandwidth))
        logger.debug(f"SCA iteration {iteration}: computation rate {state.trace[-1]:.6e}")
        settled = settings.scalar_tolerance * max(rate_before, 1e-12)
        if abs(state.trace[-1] - rate_before) <= settled:
            break

    state.a_bar = a_bar
    return state
