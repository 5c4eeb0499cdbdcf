"""Transmit power allocation for NOMA and AirFL users.

Powers are handled as fractions ``x_i = p_i² / P_i`` and combined gains as
SNR-normalized ``q_i = |h̄_i|² / σ²``. Objectives are in natural-log units;
multiplying by ``B / ln 2`` gives the hybrid rate in bit/s.
"""

import logging
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from hybrid_rate_ris.errors import MseInfeasibleError, QosInfeasibleError
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings
from hybrid_rate_ris.model.metrics import TransceiverState, decoding_order, hybrid_rate
from hybrid_rate_ris.solvers.backend import (
    ConvexProblem,
    LinearProgram,
    ProblemKind,
    SolveStatus,
    solve,
)

logger = logging.getLogger(__name__)

# Constraint tightening so solver tolerances cannot push iterates past the true bounds.
MARGIN = 1e-7
MAX_BACKOFF_STEPS = 40


@dataclass
class PowerSolveState:
    """Outcome of one power subproblem.

    Attributes:
        rho: Optimized powers p_i² of the users this block controls
        beta: Auxiliary alignment-error bound at the last accepted iterate
        iteration: Number of DC iterations run
        tolerance: Relative stopping tolerance
        max_iters: Iteration cap
        zeta: SINR threshold 2^(R_min/B) - 1
        trace: Hybrid rate (bit/s) after every accepted iterate
    """

    rho: np.ndarray
    beta: float = 0.0
    iteration: int = 0
    tolerance: float = 1e-6
    max_iters: int = 30
    zeta: float = 0.0
    trace: list[float] = field(default_factory=list)

    @property
    def p(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.rho, 0.0))


@dataclass
class PowerAllocation:
    """Transceiver after a full power-allocation pass and its hybrid-rate trace."""

    state: TransceiverState
    trace: list[float] = field(default_factory=list)
    iterations: int = 0


@dataclass
class _Normalized:
    """Power-subproblem data in decoding order."""

    q: np.ndarray
    budget: np.ndarray
    noma_order: np.ndarray
    zeta: float
    num_airfl: int

    @classmethod
    def build(cls, gains: np.ndarray, config: NetworkConfig) -> "_Normalized":
        gains = np.asarray(gains, dtype=float)
        order = decoding_order(gains, config.num_airfl)
        return cls(
            q=gains / config.noise_power_w,
            budget=config.power_budget,
            noma_order=order[config.num_airfl :],
            zeta=config.qos_threshold,
            num_airfl=config.num_airfl,
        )

    @property
    def snr(self) -> np.ndarray:
        """Received SNR of every user at full power."""
        return self.q * self.budget


def _noma_fractions(p_noma: np.ndarray, config: NetworkConfig) -> np.ndarray:
    return np.asarray(p_noma, dtype=float) ** 2 / config.power_budget[config.num_airfl :]


def build_noma_program(
    gains: np.ndarray, p_airfl: np.ndarray, config: NetworkConfig
) -> LinearProgram:
    """NOMA power LP in power fractions x_n, one variable per NOMA user.

    maximize Σ_n s_n x_n subject to s_n x_n >= ζ(I_A + Σ_{earlier} s_i x_i + 1).
    """
    data = _Normalized.build(gains, config)
    K, N = config.num_airfl, config.num_noma
    snr = data.snr
    interference = float(np.sum(data.q[:K] * np.asarray(p_airfl, dtype=float) ** 2))

    rows, rhs = [], []
    if data.zeta > 0:
        for position, user in enumerate(data.noma_order):
            row = np.zeros(N)
            row[user - K] = -snr[user]
            for earlier in data.noma_order[:position]:
                row[earlier - K] = data.zeta * snr[earlier]
            rows.append(row)
            rhs.append(-data.zeta * (interference + 1.0))
    return LinearProgram(
        c=snr[K:],
        A_ub=np.array(rows).reshape(-1, N),
        b_ub=np.array(rhs),
        lower=np.zeros(N),
        upper=np.ones(N),
        name="noma-power",
    )


def minimal_noma_fractions(
    gains: np.ndarray, p_airfl: np.ndarray, config: NetworkConfig
) -> np.ndarray:
    """Smallest power fractions meeting every QoS row, decoded weakest first.

    Raises:
        QosInfeasibleError: Naming the first user whose budget is insufficient
    """
    data = _Normalized.build(gains, config)
    K = config.num_airfl
    snr = data.snr
    interference = float(np.sum(data.q[:K] * np.asarray(p_airfl, dtype=float) ** 2))
    x = np.zeros(config.num_noma)
    for user in data.noma_order:
        if snr[user] <= 0:
            raise QosInfeasibleError(f"NOMA user {user} has a zero channel gain", user=int(user))
        needed = data.zeta * (interference + 1.0) / snr[user]
        if needed > 1.0:
            raise QosInfeasibleError(
                f"NOMA user {user} needs {needed:.3f}x its power budget to meet the rate target",
                user=int(user),
            )
        x[user - K] = needed
        interference += snr[user] * needed
    return x


def solve_noma_power(
    gains: np.ndarray,
    p_airfl: np.ndarray,
    config: NetworkConfig,
    settings: SolverSettings | None = None,
) -> np.ndarray:
    """Optimal NOMA amplitudes for fixed AirFL powers.

    Args:
        gains: Combined gains |h̄_i|² of all users
        p_airfl: Fixed AirFL amplitudes
        config: Scenario parameters
        settings: Backend tolerances

    Returns:
        Amplitudes p_n of the NOMA users, in user order
    """
    settings = settings or SolverSettings()
    if config.qos_threshold == 0:
        return np.sqrt(config.power_budget[config.num_airfl :])

    minimal_noma_fractions(gains, p_airfl, config)
    program = build_noma_program(gains, p_airfl, config)
    solution = solve(program.to_problem(), settings.backend_tolerance, settings.backend_max_iters)
    if solution.status == SolveStatus.INFEASIBLE:
        raise QosInfeasibleError("NOMA QoS rows are jointly infeasible")
    if not solution.usable:
        logger.warning(f"NOMA power LP returned {solution.status}; using minimal powers")
        x = minimal_noma_fractions(gains, p_airfl, config)
    else:
        x = np.clip(np.asarray(solution.values["x"], dtype=float), 0.0, 1.0)
    return np.sqrt(x * config.power_budget[config.num_airfl :])


class _AirflProblem:
    """AirFL power subproblem with NOMA powers fixed."""

    def __init__(
        self,
        coefficients: np.ndarray,
        a: complex,
        p_noma: np.ndarray,
        config: NetworkConfig,
    ):
        K = config.num_airfl
        self.config = config
        self.data = _Normalized.build(np.abs(coefficients) ** 2, config)
        self.lam = config.weight_lambda
        self.budget = config.power_budget[:K]
        self.qa = self.data.q[:K] * self.budget
        self.g = np.abs(a * np.asarray(coefficients)[:K])
        self.noise_term = abs(a) ** 2 * config.noise_power_w
        x_noma = _noma_fractions(p_noma, config)
        self.snr_noma = self.data.snr[K:] * x_noma
        self.noma_total = float(np.sum(self.snr_noma))
        self.mse_cap = (
            math.inf if config.mse_relaxed else config.mse_tolerance * K**2 - self.noise_term
        )

        # QoS rows: ζ·qa·x <= snr_n x_n - ζ(E_n + 1), E_n the earlier NOMA interference.
        self.qos_users: list[int] = []
        self.qos_rhs: list[float] = []
        if self.data.zeta > 0:
            earlier = 0.0
            for user in self.data.noma_order:
                own = self.snr_noma[user - K]
                self.qos_users.append(int(user))
                self.qos_rhs.append(own - self.data.zeta * (earlier + 1.0))
                earlier += own

    def alignment(self, x: np.ndarray) -> float:
        return float(np.sum((self.g * np.sqrt(self.budget * x) - 1.0) ** 2))

    def alignment_expr(self, x: cp.Variable) -> cp.Expression:
        return cp.sum(
            cp.multiply(self.g**2 * self.budget, x)
            - 2.0 * cp.multiply(self.g * np.sqrt(self.budget), cp.sqrt(x))
            + 1.0
        )

    def objective(self, x: np.ndarray) -> float:
        """Hybrid rate in natural-log units at AirFL fractions x."""
        interference = float(self.qa @ x)
        value = 0.0
        if self.lam < 1:
            value += (1 - self.lam) * (
                math.log(self.noma_total + interference + 1.0) - math.log(interference + 1.0)
            )
        if self.lam > 0:
            signal = float((self.g**2 * self.budget) @ x) + self.noise_term
            error = self.alignment(x) + self.noise_term
            value += self.lam * max(math.log(signal / error), 0.0)
        return value

    def feasible(self, x: np.ndarray) -> bool:
        mse_ok = self.alignment(x) <= self.mse_cap * (1.0 + 1e-9) + 1e-12
        interference = self.data.zeta * float(self.qa @ x)
        qos_ok = all(interference <= rhs * (1.0 + 1e-9) + 1e-12 for rhs in self.qos_rhs)
        return mse_ok and qos_ok

    def qos_constraints(self, interference: cp.Expression) -> list[cp.Constraint]:
        constraints = []
        for user, rhs in zip(self.qos_users, self.qos_rhs, strict=True):
            if rhs < 0:
                raise QosInfeasibleError(
                    f"NOMA user {user} misses its rate target even without AirFL interference",
                    user=user,
                )
            constraints.append(self.data.zeta * interference <= rhs * (1.0 - MARGIN))
        return constraints

    def project(self, settings: SolverSettings) -> np.ndarray:
        """Phase-1: minimum-alignment-error amplitudes subject to QoS and boxes."""
        K = self.config.num_airfl
        y = cp.Variable(K, name="y")
        constraints = [y >= 0, y <= 1]
        constraints += self.qos_constraints(cp.sum(cp.multiply(self.qa, cp.square(y))))
        problem = ConvexProblem(
            kind=ProblemKind.QUADRATIC,
            variables={"y": y},
            objective=cp.sum_squares(cp.multiply(self.g * np.sqrt(self.budget), y) - 1.0),
            constraints=constraints,
            name="airfl-phase1",
        )
        solution = solve(problem, settings.backend_tolerance, settings.backend_max_iters)
        if solution.status == SolveStatus.INFEASIBLE:
            raise QosInfeasibleError("AirFL interference cannot be reduced enough for NOMA QoS")
        if not solution.usable:
            raise MseInfeasibleError(f"Phase-1 projection failed with status {solution.status}")
        x = np.clip(np.asarray(solution.values["y"], dtype=float), 0.0, 1.0) ** 2
        if self.alignment(x) > self.mse_cap * (1.0 - MARGIN):
            raise MseInfeasibleError(
                f"Aggregation MSE cannot reach {self.config.mse_tolerance:.3e} at any power level"
            )
        return x

    def step(self, x_l: np.ndarray, settings: SolverSettings) -> np.ndarray | None:
        """One DC iteration: maximize F minus the linearization of G at x_l."""
        K = self.config.num_airfl
        x = cp.Variable(K, name="x")
        beta = cp.Variable(name="beta")
        interference = self.qa @ x
        beta_l = self.alignment(x_l)

        terms: list[cp.Expression] = []
        constraints = [x >= 0, x <= 1, beta >= self.alignment_expr(x)]
        if self.lam < 1:
            grad_x = (1 - self.lam) * self.qa / (float(self.qa @ x_l) + 1.0)
            terms.append((1 - self.lam) * cp.log(self.noma_total + interference + 1.0))
            terms.append(-(grad_x @ x))
        if self.lam > 0:
            signal = (self.g**2 * self.budget) @ x + self.noise_term
            terms.append(self.lam * cp.log(signal))
            terms.append(-(self.lam / (beta_l + self.noise_term)) * beta)
        if math.isfinite(self.mse_cap):
            constraints.append(self.alignment_expr(x) <= self.mse_cap * (1.0 - MARGIN))
        constraints += self.qos_constraints(interference)

        problem = ConvexProblem(
            kind=ProblemKind.LOG_SUM,
            variables={"x": x, "beta": beta},
            objective=sum(terms[1:], start=terms[0]),
            constraints=constraints,
            name="airfl-dc",
        )
        solution = solve(problem, settings.backend_tolerance, settings.backend_max_iters)
        if not solution.usable:
            logger.debug(f"AirFL DC step returned {solution.status}")
            return None
        return np.clip(np.asarray(solution.values["x"], dtype=float), 0.0, 1.0)


def solve_airfl_power(
    coefficients: np.ndarray,
    a: complex,
    p_noma: np.ndarray,
    init: np.ndarray | None,
    config: NetworkConfig,
    settings: SolverSettings | None = None,
) -> PowerSolveState:
    """DC-programming loop for the AirFL powers with NOMA powers fixed.

    AirFL users pre-rotate so that a·h̄_k·p_k is real and non-negative; only
    the amplitudes are optimized here.

    Args:
        coefficients: Combined coefficients h̄_i of all users
        a: Receive scalar
        p_noma: Fixed NOMA amplitudes
        init: Starting AirFL amplitudes; None starts from half power
        config: Scenario parameters
        settings: Tolerance ε₁, cap L₁ and backend settings

    Returns:
        The last accepted iterate and the hybrid-rate trace

    Raises:
        MseInfeasibleError: No AirFL power level meets the MSE bound
        QosInfeasibleError: The fixed NOMA powers cannot meet QoS
    """
    settings = settings or SolverSettings()
    K = config.num_airfl
    problem = _AirflProblem(coefficients, a, p_noma, config)
    to_rate = config.bandwidth_hz / math.log(2.0)

    x_l = np.full(K, 0.5) if init is None else np.clip(np.asarray(init) ** 2 / problem.budget, 0, 1)
    if not problem.feasible(x_l):
        logger.debug("AirFL power start violates MSE or QoS; projecting")
        x_l = problem.project(settings)

    value_l = problem.objective(x_l)
    trace = [value_l * to_rate]
    iteration = 0
    while iteration < settings.power_max_iters:
        iteration += 1
        x_new = problem.step(x_l, settings)
        if x_new is None or not problem.feasible(x_new):
            break
        value_new = problem.objective(x_new)
        if value_new < value_l - settings.monotone_slack * max(abs(value_l), 1.0):
            logger.debug(f"AirFL DC step lowered the objective ({value_new:.6e} < {value_l:.6e})")
            break
        converged = abs(value_new - value_l) <= settings.power_tolerance * max(abs(value_l), 1e-12)
        x_l, value_l = x_new, value_new
        trace.append(value_l * to_rate)
        logger.debug(f"AirFL DC iteration {iteration}: hybrid rate {trace[-1]:.6e}")
        if converged:
            break

    return PowerSolveState(
        rho=x_l * problem.budget,
        beta=problem.alignment(x_l),
        iteration=iteration,
        tolerance=settings.power_tolerance,
        max_iters=settings.power_max_iters,
        zeta=config.qos_threshold,
        trace=trace,
    )


def aligned_phases(coefficients: np.ndarray, a: complex, num_airfl: int) -> np.ndarray:
    """Transmit phases rotating every AirFL product a·h̄_k·e^{jψ_k} onto the real axis."""
    phases = np.zeros(len(coefficients))
    phases[:num_airfl] = -np.angle(a * np.asarray(coefficients)[:num_airfl])
    return phases


def _noma_with_backoff(
    gains: np.ndarray, p_airfl: np.ndarray, config: NetworkConfig, settings: SolverSettings
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the NOMA LP, halving AirFL powers while QoS is unattainable."""
    for step in range(MAX_BACKOFF_STEPS + 1):
        try:
            return solve_noma_power(gains, p_airfl, config, settings), p_airfl
        except QosInfeasibleError:
            if step == MAX_BACKOFF_STEPS or not np.any(p_airfl > 0):
                raise
            p_airfl = p_airfl / math.sqrt(2.0)
            if step == MAX_BACKOFF_STEPS - 1:
                p_airfl = np.zeros_like(p_airfl)
    raise QosInfeasibleError("NOMA QoS unattainable")


def allocate_power(
    coefficients: np.ndarray,
    a: complex,
    init: TransceiverState,
    config: NetworkConfig,
    settings: SolverSettings | None = None,
) -> PowerAllocation:
    """Alternate the NOMA LP and the AirFL DC loop until the hybrid rate settles.

    Args:
        coefficients: Combined coefficients h̄_i of all users
        a: Receive scalar (unused when there are no AirFL users)
        init: Current transceiver; its AirFL amplitudes seed the DC loop
        config: Scenario parameters
        settings: Tolerance ε₁, cap L₁ and backend settings

    Returns:
        The new transceiver (receive scalar unchanged) and the hybrid-rate trace
    """
    settings = settings or SolverSettings()
    coefficients = np.asarray(coefficients, dtype=complex)
    gains = np.abs(coefficients) ** 2
    K, N = config.num_airfl, config.num_noma
    phases = aligned_phases(coefficients, a, K) if K else init.tx_phase.copy()
    if K:
        phases[K:] = init.tx_phase[K:]

    def pack(p_airfl: np.ndarray, p_noma: np.ndarray) -> TransceiverState:
        return TransceiverState(p=np.concatenate([p_airfl, p_noma]), a=a, tx_phase=phases)

    def rate(state: TransceiverState) -> float:
        return hybrid_rate(state, coefficients, config).rate_hybrid

    p_airfl = init.p[:K].copy()
    if K == 0:
        state = pack(p_airfl, solve_noma_power(gains, p_airfl, config, settings))
        return PowerAllocation(state=state, trace=[rate(state)], iterations=1)

    if N == 0 or config.qos_threshold == 0:
        p_noma = np.sqrt(config.power_budget[K:])
        result = solve_airfl_power(coefficients, a, p_noma, p_airfl, config, settings)
        state = pack(result.p, p_noma)
        return PowerAllocation(state=state, trace=[rate(state)], iterations=result.iteration)

    trace: list[float] = []
    state = init
    iterations = 0
    while iterations < settings.power_max_iters:
        iterations += 1
        p_noma, p_airfl = _noma_with_backoff(gains, p_airfl, config, settings)
        result = solve_airfl_power(coefficients, a, p_noma, p_airfl, config, settings)
        candidate = pack(result.p, p_noma)
        value = rate(candidate)
        if trace and value < trace[-1] - settings.monotone_slack * abs(trace[-1]):
            logger.debug(f"Power alternation stopped: rate fell to {value:.6e}")
            break
        previous = trace[-1] if trace else None
        state, p_airfl = candidate, result.p
        trace.append(value)
        logger.debug(f"Power alternation {iterations}: hybrid rate {value:.6e}")
        if previous is not None and abs(value - previous) <= settings.power_tolerance * max(
            abs(previous), 1e-12
        ):
            break

    return PowerAllocation(state=state, trace=trace, iterations=iterations)
