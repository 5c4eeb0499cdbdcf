"""RIS phase design by semidefinite relaxation, randomization and quantization.

Reflection-dependent quantities are lifted with ``v̄ = [v; 1]`` and
``V = v̄ v̄^H`` so that every channel gain and alignment error is linear in
``V``:

    tr(Λ̊_i V) = |h̄_i|²,  tr(Λ̈_k V) = |a h̄_k x_k|²,  tr(Λ̂_k V) + 1 = |a h̄_k x_k - 1|².
"""

import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from enum import StrEnum

import cvxpy as cp
import numpy as np

from hybrid_rate_ris.errors import (
    DimensionError,
    EnumerationCapError,
    NoFeasibleCandidateError,
    ReflectionInfeasibleError,
)
from hybrid_rate_ris.model.channel import ChannelRealization, ReflectionMode, ReflectionState
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings, discrete_phase_set
from hybrid_rate_ris.model.metrics import TransceiverState, decoding_order, evaluate_candidates
from hybrid_rate_ris.solvers.backend import ConvexProblem, ProblemKind, SolveStatus, solve

logger = logging.getLogger(__name__)

MARGIN = 1e-7
TIE_TOLERANCE = 1e-12
ENUMERATION_CHUNK = 65536

CandidateScore = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class LiftedProblemData:
    """Lifted (M+1)×(M+1) matrices of every reflection-dependent quantity."""

    phi_scaled: np.ndarray
    phi_hat: np.ndarray
    lambda_ring: np.ndarray
    lambda_ddot: np.ndarray
    lambda_hat: np.ndarray

    @property
    def size(self) -> int:
        return int(self.lambda_ring.shape[-1])


def _block(top_left: np.ndarray, column: np.ndarray | None = None) -> np.ndarray:
    M = top_left.shape[0]
    out = np.zeros((M + 1, M + 1), dtype=complex)
    out[:M, :M] = top_left
    if column is not None:
        out[:M, M] = -column
        out[M, :M] = -np.conj(column)
    return out


def lift(
    realization: ChannelRealization, transceiver: TransceiverState, num_airfl: int
) -> LiftedProblemData:
    """Build the lifted matrices for a channel draw and a fixed transceiver.

    Args:
        realization: Channel draw
        transceiver: Fixed amplitudes, phases and receive scalar
        num_airfl: Number of AirFL users K

    Returns:
        Λ̊_i for all users and Λ̈_k, Λ̂_k for the AirFL users
    """
    phi = realization.phi_scaled
    if transceiver.p.shape[0] != phi.shape[0]:
        raise DimensionError(
            f"Transceiver has {transceiver.p.shape[0]} users, channel has {phi.shape[0]}"
        )
    phi_hat = transceiver.a * transceiver.amplitude[:num_airfl, None] * phi[:num_airfl]
    ring = np.stack([_block(np.outer(row, np.conj(row))) for row in phi])
    ddot = [_block(np.outer(row, np.conj(row))) for row in phi_hat]
    hat = [_block(np.outer(row, np.conj(row)), row) for row in phi_hat]
    empty = np.zeros((0, phi.shape[1] + 1, phi.shape[1] + 1), dtype=complex)
    return LiftedProblemData(
        phi_scaled=phi,
        phi_hat=phi_hat,
        lambda_ring=ring,
        lambda_ddot=np.stack(ddot) if ddot else empty,
        lambda_hat=np.stack(hat) if hat else empty,
    )


def lifted_point(v: np.ndarray) -> np.ndarray:
    """V = v̄ v̄^H with v̄ = [v; 1]."""
    v_bar = np.append(np.asarray(v, dtype=complex), 1.0)
    return np.outer(v_bar, np.conj(v_bar))


def traces(matrices: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Real parts of tr(A_i V) for a stack of matrices."""
    return np.real(np.einsum("uij,ji->u", matrices, V))


@dataclass
class _LiftedObjective:
    """Hybrid rate of a lifted point, in natural-log units, split as F - G."""

    lifted: LiftedProblemData
    weights: np.ndarray
    num_airfl: int
    lam: float
    noise_term: float

    def parts(self, V: np.ndarray) -> tuple[float, float]:
        K = self.num_airfl
        received = self.weights * traces(self.lifted.lambda_ring, V)
        f = g = 0.0
        if self.lam < 1:
            f += (1 - self.lam) * math.log(float(np.sum(received)) + 1.0)
            g += (1 - self.lam) * math.log(float(np.sum(received[:K])) + 1.0)
        if self.lam > 0 and K > 0:
            signal = float(np.sum(traces(self.lifted.lambda_ddot, V))) + self.noise_term
            error = float(np.sum(traces(self.lifted.lambda_hat, V))) + K + self.noise_term
            f += self.lam * math.log(max(signal, 1e-300))
            g += self.lam * math.log(max(error, 1e-300))
        return f, g

    def value(self, V: np.ndarray) -> float:
        f, g = self.parts(V)
        return f - g

    def gradient_g(self, V: np.ndarray) -> np.ndarray:
        K = self.num_airfl
        grad = np.zeros((self.lifted.size, self.lifted.size), dtype=complex)
        if self.lam < 1 and K > 0:
            ring = self.weights[:K, None, None] * self.lifted.lambda_ring[:K]
            interference = float(np.sum(traces(ring, V)))
            grad += (1 - self.lam) * np.sum(ring, axis=0) / (interference + 1.0)
        if self.lam > 0 and K > 0:
            error = float(np.sum(traces(self.lifted.lambda_hat, V))) + K + self.noise_term
            grad += self.lam * np.sum(self.lifted.lambda_hat, axis=0) / error
        return grad


@dataclass
class SdpResult:
    """Output of the DC loop over the lifted matrix."""

    V: np.ndarray
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    spectra: list[np.ndarray] = field(default_factory=list)


class _SdpBuilder:
    """Assembles the DC-linearized SDP for one linearization point."""

    def __init__(
        self,
        lifted: LiftedProblemData,
        transceiver: TransceiverState,
        order: np.ndarray,
        config: NetworkConfig,
    ):
        self.lifted = lifted
        self.config = config
        self.order = order
        K = config.num_airfl
        self.ring = lifted.lambda_ring / config.noise_power_w
        self.power = transceiver.power
        self.objective = _LiftedObjective(
            lifted=lifted,
            weights=transceiver.power / config.noise_power_w,
            num_airfl=K,
            lam=config.weight_lambda,
            noise_term=abs(transceiver.a) ** 2 * config.noise_power_w,
        )

    @staticmethod
    def _tr(A: np.ndarray, V: cp.Variable) -> cp.Expression:
        return cp.real(cp.trace(A @ V))

    def constraints(self, V: cp.Variable, groups: set[str]) -> list[cp.Constraint]:
        K, N = self.config.num_airfl, self.config.num_noma
        zeta = self.config.qos_threshold
        power = self.power
        gains = [self._tr(self.ring[i], V) for i in range(K + N)]
        rows: list[cp.Constraint] = [V >> 0, cp.real(cp.diag(V)) == 1]

        noma = list(self.order[K:])
        if "ordering" in groups and N > 0:
            if K > 0:
                rows += [gains[k] <= gains[noma[0]] for k in range(K)]
            rows += [gains[lo] <= gains[hi] for lo, hi in zip(noma, noma[1:], strict=False)]
        if "qos" in groups and N > 0 and zeta > 0:
            interference: cp.Expression = sum(
                (power[k] * gains[k] for k in range(K)), start=cp.Constant(0.0)
            )
            for user in noma:
                rows.append(power[user] * gains[user] >= zeta * (interference + 1.0 + MARGIN))
                interference = interference + power[user] * gains[user]
        if "mse" in groups and K > 0 and not self.config.mse_relaxed:
            error = sum(self._tr(A, V) for A in self.objective.lifted.lambda_hat)
            bound = self.config.mse_tolerance * K**2 * (1.0 - MARGIN)
            rows.append(error + K + self.objective.noise_term <= bound)
        return rows

    def problem(self, V_l: np.ndarray, groups: set[str]) -> tuple[ConvexProblem, cp.Variable]:
        K = self.config.num_airfl
        obj = self.objective
        V = cp.Variable((self.lifted.size, self.lifted.size), hermitian=True, name="V")
        terms: list[cp.Expression] = [-self._tr(obj.gradient_g(V_l), V)]
        if obj.lam < 1:
            received = sum(obj.weights[i] * self._tr(self.lifted.lambda_ring[i], V)
                           for i in range(self.config.num_users))
            terms.append((1 - obj.lam) * cp.log(received + 1.0))
        if obj.lam > 0 and K > 0:
            signal = sum(self._tr(A, V) for A in self.lifted.lambda_ddot)
            terms.append(obj.lam * cp.log(signal + obj.noise_term))
        problem = ConvexProblem(
            kind=ProblemKind.LOG_SUM,
            variables={"V": V},
            objective=sum(terms[1:], start=terms[0]),
            constraints=self.constraints(V, groups),
            psd=True,
            name="reflection-sdp",
        )
        return problem, V


def _diagnose(builder: _SdpBuilder, V_l: np.ndarray, settings: SolverSettings) -> str:
    """Name the first constraint group that makes the relaxed problem infeasible."""
    groups: set[str] = set()
    for group in ("ordering", "qos", "mse"):
        groups.add(group)
        problem, _ = builder.problem(V_l, groups)
        status = solve(problem, settings.backend_tolerance, settings.backend_max_iters).status
        if status == SolveStatus.INFEASIBLE:
            return group
    return "unknown"


def solve_relaxed_sdp(
    lifted: LiftedProblemData,
    transceiver: TransceiverState,
    config: NetworkConfig,
    V_init: np.ndarray,
    settings: SolverSettings | None = None,
) -> SdpResult:
    """DC loop over the lifted matrix with the rank-one constraint dropped.

    Args:
        lifted: Lifted matrices for the fixed transceiver
        transceiver: Fixed transceiver (power weights and receive scalar)
        config: Scenario parameters
        V_init: Feasible starting point with unit diagonal
        settings: Tolerance ε₃, cap L₃ and backend settings

    Returns:
        The last accepted V with its hybrid-rate trace (natural-log units)

    Raises:
        ReflectionInfeasibleError: Naming the ordering, QoS or MSE group
    """
    settings = settings or SolverSettings()
    gains = traces(lifted.lambda_ring, V_init)
    order = decoding_order(gains, config.num_airfl)
    builder = _SdpBuilder(lifted, transceiver, order, config)
    groups = {"ordering", "qos", "mse"}

    V_l = V_init
    value_l = builder.objective.value(V_l)
    result = SdpResult(V=V_l, trace=[value_l])
    for iteration in range(1, settings.reflection_max_iters + 1):
        problem, _ = builder.problem(V_l, groups)
        solution = solve(problem, settings.backend_tolerance, settings.backend_max_iters)
        if solution.status == SolveStatus.INFEASIBLE:
            if iteration == 1:
                group = _diagnose(builder, V_l, settings)
                raise ReflectionInfeasibleError(
                    f"Relaxed reflection problem infeasible ({group} constraints)", group
                )
            break
        if not solution.usable:
            logger.debug(f"Reflection SDP returned {solution.status}")
            break

        V_new = np.asarray(solution.values["V"], dtype=complex)
        V_new = (V_new + V_new.conj().T) / 2.0
        spectrum = np.linalg.eigvalsh(V_new)[::-1]
        result.spectra.append(spectrum)
        logger.debug(f"SDP iteration {iteration}: leading eigenvalues {spectrum[:3]}")

        value_new = builder.objective.value(V_new)
        if value_new < value_l - settings.monotone_slack * max(abs(value_l), 1.0):
            break
        converged = abs(value_new - value_l) <= settings.reflection_tolerance * max(
            abs(value_l), 1e-12
        )
        V_l, value_l = V_new, value_new
        result.V, result.iterations = V_l, iteration
        result.trace.append(value_l)
        if converged:
            break
    return result


@dataclass
class RankOneRecovery:
    """Recovered reflection and the candidate set it was chosen from."""

    v: np.ndarray
    candidates: np.ndarray
    rank_one: bool


def _unit_modulus(xi: np.ndarray) -> np.ndarray:
    """Map lifted vectors (M+1, C) to unit-modulus reflections (C, M)."""
    return np.exp(1j * (np.angle(xi[:-1]) - np.angle(xi[-1]))).T


def recover_rank_one(
    V: np.ndarray,
    count: int,
    rng: np.random.Generator,
    score: CandidateScore | None = None,
    rank_one_ratio: float = 1e-8,
) -> RankOneRecovery:
    """Extract a unit-modulus reflection from a relaxed solution.

    Args:
        V: Relaxed PSD solution
        count: Number of Gaussian randomization draws
        rng: Random generator for the draws
        score: Maps (C, M) candidates to (values, feasible mask); defaults to
            the quadratic form v̄^H V v̄ with every candidate feasible
        rank_one_ratio: Second/first eigenvalue ratio below which V is rank one

    Returns:
        The best feasible candidate

    Raises:
        NoFeasibleCandidateError: When no candidate passes the score's feasibility mask
    """
    V = (np.asarray(V, dtype=complex) + np.asarray(V, dtype=complex).conj().T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(V)
    eigvals = np.clip(eigvals[::-1], 0.0, None)
    eigvecs = eigvecs[:, ::-1]
    principal = _unit_modulus(eigvecs[:, :1])

    rank_one = eigvals.size < 2 or eigvals[1] <= rank_one_ratio * eigvals[0]
    if rank_one:
        candidates = principal
    else:
        shape = (V.shape[0], count)
        draws = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        xi = (eigvecs * np.sqrt(eigvals)) @ draws
        candidates = np.vstack([principal, _unit_modulus(xi)])

    if score is None:
        lifted = np.hstack([candidates, np.ones((candidates.shape[0], 1))])
        values = np.real(np.einsum("ci,ij,cj->c", lifted.conj(), V, lifted))
        feasible = np.ones(candidates.shape[0], dtype=bool)
    else:
        values, feasible = score(candidates)
    if not np.any(feasible):
        raise NoFeasibleCandidateError(f"None of {candidates.shape[0]} candidates is feasible")
    best = int(np.argmax(np.where(feasible, values, -np.inf)))
    return RankOneRecovery(v=candidates[best], candidates=candidates, rank_one=bool(rank_one))


def quantize_phases(theta: np.ndarray, phase_bits: int) -> np.ndarray:
    """Nearest discrete level index of every phase; ties go to the smaller phase."""
    levels = 2**phase_bits
    step = 2.0 * math.pi / levels
    u = np.mod(np.asarray(theta, dtype=float), 2.0 * math.pi) / step - 0.5
    lower = np.floor(u)
    dist_lower, dist_upper = u - lower, lower + 1.0 - u
    lo_idx = np.mod(lower, levels).astype(int)
    hi_idx = np.mod(lower + 1.0, levels).astype(int)
    tie = np.abs(dist_lower - dist_upper) <= TIE_TOLERANCE
    chosen = np.where(dist_lower < dist_upper, lo_idx, hi_idx)
    return np.where(tie, np.minimum(lo_idx, hi_idx), chosen)


def quantize(v: np.ndarray | ReflectionState, phase_bits: int) -> ReflectionState:
    """Map a continuous reflection to the nearest point of the discrete phase set."""
    theta = v.theta if isinstance(v, ReflectionState) else np.angle(np.asarray(v, dtype=complex))
    return ReflectionState.from_levels(quantize_phases(theta, phase_bits), phase_bits)


def enumerate_reflections(
    num_elements: int, phase_bits: int, chunk: int = ENUMERATION_CHUNK
) -> Iterator[np.ndarray]:
    """Yield every discrete level pattern, in chunks of (rows, M) integer arrays."""
    levels = 2**phase_bits
    total = levels**num_elements
    radix = levels ** np.arange(num_elements, dtype=np.int64)
    for start in range(0, total, chunk):
        index = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield (index[:, None] // radix[None, :]) % levels


def exhaustive_search(
    realization: ChannelRealization,
    transceiver: TransceiverState,
    config: NetworkConfig,
    settings: SolverSettings | None = None,
) -> ReflectionState:
    """Globally best feasible discrete reflection for a fixed transceiver.

    Raises:
        EnumerationCapError: When 2^(bM) exceeds the enumeration cap
        NoFeasibleCandidateError: When no discrete pattern is feasible
    """
    settings = settings or SolverSettings()
    required = config.phase_levels**config.num_elements
    if required > settings.enumeration_cap:
        raise EnumerationCapError(required, settings.enumeration_cap)

    phases = discrete_phase_set(config.phase_bits)
    best_value, best_levels = -math.inf, None
    for levels in enumerate_reflections(config.num_elements, config.phase_bits):
        values, feasible = evaluate_candidates(
            realization, np.exp(1j * phases[levels]), transceiver, config
        )
        values = np.where(feasible, values, -np.inf)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value, best_levels = float(values[idx]), levels[idx]

    logger.debug(f"Exhaustive search over {required} patterns: best {best_value:.6e}")
    if best_levels is None:
        raise NoFeasibleCandidateError(f"None of {required} discrete patterns is feasible")
    return ReflectionState.from_levels(best_levels, config.phase_bits)


class DesignMethod(StrEnum):
    EXHAUSTIVE = "exhaustive"
    RELAXATION = "relaxation"


@dataclass
class ReflectionDesign:
    reflection: ReflectionState
    method: DesignMethod
    sdp: SdpResult | None = None


def design_reflection(
    realization: ChannelRealization,
    transceiver: TransceiverState,
    current: ReflectionState,
    config: NetworkConfig,
    mode: ReflectionMode,
    rng: np.random.Generator,
    settings: SolverSettings | None = None,
) -> ReflectionDesign:
    """Full reflection block for a fixed transceiver.

    Small discrete instances are solved exhaustively; otherwise the relaxed
    SDP is solved from the current reflection, randomized candidates are
    quantized (in discrete mode) and the best feasible one is kept.

    Raises:
        InfeasibleError: When no feasible reflection is found; callers keep
            the current reflection
    """
    settings = settings or SolverSettings()
    discrete = mode == ReflectionMode.DISCRETE
    if discrete and config.phase_bits * config.num_elements <= settings.exhaustive_max_bits:
        reflection = exhaustive_search(realization, transceiver, config, settings)
        return ReflectionDesign(reflection=reflection, method=DesignMethod.EXHAUSTIVE)

    lifted = lift(realization, transceiver, config.num_airfl)
    sdp = solve_relaxed_sdp(lifted, transceiver, config, lifted_point(current.v), settings)

    def score(candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if discrete:
            phases = discrete_phase_set(config.phase_bits)
            levels = quantize_phases(np.angle(candidates), config.phase_bits)
            candidates = np.exp(1j * phases[levels])
        return evaluate_candidates(realization, candidates, transceiver, config)

    try:
        recovered = recover_rank_one(
            sdp.V, settings.randomization_count, rng, score, settings.rank_one_ratio
        )
    except NoFeasibleCandidateError:
        logger.warning("No feasible reflection among randomization candidates")
        raise
    reflection = (
        quantize(recovered.v, config.phase_bits)
        if discrete
        else ReflectionState.from_vector(recovered.v)
    )
    return ReflectionDesign(reflection=reflection, method=DesignMethod.RELAXATION, sdp=sdp)
