"""Uniform contract for the convex subproblems emitted by the solvers.

Problems are modelled with cvxpy. Linear programs without a PSD block go to
HiGHS through the SCIPY interface so the optimum is a vertex; every other
family is solved by Clarabel, with SCS as a single fallback when Clarabel
errors out.
"""

import itertools
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import cvxpy as cp
import numpy as np

from hybrid_rate_ris.errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-7
DEFAULT_MAX_ITERS = 200
MAX_ORACLE_DIMENSIONS = 3
MAX_GRID_POINTS = 50_000_000


class ProblemKind(StrEnum):
    LINEAR = "linear-objective"
    LOG_SUM = "concave-log-sum"
    QUADRATIC = "convex-quadratic"


class SolveStatus(StrEnum):
    OPTIMAL = "optimal"
    INACCURATE = "optimal-inaccurate"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max-iter"
    SOLVER_ERROR = "solver-error"


_CVXPY_STATUS = {
    "optimal": SolveStatus.OPTIMAL,
    "optimal_inaccurate": SolveStatus.INACCURATE,
    "infeasible": SolveStatus.INFEASIBLE,
    "infeasible_inaccurate": SolveStatus.INFEASIBLE,
    "unbounded": SolveStatus.UNBOUNDED,
    "unbounded_inaccurate": SolveStatus.UNBOUNDED,
    "infeasible_or_unbounded": SolveStatus.INFEASIBLE,
    "user_limit": SolveStatus.MAX_ITER,
    "solver_error": SolveStatus.SOLVER_ERROR,
}


@dataclass
class ConvexProblem:
    """One convex subproblem.

    Linear and log-sum problems are maximized; convex-quadratic problems are
    minimized.
    """

    kind: ProblemKind
    variables: dict[str, cp.Variable]
    objective: cp.Expression
    constraints: list[cp.Constraint] = field(default_factory=list)
    psd: bool = False
    name: str = "problem"

    def __post_init__(self) -> None:
        declared = {id(var) for var in self.variables.values()}
        for item in [self.objective, *self.constraints]:
            unknown = [var.name() for var in item.variables() if id(var) not in declared]
            if unknown:
                raise DomainError(f"{self.name}: undeclared variables {unknown}")
            for const in item.constants():
                if not np.all(np.isfinite(np.asarray(const.value))):
                    raise DomainError(f"{self.name}: non-finite problem data")

    @property
    def maximize(self) -> bool:
        return self.kind != ProblemKind.QUADRATIC

    def to_cvxpy(self) -> cp.Problem:
        sense = cp.Maximize if self.maximize else cp.Minimize
        return cp.Problem(sense(self.objective), self.constraints)


@dataclass
class BackendSolution:
    """Result of a backend or oracle solve."""

    values: dict[str, Any]
    objective: float
    status: SolveStatus
    iterations: int = 0
    primal_residual: float = 0.0
    solver: str = ""

    @property
    def usable(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE)


def _primal_residual(constraints: Sequence[cp.Constraint]) -> float:
    residual = 0.0
    for constraint in constraints:
        try:
            violation = np.asarray(constraint.violation(), dtype=float)
        except (ValueError, TypeError):
            return math.inf
        if violation.size:
            residual = max(residual, float(np.max(violation)))
    return residual


def _run(problem: cp.Problem, vertex_lp: bool, tolerance: float, max_iters: int) -> str:
    if vertex_lp:
        problem.solve(solver=cp.SCIPY, scipy_options={"method": "highs"})
        return cp.SCIPY
    try:
        problem.solve(
            solver=cp.CLARABEL,
            tol_gap_abs=tolerance,
            tol_gap_rel=tolerance,
            tol_feas=tolerance,
            max_iter=max_iters,
        )
        return cp.CLARABEL
    except cp.error.SolverError as exc:
        logger.warning(f"Clarabel failed ({exc}); retrying with SCS")
    problem.solve(
        solver=cp.SCS, eps_abs=max(tolerance, 1e-6), eps_rel=max(tolerance, 1e-6),
        max_iters=max(max_iters, 1) * 100,
    )
    return cp.SCS


def solve(
    problem: ConvexProblem,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> BackendSolution:
    """Solve a convex subproblem.

    Infeasible and unbounded problems do not raise; they are reported
    through the returned status.

    Args:
        problem: The problem to solve
        tolerance: Feasibility and duality-gap tolerance
        max_iters: Interior-point iteration cap

    Returns:
        Variable values, objective, status, iteration count and the largest
        constraint violation
    """
    prob = problem.to_cvxpy()
    if not prob.is_dcp():
        raise DomainError(f"{problem.name} is not a disciplined convex program")

    try:
        vertex_lp = problem.kind == ProblemKind.LINEAR and not problem.psd
        solver = _run(prob, vertex_lp, tolerance, max_iters)
    except cp.error.SolverError as exc:
        logger.warning(f"{problem.name}: all solvers failed: {exc}")
        return BackendSolution(values={}, objective=math.nan, status=SolveStatus.SOLVER_ERROR)

    status = _CVXPY_STATUS.get(prob.status, SolveStatus.SOLVER_ERROR)
    stats = prob.solver_stats
    iterations = int(stats.num_iters) if stats is not None and stats.num_iters else 0
    if status not in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE):
        logger.debug(f"{problem.name}: {solver} returned {prob.status}")
        return BackendSolution(
            values={}, objective=math.nan, status=status, iterations=iterations, solver=solver
        )

    residual = _primal_residual(problem.constraints)
    if status == SolveStatus.OPTIMAL and residual > tolerance:
        logger.debug(f"{problem.name}: residual {residual:.2e} above {tolerance:.0e}")
        status = SolveStatus.INACCURATE
    values = {name: var.value for name, var in problem.variables.items()}
    logger.debug(
        f"{problem.name}: {status} objective={prob.value:.6e} "
        f"iters={iterations} residual={residual:.2e} ({solver})"
    )
    return BackendSolution(
        values=values,
        objective=float(prob.value),
        status=status,
        iterations=iterations,
        primal_residual=residual,
        solver=solver,
    )


@dataclass
class LinearProgram:
    """maximize c·x subject to A_ub x <= b_ub and lower <= x <= upper."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    name: str = "lp"

    @property
    def dimension(self) -> int:
        return int(np.asarray(self.c).shape[0])

    def to_problem(self) -> ConvexProblem:
        x = cp.Variable(self.dimension, name="x")
        constraints = [x >= self.lower, x <= self.upper]
        if len(self.b_ub):
            constraints.append(self.A_ub @ x <= self.b_ub)
        return ConvexProblem(
            kind=ProblemKind.LINEAR,
            variables={"x": x},
            objective=self.c @ x,
            constraints=constraints,
            name=self.name,
        )


@dataclass
class GridProblem:
    """Low-dimensional problem for grid search.

    ``objective`` and ``feasible`` receive an (n_points, dim) array and return
    one value (or flag) per point.
    """

    objective: Callable[[np.ndarray], np.ndarray]
    bounds: Sequence[tuple[float, float]]
    feasible: Callable[[np.ndarray], np.ndarray] | None = None
    maximize: bool = False


def _oracle_grid(problem: GridProblem, resolution: float) -> BackendSolution:
    axes = [np.arange(lo, hi + resolution / 2, resolution) for lo, hi in problem.bounds]
    total = math.prod(len(axis) for axis in axes)
    if total > MAX_GRID_POINTS:
        raise DomainError(f"Grid of {total} points is too large; coarsen the resolution")

    sign = 1.0 if problem.maximize else -1.0
    best_value, best_point = -math.inf, None
    # Chunk over the first axis to bound memory.
    for first in axes[0]:
        mesh = np.meshgrid(np.array([first]), *axes[1:], indexing="ij")
        points = np.stack([m.reshape(-1) for m in mesh], axis=1)
        values = sign * np.asarray(problem.objective(points), dtype=float)
        if problem.feasible is not None:
            values = np.where(problem.feasible(points), values, -math.inf)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value, best_point = float(values[idx]), points[idx]

    if best_point is None:
        return BackendSolution({}, math.nan, SolveStatus.INFEASIBLE, total, solver="grid")
    return BackendSolution(
        {"x": best_point}, sign * best_value, SolveStatus.OPTIMAL, total, solver="grid"
    )


def _oracle_vertices(lp: LinearProgram) -> BackendSolution:
    n = lp.dimension
    eye = np.eye(n)
    A = np.vstack([np.atleast_2d(lp.A_ub).reshape(-1, n), -eye, eye])
    b = np.concatenate([np.asarray(lp.b_ub, dtype=float).reshape(-1), -lp.lower, lp.upper])
    scale = 1.0 + np.abs(b)

    best_value, best_point, checked = -math.inf, None, 0
    for rows in itertools.combinations(range(A.shape[0]), n):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        checked += 1
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ x - b <= 1e-9 * scale):
            value = float(lp.c @ x)
            if value > best_value:
                best_value, best_point = value, x

    if best_point is None:
        return BackendSolution({}, math.nan, SolveStatus.INFEASIBLE, checked, solver="vertex")
    return BackendSolution(
        {"x": best_point}, best_value, SolveStatus.OPTIMAL, checked, solver="vertex"
    )


def brute_force_oracle(
    problem: GridProblem | LinearProgram, grid_resolution: float = 1e-3
) -> BackendSolution:
    """Reference optimum by exhaustive grid search or LP vertex enumeration.

    Args:
        problem: A grid problem or a linear program with at most three variables
        grid_resolution: Grid step (ignored for linear programs)

    Returns:
        The best grid point or vertex found
    """
    dimension = problem.dimension if isinstance(problem, LinearProgram) else len(problem.bounds)
    if dimension > MAX_ORACLE_DIMENSIONS:
        raise DomainError(
            f"Brute-force oracle supports at most {MAX_ORACLE_DIMENSIONS} dimensions, "
            f"got {dimension}"
        )
    if isinstance(problem, LinearProgram):
        return _oracle_vertices(problem)
    if not grid_resolution > 0:
        raise DomainError(f"Grid resolution must be positive, got {grid_resolution}")
    return _oracle_grid(problem, grid_resolution)


def dump_problem(problem: ConvexProblem, path: str | Path) -> None:
    """Write a human-readable rendering of a problem for offline inspection."""
    lines = [
        f"# {problem.name}",
        f"kind: {problem.kind}",
        f"sense: {'maximize' if problem.maximize else 'minimize'}",
        f"psd: {problem.psd}",
        "variables:",
        *(f"  {name}: shape={var.shape} complex={var.is_complex()}"
          for name, var in problem.variables.items()),
        f"objective: {problem.objective}",
        "constraints:",
        *(f"  [{i}] {constraint}" for i, constraint in enumerate(problem.constraints)),
    ]
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"Dumped {problem.name} to {path}")
