"""Exceptions raised by the hybrid-rate solver suite."""


class HybridRateError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HybridRateError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class DimensionError(DomainError):
    """Vector or matrix dimensions do not match."""


class DegenerateChannelError(DomainError):
    """The effective AirFL channel sums to zero."""


class EnumerationCapError(DomainError):
    """Exhaustive enumeration would exceed the configured cap."""

    def __init__(self, required: int, cap: int) -> None:
        super().__init__(
            f"Exhaustive search needs {required} candidates but the cap is {cap}; "
            f"raise the enumeration cap to at least {required}"
        )
        self.required = required
        self.cap = cap


class ConfigError(HybridRateError, ValueError):
    """Invalid scenario, solver or sweep configuration."""


class InfeasibleError(HybridRateError):
    """A constraint set admits no solution."""

    constraint: str = "unknown"

    def __init__(self, message: str, user: int | None = None) -> None:
        super().__init__(message)
        self.user = user


class QosInfeasibleError(InfeasibleError):
    """A NOMA user cannot reach its minimum rate."""

    constraint = "qos"


class MseInfeasibleError(InfeasibleError):
    """The aggregation MSE tolerance cannot be met."""

    constraint = "mse"


class OrderingInfeasibleError(InfeasibleError):
    """The AirFL/NOMA channel-gain ordering does not hold."""

    constraint = "ordering"


class ReflectionInfeasibleError(InfeasibleError):
    """The lifted reflection problem is infeasible."""

    def __init__(self, message: str, constraint: str) -> None:
        super().__init__(message)
        self.constraint = constraint


class NoFeasibleCandidateError(InfeasibleError):
    """No recovered or enumerated reflection satisfies the constraints."""

    constraint = "candidates"


class ScenarioInfeasibleError(InfeasibleError):
    """No feasible starting point was found for a channel realization."""

    constraint = "initialization"
