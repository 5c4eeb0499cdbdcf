"""Scenario and solver configuration.

All internal quantities are SI: watts, hertz, meters, bit/s. Decibel inputs
are converted once, when a scenario is ingested.
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from hybrid_rate_ris.errors import ConfigError

logger = logging.getLogger(__name__)

Position = tuple[float, float, float]


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** (dbm / 10.0) / 1000.0


def watts_to_dbm(watts: float) -> float:
    """Convert a power level in watts to dBm."""
    if watts <= 0:
        raise ConfigError(f"Power must be positive to express in dBm, got {watts}")
    return 10.0 * math.log10(watts * 1000.0)


def db_to_linear(db: float) -> float:
    """Convert a dimensionless gain in dB to a linear ratio."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Parameters of one RIS-aided hybrid network scenario.

    Users are indexed AirFL first (0..K-1), then NOMA (K..K+N-1).
    """

    num_airfl: int = 4
    num_noma: int = 2
    num_elements: int = 20
    phase_bits: int = 2
    bandwidth_hz: float = 1e6
    noise_power_w: float = dbm_to_watts(-80.0)
    power_budget_w: tuple[float, ...] = ()
    min_rate_bps: float = 2e6
    mse_tolerance: float = 0.01
    weight_lambda: float = 0.5
    path_loss_ref: float = db_to_linear(-30.0)
    path_loss_exp: float = 2.0
    rician_factor: float = 2.0
    bs_pos: Position = (5.0, 0.0, 15.0)
    ris_pos: Position = (0.0, 40.0, 15.0)
    user_center: Position = (5.0, 50.0, 0.0)
    user_radius: float = 3.0
    user_pos: tuple[Position, ...] | None = None
    trials: int = 200
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.power_budget_w:
            object.__setattr__(
                self, "power_budget_w", (dbm_to_watts(23.0),) * self.num_users
            )
        object.__setattr__(
            self, "power_budget_w", tuple(float(p) for p in self.power_budget_w)
        )
        if self.user_pos is not None:
            object.__setattr__(
                self, "user_pos", tuple(_as_position(p) for p in self.user_pos)
            )
        for name in ("bs_pos", "ris_pos", "user_center"):
            object.__setattr__(self, name, _as_position(getattr(self, name)))
        self._validate()

    def _validate(self) -> None:
        if self.num_airfl < 0 or self.num_noma < 0:
            raise ConfigError("User counts must be non-negative")
        if self.num_users < 1:
            raise ConfigError("At least one user (AirFL or NOMA) is required")
        if self.num_elements < 1:
            raise ConfigError(f"num_elements must be >= 1, got {self.num_elements}")
        if self.phase_bits < 1:
            raise ConfigError(f"phase_bits must be >= 1, got {self.phase_bits}")
        if len(self.power_budget_w) != self.num_users:
            raise ConfigError(
                f"power_budget_w has {len(self.power_budget_w)} entries "
                f"for {self.num_users} users"
            )
        positives = {
            "bandwidth_hz": self.bandwidth_hz,
            "noise_power_w": self.noise_power_w,
            "mse_tolerance": self.mse_tolerance,
            "path_loss_ref": self.path_loss_ref,
        }
        for name, value in positives.items():
            if not value > 0:
                raise ConfigError(f"{name} must be strictly positive, got {value}")
        if any(not p > 0 for p in self.power_budget_w):
            raise ConfigError("Every power budget must be strictly positive")
        if self.min_rate_bps < 0:
            raise ConfigError(f"min_rate_bps must be >= 0, got {self.min_rate_bps}")
        if not 0.0 <= self.weight_lambda <= 1.0:
            raise ConfigError(f"weight_lambda must lie in [0, 1], got {self.weight_lambda}")
        if self.path_loss_exp < 2.0:
            raise ConfigError(f"path_loss_exp must be >= 2, got {self.path_loss_exp}")
        if self.rician_factor < 0:
            raise ConfigError(f"rician_factor must be >= 0, got {self.rician_factor}")
        if self.user_radius < 0:
            raise ConfigError(f"user_radius must be >= 0, got {self.user_radius}")
        if self.user_pos is not None and len(self.user_pos) != self.num_users:
            raise ConfigError(
                f"user_pos has {len(self.user_pos)} entries for {self.num_users} users"
            )
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")

    @property
    def num_users(self) -> int:
        return self.num_airfl + self.num_noma

    @property
    def phase_levels(self) -> int:
        return 2**self.phase_bits

    @property
    def phase_step(self) -> float:
        return 2.0 * math.pi / self.phase_levels

    @property
    def phase_set(self) -> np.ndarray:
        """Admissible discrete phases {Δ/2, 3Δ/2, ..., (2B-1)Δ/2}."""
        return discrete_phase_set(self.phase_bits)

    @property
    def power_budget(self) -> np.ndarray:
        return np.asarray(self.power_budget_w, dtype=float)

    @property
    def qos_threshold(self) -> float:
        """SINR threshold ζ = 2^(R_min/B) - 1 shared by every NOMA user."""
        return 2.0 ** (self.min_rate_bps / self.bandwidth_hz) - 1.0

    @property
    def mse_relaxed(self) -> bool:
        return math.isinf(self.mse_tolerance)

    def replace(self, **changes: Any) -> "NetworkConfig":
        """Return a copy with fields replaced; resizes default power budgets."""
        counts_changed = "num_airfl" in changes or "num_noma" in changes
        if counts_changed and "power_budget_w" not in changes:
            uniform = len(set(self.power_budget_w)) == 1
            if not uniform:
                raise ConfigError("Changing user counts requires explicit power budgets")
            count = changes.get("num_airfl", self.num_airfl) + changes.get(
                "num_noma", self.num_noma
            )
            changes["power_budget_w"] = (self.power_budget_w[0],) * count
            if self.user_pos is not None and "user_pos" not in changes:
                changes["user_pos"] = None
        return dataclasses.replace(self, **changes)


def discrete_phase_set(phase_bits: int) -> np.ndarray:
    levels = 2**phase_bits
    step = 2.0 * math.pi / levels
    return (2.0 * np.arange(levels) + 1.0) * step / 2.0


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration caps of the nested solvers."""

    power_tolerance: float = 1e-6
    power_max_iters: int = 30
    scalar_tolerance: float = 1e-6
    scalar_max_iters: int = 30
    reflection_tolerance: float = 1e-6
    reflection_max_iters: int = 20
    outer_tolerance: float = 1e-6
    outer_max_iters: int = 50
    randomization_count: int = 50
    exhaustive_max_bits: int = 20
    enumeration_cap: int = 2**20
    backend_tolerance: float = 1e-7
    backend_max_iters: int = 200
    ordering_retries: int = 100
    rank_one_ratio: float = 1e-8
    monotone_slack: float = 1e-9

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ConfigError(f"Solver setting {f.name} must be positive, got {value}")

    def replace(self, **changes: Any) -> "SolverSettings":
        return dataclasses.replace(self, **changes)


_DBM_KEYS = {"power_budget_dbm": "power_budget_w", "noise_power_dbm": "noise_power_w"}
_DB_KEYS = {"path_loss_ref_db": "path_loss_ref"}


def config_from_dict(data: dict[str, Any]) -> NetworkConfig:
    """Build a NetworkConfig from scenario-file keys.

    Args:
        data: Mapping whose keys mirror NetworkConfig fields, plus the unit
            keys ``power_budget_dbm``, ``noise_power_dbm`` and ``path_loss_ref_db``

    Returns:
        The validated configuration
    """
    known = {f.name for f in dataclasses.fields(NetworkConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _DBM_KEYS:
            target = _DBM_KEYS[key]
            if target in data:
                raise ConfigError(f"Both {key} and {target} given")
            if isinstance(value, list | tuple):
                kwargs[target] = tuple(dbm_to_watts(float(v)) for v in value)
            else:
                kwargs[target] = dbm_to_watts(float(value))
        elif key in _DB_KEYS:
            kwargs[_DB_KEYS[key]] = db_to_linear(float(value))
        elif key in known:
            kwargs[key] = value
        else:
            raise ConfigError(f"Unknown scenario key: {key}")

    if isinstance(kwargs.get("power_budget_w"), int | float):
        count = int(kwargs.get("num_airfl", 4)) + int(kwargs.get("num_noma", 2))
        kwargs["power_budget_w"] = (float(kwargs["power_budget_w"]),) * count
    for key in ("mse_tolerance", "rician_factor"):
        if kwargs.get(key) in ("inf", "infinity"):
            kwargs[key] = math.inf
    try:
        return NetworkConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"Invalid scenario: {exc}") from exc


def config_to_dict(config: NetworkConfig) -> dict[str, Any]:
    data = dataclasses.asdict(config)
    data["power_budget_w"] = list(config.power_budget_w)
    for key in ("mse_tolerance", "rician_factor"):
        if math.isinf(data[key]):
            data[key] = "inf"
    return data


def load_scenario(path: str | Path) -> tuple[NetworkConfig, SolverSettings]:
    """Load a JSON scenario file.

    Args:
        path: Scenario file; an optional ``"solver"`` object overrides SolverSettings
            and an optional ``"description"`` string is logged

    Returns:
        Tuple of (network configuration, solver settings)
    """
    path = Path(path)
    logger.info(f"Loading scenario from {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Scenario {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Scenario {path} must contain a JSON object")

    description = data.pop("description", None)
    if description:
        logger.info(f"Scenario: {description}")
    solver = data.pop("solver", {})
    known = {f.name for f in dataclasses.fields(SolverSettings)}
    unknown = set(solver) - known
    if unknown:
        raise ConfigError(f"Unknown solver settings: {sorted(unknown)}")
    return config_from_dict(data), SolverSettings(**solver)


def dump_scenario(config: NetworkConfig, settings: SolverSettings, path: str | Path) -> None:
    data = config_to_dict(config)
    data["solver"] = dataclasses.asdict(settings)
    Path(path).write_text(json.dumps(data, indent=2))
    logger.info(f"Wrote scenario to {path}")


def _as_position(value: Any) -> Position:
    coords = tuple(float(c) for c in value)
    if len(coords) != 3:
        raise ConfigError(f"Positions must have three coordinates, got {value}")
    return coords[0], coords[1], coords[2]
