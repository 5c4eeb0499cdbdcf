"""Scenario geometry, Rician fading and the RIS-reflected combined channel."""

import hashlib
import logging
import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from hybrid_rate_ris.errors import DimensionError, DomainError
from hybrid_rate_ris.model.config import NetworkConfig, discrete_phase_set

logger = logging.getLogger(__name__)


def path_loss(distance: float, config: NetworkConfig) -> float:
    """Distance-dependent large-scale gain ς₀·d^(-α).

    Args:
        distance: Link length in meters
        config: Supplies the reference gain and path-loss exponent

    Returns:
        Linear power gain
    """
    if not distance > 0:
        raise DomainError(f"Distance must be positive, got {distance}")
    return config.path_loss_ref * distance ** (-config.path_loss_exp)


def place_users(config: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """Return a (K+N, 3) array of user positions.

    Fixed positions from the config are used when present; otherwise users are
    drawn uniformly over the disc around ``user_center`` on the ground plane.
    """
    if config.user_pos is not None:
        return np.asarray(config.user_pos, dtype=float)

    count = config.num_users
    radius = config.user_radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    angle = rng.uniform(0.0, 2.0 * np.pi, count)
    center = np.asarray(config.user_center, dtype=float)
    positions = np.tile(center, (count, 1))
    positions[:, 0] += radius * np.cos(angle)
    positions[:, 1] += radius * np.sin(angle)
    return positions


def rician_fading(
    shape: int | tuple[int, ...], kappa: float, rng: np.random.Generator
) -> np.ndarray:
    """Unit-power Rician samples with an all-ones line-of-sight component."""
    los = np.ones(shape, dtype=complex)
    if math.isinf(kappa):
        return los
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return np.sqrt(kappa / (1.0 + kappa)) * los + np.sqrt(1.0 / (1.0 + kappa)) * nlos


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the BS-RIS and user-RIS channels.

    ``phi[i] = conj(g) * h[i]`` and ``phi_scaled[i] = sqrt(L0 * L_i) * phi[i]``,
    so that the combined coefficient of user i is ``v^H phi_scaled[i]``.
    """

    g: np.ndarray
    h: np.ndarray
    d0: float
    d: np.ndarray
    user_pos: np.ndarray
    phi: np.ndarray
    phi_scaled: np.ndarray
    seed: int | None = None

    @property
    def num_elements(self) -> int:
        return int(self.g.shape[0])

    @property
    def num_users(self) -> int:
        return int(self.h.shape[0])

    def rescaled(self, factor: float) -> "ChannelRealization":
        """Scale every path loss by ``factor`` (the combined gains scale by the same)."""
        return ChannelRealization(
            g=self.g,
            h=self.h,
            d0=self.d0,
            d=self.d,
            user_pos=self.user_pos,
            phi=self.phi,
            phi_scaled=self.phi_scaled * np.sqrt(factor),
            seed=self.seed,
        )


def build_realization(
    g: np.ndarray,
    h: np.ndarray,
    user_pos: np.ndarray,
    config: NetworkConfig,
    seed: int | None = None,
) -> ChannelRealization:
    """Assemble a realization from given fading samples and user positions."""
    g = np.asarray(g, dtype=complex)
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    user_pos = np.atleast_2d(np.asarray(user_pos, dtype=float))
    if h.shape != (config.num_users, config.num_elements) or g.shape != (config.num_elements,):
        raise DimensionError(
            f"Expected g of length {config.num_elements} and h of shape "
            f"({config.num_users}, {config.num_elements}), got {g.shape} and {h.shape}"
        )

    ris = np.asarray(config.ris_pos, dtype=float)
    d0 = float(np.linalg.norm(ris - np.asarray(config.bs_pos, dtype=float)))
    d = np.linalg.norm(user_pos - ris, axis=1)
    loss0 = path_loss(d0, config)
    losses = np.array([path_loss(float(di), config) for di in d])

    phi = np.conj(g)[None, :] * h
    phi_scaled = np.sqrt(loss0 * losses)[:, None] * phi
    return ChannelRealization(
        g=g, h=h, d0=d0, d=d, user_pos=user_pos, phi=phi, phi_scaled=phi_scaled, seed=seed
    )


def sample_channels(config: NetworkConfig, seed: int | None = None) -> ChannelRealization:
    """Draw user positions and Rician fading for one trial.

    Args:
        config: Scenario parameters
        seed: Seed for this realization; defaults to ``config.rng_seed``

    Returns:
        A deterministic realization for the given seed
    """
    seed = config.rng_seed if seed is None else seed
    rng = np.random.default_rng(seed)
    user_pos = place_users(config, rng)
    g = rician_fading(config.num_elements, config.rician_factor, rng)
    h = rician_fading((config.num_users, config.num_elements), config.rician_factor, rng)
    return build_realization(g, h, user_pos, config, seed=seed)


def realization_digest(realization: ChannelRealization) -> str:
    """Short stable hash identifying a realization, used for paired-seed checks."""
    digest = hashlib.sha256()
    for array in (realization.g, realization.h, realization.user_pos):
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()[:16]


class ReflectionMode(StrEnum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ReflectionState:
    """Per-element RIS phase shifts.

    In discrete mode every phase is exactly one of the ``phase_bits`` levels.
    """

    theta: np.ndarray
    mode: ReflectionMode = ReflectionMode.CONTINUOUS
    phase_bits: int | None = None

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        object.__setattr__(self, "theta", theta)
        if self.mode == ReflectionMode.DISCRETE:
            if self.phase_bits is None:
                raise DomainError("Discrete reflections need phase_bits")
            if not np.all(np.isin(theta, discrete_phase_set(self.phase_bits))):
                raise DomainError(
                    f"Discrete reflection has phases outside the {self.phase_bits}-bit set"
                )

    @property
    def v(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @property
    def num_elements(self) -> int:
        return int(self.theta.shape[0])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "ReflectionState":
        """Continuous reflection from a (not necessarily normalized) complex vector."""
        return cls(theta=np.mod(np.angle(np.asarray(v, dtype=complex)), 2.0 * np.pi))

    @classmethod
    def from_levels(cls, levels: np.ndarray, phase_bits: int) -> "ReflectionState":
        """Discrete reflection from integer level indices in [0, 2^b)."""
        phases = discrete_phase_set(phase_bits)
        return cls(theta=phases[np.asarray(levels)], mode=ReflectionMode.DISCRETE,
                   phase_bits=phase_bits)

    @classmethod
    def random_discrete(
        cls, num_elements: int, phase_bits: int, rng: np.random.Generator
    ) -> "ReflectionState":
        levels = rng.integers(0, 2**phase_bits, num_elements)
        return cls.from_levels(levels, phase_bits)


@dataclass(frozen=True)
class CombinedChannel:
    """Combined coefficients h̄_i = v^H Φ̃_i for every user."""

    coefficients: np.ndarray

    @property
    def gains(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2


def combined_channel(
    realization: ChannelRealization, reflection: ReflectionState | np.ndarray
) -> CombinedChannel:
    """Evaluate the reflected channel of every user for one reflection.

    Args:
        realization: Channel draw
        reflection: A ReflectionState or a complex vector v of length M

    Returns:
        The combined coefficients, with gains |h̄_i|² as a property
    """
    v = reflection.v if isinstance(reflection, ReflectionState) else np.asarray(reflection)
    if v.shape != (realization.num_elements,):
        raise DimensionError(
            f"Reflection has shape {v.shape}, expected ({realization.num_elements},)"
        )
    return CombinedChannel(coefficients=realization.phi_scaled @ np.conj(v))


def ordering_satisfied(gains: np.ndarray, num_airfl: int, num_noma: int) -> bool:
    """Check max AirFL gain <= first NOMA gain <= ... <= last NOMA gain."""
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (num_airfl + num_noma,):
        raise DimensionError(f"Expected {num_airfl + num_noma} gains, got {gains.shape}")
    noma = gains[num_airfl:]
    if np.any(np.diff(noma) < 0):
        return False
    if num_airfl == 0 or num_noma == 0:
        return True
    return bool(np.max(gains[:num_airfl]) <= noma[0])
