"""Shared fixtures for the hybrid-rate test suite."""

from pathlib import Path

import numpy as np
import pytest

from hybrid_rate_ris.model.channel import ChannelRealization, sample_channels
from hybrid_rate_ris.model.config import NetworkConfig, SolverSettings, load_scenario

REPRODUCTION_SCENARIO = Path(__file__).parent.parent / "scenarios" / "reproduction.json"


def make_realization(phi_scaled: np.ndarray, seed: int | None = None) -> ChannelRealization:
    """Realization with the given scaled cascaded channels and unit fading elsewhere."""
    phi_scaled = np.atleast_2d(np.asarray(phi_scaled, dtype=complex))
    users, elements = phi_scaled.shape
    return ChannelRealization(
        g=np.ones(elements, dtype=complex),
        h=phi_scaled.copy(),
        d0=1.0,
        d=np.ones(users),
        user_pos=np.zeros((users, 3)),
        phi=phi_scaled.copy(),
        phi_scaled=phi_scaled,
        seed=seed,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def small_config() -> NetworkConfig:
    """Two AirFL users, one NOMA user and four elements with a strong link budget."""
    return NetworkConfig(num_airfl=2, num_noma=1, num_elements=4, path_loss_ref=0.1)


@pytest.fixture
def fast_settings() -> SolverSettings:
    return SolverSettings(
        power_max_iters=10, scalar_max_iters=10, reflection_max_iters=5, outer_max_iters=8,
        randomization_count=20, ordering_retries=50,
    )


@pytest.fixture
def small_realization(small_config: NetworkConfig) -> ChannelRealization:
    return sample_channels(small_config, seed=7)


@pytest.fixture
def reproduction() -> tuple[NetworkConfig, SolverSettings]:
    """Scenario and solver settings shipped for the experiment reproductions."""
    return load_scenario(REPRODUCTION_SCENARIO)
