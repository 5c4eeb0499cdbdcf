"""Network model: configuration, channels and rate metrics."""

from hybrid_rate_ris.model.channel import (
    ChannelRealization,
    CombinedChannel,
    ReflectionMode,
    ReflectionState,
    combined_channel,
    ordering_satisfied,
    path_loss,
    realization_digest,
    sample_channels,
)
from hybrid_rate_ris.model.config import (
    NetworkConfig,
    SolverSettings,
    dbm_to_watts,
    load_scenario,
    watts_to_dbm,
)
from hybrid_rate_ris.model.metrics import RateBreakdown, TransceiverState, hybrid_rate

__all__ = [
    "ChannelRealization",
    "CombinedChannel",
    "NetworkConfig",
    "RateBreakdown",
    "ReflectionMode",
    "ReflectionState",
    "SolverSettings",
    "TransceiverState",
    "combined_channel",
    "dbm_to_watts",
    "hybrid_rate",
    "load_scenario",
    "ordering_satisfied",
    "path_loss",
    "realization_digest",
    "sample_channels",
    "watts_to_dbm",
]
