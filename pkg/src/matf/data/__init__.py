from .core import (
    AgentTrack,
    AgentWindow,
    DataError,
    DatasetSpec,
    Episode,
    OutOfBoundsError,
    SceneContext,
    denormalize_episode,
    normalize_episode,
    segment_episodes,
    validate_episode,
    world_to_grid,
)
from .episode_file import read_episodes, write_episodes
from .ethucy import ParseError, load_ethucy_text
from .synthetic import KINDS, OracleInfo, synth_scenarios

__all__ = [
    "AgentTrack", "AgentWindow", "DataError", "DatasetSpec", "Episode", "OutOfBoundsError",
    "SceneContext", "denormalize_episode", "normalize_episode", "segment_episodes",
    "validate_episode", "world_to_grid", "read_episodes", "write_episodes", "ParseError",
    "load_ethucy_text", "KINDS", "OracleInfo", "synth_scenarios",
]
