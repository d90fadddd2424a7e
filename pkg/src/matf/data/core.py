"""Core trajectory data types, windowing and grid georeferencing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

UNITS = ("meters", "pixels")
NORMALIZATIONS = ("none", "anchor_centered")
SOURCES = ("ethucy_text", "synthetic", "episode_file")


class DataError(ValueError):
    """Raised for invalid or inconsistent trajectory data."""


class OutOfBoundsError(DataError):
    """A world position falls outside the scene raster."""


@dataclass
class AgentTrack:
    agent_id: str
    steps: np.ndarray  # (L,) int
    positions: np.ndarray  # (L, 2) float
    unit: str = "meters"

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if len(self.steps) != len(self.positions):
            raise DataError(f"track {self.agent_id}: {len(self.steps)} steps vs {len(self.positions)} positions")
        if len(self.steps) > 1 and np.any(np.diff(self.steps) != 1):
            raise DataError(f"track {self.agent_id}: step indices must be consecutive and increasing")
        if not np.all(np.isfinite(self.positions)):
            raise DataError(f"track {self.agent_id}: non-finite position")
        if self.unit not in UNITS:
            raise DataError(f"unknown unit {self.unit!r}")

    def __len__(self):
        return len(self.steps)


@dataclass
class SceneContext:
    """Bird's-eye raster. ``grid`` is H x W x C with values in [0, 1].

    Rows index the first world axis and columns the second, so world point
    ``p`` lands in cell ``floor((p - origin) / meters_per_cell)``.
    """

    grid: np.ndarray
    origin: Tuple[float, float] = (0.0, 0.0)
    meters_per_cell: float = 1.0
    channel_semantics: Tuple[str, ...] = ("drivable",)

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim == 2:
            grid = grid[:, :, None]
        if grid.ndim != 3 or min(grid.shape) < 1:
            raise DataError(f"scene grid must be H x W x C, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)) or grid.min() < 0 or grid.max() > 1:
            raise DataError("scene grid values must be finite and in [0, 1]")
        if not self.meters_per_cell > 0:
            raise DataError("meters_per_cell must be positive")
        self.grid = grid
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.channel_semantics = tuple(self.channel_semantics)
        if len(self.channel_semantics) != grid.shape[2]:
            raise DataError(
                f"{len(self.channel_semantics)} channel labels for {grid.shape[2]} channels")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape[0], self.grid.shape[1]

    @property
    def extent(self) -> Tuple[float, float]:
        """World size covered along (rows, cols)."""
        h, w = self.shape
        return h * self.meters_per_cell, w * self.meters_per_cell


@dataclass
class AgentWindow:
    agent_id: str
    past: np.ndarray  # (T, 2)
    future: np.ndarray  # (T', 2)
    anchor: np.ndarray  # (2,) world position at the last past step

    def __post_init__(self):
        self.past = np.asarray(self.past, dtype=np.float64).reshape(-1, 2)
        self.future = np.asarray(self.future, dtype=np.float64).reshape(-1, 2)
        self.anchor = np.asarray(self.anchor, dtype=np.float64).reshape(2)


@dataclass
class Episode:
    scene: SceneContext
    agents: List[AgentWindow]
    T: int
    T_future: int
    dt: float
    normalization: str = "none"
    unit: str = "meters"
    meta: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def pasts(self) -> np.ndarray:
        return np.stack([a.past for a in self.agents])

    def futures(self) -> np.ndarray:
        return np.stack([a.future for a in self.agents])

    def anchors(self) -> np.ndarray:
        return np.stack([a.anchor for a in self.agents])


@dataclass
class DatasetSpec:
    source: str = "synthetic"
    T: int = 8
    T_future: int = 12
    dt: float = 0.4
    stride: int = 1
    normalization: str = "anchor_centered"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DataError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if self.T < 2 or self.T_future < 1 or self.stride < 1:
            raise DataError(f"invalid windowing T={self.T} T'={self.T_future} stride={self.stride}")
        if self.normalization not in NORMALIZATIONS:
            raise DataError(f"unknown normalization {self.normalization!r}")


def world_to_grid(p, scene: SceneContext, meters_per_cell: Optional[float] = None,
                  shape: Optional[Tuple[int, int]] = None) -> Tuple[int, int]:
    """Map a world position to an integer (row, col) cell.

    ``meters_per_cell``/``shape`` override the scene's own resolution, which is
    how placement on a coarser fused map is done.
    """
    mpc = scene.meters_per_cell if meters_per_cell is None else meters_per_cell
    h, w = scene.shape if shape is None else shape
    r = math.floor((float(p[0]) - scene.origin[0]) / mpc)
    c = math.floor((float(p[1]) - scene.origin[1]) / mpc)
    if not (0 <= r < h and 0 <= c < w):
        raise OutOfBoundsError(f"position ({p[0]}, {p[1]}) maps to cell ({r}, {c}) outside {h}x{w}")
    return r, c


def in_bounds(p, scene: SceneContext) -> bool:
    try:
        world_to_grid(p, scene)
    except OutOfBoundsError:
        return False
    return True


def segment_episodes(tracks: Sequence[AgentTrack], scene: SceneContext, spec: DatasetSpec) -> List[Episode]:
    """Cut tracks into fixed-length episodes with sliding windows.

    Windows start at the earliest step and advance by ``spec.stride``. An
    agent joins a window only if it is observed at every step of it; agents
    whose anchor falls off the raster are dropped with a warning.
    """
    if not tracks:
        return []
    length = spec.T + spec.T_future
    lo = min(int(t.steps[0]) for t in tracks)
    hi = max(int(t.steps[-1]) for t in tracks)
    episodes = []
    for start in range(lo, hi - length + 2, spec.stride):
        stop = start + length
        agents = []
        for track in tracks:
            if len(track) == 0 or track.steps[0] > start or track.steps[-1] < stop - 1:
                continue
            i = int(start - track.steps[0])
            window = track.positions[i:i + length]
            anchor = window[spec.T - 1]
            if not in_bounds(anchor, scene):
                log.warning("agent %s at window %d: anchor outside scene, dropped", track.agent_id, start)
                continue
            agents.append(AgentWindow(track.agent_id, window[:spec.T].copy(), window[spec.T:].copy(), anchor.copy()))
        if agents:
            ep = Episode(scene, agents, spec.T, spec.T_future, spec.dt,
                         unit=tracks[0].unit, meta={"start_step": start})
            episodes.append(normalize_episode(ep, spec.normalization))
    return episodes


def normalize_episode(e: Episode, mode: str) -> Episode:
    """Express each agent's trajectory relative to its own anchor.

    Anchors and the scene georeference are kept so grid placement is unchanged.
    """
    if mode not in NORMALIZATIONS:
        raise DataError(f"unknown normalization {mode!r}")
    if mode == "none" or e.normalization == mode:
        return e
    agents = [AgentWindow(a.agent_id, a.past - a.anchor, a.future - a.anchor, a.anchor.copy()) for a in e.agents]
    return replace(e, agents=agents, normalization=mode)


def denormalize_episode(e: Episode) -> Episode:
    if e.normalization == "none":
        return e
    agents = [AgentWindow(a.agent_id, a.past + a.anchor, a.future + a.anchor, a.anchor.copy()) for a in e.agents]
    return replace(e, agents=agents, normalization="none")


def validate_episode(e: Episode) -> None:
    """Raise DataError if any Episode invariant is violated."""
    if e.n_agents < 1:
        raise DataError("episode has no agents")
    if e.T < 2 or e.T_future < 1 or not e.dt > 0:
        raise DataError("invalid episode windowing")
    for a in e.agents:
        if a.past.shape != (e.T, 2) or a.future.shape != (e.T_future, 2):
            raise DataError(f"agent {a.agent_id}: past/future shapes {a.past.shape}/{a.future.shape}")
        if not (np.all(np.isfinite(a.past)) and np.all(np.isfinite(a.future))):
            raise DataError(f"agent {a.agent_id}: non-finite positions")
        last = a.anchor if e.normalization == "none" else np.zeros(2)
        if not np.array_equal(a.past[-1], last):
            raise DataError(f"agent {a.agent_id}: anchor does not match the last past step")
        world_to_grid(a.anchor, e.scene)
