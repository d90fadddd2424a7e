"""Packing episodes with varying agent counts into flat tensors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .config import ConfigError, ModelConfig
from .data.core import Episode, world_to_grid


@dataclass
class Batch:
    """Agents of several episodes, flattened along one axis.

    ``episode_index[i]`` names the episode of agent ``i``; ``grid_index[e]``
    names the row of ``grids`` holding episode ``e``'s raster (scenes shared
    between episodes are stored once).
    """

    past: torch.Tensor  # (N, T, 2)
    future: Optional[torch.Tensor]  # (N, T', 2)
    cells: torch.Tensor  # (N, 2) long, fused-map (row, col)
    episode_index: torch.Tensor  # (N,) long
    grids: torch.Tensor  # (U, C, H, W)
    grid_index: torch.Tensor  # (B,) long

    @property
    def n_agents(self) -> int:
        return self.past.shape[0]

    @property
    def n_episodes(self) -> int:
        return self.grid_index.shape[0]

    def with_future(self, future: torch.Tensor) -> "Batch":
        return Batch(self.past, future, self.cells, self.episode_index, self.grids, self.grid_index)


def fused_cell(anchor, scene, cfg: ModelConfig):
    s = cfg.downscale
    return world_to_grid(anchor, scene, scene.meters_per_cell * s, cfg.grid_hw)


class EpisodeTensors:
    """Pre-packed dataset that yields :class:`Batch` objects for episode subsets."""

    def __init__(self, episodes: Sequence[Episode], cfg: ModelConfig, dtype=torch.float32):
        if not episodes:
            raise ValueError("no episodes")
        self.cfg = cfg
        self.dtype = dtype
        pasts, futures, cells, counts, grid_ids = [], [], [], [], []
        grids, seen = [], {}
        for ep in episodes:
            if (ep.T, ep.T_future) != (cfg.T, cfg.T_future) or abs(ep.dt - cfg.dt) > 1e-12:
                raise ConfigError(
                    f"episode protocol T={ep.T} T'={ep.T_future} dt={ep.dt} does not match model "
                    f"T={cfg.T} T'={cfg.T_future} dt={cfg.dt}")
            if ep.scene.shape != cfg.scene_hw or ep.scene.grid.shape[2] != cfg.c_in:
                raise ConfigError(f"scene raster {ep.scene.grid.shape} does not match config "
                                  f"{cfg.scene_hw} x {cfg.c_in}")
            key = id(ep.scene)
            if key not in seen:
                seen[key] = len(grids)
                grids.append(ep.scene.grid)
            grid_ids.append(seen[key])
            counts.append(ep.n_agents)
            for a in ep.agents:
                pasts.append(a.past)
                futures.append(a.future)
                cells.append(fused_cell(a.anchor, ep.scene, cfg))
        self.past = torch.as_tensor(np.stack(pasts), dtype=dtype)
        self.future = torch.as_tensor(np.stack(futures), dtype=dtype)
        self.cells = torch.as_tensor(np.array(cells), dtype=torch.long)
        self.grids = torch.as_tensor(np.stack(grids), dtype=dtype).permute(0, 3, 1, 2).contiguous()
        self.grid_ids = np.array(grid_ids)
        self.counts = np.array(counts)
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]])

    def __len__(self):
        return len(self.counts)

    def batch(self, episode_ids=None) -> Batch:
        ids = np.arange(len(self)) if episode_ids is None else np.asarray(episode_ids)
        rows = np.concatenate([np.arange(self.starts[e], self.starts[e] + self.counts[e]) for e in ids])
        rows_t = torch.as_tensor(rows)
        ep_index = torch.as_tensor(np.repeat(np.arange(len(ids)), self.counts[ids]))
        used, grid_index = np.unique(self.grid_ids[ids], return_inverse=True)
        return Batch(self.past[rows_t], self.future[rows_t], self.cells[rows_t], ep_index,
                     self.grids[torch.as_tensor(used)], torch.as_tensor(grid_index.reshape(-1)))

    def agent_rows(self, episode_ids):
        return np.concatenate([np.arange(self.starts[e], self.starts[e] + self.counts[e]) for e in episode_ids])


def collate(episodes: Sequence[Episode], cfg: ModelConfig, dtype=torch.float32) -> Batch:
    return EpisodeTensors(episodes, cfg, dtype).batch()
