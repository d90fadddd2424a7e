"""Multi-Agent Tensor Fusion network and its ablation variants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .batching import Batch, collate, fused_cell
from .config import ConfigError, ModelConfig, ShapeError
from .data.core import Episode, OutOfBoundsError

VARIANTS = ("lstm_only", "single_agent_scene", "multi_agent", "multi_agent_scene")


class PlacementError(OutOfBoundsError):
    pass


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


def trajectory_features(seq: torch.Tensor, coord_scale: float, anchor_index: int = -1) -> torch.Tensor:
    """Per-step (position relative to the anchor step, displacement).

    Using relative inputs keeps the encoder blind to absolute coordinates, so
    both normalization modes feed it identical values.
    """
    rel = seq - seq[:, anchor_index:anchor_index + 1 or None]
    vel = torch.diff(seq, dim=1, prepend=seq[:, :1])
    return torch.cat([rel, vel], dim=-1) / coord_scale


ACTIVATIONS = {"elu": nn.ELU, "relu": nn.ReLU, "silu": nn.SiLU}


def activation(name: str) -> nn.Module:
    try:
        return ACTIVATIONS[name]()
    except KeyError:
        raise ConfigError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}") from None


class AgentEncoder(nn.Module):
    def __init__(self, d_out: int, hidden: int, embed: int, coord_scale: float = 1.0, act: str = "elu"):
        super().__init__()
        self.coord_scale = coord_scale
        self.act = activation(act)
        self.embed = nn.Linear(4, embed)
        self.lstm = nn.LSTM(embed, hidden, batch_first=True)
        self.out = nn.Linear(hidden, d_out)

    def forward(self, seq, anchor_index: int = -1):
        h = self.act(self.embed(trajectory_features(seq, self.coord_scale, anchor_index)))
        _, (h_n, _) = self.lstm(h)
        return self.out(h_n[-1])


class SceneEncoder(nn.Module):
    """Conv stack that halves resolution ``log2(downscale)`` times."""

    def __init__(self, c_in: int, c_out: int, downscale: int, act: str = "elu"):
        super().__init__()
        layers = [nn.Conv2d(c_in, c_out, 3, padding=1), activation(act)]
        for _ in range(int(round(math.log2(downscale)))):
            layers += [nn.Conv2d(c_out, c_out, 3, stride=2, padding=1), activation(act)]
        layers += [nn.Conv2d(c_out, c_out, 1)]
        self.net = nn.Sequential(*layers)

    def forward(self, grid):
        return self.net(grid)


class UNet(nn.Module):
    """Single-conv-per-level U-Net with average-pool down and nearest up sampling.

    Skip features are concatenated at each level on the way up.
    """

    def __init__(self, c_in: int, c_out: int, base: int, depth: int, act: str = "elu"):
        super().__init__()
        self.act = activation(act)
        widths = [base * 2 ** i for i in range(depth + 1)]
        self.depth = depth
        self.down = nn.ModuleList([nn.Conv2d(c_in, widths[0], 3, padding=1)])
        self.down.extend(nn.Conv2d(widths[i - 1], widths[i], 3, padding=1) for i in range(1, depth + 1))
        self.up = nn.ModuleList(
            nn.Conv2d(widths[i + 1] + widths[i], widths[i], 3, padding=1) for i in reversed(range(depth)))
        self.head = nn.Conv2d(widths[0], c_out, 1)

    def forward(self, x):
        skips = []
        for i, conv in enumerate(self.down):
            if i:
                x = F.avg_pool2d(x, 2)
            x = self.act(conv(x))
            skips.append(x)
        skips.pop()
        for conv in self.up:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = self.act(conv(torch.cat([x, skips.pop()], dim=1)))
        return self.head(x)

    def receptive_radius(self) -> int:
        """Chebyshev radius (in cells) beyond which an input cell cannot affect an output cell.

        Conservative: each 2x2 pool and each nearest upsample is charged one
        full step at the coarser spacing.
        """
        r, j = 1, 1
        for _ in range(self.depth):
            r += j  # pool
            j *= 2
            r += j  # conv
        for _ in range(self.depth):
            r += j  # upsample
            j //= 2
            r += j  # conv
        return r


class FusionTrunk(nn.Module):
    """Everything up to the final per-agent vector ``x' + x''``.

    ``fuse_invocations`` counts fused scene maps: one per episode for the
    multi-agent variants, one per agent for ``single_agent_scene``.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.agent_encoder = AgentEncoder(cfg.d_agent, cfg.hidden, cfg.embed, cfg.coord_scale, cfg.activation)
        self.scene_encoder = SceneEncoder(cfg.c_in, cfg.c_scene, cfg.downscale, cfg.activation)
        self.unet = UNet(cfg.d_agent + cfg.c_scene, cfg.d_agent, cfg.unet_channels, cfg.unet_depth,
                         cfg.activation)
        self.fuse_invocations = 0

    def encode_scene(self, grids):
        if tuple(grids.shape[-2:]) != self.cfg.scene_hw:
            raise ConfigError(f"scene raster {tuple(grids.shape[-2:])} does not match config {self.cfg.scene_hw}")
        return self.scene_encoder(grids)

    def build_mat(self, vectors, cells, map_index, n_maps, scene_maps):
        """Scatter agent vectors onto a zero map (element-wise max on collisions) and stack the scene."""
        h, w = self.cfg.grid_hw
        d = vectors.shape[1]
        if len(cells) and (cells.min() < 0 or (cells[:, 0] >= h).any() or (cells[:, 1] >= w).any()):
            raise PlacementError("agent cell outside the fused map")
        flat = (map_index * h + cells[:, 0]) * w + cells[:, 1]
        agents = vectors.new_zeros(n_maps * h * w, d)
        agents = agents.scatter_reduce(0, flat[:, None].expand(-1, d), vectors, reduce="amax", include_self=False)
        agents = agents.view(n_maps, h, w, d).permute(0, 3, 1, 2)
        return torch.cat([agents, scene_maps], dim=1)

    def fuse(self, mat):
        self.fuse_invocations += mat.shape[0]
        return self.unet(mat)

    def forward(self, seq, batch: Batch, variant: str = "multi_agent_scene", anchor_index: int = -1):
        check_variant(variant)
        x1 = self.agent_encoder(seq, anchor_index)
        if variant == "lstm_only":
            return x1
        if variant == "single_agent_scene":
            map_index = torch.arange(batch.n_agents)
            scene_of_map = batch.episode_index
        else:
            map_index = batch.episode_index
            scene_of_map = torch.arange(batch.n_episodes)
        n_maps = len(scene_of_map)
        if variant == "multi_agent":
            scene = x1.new_zeros(n_maps, self.cfg.c_scene, *self.cfg.grid_hw)
        else:
            scene = self.encode_scene(batch.grids)[batch.grid_index[scene_of_map]]
        mat = self.build_mat(x1, batch.cells, map_index, n_maps, scene)
        fused = self.fuse(mat)
        x2 = fused[map_index, :, batch.cells[:, 0], batch.cells[:, 1]]
        return x1 + x2


class AgentDecoder(nn.Module):
    """LSTM decoder emitting per-step displacements; noise enters once, with the final vector.

    Each step outputs a correction to the previous displacement, seeded with the
    last observed one, so an untrained head extrapolates at roughly constant
    velocity and the initial state only has to carry deviations from it.
    """

    def __init__(self, d_agent: int, d_noise: int, hidden: int, embed: int, coord_scale: float = 1.0,
                 act: str = "elu"):
        super().__init__()
        self.act = activation(act)
        self.d_in = d_agent + d_noise
        self.coord_scale = coord_scale
        self.init = nn.Linear(self.d_in, 2 * hidden)
        self.embed = nn.Linear(2, embed)
        self.cell = nn.LSTMCell(embed, hidden)
        self.out = nn.Linear(hidden, 2)

    def forward(self, final, z, steps: int, last_step=None):
        x = torch.cat([final, z], dim=-1)
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"decoder expects {self.d_in} inputs, got {x.shape[-1]}")
        h, c = torch.tanh(self.init(x)).chunk(2, dim=-1)
        step = final.new_zeros(final.shape[0], 2) if last_step is None else last_step / self.coord_scale
        deltas = []
        for _ in range(steps):
            h, c = self.cell(self.act(self.embed(step)), (h, c))
            step = step + self.out(h)
            deltas.append(step)
        return torch.stack(deltas, dim=1) * self.coord_scale


class MATF(nn.Module):
    """Generator / deterministic predictor. ``forward`` returns (N, T', 2) futures."""

    def __init__(self, cfg: ModelConfig, variant: str = "multi_agent_scene"):
        super().__init__()
        self.cfg = cfg
        self.variant = check_variant(variant)
        self.trunk = FusionTrunk(cfg)
        self.decoder = AgentDecoder(cfg.d_agent, cfg.d_noise, cfg.hidden, cfg.embed, cfg.coord_scale,
                                    cfg.activation)

    @property
    def fuse_invocations(self) -> int:
        return self.trunk.fuse_invocations

    def forward(self, batch: Batch, z: Optional[torch.Tensor] = None, variant: Optional[str] = None):
        variant = self.variant if variant is None else variant
        past = batch.past
        if past.shape[1] != self.cfg.T:
            raise ShapeError(f"expected past length {self.cfg.T}, got {past.shape[1]}")
        final = self.trunk(past, batch, variant)
        if z is None:
            z = final.new_zeros(final.shape[0], self.cfg.d_noise)
        deltas = self.decoder(final, z, self.cfg.T_future, past[:, -1] - past[:, -2])
        return past[:, -1:] + torch.cumsum(deltas, dim=1)

    def sample_noise(self, n: int, generator: Optional[torch.Generator] = None):
        p = next(self.parameters())
        return torch.randn(n, self.cfg.d_noise, generator=generator, dtype=p.dtype)


# Single-episode functional surface -------------------------------------------------


@dataclass
class MultiAgentTensor:
    map: torch.Tensor  # (D_agent + C_scene, H', W')
    placements: List[tuple]  # (agent index, (row, col))


def _as_tensor(x, like: nn.Module):
    p = next(like.parameters())
    return torch.as_tensor(np.asarray(x), dtype=p.dtype)


def encode_agent(past, model: MATF) -> torch.Tensor:
    past = _as_tensor(past, model)
    if past.ndim != 2 or past.shape != (model.cfg.T, 2):
        raise ShapeError(f"past must be {model.cfg.T} x 2, got {tuple(past.shape)}")
    with torch.no_grad():
        return model.trunk.agent_encoder(past[None])[0]


def encode_scene(grid, model: MATF) -> torch.Tensor:
    """H x W x C raster -> C_scene x H' x W' feature map."""
    grid = _as_tensor(grid, model)
    if grid.ndim != 3:
        raise ShapeError("scene grid must be H x W x C")
    h, w = grid.shape[:2]
    s = model.cfg.downscale
    if h % s or w % s:
        raise ConfigError(f"scene {h}x{w} is not divisible by downscale {s}")
    with torch.no_grad():
        return model.trunk.encode_scene(grid.permute(2, 0, 1)[None])[0]


def build_mat(vectors, anchors, scene_features, scene, model: MATF) -> MultiAgentTensor:
    if len(vectors) < 1 or len(vectors) != len(anchors):
        raise ValueError("need at least one agent and one anchor per vector")
    cfg = model.cfg
    try:
        cells = [fused_cell(a, scene, cfg) for a in anchors]
    except OutOfBoundsError as e:
        raise PlacementError(str(e)) from None
    v = torch.stack([torch.as_tensor(x) for x in vectors])
    cells_t = torch.as_tensor(cells, dtype=torch.long)
    with torch.no_grad():
        mat = model.trunk.build_mat(v, cells_t, torch.zeros(len(cells), dtype=torch.long), 1, scene_features[None])
    return MultiAgentTensor(mat[0], list(enumerate(cells)))


def fuse(mat: MultiAgentTensor, model: MATF) -> torch.Tensor:
    with torch.no_grad():
        return model.trunk.fuse(mat.map[None])[0]


def slice_agents(fused: torch.Tensor, placements) -> List[torch.Tensor]:
    _, h, w = fused.shape
    out = []
    for _, (r, c) in placements:
        if not (0 <= r < h and 0 <= c < w):
            raise PlacementError(f"cell ({r}, {c}) outside {h}x{w}")
        out.append(fused[:, r, c])
    return out


def residual_combine(x1, x2):
    x1, x2 = torch.as_tensor(x1), torch.as_tensor(x2)
    if x1.shape != x2.shape:
        raise ShapeError(f"cannot add {tuple(x1.shape)} and {tuple(x2.shape)}")
    return x1 + x2


def decode_agent(final, z, model: MATF, last_step=None) -> torch.Tensor:
    """Decode one final vector into T' x 2 positions accumulated from the origin.

    ``last_step`` is the agent's last observed displacement (zero if omitted).
    """
    final = _as_tensor(final, model)
    z = _as_tensor(z, model)
    last = None if last_step is None else _as_tensor(last_step, model)[None]
    if final.shape != (model.cfg.d_agent,) or z.shape != (model.cfg.d_noise,):
        raise ShapeError("final / noise widths do not match the config")
    with torch.no_grad():
        return torch.cumsum(model.decoder(final[None], z[None], model.cfg.T_future, last)[0], dim=0)


def predict_episode(episode: Episode, model: MATF, variant: Optional[str] = None, z=None) -> np.ndarray:
    """Predict all agents of one episode in one pass; returns n x T' x 2."""
    p = next(model.parameters())
    batch = collate([episode], model.cfg, p.dtype)
    if z is not None:
        z = torch.as_tensor(np.asarray(z), dtype=p.dtype)
    with torch.no_grad():
        return model(batch, z, variant).numpy().astype(np.float64)


def predict_many(episodes: Sequence[Episode], model: MATF, variant=None, z=None):
    p = next(model.parameters())
    batch = collate(episodes, model.cfg, p.dtype)
    with torch.no_grad():
        return model(batch, z, variant)
