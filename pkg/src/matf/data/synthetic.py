"""Synthetic scenarios with known interaction structure.

Every kind is generated from a small set of per-episode parameters by a
closed-form rule, and the same rule is kept in :class:`OracleInfo` so tests can
ask for the exact (or, for ``bimodal_exit``, the two possible) futures.

World frame: 32 m x 32 m raster at 0.5 m per cell, origin (0, 0). The first
world axis (x) indexes raster rows. Channels are drivable / lane_center /
obstacle for every kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from .core import AgentWindow, DataError, Episode, SceneContext, normalize_episode

KINDS = ("const_velocity", "curved_lane", "avoidance_pair", "bimodal_exit", "obstacle_field")
CHANNELS = ("drivable", "lane_center", "obstacle")
GRID_CELLS = 64
CELL = 0.5

# avoidance_pair
TRIGGER_GAP = 4.0
SIDESTEP = 2.0
SIDESTEP_STEPS = 5.0
# obstacle_field
OBSTACLE_RADIUS = 1.0
DETOUR = 2.0
# bimodal_exit
EXIT_OFFSET = 4.0
EXIT_LENGTH = 4.0


@dataclass
class OracleInfo:
    """Ground-truth generative rule for a batch of synthetic episodes."""

    kind: str
    params: List[dict]
    T: int
    T_future: int
    dt: float
    normalization: str
    _rule: Callable = field(repr=False, default=None)

    def modes(self, i: int) -> List[np.ndarray]:
        """All futures the rule allows for episode ``i``, each n_agents x T' x 2."""
        p = self.params[i]
        branches = (0, 1) if self.kind == "bimodal_exit" else (None,)
        out = []
        for b in branches:
            full = self._rule(p, self.T, self.T_future, self.dt, branch=b)
            fut = full[:, self.T:]
            if self.normalization == "anchor_centered":
                fut = fut - full[:, self.T - 1:self.T]
            out.append(fut)
        return out

    def predict(self, i: int) -> np.ndarray:
        """The future actually realised in episode ``i``."""
        modes = self.modes(i)
        return modes[self.params[i].get("branch", 0)] if len(modes) > 1 else modes[0]


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _ks(T, T_future):
    return np.arange(-(T - 1), T_future + 1, dtype=np.float64)


def _cell_centers():
    c = (np.arange(GRID_CELLS) + 0.5) * CELL
    return np.meshgrid(c, c, indexing="ij")


_XX, _YY = _cell_centers()


def _empty_scene():
    grid = np.zeros((GRID_CELLS, GRID_CELLS, 3), dtype=np.float32)
    grid[:, :, 0] = 1.0
    return grid


def _draw_polyline(channel, pts, width):
    """Paint a soft line of half-width ``width`` through dense points."""
    d2 = np.full(channel.shape, np.inf)
    for x, y in pts:
        d2 = np.minimum(d2, (_XX - x) ** 2 + (_YY - y) ** 2)
    np.maximum(channel, np.clip(1.0 - np.sqrt(d2) / width, 0.0, 1.0), out=channel)


def _scene(grid):
    return SceneContext(grid, (0.0, 0.0), CELL, CHANNELS)


# rules: params -> (n_agents, T + T', 2) world positions

def _rule_const_velocity(p, T, Tf, dt, branch=None):
    k = _ks(T, Tf)[None, :, None]
    anchors = np.asarray(p["anchors"])[:, None, :]
    vel = np.asarray(p["velocities"])[:, None, :]
    return anchors + k * dt * vel


def _rule_curved_lane(p, T, Tf, dt, branch=None):
    k = _ks(T, Tf)
    phi = p["phi0"] + p["turn"] * p["speed"] * k * dt / p["radius"]
    c = np.asarray(p["center"])
    pts = c + p["radius"] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    return pts[None]


def _rule_avoidance_pair(p, T, Tf, dt, branch=None):
    k = _ks(T, Tf)
    out = []
    for x0, y0, d, v, side in zip(p["x0"], p["y0"], p["dirs"], p["speeds"], p["sides"]):
        x = x0 + d * v * k * dt
        y = y0 + side * SIDESTEP * smoothstep((k - p["t_start"]) / SIDESTEP_STEPS)
        out.append(np.stack([x, y], axis=-1))
    return np.stack(out)


def _detour_profile(x, x_obs):
    rise = smoothstep((x - (x_obs - 3.0)) / 2.0)
    fall = 1.0 - smoothstep((x - (x_obs + 1.0)) / 2.0)
    return rise * fall


def _rule_obstacle_field(p, T, Tf, dt, branch=None):
    k = _ks(T, Tf)
    x = p["x0"] + p["speed"] * k * dt
    side = -np.sign(p["obstacle"][1] - p["y0"])
    y = p["y0"] + side * DETOUR * _detour_profile(x, p["obstacle"][0])
    return np.stack([x, y], axis=-1)[None]


def _exit_curve(x, y0, x_junction):
    return y0 - EXIT_OFFSET * smoothstep((x - x_junction) / EXIT_LENGTH)


def _rule_bimodal_exit(p, T, Tf, dt, branch=None):
    branch = p["branch"] if branch is None else branch
    k = _ks(T, Tf)
    x = p["x0"] + p["speed"] * k * dt
    y = _exit_curve(x, p["y0"], p["x_junction"]) if branch else np.full_like(x, p["y0"])
    return np.stack([x, y], axis=-1)[None]


# samplers: rng -> (params, scene grid or None for the shared blank scene)

def _sample_const_velocity(rng):
    n = int(rng.integers(1, 5))
    theta = rng.uniform(0, 2 * np.pi, n)
    speed = rng.uniform(0.8, 1.6, n)
    params = {
        "anchors": rng.uniform(6.0, 26.0, (n, 2)).tolist(),
        "velocities": np.stack([speed * np.cos(theta), speed * np.sin(theta)], -1).tolist(),
    }
    return params, None


def _sample_curved_lane(rng, T, Tf, dt):
    radius = float(rng.uniform(6.0, 15.0))
    speed = float(rng.uniform(1.0, 1.6))
    params = {
        "radius": radius, "speed": speed,
        "turn": float(rng.choice([-1.0, 1.0])),
        "phi0": float(rng.uniform(0, 2 * np.pi)),
    }
    anchor = rng.uniform(10.0, 22.0, 2)
    params["center"] = (anchor - radius * np.array([np.cos(params["phi0"]), np.sin(params["phi0"])])).tolist()
    grid = _empty_scene()
    lane = _rule_curved_lane(params, T + 6, Tf + 6, dt)[0]
    _draw_polyline(grid[:, :, 1], _densify(lane), 1.0)
    return params, grid


def _sample_avoidance_pair(rng, T, Tf, dt):
    d = float(rng.choice([-1.0, 1.0]))
    speeds = rng.uniform(1.0, 1.6, 2)
    t_start = float(rng.uniform(0.0, 5.0))
    gap0 = TRIGGER_GAP + t_start * speeds.sum() * dt
    xc = float(rng.uniform(12.0, 20.0))
    ya = float(rng.uniform(9.0, 23.0))
    offset = float(rng.uniform(2.0, 4.0) * rng.choice([-1.0, 1.0]))
    yb = ya + offset
    params = {
        "x0": [xc - d * gap0 / 2, xc + d * gap0 / 2],
        "y0": [ya, yb],
        "dirs": [d, -d],
        "speeds": speeds.tolist(),
        "sides": [float(np.sign(ya - yb)), float(np.sign(yb - ya))],
        "t_start": t_start,
    }
    return params, None


def _sample_obstacle_field(rng, T, Tf, dt):
    x0 = float(rng.uniform(6.0, 14.0))
    y0 = float(rng.uniform(8.0, 24.0))
    offset = float(rng.uniform(1.5, 2.5) * rng.choice([-1.0, 1.0]))
    obstacle = (x0 + float(rng.uniform(3.5, 6.5)), y0 + offset)
    params = {"x0": x0, "y0": y0, "speed": float(rng.uniform(1.0, 1.6)), "obstacle": obstacle}
    grid = _empty_scene()
    disk = np.clip(OBSTACLE_RADIUS + CELL / 2 - np.hypot(_XX - obstacle[0], _YY - obstacle[1]), 0.0, CELL) / CELL
    grid[:, :, 2] = disk
    grid[:, :, 0] = 1.0 - disk
    return params, grid


def _sample_bimodal_exit(rng, T, Tf, dt):
    x0 = float(rng.uniform(6.0, 12.0))
    params = {
        "x0": x0,
        "y0": float(rng.uniform(12.0, 24.0)),
        "speed": float(rng.uniform(1.0, 1.6)),
        "x_junction": x0 + float(rng.uniform(0.0, 1.5)),
        "branch": int(rng.random() < 0.5),
    }
    grid = np.zeros((GRID_CELLS, GRID_CELLS, 3), dtype=np.float32)
    xs = np.linspace(0.0, GRID_CELLS * CELL, 4 * GRID_CELLS)
    straight = np.stack([xs, np.full_like(xs, params["y0"])], -1)
    xe = xs[xs >= params["x_junction"]]
    exit_ = np.stack([xe, _exit_curve(xe, params["y0"], params["x_junction"])], -1)
    for pts in (straight, exit_):
        _draw_polyline(grid[:, :, 1], pts, 1.0)
        _draw_polyline(grid[:, :, 0], pts, 2.5)
    return params, grid


def _densify(pts, per_segment=4):
    t = np.linspace(0, len(pts) - 1, (len(pts) - 1) * per_segment + 1)
    i = np.arange(len(pts))
    return np.stack([np.interp(t, i, pts[:, 0]), np.interp(t, i, pts[:, 1])], -1)


_RULES: Dict[str, Tuple[Callable, Callable]] = {
    "const_velocity": (_rule_const_velocity, lambda rng, T, Tf, dt: _sample_const_velocity(rng)),
    "curved_lane": (_rule_curved_lane, _sample_curved_lane),
    "avoidance_pair": (_rule_avoidance_pair, _sample_avoidance_pair),
    "bimodal_exit": (_rule_bimodal_exit, _sample_bimodal_exit),
    "obstacle_field": (_rule_obstacle_field, _sample_obstacle_field),
}


def synth_scenarios(kind: str, n_episodes: int, seed: int, T: int = 8, T_future: int = 12,
                    dt: float = 0.4, normalization: str = "anchor_centered"):
    """Generate ``n_episodes`` episodes of one scenario kind.

    Returns ``(episodes, oracle)``. Output is a pure function of the arguments.
    """
    if kind not in _RULES:
        raise DataError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")
    if n_episodes < 1:
        raise DataError("n_episodes must be >= 1")
    rule, sampler = _RULES[kind]
    rng = np.random.default_rng(seed)
    blank = _scene(_empty_scene())
    episodes, params = [], []
    for i in range(n_episodes):
        p, grid = sampler(rng, T, T_future, dt)
        full = rule(p, T, T_future, dt)
        scene = blank if grid is None else _scene(grid)
        agents = [
            AgentWindow(f"{i}:{j}", traj[:T], traj[T:], traj[T - 1])
            for j, traj in enumerate(full)
        ]
        ep = Episode(scene, agents, T, T_future, dt, meta={"kind": kind, "index": i, "seed": seed})
        episodes.append(normalize_episode(ep, normalization))
        params.append(p)
    oracle = OracleInfo(kind, params, T, T_future, dt, normalization, rule)
    return episodes, oracle
