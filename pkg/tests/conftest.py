import numpy as np
import pytest
import torch

from matf.config import ModelConfig
from matf.data import AgentWindow, Episode, SceneContext

MICRO = ModelConfig(scene_hw=(16, 16), c_in=2, grid_hw=(8, 8), d_agent=4, c_scene=3, hidden=6, embed=4,
                    unet_depth=1, unet_channels=4, d_noise=3, T=4, T_future=3, dt=0.5)


def micro_episode(rng, n_agents=2, cfg=MICRO, normalization="none", scene=None):
    """Random episode on a 16 m x 16 m raster at 1 m per cell."""
    if scene is None:
        grid = rng.uniform(0, 1, (*cfg.scene_hw, cfg.c_in))
        scene = SceneContext(grid, (0.0, 0.0), 1.0, tuple(f"c{i}" for i in range(cfg.c_in)))
    agents = []
    for j in range(n_agents):
        anchor = rng.uniform(1.0, cfg.scene_hw[0] - 1.0, 2)
        v = rng.normal(0, 0.6, 2)
        k = np.arange(-(cfg.T - 1), cfg.T_future + 1)[:, None]
        traj = anchor + k * v + rng.normal(0, 0.05, (len(k), 2)) * (k != 0)
        agents.append(AgentWindow(str(j), traj[:cfg.T], traj[cfg.T:], anchor))
    ep = Episode(scene, agents, cfg.T, cfg.T_future, cfg.dt)
    if normalization != "none":
        from matf.data import normalize_episode
        ep = normalize_episode(ep, normalization)
    return ep


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_cfg():
    return MICRO


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


# acceptance summary ------------------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {name}: {detail}")
