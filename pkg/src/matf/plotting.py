"""Write-only figures: episode overlays, ablation curves, sweep and scaling plots."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data.core import Episode  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_episode(episode: Episode, path, samples: Optional[np.ndarray] = None,
                 prediction: Optional[np.ndarray] = None, title: str = "") -> Path:
    """Scene raster with coloured pasts, black ground truth and optional sampled futures.

    ``samples`` is (K, n_agents, T', 2) and ``prediction`` (n_agents, T', 2), both in
    the episode's own frame (anchor-relative for normalized episodes).
    """
    scene = episode.scene
    offset = episode.anchors() if episode.normalization != "none" else np.zeros((len(episode.agents), 2))
    h, w = scene.shape[:2]
    x0, y0 = scene.origin
    mpc = scene.meters_per_cell
    raster = scene.grid[:, :, : min(3, scene.grid.shape[2])].max(axis=2)
    fig, ax = plt.subplots(figsize=(5, 5))
    # rows index x, so the raster is drawn transposed with x on the horizontal axis
    ax.imshow(raster.T, origin="lower", cmap="Greys", alpha=0.35,
              extent=(x0, x0 + h * mpc, y0, y0 + w * mpc), vmin=0, vmax=1)
    colors = plt.cm.tab10(np.arange(len(episode.agents)) % 10)
    for i, a in enumerate(episode.agents):
        past = a.past + offset[i]
        ax.plot(past[:, 0], past[:, 1], "-o", color=colors[i], ms=2.5, lw=1.5)
        fut = np.concatenate([past[-1:], a.future + offset[i]])
        ax.plot(fut[:, 0], fut[:, 1], "-", color="black", lw=1.5)
        if samples is not None:
            for s in samples[:, i]:
                s = np.concatenate([past[-1:], s + offset[i]])
                ax.plot(s[:, 0], s[:, 1], "-", color=colors[i], lw=0.6, alpha=0.25)
        if prediction is not None:
            p = np.concatenate([past[-1:], prediction[i] + offset[i]])
            ax.plot(p[:, 0], p[:, 1], "--", color=colors[i], lw=1.2)
    ax.set_xlabel(f"x [{episode.unit}]")
    ax.set_ylabel(f"y [{episode.unit}]")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_loss(loss_log, path) -> Path:
    """Loss curves from ``(epoch, split, name, value)`` rows, one line per (split, name)."""
    series = {}
    for epoch, split, name, value in loss_log:
        series.setdefault(f"{split} {name}", ([], []))
        series[f"{split} {name}"][0].append(int(epoch))
        series[f"{split} {name}"][1].append(float(value))
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, "-", label=label)
    if all(v > 0 for _, ys in series.values() for v in ys):
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_horizon_curves(curves: Mapping[str, Sequence[float]], dt: float, path,
                        metric: str = "MAE", unit: str = "meters") -> Path:
    """One line per variant of a per-step error against prediction horizon."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in curves.items():
        t = dt * np.arange(1, len(values) + 1)
        ax.plot(t, values, "-o", ms=3, label=name)
    ax.set_xlabel("horizon [s]")
    ax.set_ylabel(f"{metric} [{unit}]")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_sweep(resolutions: Sequence[int], ade: Sequence[float], fde: Sequence[float], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(resolutions, ade, "-o", label="ADE")
    ax.plot(resolutions, fde, "-s", label="FDE")
    ax.set_xscale("log", base=2)
    ax.set_xticks(list(resolutions))
    ax.set_xticklabels([f"{r}x{r}" for r in resolutions])
    ax.set_xlabel("fused grid")
    ax.set_ylabel("error")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_scaling(ns: Sequence[int], seconds: Sequence[float], slope: float, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(ns, seconds, "-o", base=2)
    ax.set_xlabel("agents per episode")
    ax.set_ylabel("forward time [s]")
    ax.set_title(f"log-log slope {slope:.2f}")
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)
