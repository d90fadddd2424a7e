"""Displacement metrics and best-of-N stochastic evaluation.

All functions take predictions and ground truth shaped (n_agents, T', 2).
Steps ``t`` are 1-based horizon indices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .batching import EpisodeTensors
from .checkpoint import Checkpoint
from .config import ConfigError, ShapeError
from .data.core import Episode
from .model import MATF


def _errors(preds, gts) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape or preds.ndim != 3 or preds.shape[-1] != 2:
        raise ShapeError(f"preds {preds.shape} and gts {gts.shape} must both be n x T' x 2")
    return np.linalg.norm(preds - gts, axis=-1)


def _step(errors, t):
    if not 1 <= t <= errors.shape[1]:
        raise ShapeError(f"step {t} outside 1..{errors.shape[1]}")
    return errors[:, t - 1]


def rmse_at(preds, gts, t: int) -> float:
    return float(np.sqrt(np.mean(_step(_errors(preds, gts), t) ** 2)))


def mae_at(preds, gts, t: int) -> float:
    return float(np.mean(_step(_errors(preds, gts), t)))


def ade_fde(preds, gts):
    e = _errors(preds, gts)
    return float(e.mean(axis=1).mean()), float(e[:, -1].mean())


def best_of_n(samples, gt):
    """Return ``(best_sample, score)`` minimising the summed squared error; ties go to the lowest index."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or len(samples) == 0:
        raise ValueError("need a non-empty K x T' x 2 sample set")
    scores = ((samples - np.asarray(gt, dtype=np.float64)) ** 2).sum(axis=(1, 2))
    k = int(np.argmin(scores))
    return samples[k], float(scores[k])


@dataclass
class EvalReport:
    rmse: np.ndarray  # (T',)
    mae: np.ndarray  # (T',)
    ade: float
    fde: float
    n: int
    T_future: int
    dt: float
    samples: int  # 0 for deterministic
    unit: str = "meters"

    @classmethod
    def from_predictions(cls, preds, gts, dt, samples=0, unit="meters") -> "EvalReport":
        e = _errors(preds, gts)
        return cls(np.sqrt((e ** 2).mean(axis=0)), e.mean(axis=0), float(e.mean(axis=1).mean()),
                   float(e[:, -1].mean()), len(e), e.shape[1], dt, samples, unit)

    def rows(self):
        """Long-format rows ``(metric, step, horizon_s, value)``."""
        out = [("ade", "", "", self.ade), ("fde", "", "", self.fde)]
        for name, arr in (("rmse", self.rmse), ("mae", self.mae)):
            for t, v in enumerate(arr, 1):
                out.append((name, t, round(t * self.dt, 10), float(v)))
        return out

    def write(self, directory, stem: str = "metrics"):
        """Write ``<stem>.csv`` (metric, step, horizon_s, value) and ``<stem>.json``."""
        directory = Path(directory)
        with open(directory / f"{stem}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric", "step", "horizon_s", "value"])
            for m, t, h, v in self.rows():
                w.writerow([m, t, h, repr(float(v))])
        summary = {k: v for k, v in asdict(self).items() if k not in ("rmse", "mae")}
        summary["rmse"] = [float(v) for v in self.rmse]
        summary["mae"] = [float(v) for v in self.mae]
        (directory / f"{stem}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def sample_predictions(model: MATF, episodes: Sequence[Episode], n_samples: int, seed: int = 0,
                       include_zero: bool = False, batch_episodes: int = 256) -> np.ndarray:
    """Return (K, n_agents_total, T', 2) futures; sample 0 uses z = 0 when ``include_zero``."""
    p = next(model.parameters())
    data = EpisodeTensors(episodes, model.cfg, p.dtype)
    gen = torch.Generator().manual_seed(seed)
    chunks = np.array_split(np.arange(len(data)), max(1, len(data) // batch_episodes))
    batches = [data.batch(ids) for ids in chunks]
    out = []
    with torch.no_grad():
        for k in range(n_samples):
            preds = []
            for b in batches:
                z = None if (include_zero and k == 0) else model.sample_noise(b.n_agents, gen)
                preds.append(model(b, z))
            out.append(torch.cat(preds).numpy())
    return np.asarray(out, dtype=np.float64)


def ground_truth(episodes: Sequence[Episode]) -> np.ndarray:
    return np.concatenate([ep.futures() for ep in episodes])


def evaluate(model, episodes: Sequence[Episode], samples: int = 0, seed: int = 0,
             include_zero: bool = False, variant: Optional[str] = None) -> EvalReport:
    """Deterministic (``samples == 0``, z = 0) or best-of-``samples`` evaluation.

    Best-of-N is chosen per agent before any metric is aggregated.
    """
    if isinstance(model, Checkpoint):
        model = model.build()
    cfg = model.cfg
    for ep in episodes:
        if (ep.T, ep.T_future) != (cfg.T, cfg.T_future) or abs(ep.dt - cfg.dt) > 1e-12:
            raise ConfigError(f"dataset protocol ({ep.T}, {ep.T_future}, {ep.dt}) does not match "
                              f"checkpoint ({cfg.T}, {cfg.T_future}, {cfg.dt})")
    gts = ground_truth(episodes)
    unit = episodes[0].unit if episodes else "meters"
    if samples == 0:
        p = next(model.parameters())
        data = EpisodeTensors(episodes, cfg, p.dtype)
        with torch.no_grad():
            preds = np.concatenate([
                model(data.batch(ids), None, variant).numpy()
                for ids in np.array_split(np.arange(len(data)), max(1, len(data) // 256))
            ]).astype(np.float64)
        return EvalReport.from_predictions(preds, gts, cfg.dt, 0, unit)
    draws = sample_predictions(model, episodes, samples, seed, include_zero)
    best = np.stack([best_of_n(draws[:, i], gts[i])[0] for i in range(len(gts))])
    return EvalReport.from_predictions(best, gts, cfg.dt, samples, unit)
