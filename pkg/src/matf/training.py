"""Losses, the discriminator, and the deterministic / adversarial trainers."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .batching import Batch, EpisodeTensors
from .checkpoint import Checkpoint
from .config import ConfigError, ModelConfig, ShapeError
from .data.core import Episode
from .model import MATF, FusionTrunk, check_variant

log = logging.getLogger(__name__)

SCORE_EPS = 1e-7
GAN_VARIANTS = ("saturating", "non_saturating")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Loss weights and optimizer settings (recorded in every checkpoint)."""

    recon_norm: str = "L2"
    lam: float = 1.0
    gan_variant: str = "non_saturating"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    grad_clip: float = 10.0
    gan_epochs: int = 20
    g_lr: float = 2e-4
    d_lr: float = 2e-4
    d_steps: int = 1
    lr_schedule: str = "cosine"
    variety_k: int = 1

    def __post_init__(self):
        if self.recon_norm not in ("L1", "L2"):
            raise ConfigError(f"recon_norm must be L1 or L2, got {self.recon_norm!r}")
        if self.gan_variant not in GAN_VARIANTS:
            raise ConfigError(f"gan_variant must be one of {GAN_VARIANTS}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError("lam must be finite and >= 0")
        if min(self.lr, self.g_lr, self.d_lr) <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"lr_schedule must be constant or cosine, got {self.lr_schedule!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.gan_epochs < 0 or self.d_steps < 1 or self.variety_k < 1:
            raise ConfigError("batch_size/d_steps/variety_k must be >= 1 and epochs >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def split_seed(seed: int) -> dict:
    """Expand one master seed into independent data / init / noise seeds."""
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: int(c.generate_state(1)[0]) for name, c in zip(("data", "init", "noise"), children)}


# Losses ---------------------------------------------------------------------------


def reconstruction_loss(pred, gt, norm: str = "L2"):
    """Sum over steps of the per-position error; leading axes are kept.

    ``L2`` uses the squared Euclidean distance per step, ``L1`` the Manhattan
    distance. A single T' x 2 pair gives a scalar.
    """
    if tuple(pred.shape) != tuple(gt.shape):
        raise ShapeError(f"prediction {tuple(pred.shape)} vs ground truth {tuple(gt.shape)}")
    diff = pred - gt
    if norm == "L2":
        per_step = (diff ** 2).sum(-1)
    elif norm == "L1":
        per_step = abs(diff).sum(-1)
    else:
        raise ConfigError(f"unknown norm {norm!r}")
    return per_step.sum(-1)


def _check_scores(s):
    bad = (s <= 0) | (s >= 1)
    if bool(bad.any()):
        raise ValueError("discriminator scores must lie strictly inside (0, 1)")


def gan_losses(d_real, d_fake, recon, lam: float = 1.0, gan_variant: str = "non_saturating"):
    """Return ``(loss_D, loss_G)`` for one scene (or summed over scenes).

    loss_D = -sum(log d_real + log(1 - d_fake))
    loss_G = sum(log(1 - d_fake)) + lam * recon     (saturating)
    loss_G = -sum(log d_fake) + lam * recon         (non_saturating)
    """
    lib = torch if isinstance(d_fake, torch.Tensor) else np
    d_real = lib.asarray(d_real) if lib is np else d_real
    d_fake = lib.asarray(d_fake) if lib is np else d_fake
    if d_real.shape != d_fake.shape or d_real.ndim != 1 or d_real.shape[0] < 1:
        raise ShapeError("d_real and d_fake must be equal-length, non-empty score vectors")
    _check_scores(d_real)
    _check_scores(d_fake)
    loss_d = -(lib.log(d_real) + lib.log(1 - d_fake)).sum()
    if gan_variant == "saturating":
        adv = lib.log(1 - d_fake).sum()
    elif gan_variant == "non_saturating":
        adv = -lib.log(d_fake).sum()
    else:
        raise ConfigError(f"unknown gan variant {gan_variant!r}")
    return loss_d, adv + lam * recon


def gan_losses_from_logits(real_logits, fake_logits, recon, lam: float = 1.0,
                           gan_variant: str = "non_saturating"):
    """:func:`gan_losses` evaluated on pre-sigmoid scores with ``logsigmoid``.

    Same values as ``gan_losses(sigmoid(real), sigmoid(fake), ...)`` but without
    the clamp, so a confident discriminator still receives a gradient.
    """
    log_real = F.logsigmoid(real_logits)
    log_not_fake = F.logsigmoid(-fake_logits)
    loss_d = -(log_real + log_not_fake).sum()
    if gan_variant == "saturating":
        adv = log_not_fake.sum()
    elif gan_variant == "non_saturating":
        adv = -F.logsigmoid(fake_logits).sum()
    else:
        raise ConfigError(f"unknown gan variant {gan_variant!r}")
    return loss_d, adv + lam * recon


# Discriminator ----------------------------------------------------------------------


class Discriminator(nn.Module):
    """MATF encoding trunk over past + future, then a per-agent real/fake head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.trunk = FusionTrunk(cfg)
        self.head = nn.Sequential(nn.LayerNorm(cfg.d_agent), nn.Linear(cfg.d_agent, cfg.hidden), nn.ELU(),
                                  nn.Linear(cfg.hidden, 1))

    def forward(self, batch: Batch, future: Optional[torch.Tensor] = None):
        """Per-agent probability that the future is real, clamped to (0, 1)."""
        return torch.sigmoid(self.logits(batch, future)).clamp(SCORE_EPS, 1 - SCORE_EPS)

    def logits(self, batch: Batch, future: Optional[torch.Tensor] = None):
        future = batch.future if future is None else future
        if future is None:
            raise ValueError("discriminator needs a future for every agent")
        if future.shape[0] != batch.past.shape[0] or future.shape[1] != self.cfg.T_future:
            raise ShapeError(f"future shape {tuple(future.shape)} does not match the batch")
        seq = torch.cat([batch.past, future], dim=1)
        final = self.trunk(seq, batch, "multi_agent_scene", anchor_index=self.cfg.T - 1)
        return self.head(final)[:, 0]


def discriminate(episodes: Sequence[Episode], D: Discriminator, futures=None) -> np.ndarray:
    """Per-agent scores for real (default) or supplied futures, flattened over episodes."""
    p = next(D.parameters())
    batch = EpisodeTensors(episodes, D.cfg, p.dtype).batch()
    if futures is not None:
        futures = torch.as_tensor(np.asarray(futures), dtype=p.dtype)
    with torch.no_grad():
        return D(batch, futures).numpy()


# Trainers ---------------------------------------------------------------------------


def _episode_sum(per_agent, batch: Batch):
    return per_agent.sum() / batch.n_episodes


def _check_finite(value, where):
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at {where}")


def train_deterministic(dataset: Sequence[Episode], variant: str, model_cfg: ModelConfig,
                        cfg: TrainConfig = TrainConfig(), val: Sequence[Episode] = (),
                        model: Optional[MATF] = None, dtype=torch.float32) -> Checkpoint:
    """Minibatch Adam on the mean per-agent reconstruction loss.

    The returned checkpoint carries a loss log of ``(epoch, split, name, value)``
    rows; epoch 0 is the untrained model.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    if variant == "gan":
        raise ConfigError("use train_gan for the adversarial variant")
    check_variant(variant)
    seeds = split_seed(cfg.seed)
    torch.manual_seed(seeds["init"])
    if model is None:
        model = MATF(model_cfg, variant)
    model.to(dtype).train()
    data = EpisodeTensors(dataset, model_cfg, dtype)
    val_data = EpisodeTensors(val, model_cfg, dtype) if val else None
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    sched = (torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(cfg.epochs, 1))
             if cfg.lr_schedule == "cosine" else None)
    rng = np.random.default_rng(seeds["data"])
    loss_log = []

    def mean_recon(td):
        with torch.no_grad():
            tot, n = 0.0, 0
            for ids in np.array_split(np.arange(len(td)), max(1, len(td) // 256)):
                b = td.batch(ids)
                tot += float(reconstruction_loss(model(b, variant=variant), b.future, cfg.recon_norm).sum())
                n += b.n_agents
            return tot / n

    loss_log.append((0, "train", "recon", mean_recon(data)))
    if val_data is not None:
        loss_log.append((0, "val", "recon", mean_recon(val_data)))
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        tot, n = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            b = data.batch(order[i:i + cfg.batch_size])
            per_agent = reconstruction_loss(model(b, variant=variant), b.future, cfg.recon_norm)
            loss = per_agent.mean()
            _check_finite(loss.item(), f"epoch {epoch}, batch {i // cfg.batch_size}")
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            tot += float(per_agent.detach().sum())
            n += b.n_agents
        if sched is not None:
            sched.step()
        loss_log.append((epoch, "train", "recon", tot / n))
        if val_data is not None:
            loss_log.append((epoch, "val", "recon", mean_recon(val_data)))
        log.info("epoch %d: train recon %.4f", epoch, tot / n)
    model.eval()
    return Checkpoint(model_cfg, model.state_dict(), "generator", variant,
                      {**cfg.to_dict(), "optimizer": "adam", "mode": "deterministic"}, loss_log)


def warm_start_discriminator(G: MATF) -> Discriminator:
    D = Discriminator(G.cfg).to(next(G.parameters()).dtype)
    D.trunk.load_state_dict(G.trunk.state_dict())
    return D


def train_gan(dataset: Sequence[Episode], det: Checkpoint, cfg: TrainConfig = TrainConfig(),
              dtype=torch.float32):
    """Adversarial fine-tuning; both networks start from the deterministic checkpoint.

    Returns ``(generator_checkpoint, discriminator_checkpoint)``.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    if det.role != "generator" or det.train_config.get("mode") != "deterministic":
        raise ConfigError("GAN training must start from a deterministic generator checkpoint")
    seeds = split_seed(cfg.seed)
    torch.manual_seed(seeds["init"])
    G = det.build().to(dtype).train()
    D = warm_start_discriminator(G).train()
    data = EpisodeTensors(dataset, det.config, dtype)
    opt_g = torch.optim.Adam(G.parameters(), lr=cfg.g_lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(D.parameters(), lr=cfg.d_lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(seeds["data"])
    noise = torch.Generator().manual_seed(seeds["noise"])
    loss_log = []
    for epoch in range(1, cfg.gan_epochs + 1):
        order = rng.permutation(len(data))
        sums = dict(loss_D=0.0, loss_G=0.0, recon=0.0, d_real=0.0, d_fake=0.0)
        n_ep = n_ag = 0
        for i in range(0, len(order), cfg.batch_size):
            b = data.batch(order[i:i + cfg.batch_size])
            for _ in range(cfg.d_steps):
                with torch.no_grad():
                    fake = G(b, G.sample_noise(b.n_agents, noise))
                real_logits, fake_logits = D.logits(b), D.logits(b, fake)
                loss_d, _ = gan_losses_from_logits(real_logits, fake_logits, 0.0, cfg.lam, cfg.gan_variant)
                loss_d = loss_d / b.n_episodes
                _check_finite(loss_d.item(), f"gan epoch {epoch}, D step")
                opt_d.zero_grad()
                loss_d.backward()
                nn.utils.clip_grad_norm_(D.parameters(), cfg.grad_clip)
                opt_d.step()
            fake = G(b, G.sample_noise(b.n_agents, noise))
            recon = reconstruction_loss(fake, b.future, cfg.recon_norm)
            if cfg.variety_k > 1:
                # best-of-k: each agent is only pulled toward the truth by its closest draw
                extra = [reconstruction_loss(G(b, G.sample_noise(b.n_agents, noise)), b.future, cfg.recon_norm)
                         for _ in range(cfg.variety_k - 1)]
                recon = torch.stack([recon, *extra]).min(dim=0).values
            _, loss_g = gan_losses_from_logits(real_logits.detach(), D.logits(b, fake), recon.sum(), cfg.lam,
                                               cfg.gan_variant)
            loss_g = loss_g / b.n_episodes
            _check_finite(loss_g.item(), f"gan epoch {epoch}, G step")
            opt_g.zero_grad()
            loss_g.backward()
            nn.utils.clip_grad_norm_(G.parameters(), cfg.grad_clip)
            opt_g.step()
            sums["loss_D"] += loss_d.item() * b.n_episodes
            sums["loss_G"] += loss_g.item() * b.n_episodes
            sums["recon"] += float(recon.detach().sum())
            sums["d_real"] += float(torch.sigmoid(real_logits.detach()).sum())
            sums["d_fake"] += float(torch.sigmoid(fake_logits.detach()).sum())
            n_ep += b.n_episodes
            n_ag += b.n_agents
        for name in ("loss_D", "loss_G"):
            loss_log.append((epoch, "train", name, sums[name] / n_ep))
        for name in ("recon", "d_real", "d_fake"):
            loss_log.append((epoch, "train", name, sums[name] / n_ag))
        log.info("gan epoch %d: D %.4f G %.4f recon %.4f", epoch, sums["loss_D"] / n_ep,
                 sums["loss_G"] / n_ep, sums["recon"] / n_ag)
    G.eval()
    D.eval()
    tc = {**cfg.to_dict(), "optimizer": "adam(beta1=0.5)", "mode": "gan"}
    g_ckpt = Checkpoint(det.config, G.state_dict(), "generator", G.variant, tc, loss_log)
    d_ckpt = Checkpoint(det.config, D.state_dict(), "discriminator", "multi_agent_scene", tc, loss_log)
    return g_ckpt, d_ckpt


def load_discriminator(ckpt: Checkpoint) -> Discriminator:
    if ckpt.role != "discriminator":
        raise ConfigError("not a discriminator checkpoint")
    D = Discriminator(ckpt.config)
    D.to(next(iter(ckpt.state_dict.values())).dtype)
    D.load_state_dict(ckpt.state_dict)
    return D.eval()


def write_loss_log(path, loss_log) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "split", "loss", "value"])
        for epoch, split, name, value in loss_log:
            w.writerow([epoch, split, name, repr(float(value))])
    return path
