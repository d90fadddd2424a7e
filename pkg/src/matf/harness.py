"""Experiment plumbing: flat configs, run directories, manifests, and the
ablation / resolution-sweep / scaling drivers used by the command line."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .config import ConfigError, ModelConfig, valid_resolutions
from .data.core import Episode
from .data.synthetic import synth_scenarios
from .metrics import EvalReport, evaluate
from .model import MATF, VARIANTS
from .batching import EpisodeTensors
from .training import TrainConfig, split_seed, train_deterministic, train_gan

log = logging.getLogger(__name__)

# Keys that belong to neither ModelConfig nor TrainConfig.
RUN_KEYS = {
    "variant": ("multi_agent_scene", "lstm_only | single_agent_scene | multi_agent | multi_agent_scene | gan"),
    "samples": (20, "samples per agent for best-of-N evaluation of the GAN"),
    "test_fraction": (0.2, "held-out share when no separate test file is given"),
}

CLI_VARIANTS = VARIANTS + ("gan",)
VARIANT_ALIASES = {"lstm": "lstm_only"}
DEFAULT_RESOLUTIONS = (4, 8, 16, 32, 64)
DEFAULT_AGENT_COUNTS = (8, 16, 32, 64)


def normalize_variant(name: str) -> str:
    name = VARIANT_ALIASES.get(name, name)
    if name not in CLI_VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {CLI_VARIANTS}")
    return name


# Flat key=value configuration -----------------------------------------------------------


def config_defaults() -> Dict[str, object]:
    out = {}
    for f in dataclasses.fields(ModelConfig):
        out[f.name] = f.default
    for f in dataclasses.fields(TrainConfig):
        out[f.name] = f.default
    for k, (v, _) in RUN_KEYS.items():
        out[k] = v
    return out


def _coerce(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            parts = [int(p) for p in raw.lower().replace(",", "x").split("x") if p]
            return (parts[0], parts[0]) if len(parts) == 1 else tuple(parts)
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    known = config_defaults()
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def load_config_file(path) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def resolve_config(file_values: Optional[dict] = None, overrides: Optional[dict] = None):
    """Merge defaults < file < overrides and build typed configs.

    Returns ``(ModelConfig, TrainConfig, run_options, flat_effective_dict)``.
    """
    defaults = config_defaults()
    merged = dict(defaults)
    for source in (file_values or {}, overrides or {}):
        for k, v in source.items():
            if v is None:
                continue
            if k not in defaults:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = _coerce(k, v, defaults[k])
    model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
    train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    mc = ModelConfig(**{k: merged[k] for k in model_keys})
    tc = TrainConfig(**{k: merged[k] for k in train_keys})
    run = {k: merged[k] for k in RUN_KEYS}
    run["variant"] = normalize_variant(run["variant"])
    flat = {k: (list(v) if isinstance(v, tuple) else v) for k, v in merged.items()}
    flat["variant"] = run["variant"]
    return mc, tc, run, flat


def format_config(flat: dict) -> str:
    lines = []
    for k in sorted(flat):
        v = flat[k]
        if isinstance(v, (list, tuple)):
            v = "x".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# Run directories and manifests ---------------------------------------------------------


def make_run_dir(root, seed: int, label: str = "") -> Path:
    """``<root>/<YYYYmmdd-HHMMSS>-s<seed>[-label]``; a numeric suffix avoids collisions."""
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = f"{stamp}-s{seed}" + (f"-{label}" if label else "")
    root = Path(root)
    path = root / base
    k = 1
    while path.exists():
        path = root / f"{base}.{k}"
        k += 1
    path.mkdir(parents=True)
    return path


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclasses.dataclass
class ExperimentManifest:
    command: str
    argv: List[str]
    config: dict
    seed: int
    seeds: dict
    cwd: str = ""
    datasets: Dict[str, dict] = dataclasses.field(default_factory=dict)
    checkpoints: Dict[str, str] = dataclasses.field(default_factory=dict)
    metrics: Dict[str, dict] = dataclasses.field(default_factory=dict)
    figures: List[str] = dataclasses.field(default_factory=list)
    timings: Dict[str, float] = dataclasses.field(default_factory=dict)
    versions: dict = dataclasses.field(default_factory=lambda: {
        "torch": torch.__version__, "numpy": np.__version__, "format": 1})

    def add_dataset(self, role: str, path, n_episodes: Optional[int] = None):
        path = Path(path)
        self.datasets[role] = {"path": str(path.resolve()), "sha256": file_sha256(path),
                               "n_episodes": n_episodes}

    def add_metric(self, name: str, path, run_dir):
        path = Path(path)
        self.metrics[name] = {"path": str(path.relative_to(run_dir)), "sha256": file_sha256(path)}

    def write(self, run_dir) -> Path:
        p = Path(run_dir) / "manifest.json"
        p.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return p

    @classmethod
    def read(cls, path) -> "ExperimentManifest":
        d = json.loads(Path(path).read_text())
        return cls(**d)


def write_table(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def read_table(path) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def split_episodes(episodes: Sequence[Episode], test_fraction: float, seed: int):
    """Deterministic train/test split keyed on the data seed."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie in (0, 1)")
    order = np.random.default_rng(split_seed(seed)["data"]).permutation(len(episodes))
    n_test = max(1, int(round(test_fraction * len(episodes))))
    if n_test >= len(episodes):
        raise ConfigError("dataset too small to hold out a test split")
    test = sorted(order[:n_test].tolist())
    train = sorted(order[n_test:].tolist())
    return [episodes[i] for i in train], [episodes[i] for i in test]


# Drivers -----------------------------------------------------------------------------


@dataclasses.dataclass
class VariantResult:
    variant: str
    report: EvalReport
    seconds: float
    checkpoint: object = None


def train_variant(variant: str, train: Sequence[Episode], mc: ModelConfig, tc: TrainConfig,
                  init=None, val: Sequence[Episode] = ()):
    """Train one CLI variant. ``gan`` needs a deterministic ``init`` checkpoint."""
    variant = normalize_variant(variant)
    if variant == "gan":
        if init is None:
            raise ConfigError("variant 'gan' must be initialised from a trained deterministic checkpoint")
        return train_gan(train, init, tc)
    return train_deterministic(train, variant, mc, tc, val=val), None


def ablate(train: Sequence[Episode], test: Sequence[Episode], mc: ModelConfig, tc: TrainConfig,
           variants: Sequence[str] = CLI_VARIANTS, samples: int = 20) -> List[VariantResult]:
    """Train and evaluate each variant on one split with one seed set.

    The adversarial row is warm-started from the ``multi_agent_scene`` model
    (trained here if it is not in ``variants``) and scored best-of-``samples``.
    """
    variants = [normalize_variant(v) for v in variants]
    results, det_mas = [], None
    for v in variants:
        if v == "gan":
            continue
        t0 = time.perf_counter()
        ck = train_deterministic(train, v, mc, tc)
        results.append(VariantResult(v, evaluate(ck, test), time.perf_counter() - t0, ck))
        if v == "multi_agent_scene":
            det_mas = ck
    if "gan" in variants:
        t0 = time.perf_counter()
        if det_mas is None:
            det_mas = train_deterministic(train, "multi_agent_scene", mc, tc)
        g, _ = train_gan(train, det_mas, tc)
        rep = evaluate(g, test, samples=samples, seed=split_seed(tc.seed)["noise"])
        results.append(VariantResult("gan", rep, time.perf_counter() - t0, g))
    return results


def ablation_rows(results: Sequence[VariantResult]):
    header = ["variant", "protocol", "ade", "fde"]
    T = results[0].report.T_future if results else 0
    dt = results[0].report.dt if results else 0
    header += [f"mae_{round((t + 1) * dt, 6)}s" for t in range(T)]
    rows = []
    for r in results:
        proto = f"best_of_{r.report.samples}" if r.report.samples else "deterministic"
        rows.append([r.variant, proto, r.report.ade, r.report.fde] + [float(v) for v in r.report.mae])
    return header, rows


def sweep_resolution(train: Sequence[Episode], test: Sequence[Episode], mc: ModelConfig, tc: TrainConfig,
                     resolutions: Sequence[int] = DEFAULT_RESOLUTIONS, variant: str = "multi_agent_scene"):
    """Train ``variant`` at each fused-map size; returns ``[(res, report, seconds)]``.

    Every resolution is validated before any training starts.
    """
    valid = valid_resolutions(mc.scene_hw[0], mc.unet_depth)
    for r in resolutions:
        if r not in valid:
            raise ConfigError(f"resolution {r} is not usable with scene {mc.scene_hw[0]} and "
                              f"unet_depth {mc.unet_depth}; valid values: {valid}")
    out = []
    for r in resolutions:
        cfg = dataclasses.replace(mc, grid_hw=(r, r))
        t0 = time.perf_counter()
        ck = train_deterministic(train, variant, cfg, tc)
        out.append((r, evaluate(ck, test), time.perf_counter() - t0))
    return out


def loglog_slope(ns, seconds) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(seconds, float)), 1)[0])


def bench_scaling(agent_counts: Sequence[int] = DEFAULT_AGENT_COUNTS, mc: Optional[ModelConfig] = None,
                  repeats: int = 5, seed: int = 0, warmup: int = 2):
    """Time single-episode forward passes as the agent count grows.

    Returns ``(rows, slope)`` with rows ``(n, median_seconds, fuse_invocations_per_pass)``.
    """
    mc = mc or ModelConfig()
    torch.manual_seed(split_seed(seed)["init"])
    model = MATF(mc, "multi_agent_scene").eval()
    base, _ = synth_scenarios("const_velocity", 1, seed, T=mc.T, T_future=mc.T_future, dt=mc.dt)
    rows = []
    for n in agent_counts:
        ep = _crowd(base[0], n, seed)
        batch = EpisodeTensors([ep], mc).batch()
        times = []
        with torch.no_grad():
            for k in range(warmup + repeats):
                before = model.fuse_invocations
                t0 = time.perf_counter()
                model(batch)
                dt = time.perf_counter() - t0
                fused = model.fuse_invocations - before
                if k >= warmup:
                    times.append(dt)
        rows.append((n, float(np.median(times)), fused))
    return rows, loglog_slope([r[0] for r in rows], [r[1] for r in rows])


def _crowd(template: Episode, n: int, seed: int) -> Episode:
    """``n`` constant-velocity agents scattered inside the template scene."""
    from .data.core import AgentWindow

    rng = np.random.default_rng([seed, n])
    T, Tf, dt = template.T, template.T_future, template.dt
    agents = []
    ks = np.arange(-(T - 1), Tf + 1)[:, None] * dt
    for i in range(n):
        anchor = rng.uniform(6.0, 26.0, 2)
        v = rng.normal(size=2)
        v = v / np.linalg.norm(v) * rng.uniform(0.8, 1.6)
        traj = ks * v
        agents.append(AgentWindow(f"bench:{i}", traj[:T], traj[T:], anchor))
    return Episode(template.scene, agents, T, Tf, dt, "anchor_centered", template.unit)
