"""Command-line front end.

Every verb writes into a fresh run directory ``<run-root>/<timestamp>-s<seed>-<verb>``
holding a ``manifest.json`` plus whatever CSVs, checkpoints and figures the
verb produces. Tables are also echoed to stdout as CSV.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import shutil
import sys
import time
from collections import Counter
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from . import harness
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig
from .data import (DataError, DatasetSpec, SceneContext, load_ethucy_text, read_episodes, segment_episodes,
                   synth_scenarios, write_episodes)
from .data.synthetic import KINDS
from .metrics import evaluate, sample_predictions
from .training import TrainConfig, TrainingError, split_seed, write_loss_log

log = logging.getLogger("matf")

CONFIG_HELP = {
    "scene_hw": "scene raster size, e.g. 64 or 64x64",
    "c_in": "scene raster channels",
    "grid_hw": "fused map size, e.g. 32; scene_hw / grid_hw must be a power of two",
    "d_agent": "agent feature width (also the fused map output width)",
    "c_scene": "scene feature channels",
    "hidden": "LSTM hidden size",
    "embed": "per-step input embedding size",
    "unet_depth": "number of U-Net pooling levels",
    "unet_channels": "U-Net base width",
    "d_noise": "noise width for the adversarial generator",
    "T": "observed steps",
    "T_future": "predicted steps",
    "dt": "seconds per step",
    "coord_scale": "divisor applied to coordinates before the networks",
    "activation": "elu | relu | silu",
    "recon_norm": "L1 | L2 reconstruction loss",
    "lam": "reconstruction weight in the generator loss",
    "gan_variant": "saturating | non_saturating generator loss",
    "lr": "Adam learning rate for deterministic training",
    "batch_size": "episodes per minibatch",
    "epochs": "deterministic training epochs",
    "seed": "master seed (split into data / init / noise seeds)",
    "grad_clip": "gradient norm clip",
    "gan_epochs": "adversarial fine-tuning epochs",
    "g_lr": "generator learning rate (adversarial phase)",
    "d_lr": "discriminator learning rate",
    "d_steps": "discriminator steps per generator step",
    "variety_k": "GAN reconstruction term uses the closest of k noise draws per agent (1 = plain)",
    "lr_schedule": "constant | cosine",
}
CONFIG_HELP.update({k: doc for k, (_, doc) in harness.RUN_KEYS.items()})


class CLIError(Exception):
    pass


# argument plumbing ----------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, skip=()):
    g = p.add_argument_group("configuration (override --config values)")
    g.add_argument("--config", type=Path, help="flat key = value file")
    for key, default in harness.config_defaults().items():
        if key in skip:
            continue
        if isinstance(default, tuple):
            default = "x".join(map(str, default))
        g.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="V",
                       help=f"{CONFIG_HELP.get(key, '')} (default {default})")


def _add_run_root(p):
    p.add_argument("--run-root", type=Path, default=Path("runs"), help="parent of the run directory (default runs)")


def _resolve(args, skip=(), episodes=None):
    file_values = harness.load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k) for k in harness.config_defaults() if k not in skip and hasattr(args, k)}
    if episodes:
        # raster size and channels follow the data unless set explicitly
        h, w, c = episodes[0].scene.grid.shape
        for key, value in (("scene_hw", f"{h}x{w}"), ("c_in", str(c))):
            if key not in file_values and overrides.get(key) is None:
                overrides[key] = value
    return harness.resolve_config(file_values, overrides)


def _require_file(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise CLIError(f"{what} is required")
    if not Path(path).is_file():
        raise CLIError(f"{what} not found: {path}")
    return Path(path)


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _print_table(header, rows):
    w = csv.writer(sys.stdout)
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])


class Run:
    """A run directory plus its manifest; removed again if the command fails."""

    def __init__(self, args, command: str, seed: int, config: Optional[dict] = None):
        self.dir = harness.make_run_dir(args.run_root, seed, command)
        self.manifest = harness.ExperimentManifest(
            command=command, argv=list(args.argv), config=config or {}, seed=seed, seeds=split_seed(seed),
            cwd=str(Path.cwd()))
        self.t0 = time.perf_counter()

    def path(self, name) -> Path:
        return self.dir / name

    def metric(self, name, path):
        self.manifest.add_metric(name, path, self.dir)

    def figure(self, path):
        self.manifest.figures.append(str(Path(path).relative_to(self.dir)))

    def finish(self):
        self.manifest.timings["total_s"] = round(time.perf_counter() - self.t0, 3)
        self.manifest.write(self.dir)
        print(f"run directory: {self.dir}", file=sys.stderr)
        return self.dir

    def abort(self):
        shutil.rmtree(self.dir, ignore_errors=True)


def _load_dataset(path, what="dataset"):
    path = _require_file(path, what)
    eps = read_episodes(path)
    if not eps:
        raise CLIError(f"{what} {path} holds no episodes")
    return path, eps


def _split(args, run_opts, seed, data):
    train_path, train = data
    if args.test is not None:
        test_path, test = _load_dataset(args.test, "--test")
    else:
        test_path = None
        train, test = harness.split_episodes(train, run_opts["test_fraction"], seed)
    return train_path, train, test_path, test


# verbs ------------------------------------------------------------------------------


def cmd_prepare(args):
    source = args.source
    kind, _, arg = source.partition(":")
    spec_kw = dict(T=args.T, T_future=args.T_future, dt=args.dt, normalization=args.normalization)
    if kind == "synthetic":
        if arg not in KINDS:
            raise CLIError(f"unknown synthetic kind {arg!r}; expected one of {KINDS}")
        episodes, _ = synth_scenarios(arg, args.n_episodes, args.seed, **spec_kw)
        inputs = {}
    elif kind == "ethucy":
        path = _require_file(Path(arg) if arg else None, "ETH/UCY track file")
        tracks = load_ethucy_text(path, frame_stride=args.frame_stride, unit=args.unit)
        scene = _blank_scene(tracks, args.scene_cells, args.cell_size)
        spec = DatasetSpec("ethucy_text", stride=args.stride, **spec_kw)
        episodes = segment_episodes(tracks, scene, spec)
        inputs = {"tracks": path}
    else:
        raise CLIError(f"--source must be synthetic:<kind> or ethucy:<path>, got {source!r}")
    if not episodes:
        raise CLIError("source produced no episodes")
    run = Run(args, "prepare", args.seed, {"source": source, "n_episodes": args.n_episodes, **spec_kw})
    try:
        for role, p in inputs.items():
            run.manifest.add_dataset(role, p)
        out = run.path("episodes.jsonl")
        write_episodes(out, episodes)
        summary = _dataset_summary(episodes)
        run.path("summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        run.manifest.add_dataset("episodes", out, len(episodes))
        run.metric("summary", run.path("summary.json"))
        _print_table(["key", "value"], [(k, v) for k, v in summary.items() if not isinstance(v, dict)])
        return run.finish()
    except BaseException:
        run.abort()
        raise


def _blank_scene(tracks, cells: int, cell_size: Optional[float]) -> SceneContext:
    """All-drivable raster centred on the tracks (ETH/UCY files ship no map)."""
    pts = np.concatenate([t.positions for t in tracks])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    size = cell_size or max(float((hi - lo).max()) * 1.1 / cells, 1e-3)
    centre = (lo + hi) / 2
    origin = centre - size * cells / 2
    return SceneContext(np.ones((cells, cells, 1), np.float32), tuple(origin), size, ("drivable",))


def _dataset_summary(episodes):
    agents = Counter(len(e.agents) for e in episodes)
    return {
        "episodes": len(episodes),
        "agents": int(sum(len(e.agents) for e in episodes)),
        "T": episodes[0].T,
        "T_future": episodes[0].T_future,
        "dt": episodes[0].dt,
        "duration_s": round((episodes[0].T + episodes[0].T_future - 1) * episodes[0].dt, 6),
        "normalization": episodes[0].normalization,
        "agents_per_episode_histogram": {str(k): agents[k] for k in sorted(agents)},
    }


def cmd_train(args):
    data_path, train = _load_dataset(args.data, "--data")
    mc, tc, run_opts, flat = _resolve(args, episodes=train)
    variant = run_opts["variant"]
    init = None
    if variant == "gan":
        if args.init_from is None:
            raise CLIError("variant gan requires --init-from <deterministic checkpoint>")
        init = load_checkpoint(_require_file(args.init_from, "--init-from"))
        mc = init.config
        flat.update(mc.to_dict())
    val_path, val = (None, ())
    if args.val is not None:
        val_path, val = _load_dataset(args.val, "--val")
    run = Run(args, "train", tc.seed, flat)
    try:
        run.path("config.txt").write_text(harness.format_config(flat))
        run.manifest.add_dataset("train", data_path, len(train))
        if val_path:
            run.manifest.add_dataset("val", val_path, len(val))
        if init is not None:
            run.manifest.datasets["init_from"] = {"path": str(Path(args.init_from).resolve()),
                                                  "sha256": harness.file_sha256(args.init_from)}
        t0 = time.perf_counter()
        g, d = harness.train_variant(variant, train, mc, tc, init=init, val=val)
        run.manifest.timings["train_s"] = round(time.perf_counter() - t0, 3)
        run.manifest.checkpoints["model"] = str(save_checkpoint(run.path("model.pt"), g).name)
        if d is not None:
            run.manifest.checkpoints["discriminator"] = str(save_checkpoint(run.path("discriminator.pt"), d).name)
        write_loss_log(run.path("loss.csv"), g.loss_log)
        run.metric("loss", run.path("loss.csv"))
        if not args.no_plot:
            from .plotting import plot_loss
            run.figure(plot_loss(g.loss_log, run.path("loss.png")))
        last = [r for r in g.loss_log if r[0] == g.loss_log[-1][0]]
        _print_table(["epoch", "split", "loss", "value"], last)
        return run.finish()
    except BaseException:
        run.abort()
        raise


def cmd_eval(args):
    ckpt = load_checkpoint(_require_file(args.checkpoint, "--checkpoint"))
    data_path, episodes = _load_dataset(args.data, "--data")
    run = Run(args, "eval", args.seed, {"samples": args.samples, "checkpoint": str(args.checkpoint),
                                        "plot": args.plot, "plot_samples": args.plot_samples})
    try:
        run.manifest.add_dataset("eval", data_path, len(episodes))
        run.manifest.checkpoints["model"] = str(Path(args.checkpoint).resolve())
        t0 = time.perf_counter()
        report = evaluate(ckpt, episodes, samples=args.samples, seed=split_seed(args.seed)["noise"])
        run.manifest.timings["eval_s"] = round(time.perf_counter() - t0, 3)
        report.write(run.dir, "metrics")
        run.metric("metrics", run.path("metrics.csv"))
        if args.plot:
            _episode_figures(run, ckpt, episodes, args)
        _print_table(["metric", "step", "horizon_s", "value"], report.rows())
        return run.finish()
    except BaseException:
        run.abort()
        raise


def _episode_figures(run, ckpt, episodes, args):
    from .model import predict_many
    from .plotting import plot_episode

    model = ckpt.build()
    idx = list(range(min(args.plot, len(episodes))))
    chosen = [episodes[i] for i in idx]
    det = predict_many(chosen, model).numpy()
    draws = None
    if args.plot_samples > 0 and ckpt.train_config.get("mode") == "gan":
        draws = sample_predictions(model, chosen, args.plot_samples, seed=split_seed(args.seed)["noise"])
    offset = 0
    for k, ep in zip(idx, chosen):
        n = len(ep.agents)
        samples = None if draws is None else draws[:, offset:offset + n]
        path = plot_episode(ep, run.path(f"figures/episode_{k:04d}.png"), samples=samples,
                            prediction=det[offset:offset + n], title=f"episode {k}")
        run.figure(path)
        offset += n


def cmd_ablate(args):
    data = _load_dataset(args.data, "--data")
    mc, tc, run_opts, flat = _resolve(args, skip=("variant",), episodes=data[1])
    flat.pop("variant", None)
    variants = [harness.normalize_variant(v) for v in args.variants.split(",")]
    data_path, train, test_path, test = _split(args, run_opts, tc.seed, data)
    run = Run(args, "ablate", tc.seed, {**flat, "variants": variants})
    try:
        run.manifest.add_dataset("train", data_path, len(train))
        if test_path:
            run.manifest.add_dataset("test", test_path, len(test))
        results = harness.ablate(train, test, mc, tc, variants, samples=run_opts["samples"])
        header, rows = harness.ablation_rows(results)
        harness.write_table(run.path("ablation.csv"), header, rows)
        run.metric("ablation", run.path("ablation.csv"))
        for r in results:
            run.manifest.timings[f"{r.variant}_s"] = round(r.seconds, 3)
            if args.save_checkpoints:
                save_checkpoint(run.path(f"{r.variant}.pt"), r.checkpoint)
                run.manifest.checkpoints[r.variant] = f"{r.variant}.pt"
        if not args.no_plot:
            from .plotting import plot_horizon_curves
            run.figure(plot_horizon_curves({r.variant: r.report.mae for r in results}, mc.dt,
                                           run.path("mae_vs_horizon.png"), unit=test[0].unit))
        _print_table(header, rows)
        return run.finish()
    except BaseException:
        run.abort()
        raise


def cmd_sweep(args):
    data = _load_dataset(args.data, "--data")
    mc, tc, run_opts, flat = _resolve(args, skip=("grid_hw", "variant"), episodes=data[1])
    flat.pop("variant", None)
    flat.pop("grid_hw", None)
    resolutions = args.resolutions
    # validate before touching the file system
    valid = harness.valid_resolutions(mc.scene_hw[0], mc.unet_depth)
    bad = [r for r in resolutions if r not in valid]
    not_pow2 = [r for r in bad if r < 1 or r & (r - 1)]
    if not_pow2:
        raise ConfigError(f"resolution(s) {not_pow2} not a power of two; valid values: {valid}")
    if bad:
        raise ConfigError(f"resolution(s) {bad} unusable with scene {mc.scene_hw[0]} and unet_depth "
                          f"{mc.unet_depth}; valid values: {valid}")
    data_path, train, test_path, test = _split(args, run_opts, tc.seed, data)
    run = Run(args, "sweep-res", tc.seed, {**flat, "resolutions": resolutions})
    try:
        run.manifest.add_dataset("train", data_path, len(train))
        if test_path:
            run.manifest.add_dataset("test", test_path, len(test))
        out = harness.sweep_resolution(train, test, mc, tc, resolutions)
        header = ["resolution", "grid", "ade", "fde"]
        rows = [[r, f"{r}x{r}", rep.ade, rep.fde] for r, rep, _ in out]
        harness.write_table(run.path("sweep.csv"), header, rows)
        run.metric("sweep", run.path("sweep.csv"))
        for r, _, secs in out:
            run.manifest.timings[f"res_{r}_s"] = round(secs, 3)
        if not args.no_plot:
            from .plotting import plot_sweep
            run.figure(plot_sweep(resolutions, [row[2] for row in rows], [row[3] for row in rows],
                                  run.path("sweep.png")))
        _print_table(header, rows)
        best = min(rows, key=lambda r: r[2])
        print(f"# lowest ADE at {best[1]}; shape across resolutions is reported, not asserted", file=sys.stderr)
        return run.finish()
    except BaseException:
        run.abort()
        raise


def cmd_bench(args):
    mc, tc, _, flat = _resolve(args)
    run = Run(args, "bench", tc.seed, {**flat, "agents": args.agents, "repeats": args.repeats})
    try:
        rows, slope = harness.bench_scaling(args.agents, mc, repeats=args.repeats, seed=tc.seed)
        header = ["n_agents", "seconds", "fuse_invocations"]
        harness.write_table(run.path("bench.csv"), header, rows)
        # wall-clock numbers are not reproducible, so they are recorded as timings, not metrics
        run.manifest.timings["bench"] = {str(n): s for n, s, _ in rows}
        run.manifest.timings["loglog_slope"] = slope
        (run.path("fit.json")).write_text(json.dumps(
            {"loglog_slope": slope, "fuse_invocations": {str(n): f for n, _, f in rows}}, indent=2) + "\n")
        if not args.no_plot:
            from .plotting import plot_scaling
            run.figure(plot_scaling([r[0] for r in rows], [r[1] for r in rows], slope, run.path("bench.png")))
        _print_table(header, rows)
        print(f"loglog_slope,{slope:.4f}")
        return run.finish()
    except BaseException:
        run.abort()
        raise


def cmd_plot(args):
    """Re-render figures from the tables already stored in a run directory."""
    from . import plotting

    src = Path(args.run)
    if not (src / "manifest.json").is_file():
        raise CLIError(f"not a run directory (no manifest.json): {src}")
    out_dir = src / "figures"
    made = []
    if (src / "loss.csv").is_file():
        _, rows = harness.read_table(src / "loss.csv")
        made.append(plotting.plot_loss([(int(e), s, n, float(v)) for e, s, n, v in rows], out_dir / "loss.png"))
    if (src / "ablation.csv").is_file():
        header, rows = harness.read_table(src / "ablation.csv")
        steps = [h for h in header if h.startswith("mae_")]
        dt = float(steps[0][4:-1]) if steps else 1.0
        curves = {r[0]: [float(v) for v in r[4:]] for r in rows}
        made.append(plotting.plot_horizon_curves(curves, dt, out_dir / "mae_vs_horizon.png"))
    if (src / "sweep.csv").is_file():
        _, rows = harness.read_table(src / "sweep.csv")
        made.append(plotting.plot_sweep([int(r[0]) for r in rows], [float(r[2]) for r in rows],
                                        [float(r[3]) for r in rows], out_dir / "sweep.png"))
    if (src / "bench.csv").is_file():
        _, rows = harness.read_table(src / "bench.csv")
        ns, secs = [int(r[0]) for r in rows], [float(r[1]) for r in rows]
        made.append(plotting.plot_scaling(ns, secs, harness.loglog_slope(ns, secs), out_dir / "bench.png"))
    if args.data is not None:
        _, eps = _load_dataset(args.data, "--data")
        for k in range(min(args.episodes, len(eps))):
            made.append(plotting.plot_episode(eps[k], out_dir / f"data_{k:04d}.png", title=f"episode {k}"))
    if not made:
        raise CLIError(f"nothing to plot in {src}")
    for p in made:
        print(p)
    return src


def cmd_rerun(args):
    """Repeat a recorded command and compare its metric files byte for byte."""
    man = harness.ExperimentManifest.read(_require_file(args.manifest, "--manifest"))
    for role, ds in man.datasets.items():
        if Path(ds["path"]).is_file() and harness.file_sha256(ds["path"]) != ds["sha256"]:
            raise CLIError(f"input {role} ({ds['path']}) changed since the recorded run")
    argv = list(man.argv) + ["--run-root", str(Path(args.run_root).resolve())]
    here = Path.cwd()
    os.chdir(man.cwd or here)
    try:
        new_dir = main(argv, _raise=True)
    finally:
        os.chdir(here)
    new = harness.ExperimentManifest.read(Path(new_dir) / "manifest.json")
    rows, ok = [], True
    for name, rec in man.metrics.items():
        got = new.metrics.get(name, {}).get("sha256")
        same = got == rec["sha256"]
        ok &= same
        rows.append([name, rec["path"], "identical" if same else "DIFFERENT"])
    _print_table(["metric", "file", "status"], rows)
    if not ok:
        raise CLIError("re-run did not reproduce the recorded metric files")
    return new_dir


# parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matf", description="Multi-agent tensor fusion trajectory prediction.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("prepare", help="build an episode file from synthetic scenarios or an ETH/UCY track file")
    s.add_argument("--source", required=True, help="synthetic:<kind> (kinds: %s) or ethucy:<path>" % ", ".join(KINDS))
    s.add_argument("--n-episodes", type=int, default=1000, help="synthetic episodes to draw (default 1000)")
    s.add_argument("--seed", type=int, default=0, help="synthetic generator seed (default 0)")
    s.add_argument("--T", type=int, default=8, help="observed steps (default 8)")
    s.add_argument("--T-future", dest="T_future", type=int, default=12, help="predicted steps (default 12)")
    s.add_argument("--dt", type=float, default=0.4, help="seconds per step (default 0.4)")
    s.add_argument("--stride", type=int, default=1, help="window stride for track files (default 1)")
    s.add_argument("--normalization", default="anchor_centered", choices=["none", "anchor_centered"])
    s.add_argument("--frame-stride", type=int, default=None, help="frame ids per step (inferred if omitted)")
    s.add_argument("--unit", default="meters", choices=["meters", "pixels"])
    s.add_argument("--scene-cells", type=int, default=64, help="raster size for track files (default 64)")
    s.add_argument("--cell-size", type=float, default=None, help="raster cell size for track files (default: fit)")
    _add_run_root(s)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train one variant and write checkpoint + loss CSV")
    s.add_argument("--data", type=Path, required=True, help="episode file from `prepare`")
    s.add_argument("--val", type=Path, help="optional validation episode file")
    s.add_argument("--variant", choices=list(harness.CLI_VARIANTS) + ["lstm"], default=None,
                   help="model variant (default from config: multi_agent_scene)")
    s.add_argument("--init-from", type=Path, help="deterministic checkpoint; required for --variant gan")
    s.add_argument("--no-plot", action="store_true", help="skip the loss figure")
    _add_config_flags(s, skip=("variant",))
    _add_run_root(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint on an episode file")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--samples", type=int, default=0, help="0 = deterministic (z = 0); N = best-of-N")
    s.add_argument("--seed", type=int, default=0, help="master seed for noise draws (default 0)")
    s.add_argument("--plot", type=int, default=0, metavar="K", help="render the first K episodes")
    s.add_argument("--plot-samples", type=int, default=100, help="sampled futures per figure for GAN checkpoints")
    _add_run_root(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="train and score every variant on one split")
    s.add_argument("--data", type=Path, required=True, help="training episodes (split if --test is absent)")
    s.add_argument("--test", type=Path, help="held-out episodes")
    s.add_argument("--variants", default=",".join(harness.CLI_VARIANTS),
                   help="comma-separated subset (default: all five)")
    s.add_argument("--save-checkpoints", action="store_true")
    s.add_argument("--no-plot", action="store_true")
    _add_config_flags(s, skip=("variant",))
    _add_run_root(s)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep-res", help="train multi_agent_scene at several fused-map sizes")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--test", type=Path)
    s.add_argument("--resolutions", type=_int_list, default=list(harness.DEFAULT_RESOLUTIONS),
                   help="comma-separated grid sizes (default 4,8,16,32,64)")
    s.add_argument("--no-plot", action="store_true")
    _add_config_flags(s, skip=("variant", "grid_hw"))
    _add_run_root(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("bench", help="time forward passes as the agent count grows")
    s.add_argument("--agents", type=_int_list, default=list(harness.DEFAULT_AGENT_COUNTS),
                   help="comma-separated agent counts (default 8,16,32,64)")
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--no-plot", action="store_true")
    _add_config_flags(s, skip=("variant",))
    _add_run_root(s)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("plot", help="re-render figures from a run directory's tables")
    s.add_argument("--run", type=Path, required=True)
    s.add_argument("--data", type=Path, help="also draw episodes from this file")
    s.add_argument("--episodes", type=int, default=4)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("rerun", help="repeat a run from its manifest and check metric files match")
    s.add_argument("--manifest", type=Path, required=True)
    _add_run_root(s)
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv=None, _raise: bool = False):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = [a for a in argv]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.use_deterministic_algorithms(True, warn_only=True)
    try:
        result = args.func(args)
    except (CLIError, ConfigError, DataError, TrainingError, FileNotFoundError) as exc:
        if _raise:
            raise
        print(f"matf {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return result if _raise else 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
