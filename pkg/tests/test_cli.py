import csv
import json
from pathlib import Path

import pytest

from matf import harness
from matf.cli import build_parser, main
from matf.config import ConfigError
from matf.data import read_episodes

TINY = """\
# small enough for a unit test
grid_hw = 8
unet_depth = 1
d_agent = 4
c_scene = 2
hidden = 8
embed = 4
unet_channels = 4
d_noise = 2
epochs = 1
gan_epochs = 1
"""


@pytest.fixture()
def root(tmp_path):
    (tmp_path / "tiny.cfg").write_text(TINY)
    return tmp_path


def _run(root, *argv):
    return main([*argv, "--run-root", str(root / "runs")] if argv[0] != "plot" else list(argv), _raise=True)


@pytest.fixture()
def prepared(root):
    d = _run(root, "prepare", "--source", "synthetic:avoidance_pair", "--n-episodes", "12", "--seed", "7")
    return d / "episodes.jsonl"


def test_help_for_every_verb(capsys):
    parser = build_parser()
    for verb in ("prepare", "train", "eval", "ablate", "sweep-res", "bench", "plot", "rerun"):
        with pytest.raises(SystemExit) as e:
            parser.parse_args([verb, "--help"])
        assert e.value.code == 0
        assert "usage" in capsys.readouterr().out


def test_prepare_is_reproducible(root, prepared):
    again = _run(root, "prepare", "--source", "synthetic:avoidance_pair", "--n-episodes", "12", "--seed", "7")
    assert prepared.read_bytes() == (again / "episodes.jsonl").read_bytes()
    assert len(read_episodes(prepared)) == 12
    summary = json.loads((prepared.parent / "summary.json").read_text())
    assert summary["episodes"] == 12 and summary["agents"] == 24
    man = json.loads((prepared.parent / "manifest.json").read_text())
    assert man["datasets"]["episodes"]["n_episodes"] == 12
    assert prepared.parent.name.split("-")[2] == "s7"


def test_prepare_ethucy(root):
    lines = []
    for frame in range(0, 300, 10):
        lines.append(f"{frame} 1 {1 + frame / 100:.3f} 2.0")
        if frame >= 50:
            lines.append(f"{frame} 2 3.0 {frame / 100:.3f}")
    (root / "tracks.txt").write_text("\n".join(lines) + "\n")
    d = _run(root, "prepare", "--source", f"ethucy:{root / 'tracks.txt'}")
    eps = read_episodes(d / "episodes.jsonl")
    # agent 1 spans 30 steps -> 30 - 20 + 1 windows
    assert len(eps) == 11
    assert max(len(e.agents) for e in eps) == 2
    # one-channel blank raster: c_in is taken from the data
    t = _run(root, "train", "--data", str(d / "episodes.jsonl"), "--config", str(root / "tiny.cfg"), "--no-plot")
    assert json.loads((t / "manifest.json").read_text())["config"]["c_in"] == 1


def test_prepare_missing_input_leaves_nothing(root):
    rc = main(["prepare", "--source", f"ethucy:{root / 'nope.txt'}", "--run-root", str(root / "runs")])
    assert rc == 1
    assert not (root / "runs").exists() or not any((root / "runs").iterdir())


def test_train_twice_gives_identical_loss_csv(root, prepared):
    a = _run(root, "train", "--data", str(prepared), "--config", str(root / "tiny.cfg"), "--variant", "lstm")
    b = _run(root, "train", "--data", str(prepared), "--config", str(root / "tiny.cfg"), "--variant", "lstm")
    assert (a / "loss.csv").read_bytes() == (b / "loss.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["config"]["variant"] == "lstm_only" and man["config"]["grid_hw"] == [8, 8]
    assert (a / "model.pt").is_file() and (a / "config.txt").is_file()


def test_flags_override_config_file(root, prepared):
    d = _run(root, "train", "--data", str(prepared), "--config", str(root / "tiny.cfg"), "--epochs", "2",
             "--variant", "lstm_only", "--no-plot")
    assert json.loads((d / "manifest.json").read_text())["config"]["epochs"] == 2
    with open(d / "loss.csv") as f:
        assert max(int(r["epoch"]) for r in csv.DictReader(f)) == 2


def test_gan_requires_init(root, prepared):
    with pytest.raises(Exception, match="init-from"):
        _run(root, "train", "--data", str(prepared), "--variant", "gan")
    assert main(["train", "--data", str(prepared), "--variant", "gan", "--run-root", str(root / "r2")]) == 1


def test_gan_from_checkpoint_then_eval(root, prepared):
    det = _run(root, "train", "--data", str(prepared), "--config", str(root / "tiny.cfg"), "--no-plot")
    gan = _run(root, "train", "--data", str(prepared), "--variant", "gan", "--init-from", str(det / "model.pt"),
               "--config", str(root / "tiny.cfg"), "--no-plot")
    assert (gan / "discriminator.pt").is_file()
    ev = _run(root, "eval", "--checkpoint", str(gan / "model.pt"), "--data", str(prepared), "--samples", "20",
              "--plot", "2", "--plot-samples", "5")
    summary = json.loads((ev / "metrics.json").read_text())
    assert summary["samples"] == 20
    assert sorted(p.name for p in (ev / "figures").iterdir()) == ["episode_0000.png", "episode_0001.png"]


def test_unknown_variant_is_usage_error(root, prepared):
    with pytest.raises(SystemExit) as e:
        main(["train", "--data", str(prepared), "--variant", "transformer"])
    assert e.value.code == 2


def test_invalid_config_key_names_the_key(root, prepared):
    (root / "bad.cfg").write_text("epochs = 1\nlearning_rate = 0.1\n")
    with pytest.raises(ConfigError, match="learning_rate"):
        _run(root, "train", "--data", str(prepared), "--config", str(root / "bad.cfg"))


def test_ablate_table_and_rerun(root, prepared):
    d = _run(root, "ablate", "--data", str(prepared), "--config", str(root / "tiny.cfg"), "--samples", "2")
    header, rows = harness.read_table(d / "ablation.csv")
    assert [r[0] for r in rows] == list(harness.CLI_VARIANTS)
    assert len(header) == 4 + 12
    assert (d / "mae_vs_horizon.png").is_file()
    again = _run(root, "rerun", "--manifest", str(d / "manifest.json"))
    assert (again / "ablation.csv").read_bytes() == (d / "ablation.csv").read_bytes()


def test_sweep_rows_and_bad_resolution(root, prepared):
    d = _run(root, "sweep-res", "--data", str(prepared), "--config", str(root / "tiny.cfg"),
             "--resolutions", "8,16,32", "--no-plot")
    _, rows = harness.read_table(d / "sweep.csv")
    assert [int(r[0]) for r in rows] == [8, 16, 32]
    with pytest.raises(ConfigError, match="valid"):
        _run(root, "sweep-res", "--data", str(prepared), "--resolutions", "33")


def test_bench_and_plot(root):
    d = _run(root, "bench", "--config", str(root / "tiny.cfg"), "--agents", "8,16", "--repeats", "1")
    _, rows = harness.read_table(d / "bench.csv")
    assert [int(r[0]) for r in rows] == [8, 16] and all(r[2] == "1" for r in rows)
    out = _run(root, "plot", "--run", str(d))
    assert (Path(out) / "figures" / "bench.png").is_file()
