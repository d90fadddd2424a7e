import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from matf.config import ConfigError, ModelConfig, ShapeError
from matf.data import Episode, synth_scenarios
from matf.metrics import EvalReport, ade_fde, best_of_n, evaluate, mae_at, rmse_at
from matf.model import MATF

from conftest import MICRO, micro_episode
from helpers import ade_oracle, best_of_n_oracle, fde_oracle, mae_oracle, rmse_oracle


def _pair(rng, n=None, tf=None):
    n = n or int(rng.integers(1, 6))
    tf = tf or int(rng.integers(1, 13))
    return rng.normal(scale=3, size=(n, tf, 2)), rng.normal(scale=3, size=(n, tf, 2))


def test_random_instances_match_oracles(rng):
    for _ in range(100):
        p, g = _pair(rng)
        tf = p.shape[1]
        for t in range(1, tf + 1):
            assert abs(rmse_at(p, g, t) - rmse_oracle(p.tolist(), g.tolist(), t)) <= 1e-9
            assert abs(mae_at(p, g, t) - mae_oracle(p.tolist(), g.tolist(), t)) <= 1e-9
        ade, fde = ade_fde(p, g)
        assert abs(ade - ade_oracle(p.tolist(), g.tolist())) <= 1e-9
        assert abs(fde - fde_oracle(p.tolist(), g.tolist())) <= 1e-9
        k = int(rng.integers(1, 8))
        samples = rng.normal(scale=3, size=(k, tf, 2))
        best, score = best_of_n(samples, g[0])
        ok, oscore = best_of_n_oracle(samples.tolist(), g[0].tolist())
        np.testing.assert_array_equal(best, samples[ok])
        assert abs(score - oscore) <= 1e-9


def test_step_examples():
    g = np.zeros((2, 3, 2))
    p = g.copy()
    assert rmse_at(g, g, 2) == 0 and mae_at(g, g, 2) == 0
    p[0, 1] = [3, 4]
    assert rmse_at(p[:1], g[:1], 2) == 5.0
    assert abs(rmse_at(p, g, 2) - math.sqrt(25 / 2)) <= 1e-9
    assert mae_at(p, g, 2) == 2.5
    assert mae_at(p[:1], g[:1], 2) == 5.0


def test_ade_fde_examples():
    g = np.zeros((2, 12, 2))
    assert ade_fde(g, g) == (0.0, 0.0)
    p = g + [3.0, 4.0]
    assert ade_fde(p[:1], g[:1]) == (5.0, 5.0)
    p[0, :-1] = 0
    ade, fde = ade_fde(p, g)
    assert abs(ade - (5 / 12 + 5) / 2) <= 1e-9 and fde == 5.0


def test_best_of_n_examples():
    gt = np.zeros((1, 2))
    one = np.ones((1, 1, 2))
    best, _ = best_of_n(one, gt)
    np.testing.assert_array_equal(best, one[0])
    s = np.stack([one[0] * 3, gt, one[0]])
    best, score = best_of_n(s, gt)
    assert score == 0 and np.array_equal(best, gt)
    s = np.array([[[math.sqrt(5), 0]], [[math.sqrt(2), 0]], [[math.sqrt(7), 0]]])
    best, score = best_of_n(s, gt)
    np.testing.assert_array_equal(best, s[1])
    assert abs(score - 2) <= 1e-12


def test_best_of_n_ties_go_to_lowest_index():
    gt = np.zeros((1, 2))
    s = np.array([[[1.0, 0]], [[0, 1.0]], [[-1.0, 0]]])
    best, _ = best_of_n(s, gt)
    np.testing.assert_array_equal(best, s[0])


def test_errors():
    with pytest.raises(ShapeError):
        rmse_at(np.zeros((2, 3, 2)), np.zeros((1, 3, 2)), 1)
    with pytest.raises(ShapeError):
        mae_at(np.zeros((2, 3, 2)), np.zeros((2, 3, 2)), 4)
    with pytest.raises(ShapeError):
        ade_fde(np.zeros((2, 3, 2)), np.zeros((2, 4, 2)))
    with pytest.raises(ValueError):
        best_of_n(np.zeros((0, 3, 2)), np.zeros((3, 2)))


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), finite, finite)
def test_permutation_and_translation_invariance(seed, dx, dy):
    rng = np.random.default_rng(seed)
    p, g = _pair(rng)
    perm = rng.permutation(len(p))
    shift = np.array([dx, dy])
    for q, h in ((p[perm], g[perm]), (p + shift, g + shift)):
        for t in range(1, p.shape[1] + 1):
            assert abs(rmse_at(q, h, t) - rmse_at(p, g, t)) <= 1e-9
            assert abs(mae_at(q, h, t) - mae_at(p, g, t)) <= 1e-9
        np.testing.assert_allclose(ade_fde(q, h), ade_fde(p, g), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ade_bounded_and_fde_is_last_step(seed):
    rng = np.random.default_rng(seed)
    p, g = _pair(rng)
    tf = p.shape[1]
    ade, fde = ade_fde(p, g)
    assert ade <= max(mae_at(p, g, t) for t in range(1, tf + 1)) + 1e-12
    assert abs(fde - mae_at(p, g, tf)) <= 1e-12


def test_report_shape_and_files(tmp_path, rng):
    p, g = _pair(rng, 3, 5)
    r = EvalReport.from_predictions(p, g, dt=0.4)
    assert r.rmse.shape == (5,) and r.mae.shape == (5,)
    assert np.all(np.isfinite(r.rmse)) and np.all(r.mae >= 0)
    r.write(tmp_path, "m")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "metric,step,horizon_s,value"
    assert len(lines) == 1 + 2 + 2 * 5
    assert "mae,5,2.0," in lines[-1]
    s = json.loads((tmp_path / "m.json").read_text())
    assert s["T_future"] == 5 and s["unit"] == "meters"


# evaluate protocol


@pytest.fixture()
def model_and_data(rng):
    torch.manual_seed(0)
    model = MATF(MICRO).double().eval()
    eps = [micro_episode(rng, int(rng.integers(1, 4))) for _ in range(6)]
    return model, eps


def test_evaluate_deterministic_equals_one_zero_sample(model_and_data):
    model, eps = model_and_data
    det = evaluate(model, eps)
    one = evaluate(model, eps, samples=1, include_zero=True)
    np.testing.assert_allclose(det.mae, one.mae, atol=1e-12)
    assert det.ade == pytest.approx(one.ade, abs=1e-12)
    assert len(det.rmse) == MICRO.T_future and det.samples == 0


def test_stochastic_with_zero_sample_never_worse(model_and_data):
    model, eps = model_and_data
    det = evaluate(model, eps)
    sto = evaluate(model, eps, samples=8, include_zero=True, seed=3)
    assert sto.ade <= det.ade + 1e-12
    assert sto.samples == 8
    again = evaluate(model, eps, samples=8, include_zero=True, seed=3)
    assert again.ade == sto.ade


def test_evaluate_protocol_mismatch(model_and_data):
    model, eps = model_and_data
    ep = eps[0]
    bad = Episode(ep.scene, ep.agents, ep.T, ep.T_future, 0.4, ep.normalization)
    with pytest.raises(ConfigError):
        evaluate(model, [bad])


def test_evaluate_accepts_checkpoint():
    from matf.training import TrainConfig, train_deterministic
    eps, _ = synth_scenarios("const_velocity", 8, 0)
    mc = ModelConfig(grid_hw=(8, 8), unet_depth=1, d_agent=4, c_scene=2, hidden=8, embed=4, unet_channels=4)
    ck = train_deterministic(eps, "lstm_only", mc, TrainConfig(epochs=1))
    r = evaluate(ck, eps)
    assert r.n == sum(len(e.agents) for e in eps)
