import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matf.data import (
    AgentTrack,
    DataError,
    DatasetSpec,
    OutOfBoundsError,
    ParseError,
    SceneContext,
    denormalize_episode,
    load_ethucy_text,
    normalize_episode,
    read_episodes,
    segment_episodes,
    synth_scenarios,
    validate_episode,
    world_to_grid,
    write_episodes,
)
from matf.data.synthetic import KINDS


def blank_scene(h=64, w=64, mpc=0.5, origin=(0.0, 0.0)):
    return SceneContext(np.ones((h, w, 1)), origin, mpc, ("drivable",))


def track(agent, start, n, x0=5.0):
    steps = np.arange(start, start + n)
    pos = np.stack([x0 + 0.1 * np.arange(n), np.full(n, 5.0)], -1)
    return AgentTrack(agent, steps, pos)


# ETH-UCY loader

def test_load_two_rows(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("0 1 2.0 3.0\n10 1 2.5 3.5\n")
    tracks = load_ethucy_text(p)
    assert len(tracks) == 1
    np.testing.assert_array_equal(tracks[0].steps, [0, 1])
    np.testing.assert_array_equal(tracks[0].positions, [[2.0, 3.0], [2.5, 3.5]])


def test_load_empty(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("")
    assert load_ethucy_text(p) == []


def test_load_arity_error(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("0 1 2.0\n")
    with pytest.raises(ParseError) as e:
        load_ethucy_text(p)
    assert e.value.lineno == 1


def test_load_non_monotonic(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("10 1 2.0 3.0\n0 1 2.5 3.5\n")
    with pytest.raises(DataError, match="not increasing"):
        load_ethucy_text(p)


def test_load_sorted_and_gap_split(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("0 2 0 0\n0 1 0 0\n10 1 1 1\n30 1 2 2\n10 2 1 1\n")
    tracks = load_ethucy_text(p)
    assert [t.agent_id for t in tracks] == ["1", "1", "2"]
    assert [list(t.steps) for t in tracks] == [[0, 1], [3], [0, 1]]


# windowing

def test_segment_one_window():
    eps = segment_episodes([track("a", 0, 20)], blank_scene(), DatasetSpec(T=8, T_future=12, stride=20,
                                                                            normalization="none"))
    assert len(eps) == 1
    assert eps[0].agents[0].past.shape == (8, 2)
    assert eps[0].agents[0].future.shape == (12, 2)


def test_segment_too_short():
    assert segment_episodes([track("a", 0, 19)], blank_scene(), DatasetSpec(T=8, T_future=12)) == []


def test_segment_two_disjoint_windows():
    eps = segment_episodes([track("a", 0, 40)], blank_scene(), DatasetSpec(T=8, T_future=12, stride=20,
                                                                            normalization="none"))
    assert [e.meta["start_step"] for e in eps] == [0, 20]
    np.testing.assert_array_equal(eps[1].agents[0].past[0], track("a", 0, 40).positions[20])


def brute_force_windows(tracks, T, Tf, stride):
    """Independent re-enumeration: every start, every agent, every step checked."""
    length = T + Tf
    all_steps = sorted({int(s) for t in tracks for s in t.steps})
    count = 0
    s = all_steps[0]
    while s + length - 1 <= all_steps[-1]:
        if any(all(k in set(t.steps.tolist()) for k in range(s, s + length)) for t in tracks):
            count += 1
        s += stride
    return count


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(1, 30)), min_size=1, max_size=5),
       st.integers(2, 5), st.integers(1, 6), st.integers(1, 7))
def test_segment_count_matches_brute_force(spans, T, Tf, stride):
    tracks = [track(str(i), s, n) for i, (s, n) in enumerate(spans)]
    eps = segment_episodes(tracks, blank_scene(), DatasetSpec(T=T, T_future=Tf, stride=stride))
    assert len(eps) == brute_force_windows(tracks, T, Tf, stride)
    for e in eps:
        validate_episode(e)


def test_out_of_bounds_agents_dropped(caplog):
    inside = track("in", 0, 20)
    outside = track("out", 0, 20, x0=100.0)
    with caplog.at_level(logging.WARNING):
        eps = segment_episodes([inside, outside], blank_scene(), DatasetSpec(T=8, T_future=12, stride=20))
    assert [a.agent_id for a in eps[0].agents] == ["in"]
    assert "outside scene" in caplog.text


# grid mapping

def test_world_to_grid_examples():
    s = blank_scene(4, 4, 0.5)
    assert world_to_grid((1.2, 0.4), s) == (2, 0)
    assert world_to_grid((0.0, 0.0), s) == (0, 0)
    with pytest.raises(OutOfBoundsError):
        world_to_grid((2.0, 0.0), s)


@given(st.integers(0, 63), st.integers(0, 63), st.floats(0.05, 0.95), st.floats(0.05, 0.95),
       st.integers(-8, 8), st.integers(-8, 8))
def test_world_to_grid_translation(r, c, fr, fc, dr, dc):
    mpc = 0.25
    s = blank_scene(64, 64, mpc, origin=(-3.0, -3.0))
    p = np.array([-3.0 + (r + fr) * mpc, -3.0 + (c + fc) * mpc])
    q = p + mpc * np.array([dr, dc])
    if not (0 <= r + dr < 64 and 0 <= c + dc < 64):
        with pytest.raises(OutOfBoundsError):
            world_to_grid(q, s)
        return
    a, b = world_to_grid(p, s), world_to_grid(q, s)
    assert a == (r, c)
    assert (b[0] - a[0], b[1] - a[1]) == (dr, dc)


def test_scene_validation():
    with pytest.raises(DataError):
        SceneContext(np.full((4, 4, 1), 2.0))
    with pytest.raises(DataError):
        SceneContext(np.ones((4, 4, 1)), meters_per_cell=0.0)


# normalization

def test_normalize_identity_and_anchor():
    eps, _ = synth_scenarios("const_velocity", 3, 0, normalization="none")
    e = eps[0]
    assert normalize_episode(e, "none") is e
    n = normalize_episode(e, "anchor_centered")
    for a, b in zip(e.agents, n.agents):
        np.testing.assert_array_equal(b.past[-1], [0.0, 0.0])
        np.testing.assert_array_equal(b.anchor, a.anchor)


def test_normalize_anchor_example():
    s = blank_scene()
    t = AgentTrack("a", np.arange(20), np.tile([5.0, 5.0], (20, 1)))
    e = segment_episodes([t], s, DatasetSpec(T=8, T_future=12, normalization="none"))[0]
    assert tuple(e.agents[0].past[-1]) == (5.0, 5.0)
    np.testing.assert_array_equal(normalize_episode(e, "anchor_centered").agents[0].past[-1], [0, 0])


@pytest.mark.parametrize("kind", KINDS)
def test_normalize_round_trip(kind):
    eps, _ = synth_scenarios(kind, 5, 3, normalization="none")
    for e in eps:
        back = denormalize_episode(normalize_episode(e, "anchor_centered"))
        for a, b in zip(e.agents, back.agents):
            np.testing.assert_allclose(b.past, a.past, rtol=0, atol=1e-12)
            np.testing.assert_allclose(b.future, a.future, rtol=0, atol=1e-12)


# synthetic

@pytest.mark.parametrize("kind", KINDS)
def test_synth_deterministic_and_valid(kind):
    a, _ = synth_scenarios(kind, 20, 11)
    b, _ = synth_scenarios(kind, 20, 11)
    for x, y in zip(a, b):
        validate_episode(x)
        np.testing.assert_array_equal(x.scene.grid, y.scene.grid)
        for p, q in zip(x.agents, y.agents):
            assert p.past.tobytes() == q.past.tobytes()
            assert p.future.tobytes() == q.future.tobytes()


def test_const_velocity_construction():
    eps, orc = synth_scenarios("const_velocity", 10, 5, normalization="none")
    for i, e in enumerate(eps):
        for j, a in enumerate(e.agents):
            v = np.asarray(orc.params[i]["velocities"][j])
            for k in range(1, e.T_future + 1):
                np.testing.assert_array_equal(a.future[k - 1], a.anchor + k * e.dt * v)


@pytest.mark.parametrize("kind", KINDS)
def test_oracle_reproduces_future(kind):
    eps, orc = synth_scenarios(kind, 10, 2)
    for i, e in enumerate(eps):
        np.testing.assert_allclose(orc.predict(i), e.futures(), atol=1e-12)


def test_bimodal_branch_fraction():
    _, orc = synth_scenarios("bimodal_exit", 1000, 0)
    frac = np.mean([p["branch"] for p in orc.params])
    assert 0.45 <= frac <= 0.55


def test_avoidance_direction_needs_other_agent():
    eps, orc = synth_scenarios("avoidance_pair", 50, 4, normalization="none")
    for e, p in zip(eps, orc.params):
        a, b = e.agents
        # past motion is purely longitudinal
        assert np.ptp(a.past[:, 1]) == 0 and np.ptp(b.past[:, 1]) == 0
        side = np.sign(a.future[-1, 1] - a.anchor[1])
        assert side == np.sign(a.anchor[1] - b.anchor[1])


def test_obstacle_detour_side():
    eps, orc = synth_scenarios("obstacle_field", 50, 4, normalization="none")
    for e, p in zip(eps, orc.params):
        a = e.agents[0]
        lateral = a.future[:, 1] - a.anchor[1]
        k = np.argmax(np.abs(lateral))
        assert np.sign(lateral[k]) == -np.sign(p["obstacle"][1] - a.anchor[1])
        assert np.ptp(a.past[:, 1]) == 0


def test_unknown_kind():
    with pytest.raises(DataError):
        synth_scenarios("teleport", 1, 0)


# episode files

@pytest.mark.parametrize("kind", ["const_velocity", "obstacle_field"])
def test_episode_file_round_trip(tmp_path, kind):
    eps, _ = synth_scenarios(kind, 6, 9)
    path = tmp_path / "e.jsonl"
    write_episodes(path, eps)
    back = read_episodes(path)
    assert len(back) == len(eps)
    for x, y in zip(eps, back):
        assert x.scene.grid.tobytes() == y.scene.grid.tobytes()
        assert x.scene.grid.dtype == y.scene.grid.dtype
        assert (x.T, x.T_future, x.dt, x.normalization, x.meta) == (y.T, y.T_future, y.dt, y.normalization, y.meta)
        for p, q in zip(x.agents, y.agents):
            assert p.past.tobytes() == q.past.tobytes()
            assert p.future.tobytes() == q.future.tobytes()
            assert p.anchor.tobytes() == q.anchor.tobytes()
    write_episodes(tmp_path / "f.jsonl", back)
    assert (tmp_path / "f.jsonl").read_bytes() == path.read_bytes()


def test_episode_file_rejects_other_schema(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"record": "header", "schema": "other", "version": 1}\n')
    with pytest.raises(DataError):
        read_episodes(p)
