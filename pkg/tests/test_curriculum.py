import io
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepping_stones.controller import OracleController
from stepping_stones.curriculum import (
    CapabilityGrid,
    CurriculumConfig,
    CurriculumState,
    adaptive_distribution,
    easy_mask,
    estimate_capability,
    imagined_pairs,
    initial_state,
    next_distribution,
    write_heatmap_csv,
)
from stepping_stones.env import EnvConfig, StepperEnv
from stepping_stones.grid import GridDistribution, ParamGrid, grid_2d, grid_5d, stage_mask
from stepping_stones.steps import Step

G = grid_2d()
LINE = ParamGrid({"psi": (-0.3, 0.3)}, resolution=3)


def cap(values, grid=G):
    return CapabilityGrid(grid, np.asarray(values, dtype=float))


def test_two_cell_example():
    # the third cell is pushed far from the setpoint so it carries ~no mass
    d = adaptive_distribution(cap([1.0, 0.9, -50.0], LINE), 10.0, 0.9)
    p = d.probs[:2] / d.probs[:2].sum()
    assert p == pytest.approx([0.2689, 0.7311], abs=1e-4)
    assert d.probs[0] / d.probs[1] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_difficult_favored_prefers_low_capability():
    d = adaptive_distribution(cap([1.0, 0.2, 0.6], LINE), 10.0, 0.0)
    assert int(np.argmax(d.probs)) == 1


def test_constant_capability_is_uniform():
    d = adaptive_distribution(cap(np.full(G.shape, 3.7)), 10.0, 0.9)
    assert np.allclose(d.probs, 1 / 121, atol=1e-15)
    assert np.allclose(adaptive_distribution(cap(np.full(G.shape, -2.0))).probs, 1 / 121)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.01, 1e4))
def test_argmax_and_scaling_invariance(seed, beta, scale):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.01, 10.0, G.shape)
    values.flat[rng.integers(0, values.size, 5)] = values.max()  # include ties at C_max
    c = cap(values)
    d = adaptive_distribution(c, 10.0, beta)
    assert abs(d.probs.sum() - 1.0) <= 1e-9
    gap = np.abs(values / values.max() - beta)
    assert set(np.flatnonzero(d.probs == d.probs.max())) == set(np.flatnonzero(gap == gap.min()))
    scaled = adaptive_distribution(cap(values * scale), 10.0, beta)
    assert np.allclose(scaled.probs, d.probs, rtol=1e-12, atol=1e-15)


def test_fixed_order_schedule():
    cfg = CurriculumConfig(strategy="fixed_order", reward_threshold=2500.0)
    s = CurriculumState(3, GridDistribution.uniform(G, stage_mask(G, 3)))
    up = next_distribution(cfg, s, G, {"mean_return": 2600.0})
    assert up.stage == 4 and set(np.unique(up.current_dist.probs)) == {0.0, 1 / 49}
    stay = next_distribution(cfg, s, G, {"mean_return": 2499.0})
    assert stay.stage == 3
    assert next_distribution(cfg, s, G, {"mean_return": None}).stage == 3
    final = CurriculumState(6, GridDistribution.uniform(G))
    for r in (-1e9, 0.0, 1e9):
        out = next_distribution(cfg, final, G, {"mean_return": r})
        assert out.stage == 6 and np.allclose(out.current_dist.probs, 1 / 121)


def test_boundary_schedule_samples_newest_ring():
    cfg = CurriculumConfig(strategy="fixed_order_boundary", reward_threshold=10.0)
    s = initial_state(cfg, G)
    assert s.current_dist.support() == {(0, 0)}
    s = next_distribution(cfg, s, G, {"mean_return": 11.0})
    assert s.stage == 2 and len(s.current_dist.support()) == 8 and (0, 0) not in s.current_dist.support()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12))
def test_stage_non_decreasing(returns):
    cfg = CurriculumConfig(strategy="fixed_order", reward_threshold=0.0)
    s = initial_state(cfg, G)
    for r in returns:
        nxt = next_distribution(cfg, s, G, {"mean_return": r})
        assert nxt.stage == min(s.stage + (r >= 0.0), G.n_stages)
        support = nxt.current_dist.probs > 0
        assert np.all(nxt.current_dist.probs[support] == nxt.current_dist.probs[support][0])
        s = nxt


def test_uniform_and_adaptive_dispatch():
    u = next_distribution(CurriculumConfig(strategy="uniform"), initial_state(CurriculumConfig("uniform"), G), G, {})
    assert np.allclose(u.current_dist.probs, 1 / 121)
    with pytest.raises(ValueError, match="capability"):
        next_distribution(CurriculumConfig(), initial_state(CurriculumConfig(), G), G, {"mean_return": 1.0})
    none = next_distribution(CurriculumConfig(), initial_state(CurriculumConfig(), G), G, {"capability": None})
    assert np.allclose(none.current_dist.probs, 1 / 121)
    values = np.linspace(0.1, 1.0, 121).reshape(G.shape)
    df = next_distribution(CurriculumConfig("difficult_favored", beta=0.7), initial_state(CurriculumConfig(), G), G,
                           {"capability": cap(values)})
    assert np.array_equal(df.current_dist.probs, adaptive_distribution(cap(values), 10.0, 0.0).probs)


def test_imagined_pairs_geometry():
    stance = Step((1.0, 2.0, 0.5), heading=0.3)
    r = G.nominal_r()
    for vary_first in (False, True):
        pairs = imagined_pairs(G, stance, vary_first)
        assert len(pairs) == 121
        for (psi_i, theta_i), (first, second) in zip(G.cells(), pairs):
            varied, base = (first, stance) if vary_first else (second, first)
            psi, theta = G.values("psi")[psi_i + 5], G.values("theta")[theta_i + 5]
            assert math.dist(varied.center, base.center) == pytest.approx(r)
            assert varied.center[2] - base.center[2] == pytest.approx(r * math.sin(theta))
            assert varied.heading == pytest.approx(base.heading + psi)


def _run_capability(value_fn, eval_steps=1, vary_first=False):
    env = StepperEnv(EnvConfig())
    oracle = OracleController()
    c = estimate_capability(lambda obs: oracle(env), value_fn, env, G,
                            CurriculumConfig(eval_steps=eval_steps, vary_first=vary_first),
                            np.random.default_rng(0))
    return c, env


def test_capability_of_constant_critic():
    c, _ = _run_capability(lambda b: np.full(len(b), 4.25), eval_steps=5)
    assert np.all(c.values == 4.25)


def test_capability_matches_closed_form_geometry():
    c, env = _run_capability(lambda b: -np.linalg.norm(b[:, 16:19], axis=1))
    root = np.array(env.state.root)
    stance = env.seq.steps[env.state.stance_step]
    r = G.nominal_r()
    x0, y0, z0 = stance.center
    h = stance.heading
    first = np.array([x0 + r * math.cos(h), y0 + r * math.sin(h), z0])
    for psi_i, theta_i in G.cells():
        psi, theta = G.values("psi")[psi_i + 5], G.values("theta")[theta_i + 5]
        second = first + r * np.array([math.cos(theta) * math.cos(h + psi),
                                       math.cos(theta) * math.sin(h + psi), math.sin(theta)])
        assert c[(psi_i, theta_i)] == pytest.approx(-np.linalg.norm(second - root), abs=1e-9)
    # the physical sequence is untouched by the imagined stones
    assert env.seq.steps[env.seq.target_index].center != tuple(second)


def test_vary_first_changes_the_scored_stone():
    a, _ = _run_capability(lambda b: -np.linalg.norm(b[:, 13:16], axis=1))
    b, _ = _run_capability(lambda b: -np.linalg.norm(b[:, 13:16], axis=1), vary_first=True)
    assert np.ptp(a.values) < 1e-12 and np.ptp(b.values) > 0.1


def test_easy_mask_is_flat_center():
    g5 = grid_5d(resolution=3)
    m = easy_mask(g5)
    # r grows from its minimum, so the easy cell is the shortest flat step
    assert m.sum() == 1 and m[0, 1, 1, 1, 1]


def test_heatmap_csv_rows():
    buf = io.StringIO()
    write_heatmap_csv(GridDistribution.uniform(G), buf, cap(np.ones(G.shape)))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "psi_idx,theta_idx,capability,probability"
    assert len(lines) == 122 and lines[1].startswith("-5,-5,1.0,")


def test_algebra_runtime():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    for _ in range(200):
        adaptive_distribution(cap(rng.uniform(0, 1, G.shape)))
    assert time.perf_counter() - t0 < 1.0
