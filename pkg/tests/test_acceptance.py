"""One test per acceptance criterion; each records a PASS/FAIL line for the summary.

Criteria 5 and 6 train for tens of minutes per seed. They run only when
``STEPPING_STONES_FULL=1`` (full protocol) or ``STEPPING_STONES_SMOKE=1``
(criterion 6 reduced variant) is set, and record SKIP otherwise.
"""
import io
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from stepping_stones import harness as H
from stepping_stones import rewards as R
from stepping_stones.config import load
from stepping_stones.controller import run_oracle
from stepping_stones.curriculum import CapabilityGrid, adaptive_distribution
from stepping_stones.env import EnvConfig, StepperEnv
from stepping_stones.experiments import compare_strategies, learning_check
from stepping_stones.grid import (
    GridDistribution,
    boundary_mask,
    grid_2d,
    make_sampler,
    sample_cell,
    stage_mask,
)
from stepping_stones.nn import MLP, actor_spec, critic_spec
from stepping_stones.ppo import (
    Batch,
    Policy,
    RLConfig,
    compute_returns,
    gaussian_logprob,
    gaussian_logprob_grad_mean,
    ppo_loss,
)
from stepping_stones.terrain import HeightField, perlin_heightfield, project_footsteps

from _fixtures import ring_capability, rings_nearest, tiny_config
from test_nn import numeric_grad, rel_err
from test_rewards import _random_cases, close, ref_energy, ref_limit, ref_posture, ref_target

ROOT = Path(__file__).resolve().parents[1]
FULL = os.environ.get("STEPPING_STONES_FULL") == "1"
SMOKE = os.environ.get("STEPPING_STONES_SMOKE") == "1"
G = grid_2d()


def test_criterion_1_formula_suite(criterion):
    cases = _random_cases()
    t0 = time.perf_counter()
    got = [(R.target_reward(k["d"], k["c"]), R.progress_reward(k["dp"], k["dc"], k["dt"]),
            R.energy_penalty(k["a"], k["v"]), R.limit_penalty(k["x"], (k["lo"], k["hi"])),
            R.posture_penalty(k["ax"], k["ay"]), R.speed_penalty(k["s"]), R.alive_check(k["h"]))
           for k in cases]
    elapsed = time.perf_counter() - t0
    ok = all(
        close(g[0], ref_target(k["d"], k["c"])) and close(g[1], (k["dp"] - k["dc"]) / k["dt"])
        and close(g[2], ref_energy(k["a"], k["v"])) and close(g[3], ref_limit(k["x"], k["lo"], k["hi"]))
        and close(g[4], ref_posture(k["ax"], k["ay"])) and close(g[5], -max(k["s"] - 1.6, 0.0))
        and g[6] == ((2.0, False) if k["h"] >= 0.7 else (0.0, True))
        for k, g in zip(cases, got))
    examples = (R.energy_penalty([0.5, -0.5], [1.0, 1.0]) == -2.30625
                and abs(R.target_reward(0.25, True) - 18.394) < 5e-4
                and R.target_reward(0.25, True) == 50.0 * math.exp(-1.0))
    passed = ok and examples and elapsed < 1.0
    criterion(1, passed, f"10000 random inputs match, examples exact, {elapsed:.2f} s")
    assert passed


def test_criterion_2_curriculum_algebra(criterion):
    t0 = time.perf_counter()
    checks = {}
    masks = [stage_mask(G, k) for k in range(1, G.n_stages + 1)]
    checks["monotone"] = all(np.all(a <= b) for a, b in zip(masks, masks[1:]))
    union = np.zeros(G.shape, dtype=int)
    for k in range(1, G.n_stages + 1):
        union += boundary_mask(G, k)
    checks["partition"] = bool(np.all(union == 1))
    checks["stage1"] = int(masks[0].sum()) == 1 and bool(masks[0][5, 5])
    full = GridDistribution.uniform(G, masks[-1])
    checks["stage6"] = bool(np.all(full.probs == 1 / 121))
    rng = np.random.default_rng(0)
    worst = 0.0
    argmax_ok = scale_ok = True
    for _ in range(50):
        values = rng.uniform(0.01, 5.0, G.shape)
        beta = float(rng.uniform())
        d = adaptive_distribution(CapabilityGrid(G, values), 10.0, beta)
        worst = max(worst, abs(d.probs.sum() - 1.0))
        gap = np.abs(values / values.max() - beta)
        argmax_ok &= set(np.flatnonzero(d.probs == d.probs.max())) == set(np.flatnonzero(gap == gap.min()))
        scaled = adaptive_distribution(CapabilityGrid(G, values * rng.uniform(0.1, 100)), 10.0, beta)
        scale_ok &= bool(np.allclose(scaled.probs, d.probs, rtol=1e-12, atol=0))
    checks["normalized"] = worst <= 1e-9
    checks["argmax"] = argmax_ok
    checks["scaling"] = scale_ok
    elapsed = time.perf_counter() - t0
    passed = all(checks.values()) and elapsed < 1.0
    failed = [k for k, v in checks.items() if not v]
    criterion(2, passed, f"{len(checks) - len(failed)}/{len(checks)} properties, {elapsed:.2f} s {failed or ''}")
    assert passed


def test_criterion_3_ppo_gradients(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    errs = {}
    for name, spec in (("actor", actor_spec(6, 3, width=5, depth=4)), ("critic", critic_spec(6, width=5, depth=4))):
        net = MLP(spec, rng.normal(0, 0.7, spec.n_params))
        x, w = rng.normal(size=(4, 6)), rng.normal(size=(4, spec.output_dim))
        _, cache = net.forward(x, keep=True)
        num = numeric_grad(lambda p: float(np.sum(w * MLP(spec, p).forward(x))), net.params.copy())
        errs[name] = rel_err(net.backward(cache, w), num)
    mean, a, ls = rng.normal(size=3), rng.normal(size=3), np.array([-1.5, 0.0, 0.3])
    errs["logprob"] = rel_err(gaussian_logprob_grad_mean(mean, ls, a),
                              numeric_grad(lambda m: float(gaussian_logprob(m, ls, a)), mean.copy()))
    p = Policy.create(4, 2, RLConfig(width=6, depth=2), rng)
    obs = rng.normal(size=(3, 4))
    m = p.actor.forward(obs)
    acts = m + rng.normal(0, 0.3, m.shape)
    b = Batch(obs, acts, gaussian_logprob(m, p.logstd, acts) + rng.normal(0, 0.3, 3),
              p.critic.forward(obs)[:, 0], rng.normal(size=3))
    adv = rng.normal(size=3)
    _, ga, gc, _ = ppo_loss(p, b, adv, 0.2, 0.5)
    errs["loss_actor"] = rel_err(ga, numeric_grad(
        lambda q: ppo_loss(Policy(MLP(p.actor.spec, q), p.critic, p.logstd), b, adv, 0.2, 0.5)[0],
        p.actor.params.copy()))
    errs["loss_critic"] = rel_err(gc, numeric_grad(
        lambda q: ppo_loss(Policy(p.actor, MLP(p.critic.spec, q), p.logstd), b, adv, 0.2, 0.5)[0],
        p.critic.params.copy()))
    returns_ok = (compute_returns([1, 1, 1], 0.5).tolist() == [1.75, 1.5, 1.0]
                  and np.allclose(compute_returns([2.0] * 40, 0.9, 20.0), 20.0, rtol=1e-12))
    elapsed = time.perf_counter() - t0
    passed = max(errs.values()) < 1e-4 and returns_ok and elapsed < 10.0
    criterion(3, passed, f"max FD rel. error {max(errs.values()):.1e}, returns ok={returns_ok}, {elapsed:.2f} s")
    assert passed


def test_criterion_4_solvable(criterion):
    t0 = time.perf_counter()
    env = StepperEnv(EnvConfig(max_ticks=1000))
    sampler = make_sampler(GridDistribution.uniform(G, stage_mask(G, 1)))
    steps, target, out = run_oracle(env, sampler, np.random.default_rng(0), horizon=13)
    elapsed = time.perf_counter() - t0
    passed = steps >= 10 and target > 0 and elapsed < 1.0
    criterion(4, passed, f"oracle: {steps} consecutive stage-1 steps, target reward {target:.1f}, {elapsed:.2f} s")
    assert passed


@pytest.mark.skipif(not FULL, reason="set STEPPING_STONES_FULL=1 (about 5 x 20 min on one core)")
def test_criterion_5_learning(criterion, tmp_path_factory):
    cfg = load(ROOT / "configs" / "desk.toml")
    res = learning_check(cfg, range(5), tmp_path_factory.mktemp("learning"))
    passed = res.passing >= 4 and max(res.minutes) <= 30.0
    criterion(5, passed, f"{res.passing}/5 seeds >= 80% stage-3 success {res.success}, "
                         f"max {max(res.minutes):.1f} min per seed")
    assert passed


def test_criterion_5_recorded_skip(criterion):
    if not FULL:
        criterion(5, None, "full learning run disabled (STEPPING_STONES_FULL=1 enables it)")


@pytest.mark.skipif(not (FULL or SMOKE), reason="set STEPPING_STONES_SMOKE=1 or STEPPING_STONES_FULL=1")
def test_criterion_6_ordering(criterion, tmp_path_factory):
    name, seeds = ("desk.toml", range(5)) if FULL else ("smoke.toml", range(2))
    cfg = load(ROOT / "configs" / name)
    budget = 750.0 if FULL else 20.0
    t0 = time.perf_counter()
    res = compare_strategies(cfg, seeds, tmp_path_factory.mktemp("ordering"))
    minutes = (time.perf_counter() - t0) / 60.0
    print(res.report())
    effects = ", ".join(f"{k} d={v:+.2f}" for k, v in res.effect_sizes().items())
    passed = res.ordering_holds() and minutes <= budget
    criterion(6, passed, f"[{name}] means " + ", ".join(
        f"{s}={res.mean(s):.1f}" for s in res.final_returns) + f"; {effects}; {minutes:.1f} min")
    assert passed


def test_criterion_6_recorded_skip(criterion):
    if not (FULL or SMOKE):
        criterion(6, None, "strategy comparison disabled (STEPPING_STONES_SMOKE=1 or _FULL=1 enables it)")


def test_criterion_7_protocol_fidelity(criterion):
    r_grid = [0.6, 0.7]
    falling = {sc: H.capability_limit_probe(H.falling_controller(), sc, r_grid, repeats=1) for sc in H.SCENARIOS}
    oracle = {sc: H.capability_limit_probe(H.oracle_controller(), sc, r_grid, repeats=1) for sc in H.SCENARIOS}
    table = H.probe_table({"oracle": oracle, "falling": falling}).splitlines()
    shape_ok = (len(table) == 9 and all(r.all_pass is None and r.any_pass is None for r in falling.values())
                and all(line.rstrip().endswith("---, ---") for line in table[1:])
                and all(r.all_pass is None or r.all_pass <= r.any_pass for r in oracle.values()))
    rob = H.robustness_eval(H.falling_controller())
    rob_ok = len(rob.counts) == 10 and str(rob) == "0.0 ± 0.0"
    cap = ring_capability()
    mass = float(adaptive_distribution(cap, 10.0, 0.9).probs[rings_nearest(cap, 0.9)].sum())
    buf = io.StringIO()
    from stepping_stones.curriculum import write_heatmap_csv
    write_heatmap_csv(adaptive_distribution(cap, 10.0, 0.9), buf, cap)
    csv_mass = sum(float(line.split(",")[-1]) for line, m in zip(buf.getvalue().splitlines()[1:],
                                                                  rings_nearest(cap, 0.9).ravel()) if m)
    passed = shape_ok and rob_ok and mass >= 0.9 and abs(csv_mass - mass) < 1e-12
    criterion(7, passed, f"probe table 8 rows with dashes, robustness '{rob}' over 10x50, "
                         f"ring mass {mass:.3f}")
    assert passed


def test_criterion_8_determinism(criterion, tmp_path):
    H.train(tiny_config("adaptive", seed=5, workers=1, iterations=3), tmp_path / "w1")
    H.train(tiny_config("adaptive", seed=5, workers=2, iterations=3), tmp_path / "w2")
    a = (tmp_path / "w1" / "iterations.csv").read_bytes()
    b = (tmp_path / "w2" / "iterations.csv").read_bytes()
    passed = a == b and len(a.splitlines()) == 4
    criterion(8, passed, f"workers=1 and workers=2 logs byte-identical ({len(a)} bytes)")
    assert passed


def test_criterion_9_terrain(criterion):
    slope = HeightField.from_function(lambda X, Y: 0.1 * X, (201, 201), 0.1, (-10.0, -10.0))
    straight = project_footsteps(slope, (-5.0, -5.0), 20, turn_per_step=0.0)
    pitch_err = max(abs(s.surface_pitch - math.atan(0.1)) for s in straight.steps)
    roll_err = max(abs(s.surface_roll) for s in straight.steps)
    turning = project_footsteps(perlin_heightfield(0), (-4.0, -8.0), 20)
    yaw_ok = all(abs((b.heading - a.heading) - math.radians(5.0)) < 1e-12
                 for a, b in zip(turning.steps, turning.steps[1:]))
    flat = project_footsteps(perlin_heightfield(0, amplitude=0.0), (-4.0, -8.0), 20)
    flat_ok = all(s.center[2] == 0 and s.surface_roll == 0 and s.surface_pitch == 0 for s in flat.steps)
    passed = pitch_err <= 1e-9 and roll_err <= 1e-9 and yaw_ok and flat_ok
    criterion(9, passed, f"pitch error {pitch_err:.1e}, 5 deg yaw increments {yaw_ok}, flat all-zero {flat_ok}")
    assert passed
