import numpy as np

from stepping_stones.env import EnvConfig, N_ACTIONS
from stepping_stones.grid import GridDistribution, grid_2d, stage_mask
from stepping_stones.ppo import Policy, RLConfig
from stepping_stones.rollout import RolloutConfig, collect

RL = RLConfig(width=8, depth=2, samples_per_iteration=200)
G = grid_2d()


def _collect(workers, iteration=0, seed=0):
    policy = Policy.create(EnvConfig().obs_dim, N_ACTIONS, RL, np.random.default_rng(0))
    dist = GridDistribution.uniform(G, stage_mask(G, 2))
    return collect(policy, EnvConfig(), dist, RL, RolloutConfig(lanes=4, block=1, workers=workers), seed, iteration)


def test_worker_count_does_not_change_results():
    a, b = _collect(1), _collect(3)
    for name in ("obs", "actions", "logp", "values", "returns"):
        assert np.array_equal(getattr(a.batch, name), getattr(b.batch, name))
    assert [e.ret for e in a.episodes] == [e.ret for e in b.episodes]
    assert np.array_equal(a.raw_obs, b.raw_obs)


def test_sample_count_and_streams():
    a = _collect(1)
    assert a.samples == 200 and len(a.raw_obs) == 200
    assert not np.array_equal(a.batch.actions, _collect(1, iteration=1).batch.actions)
    assert not np.array_equal(a.batch.actions, _collect(1, seed=1).batch.actions)


def test_returns_are_finite_and_bootstrapped():
    a = _collect(1)
    assert np.all(np.isfinite(a.batch.returns))
    assert all(e.reason for e in a.episodes)
