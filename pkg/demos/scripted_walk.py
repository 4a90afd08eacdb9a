"""Walk the scripted controller over probe sequences and a Perlin terrain.

No training involved; runs in a few seconds.

    python demos/scripted_walk.py
"""
import numpy as np

from stepping_stones import harness
from stepping_stones.env import EnvConfig
from stepping_stones.terrain import perlin_heightfield, project_footsteps


def main():
    ctrl = harness.oracle_controller()
    env_cfg = EnvConfig()
    r_grid = np.round(np.arange(0.5, 1.51, 0.1), 6)  # stride lengths in metres
    results = {sc: harness.capability_limit_probe(ctrl, sc, r_grid, env_cfg, repeats=3)
               for sc in harness.SCENARIOS}
    print(harness.probe_table({"scripted": results}))

    field = perlin_heightfield(seed=3, amplitude=0.3)
    seq = project_footsteps(field, (-4.0, -8.0), 30, 0.7)
    stats = harness.terrain_walk(ctrl, field, seq, env_cfg)
    print(f"terrain walk: {stats.steps} of {len(seq.steps) - 3} steps ({stats.reason})")

    rob = harness.robustness_eval(ctrl, env_cfg, n_sequences=5, steps_per_sequence=20, dims=5)
    print(f"random 5D sequences: {rob}")


if __name__ == "__main__":
    main()
