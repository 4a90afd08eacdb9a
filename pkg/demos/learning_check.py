"""Fixed-order training on several seeds, then greedy stage-3 success per seed.

    python demos/learning_check.py [config] [n_seeds] [out_dir]

Defaults: configs/desk.toml, 5 seeds, runs/learning. At desk scale each
seed takes roughly 20 minutes on one core.
"""
import logging
import sys

from stepping_stones.config import load
from stepping_stones.experiments import learning_check


def main(config="configs/desk.toml", n_seeds="5", out="runs/learning"):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = learning_check(load(config), range(int(n_seeds)), out)
    for seed, rate, minutes in zip(res.seeds, res.success, res.minutes):
        print(f"seed {seed}: stage-3 success {rate:.2f}  ({minutes:.1f} min)")
    print(f"{res.passing} of {len(res.seeds)} seeds reach {res.threshold:.0%}")


if __name__ == "__main__":
    main(*sys.argv[1:4])
