"""Train every sampling strategy on the same seeds and compare final returns.

    python demos/compare_strategies.py [config] [n_seeds] [out_dir]

Defaults: configs/smoke.toml, 2 seeds, runs/compare.
"""
import logging
import sys

from stepping_stones.config import load
from stepping_stones.experiments import compare_strategies


def main(config="configs/smoke.toml", n_seeds="2", out="runs/compare"):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = compare_strategies(load(config), range(int(n_seeds)), out)
    print(res.report())


if __name__ == "__main__":
    main(*sys.argv[1:4])
