#!/usr/bin/env python3
"""Sweep the logit-difference weights over a product grid on the default task.

The GP training set, surrogate, and gate are built once and shared across
cells; only the proxy is refit per (alpha_train, alpha_test) pair.

Usage:
  python scripts/run_alpha_sweep.py --seed 0 --grid 0.0,0.4,0.8,1.2 --out-dir runs/alpha
"""

import argparse

from gpproxy.experiment import ExperimentConfig, sweep_alpha


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--grid", type=str, default="0.0,0.4,0.8,1.2")
    parser.add_argument("--out-dir", type=str, default="runs/alpha")
    args = parser.parse_args()

    values = [float(tok) for tok in args.grid.split(",") if tok.strip()]
    grid = [(a, b) for a in values for b in values]
    config = ExperimentConfig(seed=args.seed, out_dir=args.out_dir)
    cells = sweep_alpha(config, grid)

    header = "a_tr\\a_te" + "".join(f"{b:>8.2f}" for b in values)
    print(header)
    matrix = {(a, b): acc for a, b, acc in cells}
    for a in values:
        print(f"{a:8.2f}" + "".join(f"{matrix[(a, b)]:8.4f}" for b in values))
    print(f"CSV written to {config.out_dir}/alpha_sweep.csv")


if __name__ == "__main__":
    main()
