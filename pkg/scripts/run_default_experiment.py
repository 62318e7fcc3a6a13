#!/usr/bin/env python3
"""Run the full six-method comparison on the default synthetic task.

Usage:
  python scripts/run_default_experiment.py --seed 0 --out-dir runs/default
"""

import argparse
import json

from gpproxy.experiment import ExperimentConfig, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=str, default="runs/default")
    args = parser.parse_args()

    config = ExperimentConfig(seed=args.seed, out_dir=args.out_dir)
    reports = run_experiment(config)
    for report in reports:
        print(json.dumps(report.to_dict()))
    print(f"artifacts under {config.out_dir}")


if __name__ == "__main__":
    main()
