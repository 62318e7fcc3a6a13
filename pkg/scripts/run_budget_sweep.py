#!/usr/bin/env python3
"""Measure surrogate fidelity and end accuracy across oracle-query budgets.

Nested random subsets of increasing size share one seeded permutation; for
each budget the script fits the GP, reports its mean absolute logit error
against the oracle on the held-out split, then trains the gated proxy and
evaluates the combined-logit ensemble.

Usage:
  python scripts/run_budget_sweep.py --seed 0 --sizes 2,10,50,200 --out-dir runs/budget
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from gpproxy.data import ApiLedger
from gpproxy.ensemble import ensemble_predictor, evaluate
from gpproxy.experiment import ExperimentConfig, _train_config, prepare
from gpproxy.gp import NoiseParams, calibrate_gate_threshold, fit_gp, predict_mean_batch
from gpproxy.selection import CandidateSet, build_logitmap, random_select
from gpproxy.training import forward_batch, train_proxy


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sizes", type=str, default="2,10,50,200")
    parser.add_argument("--out-dir", type=str, default="runs/budget")
    args = parser.parse_args()

    sizes = [int(tok) for tok in args.sizes.split(",") if tok.strip()]
    config = ExperimentConfig(seed=args.seed, out_dir=args.out_dir)
    ctx = prepare(config)
    full = random_select(ctx.train, max(sizes), ctx.seeds["select"])
    oracle_test_logits = forward_batch(ctx.oracle.params, ctx.test.features)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for size in sizes:
        nested = CandidateSet(entries=full.entries[:size])
        ledger = ApiLedger(len(ctx.train))
        pairs = build_logitmap(nested, ctx.oracle, ledger)
        posterior = fit_gp(pairs, noise=NoiseParams(noise_variance=config.gp_noise))
        gp_logits = predict_mean_batch(posterior, ctx.test.features)
        mae = float(np.mean(np.abs(gp_logits - oracle_test_logits)))
        gate = calibrate_gate_threshold(posterior, ctx.train.features, p=config.gate_percentile)
        trained = train_proxy(
            _train_config(config, "gp_gated", ctx.seeds, gate=gate),
            ctx.train,
            ctx.minus,
            gp=posterior,
            oracle=ctx.oracle,
            ledger=ledger,
        )
        infer = ApiLedger(len(ctx.test))
        result = evaluate(
            ensemble_predictor(trained.params, ctx.minus, ctx.oracle, infer, config.alpha_test),
            ctx.test,
            ledger=infer,
        )
        rows.append(
            {
                "budget": size,
                "gp_vs_oracle_mae": mae,
                "accuracy": result.accuracy,
                "train_unique": ledger.unique_count,
                "train_fraction": round(ledger.unique_count / len(ctx.train), 4),
            }
        )
        print(
            f"budget={size:5d}  mae={mae:.4f}  acc={result.accuracy:.4f}  "
            f"train_unique={ledger.unique_count}"
        )

    with open(out / "budget_sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"CSV written to {out / 'budget_sweep.csv'}")


if __name__ == "__main__":
    main()
