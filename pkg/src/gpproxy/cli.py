"""Command-line harness.

Subcommands mirror the pipeline stages; every invocation is deterministic in
the config + seed. Exit codes: 0 success, 2 config error, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .data import ApiLedger, save_dataset
from .errors import (
    BudgetExceeded,
    ConfigError,
    GpProxyError,
    InvalidSpec,
    OracleUnavailable,
    ParseError,
)
from .experiment import (
    ExperimentConfig,
    export_diagnostics,
    prepare,
    run_experiment,
    sweep_alpha,
)
from .gp import NoiseParams, fit_gp, save_posterior, tune_kernel_params
from .selection import build_logitmap, calibrate_thresholds, filter_select, random_select

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.budget_cap is not None:
        overrides["budget_cap"] = args.budget_cap
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _out(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_gen_data(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .synth import generate_synthetic

    spec = dataclasses.replace(config.synthetic, seed=config.seed)
    train, test = generate_synthetic(spec)
    out = _out(config)
    save_dataset(train, out / "train.jsonl")
    save_dataset(test, out / "test.jsonl")
    print(f"wrote {len(train)} train / {len(test)} test rows under {out}")
    return EXIT_OK


def _cmd_calibrate_thresholds(config: ExperimentConfig, args: argparse.Namespace) -> int:
    ctx = prepare(config)
    thresholds = calibrate_thresholds(
        ctx.train,
        ctx.minus_train_logits,
        p=config.selection_percentile,
        metric=config.selection_metric,
        mode=config.calibration_mode,
    )
    out = _out(config)
    payload = {
        "tau_in": thresholds.tau_in,
        "tau_out": thresholds.tau_out,
        "metric": thresholds.metric,
        "percentile": config.selection_percentile,
    }
    with open(out / "thresholds.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(json.dumps(payload))
    return EXIT_OK


def _select_candidates(config: ExperimentConfig, ctx, strategy: str, count: int | None):
    if strategy == "filter":
        thresholds = calibrate_thresholds(
            ctx.train,
            ctx.minus_train_logits,
            p=config.selection_percentile,
            metric=config.selection_metric,
            mode=config.calibration_mode,
        )
        return filter_select(
            ctx.train, ctx.minus_train_logits, thresholds, max_selected=config.max_pairs
        )
    if strategy == "random":
        if count is None:
            count = max(1, round(config.random_fraction * len(ctx.train)))
        return random_select(ctx.train, count, ctx.seeds["select"], proxy=ctx.minus_train_logits)
    raise ConfigError(f"unknown selection strategy {strategy!r}")


def _cmd_select(config: ExperimentConfig, args: argparse.Namespace) -> int:
    ctx = prepare(config)
    candidates = _select_candidates(config, ctx, args.strategy, args.count)
    out = _out(config)
    candidates.save(out / "candidates.jsonl")
    print(f"selected {len(candidates)} of {len(ctx.train)} examples -> {out / 'candidates.jsonl'}")
    return EXIT_OK


def _cmd_fit_gp(config: ExperimentConfig, args: argparse.Namespace) -> int:
    ctx = prepare(config)
    candidates = _select_candidates(config, ctx, args.strategy, args.count)
    ledger = ApiLedger(len(ctx.train))
    pairs = build_logitmap(candidates, ctx.oracle, ledger)
    noise = NoiseParams(noise_variance=config.gp_noise)
    kernel = tune_kernel_params(pairs, noise=noise) if args.tune else None
    posterior = fit_gp(pairs, kernel=kernel, noise=noise)
    out = _out(config)
    pairs.save(out / "logitmap.jsonl")
    save_posterior(posterior, out / "posterior.npz")
    ledger.save(out / "ledger_fit.json")
    print(
        f"fitted GP on M={pairs.M} pairs "
        f"(usage {ledger.export()['fraction']}) -> {out / 'posterior.npz'}"
    )
    return EXIT_OK


def _cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .experiment import _RUNNERS

    method = args.method
    if method not in _RUNNERS:
        raise ConfigError(f"unknown method {method!r}")
    ctx = prepare(config)
    outcome = _RUNNERS[method](ctx, _out(config))
    print(json.dumps(outcome.report.to_dict()))
    return EXIT_OK


def _cmd_evaluate(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .ensemble import ensemble_predictor, evaluate, proxy_predictor
    from .training import load_checkpoint

    ctx = prepare(config)
    infer_ledger = ApiLedger(len(ctx.test))
    if args.checkpoint is not None:
        params, _ = load_checkpoint(args.checkpoint)
    else:
        params = ctx.minus
    if args.ensemble:
        predictor = ensemble_predictor(
            params, ctx.minus, ctx.oracle, infer_ledger, config.alpha_test
        )
    else:
        predictor = proxy_predictor(params)
    result = evaluate(predictor, ctx.test, ledger=infer_ledger)
    payload = {
        "accuracy": round(result.accuracy, 4),
        "infer_fraction": infer_ledger.export()["fraction"],
    }
    print(json.dumps(payload))
    return EXIT_OK


def _cmd_run_all(config: ExperimentConfig, args: argparse.Namespace) -> int:
    reports = run_experiment(config)
    for report in reports:
        print(json.dumps(report.to_dict()))
    failed = [r for r in reports if r.status != "ok"]
    if failed and all(r.status != "ok" for r in reports):
        # Nothing succeeded; surface the first failure class as the exit code.
        first = failed[0].error
        return EXIT_ORACLE if "Oracle" in first or "Budget" in first else 1
    return EXIT_OK


def _parse_grid(raw: str) -> list[tuple[float, float]]:
    values = [float(tok) for tok in raw.split(",") if tok.strip()]
    if not values:
        raise ConfigError(f"empty alpha grid {raw!r}")
    return [(a, b) for a in values for b in values]


def _cmd_sweep_alpha(config: ExperimentConfig, args: argparse.Namespace) -> int:
    grid = _parse_grid(args.grid)
    cells = sweep_alpha(config, grid)
    for alpha_train, alpha_test, acc in cells:
        print(f"alpha_train={alpha_train} alpha_test={alpha_test} accuracy={acc:.4f}")
    print(f"wrote {Path(config.out_dir) / 'alpha_sweep.csv'}")
    return EXIT_OK


def _cmd_export_diag(config: ExperimentConfig, args: argparse.Namespace) -> int:
    written = export_diagnostics(config, run_dir=args.run_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "calibrate-thresholds": _cmd_calibrate_thresholds,
    "select": _cmd_select,
    "fit-gp": _cmd_fit_gp,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "run-all": _cmd_run_all,
    "sweep-alpha": _cmd_sweep_alpha,
    "export-diag": _cmd_export_diag,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpproxy",
        description="Budget-constrained black-box tuning harness",
    )
    parser.add_argument("--config", type=str, default=None, help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", type=str, default=None, help="override the output directory")
    parser.add_argument(
        "--budget-cap", type=int, default=None, help="hard cap on unique oracle queries"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="write synthetic train/test splits")
    sub.add_parser("calibrate-thresholds", help="percentile-calibrate selection thresholds")
    p_select = sub.add_parser("select", help="build the GP candidate set")
    p_select.add_argument("--strategy", choices=("filter", "random"), default="filter")
    p_select.add_argument("--count", type=int, default=None, help="random strategy sample size")
    p_fit = sub.add_parser("fit-gp", help="select, query the oracle, and fit the surrogate")
    p_fit.add_argument("--strategy", choices=("filter", "random"), default="filter")
    p_fit.add_argument("--count", type=int, default=None)
    p_fit.add_argument("--tune", action="store_true", help="grid-search kernel hyperparameters")
    p_train = sub.add_parser("train", help="run one method end to end")
    p_train.add_argument(
        "--method",
        choices=("pretrain", "full_ft", "proxy_tune", "cpt", "gp_random", "gp_filter"),
        default="gp_filter",
    )
    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    p_eval.add_argument("--checkpoint", type=str, default=None)
    p_eval.add_argument("--ensemble", action="store_true", help="combined-logit inference")
    sub.add_parser("run-all", help="the full six-method comparison")
    p_sweep = sub.add_parser("sweep-alpha", help="accuracy over an alpha product grid")
    p_sweep.add_argument("--grid", type=str, default="0.0,0.4,0.8,1.2")
    p_diag = sub.add_parser("export-diag", help="post-run diagnostic CSV exports")
    p_diag.add_argument("--run-dir", type=str, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        return _COMMANDS[args.command](config, args)
    except (ConfigError, InvalidSpec, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OracleUnavailable, BudgetExceeded) as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except GpProxyError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
