"""Reproducible experiment orchestration: the six-method comparison and exports.

A run executes, in canonical order: teacher sealing, frozen-proxy
preparation, then pretrain / full_ft / proxy_tune / cpt / gp_random /
gp_filter. Every method gets private training and inference ledgers; one
method failing is reported as failed without aborting the others. Identical
config + seed gives byte-identical metric files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ApiLedger, Dataset, load_dataset, save_dataset, usage_fraction
from .ensemble import (
    EvalResult,
    ensemble_predictor,
    evaluate,
    proxy_predictor,
    save_predictions_csv,
)
from .errors import ConfigError, GpProxyError, MissingArtifacts
from .gp import (
    NoiseParams,
    calibrate_gate_threshold,
    fit_gp,
    load_posterior,
    predict_mean_batch,
    predict_uncertainty_batch,
    save_posterior,
)
from .oracle import CacheOnlyOracle, Oracle, OracleCache, make_synthetic_teacher
from .selection import (
    build_logitmap,
    calibrate_thresholds,
    filter_select,
    random_select,
)
from .synth import SyntheticSpec, generate_extra_split, generate_synthetic
from .training import (
    EnsembleWeights,
    TrainConfig,
    TrainResult,
    forward_batch,
    init_proxy,
    save_checkpoint,
    save_metrics_csv,
    train_proxy,
)

METHODS = ("pretrain", "full_ft", "proxy_tune", "cpt", "gp_random", "gp_filter")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full declarative description of one run; serialized alongside results.

    ``seed`` drives every stream (data, teacher, proxy init, selection,
    training); the nested synthetic spec's own seed field is overridden by it.
    """

    # data: synthetic blobs by default, or explicit files
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    train_path: str | None = None
    test_path: str | None = None

    # teacher (the sealed stand-in for the black-box model)
    teacher_capacity: int = 64
    teacher_label_noise: float = 0.1
    teacher_epochs: int = 30
    teacher_learning_rate: float = 0.1

    # proxy pair
    proxy_arch: str = "linear_softmax"
    proxy_hidden: int = 32
    pretrain_mode: str = "split"  # "split" | "random"
    pretrain_size: int = 100
    pretrain_epochs: int = 1
    pretrain_learning_rate: float = 0.02

    # GP training-set selection
    selection_metric: str = "euclidean"
    selection_percentile: float = 0.01
    calibration_mode: str = "permissive"
    random_fraction: float = 0.05
    max_pairs: int = 60

    # GP surrogate and gate
    gp_noise: float = 1e-2
    gate_percentile: float = 0.01
    uncertainty_aggregate: str = "max"

    # oracle backend: the sealed synthetic teacher by default, or an external
    # wire-protocol endpoint, or a pre-dumped cache (offline, zero live calls)
    oracle_backend: str = "synthetic"  # "synthetic" | "remote" | "cache"
    oracle_endpoint: str | None = None
    oracle_cache_path: str | None = None
    oracle_top_k: int = 5

    # proxy training
    alpha_train: float = 0.8
    alpha_test: float = 0.8
    epochs: int = 2
    batch_size: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.0

    # run
    seed: int = 0
    out_dir: str = "runs/default"
    budget_cap: int | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        synth_raw = raw.pop("synthetic", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if synth_raw is not None:
                raw["synthetic"] = SyntheticSpec(**synth_raw)
            return cls(**raw)
        except (TypeError, GpProxyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() in (".toml", ".tml"):
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            try:
                raw = tomllib.loads(text)
            except Exception as exc:
                raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
        else:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config root must be a table/object")
        return cls.from_dict(raw)


@dataclass(eq=False)
class MethodReport:
    """One comparison row: accuracy plus training and inference query fractions."""

    method: str
    accuracy: float
    train_fraction: float
    infer_fraction: float
    seconds: float
    status: str = "ok"
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "accuracy": None if math.isnan(self.accuracy) else round(self.accuracy, 4),
            "train_fraction": round(self.train_fraction, 4),
            "infer_fraction": round(self.infer_fraction, 4),
            "seconds": round(self.seconds, 3),
            "status": self.status,
            "error": self.error,
        }


@dataclass(eq=False)
class RunContext:
    """Shared, method-independent state of one run."""

    config: ExperimentConfig
    train: Dataset
    test: Dataset
    oracle: Oracle
    minus: "object"
    minus_train_logits: np.ndarray
    seeds: dict[str, int]
    teacher_train_accuracy: float | None
    teacher_test_accuracy: float | None


def _derive_seeds(seed: int) -> dict[str, int]:
    state = np.random.SeedSequence(seed).generate_state(8)
    return {
        "teacher": int(state[0]),
        "proxy": int(state[1]),
        "train": int(state[2]),
        "select": int(state[3]),
    }


def _load_splits(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if config.train_path is not None and config.test_path is not None:
        return load_dataset(config.train_path), load_dataset(config.test_path)
    spec = dataclasses.replace(config.synthetic, seed=config.seed)
    return generate_synthetic(spec)


def _make_oracle(config: ExperimentConfig, train: Dataset, seeds: dict[str, int]) -> Oracle:
    if config.oracle_backend == "synthetic":
        return make_synthetic_teacher(
            train,
            capacity=config.teacher_capacity,
            label_noise=config.teacher_label_noise,
            seed=seeds["teacher"],
            epochs=config.teacher_epochs,
            learning_rate=config.teacher_learning_rate,
            budget_cap=config.budget_cap,
        )
    if config.oracle_backend == "remote":
        if config.oracle_endpoint is None:
            raise ConfigError("oracle_backend 'remote' requires oracle_endpoint")
        from .client import RemoteOracle

        return RemoteOracle(
            endpoint=config.oracle_endpoint,
            vocab_size=train.V,
            top_k=config.oracle_top_k,
            budget_cap=config.budget_cap,
        )
    if config.oracle_backend == "cache":
        if config.oracle_cache_path is None:
            raise ConfigError("oracle_backend 'cache' requires oracle_cache_path")
        return CacheOnlyOracle(
            cache=OracleCache.load(config.oracle_cache_path), budget_cap=config.budget_cap
        )
    raise ConfigError(f"unknown oracle_backend {config.oracle_backend!r}")


def prepare(config: ExperimentConfig) -> RunContext:
    """Data, sealed oracle, and frozen proxy -- everything the methods share."""
    seeds = _derive_seeds(config.seed)
    train, test = _load_splits(config)

    oracle = _make_oracle(config, train, seeds)
    teacher_train_accuracy = None
    teacher_test_accuracy = None
    if config.oracle_backend == "synthetic":
        teacher_train_accuracy = oracle.train_accuracy
        teacher_test_accuracy = float(
            (forward_batch(oracle.params, test.features).argmax(axis=1) == test.labels).mean()
        )

    minus = init_proxy(
        config.proxy_arch, train.d, train.V, hidden=config.proxy_hidden, seed=seeds["proxy"]
    )
    if config.pretrain_mode == "split":
        if config.train_path is None:
            spec = dataclasses.replace(config.synthetic, seed=config.seed)
            generic = generate_extra_split(spec, config.pretrain_size, "pretrain")
        else:
            head = train.examples[: config.pretrain_size]
            generic = Dataset(examples=list(head), V=train.V, d=train.d)
        pre_cfg = TrainConfig(
            epochs=config.pretrain_epochs,
            batch_size=config.batch_size,
            learning_rate=config.pretrain_learning_rate,
            seed=seeds["proxy"],
            objective="plain_ft",
        )
        minus = train_proxy(pre_cfg, generic, minus).params
    elif config.pretrain_mode != "random":
        raise ConfigError(f"unknown pretrain_mode {config.pretrain_mode!r}")
    minus = minus.copy(role="frozen_minus").seal()
    minus_train_logits = forward_batch(minus, train.features)

    return RunContext(
        config=config,
        train=train,
        test=test,
        oracle=oracle,
        minus=minus,
        minus_train_logits=minus_train_logits,
        seeds=seeds,
        teacher_train_accuracy=teacher_train_accuracy,
        teacher_test_accuracy=teacher_test_accuracy,
    )


def _train_config(config: ExperimentConfig, objective: str, seeds: dict, gate=None) -> TrainConfig:
    return TrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        seed=seeds["train"],
        objective=objective,
        alpha=EnsembleWeights(alpha_train=config.alpha_train, alpha_test=config.alpha_test),
        gate=gate,
    )


@dataclass(eq=False)
class _MethodOutcome:
    report: MethodReport
    eval_result: EvalResult | None


def _finish_method(
    method: str,
    ctx: RunContext,
    result: EvalResult,
    train_ledger: ApiLedger,
    infer_ledger: ApiLedger,
    started: float,
    out: Path | None,
    train_result: TrainResult | None = None,
) -> _MethodOutcome:
    report = MethodReport(
        method=method,
        accuracy=result.accuracy,
        train_fraction=usage_fraction(train_ledger),
        infer_fraction=usage_fraction(infer_ledger),
        seconds=time.perf_counter() - started,
    )
    if out is not None:
        mdir = out / method
        mdir.mkdir(parents=True, exist_ok=True)
        train_ledger.save(mdir / "ledger_train.json")
        infer_ledger.save(mdir / "ledger_infer.json")
        train_ledger.save_timeline(mdir / "ledger_train_timeline.csv")
        if train_result is not None:
            save_metrics_csv(train_result.epoch_metrics, mdir / "metrics.csv")
            save_checkpoint(
                train_result.params, mdir / "checkpoint.npz", seed=ctx.seeds["train"]
            )
    return _MethodOutcome(report=report, eval_result=result)


def _run_pretrain(ctx: RunContext, out: Path | None) -> _MethodOutcome:
    started = time.perf_counter()
    train_ledger = ApiLedger(len(ctx.train))
    infer_ledger = ApiLedger(len(ctx.test))
    result = evaluate(proxy_predictor(ctx.minus), ctx.test, ledger=infer_ledger)
    return _finish_method("pretrain", ctx, result, train_ledger, infer_ledger, started, out)


def _run_full_ft(ctx: RunContext, out: Path | None) -> _MethodOutcome:
    started = time.perf_counter()
    cfg = ctx.config
    train_ledger = ApiLedger(len(ctx.train))
    infer_ledger = ApiLedger(len(ctx.test))
    tr = train_proxy(_train_config(cfg, "plain_ft", ctx.seeds), ctx.train, ctx.minus)
    result = evaluate(proxy_predictor(tr.params), ctx.test, ledger=infer_ledger)
    return _finish_method("full_ft", ctx, result, train_ledger, infer_ledger, started, out, tr)


def _run_proxy_tune(ctx: RunContext, out: Path | None) -> _MethodOutcome:
    started = time.perf_counter()
    cfg = ctx.config
    train_ledger = ApiLedger(len(ctx.train))
    infer_ledger = ApiLedger(len(ctx.test))
    tr = train_proxy(_train_config(cfg, "plain_ft", ctx.seeds), ctx.train, ctx.minus)
    predictor = ensemble_predictor(tr.params, ctx.minus, ctx.oracle, infer_ledger, cfg.alpha_test)
    result = evaluate(predictor, ctx.test, ledger=infer_ledger)
    return _finish_method("proxy_tune", ctx, result, train_ledger, infer_ledger, started, out, tr)


def _run_cpt(ctx: RunContext, out: Path | None) -> _MethodOutcome:
    started = time.perf_counter()
    cfg = ctx.config
    train_ledger = ApiLedger(len(ctx.train))
    infer_ledger = ApiLedger(len(ctx.test))
    tr = train_proxy(
        _train_config(cfg, "cpt", ctx.seeds),
        ctx.train,
        ctx.minus,
        oracle=ctx.oracle,
        ledger=train_ledger,
    )
    predictor = ensemble_predictor(tr.params, ctx.minus, ctx.oracle, infer_ledger, cfg.alpha_test)
    result = evaluate(predictor, ctx.test, ledger=infer_ledger)
    return _finish_method("cpt", ctx, result, train_ledger, infer_ledger, started, out, tr)


def _run_gp_random(ctx: RunContext, out: Path | None) -> _MethodOutcome:
    started = time.perf_counter()
    cfg = ctx.config
    train_ledger = ApiLedger(len(ctx.train))
    infer_ledger = ApiLedger(len(ctx.test))
    count = max(1, round(cfg.random_fraction * len(ctx.train)))
    candidates = random_select(ctx.train, count, ctx.seeds["select"], proxy=ctx.minus_train_logits)
    pairs = build_logitmap(candidates, ctx.oracle, train_ledger)
    posterior = fit_gp(pairs, noise=NoiseParams(noise_variance=cfg.gp_noise))
    # No gate calibration here: the random-selection budget stays fixed at the
    # configured fraction, with pure GP supervision during training.
    tr = train_proxy(
        _train_config(cfg, "gp_gated", ctx.seeds),
        ctx.train,
        ctx.minus,
        gp=posterior,
        oracle=ctx.oracle,
        ledger=train_ledger,
    )
    predictor = ensemble_predictor(tr.params, ctx.minus, ctx.oracle, infer_ledger, cfg.alpha_test)
    result = evaluate(predictor, ctx.test, ledger=infer_ledger)
    if out is not None:
        mdir = out / "gp_random"
        mdir.mkdir(parents=True, exist_ok=True)
        candidates.save(mdir / "candidates.jsonl")
        pairs.save(mdir / "logitmap.jsonl")
        save_posterior(posterior, mdir / "posterior.npz")
    return _finish_method("gp_random", ctx, result, train_ledger, infer_ledger, started, out, tr)


def _run_gp_filter(ctx: RunContext, out: Path | None) -> _MethodOutcome:
    started = time.perf_counter()
    cfg = ctx.config
    train_ledger = ApiLedger(len(ctx.train))
    infer_ledger = ApiLedger(len(ctx.test))
    thresholds = calibrate_thresholds(
        ctx.train,
        ctx.minus_train_logits,
        p=cfg.selection_percentile,
        metric=cfg.selection_metric,
        mode=cfg.calibration_mode,
    )
    candidates = filter_select(
        ctx.train, ctx.minus_train_logits, thresholds, max_selected=cfg.max_pairs
    )
    pairs = build_logitmap(candidates, ctx.oracle, train_ledger)
    posterior = fit_gp(pairs, noise=NoiseParams(noise_variance=cfg.gp_noise))
    gate = calibrate_gate_threshold(
        posterior,
        ctx.train.features,
        p=cfg.gate_percentile,
        aggregate=cfg.uncertainty_aggregate,
    )
    tr = train_proxy(
        _train_config(cfg, "gp_gated", ctx.seeds, gate=gate),
        ctx.train,
        ctx.minus,
        gp=posterior,
        oracle=ctx.oracle,
        ledger=train_ledger,
    )
    predictor = ensemble_predictor(tr.params, ctx.minus, ctx.oracle, infer_ledger, cfg.alpha_test)
    result = evaluate(predictor, ctx.test, ledger=infer_ledger)
    if out is not None:
        mdir = out / "gp_filter"
        mdir.mkdir(parents=True, exist_ok=True)
        with open(mdir / "thresholds.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "tau_in": thresholds.tau_in,
                    "tau_out": thresholds.tau_out,
                    "metric": thresholds.metric,
                },
                fh,
                indent=2,
            )
        candidates.save(mdir / "candidates.jsonl")
        pairs.save(mdir / "logitmap.jsonl")
        save_posterior(posterior, mdir / "posterior.npz")
        with open(mdir / "gate.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "threshold": gate.threshold,
                    "target_fallback_fraction": gate.target_fallback_fraction,
                    "fallback_ids": sorted(tr.fallback_ids),
                },
                fh,
                indent=2,
            )
    return _finish_method("gp_filter", ctx, result, train_ledger, infer_ledger, started, out, tr)


_RUNNERS = {
    "pretrain": _run_pretrain,
    "full_ft": _run_full_ft,
    "proxy_tune": _run_proxy_tune,
    "cpt": _run_cpt,
    "gp_random": _run_gp_random,
    "gp_filter": _run_gp_filter,
}


def run_experiment(config: ExperimentConfig, write_artifacts: bool = True) -> list[MethodReport]:
    """Execute the six-method comparison; failures never poison other methods."""
    out = Path(config.out_dir) if write_artifacts else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(config.to_dict(), fh, indent=2)
    ctx = prepare(config)
    if out is not None:
        save_dataset(ctx.train, out / "train.jsonl")
        save_dataset(ctx.test, out / "test.jsonl")

    reports: list[MethodReport] = []
    eval_results: dict[str, EvalResult] = {}
    for method in METHODS:
        started = time.perf_counter()
        try:
            outcome = _RUNNERS[method](ctx, out)
        except GpProxyError as exc:
            outcome = _MethodOutcome(
                report=MethodReport(
                    method=method,
                    accuracy=float("nan"),
                    train_fraction=0.0,
                    infer_fraction=0.0,
                    seconds=time.perf_counter() - started,
                    status="failed",
                    error=f"{type(exc).__name__}: {exc}",
                ),
                eval_result=None,
            )
        reports.append(outcome.report)
        if outcome.eval_result is not None:
            eval_results[method] = outcome.eval_result

    if out is not None:
        _write_run_summary(out, ctx, reports, eval_results)
    return reports


def _write_run_summary(
    out: Path,
    ctx: RunContext,
    reports: list[MethodReport],
    eval_results: dict[str, EvalResult],
) -> None:
    with open(out / "reports.json", "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
    with open(out / "reports.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "accuracy", "train_fraction", "infer_fraction", "seconds", "status"]
        )
        for r in reports:
            writer.writerow(
                [
                    r.method,
                    "" if math.isnan(r.accuracy) else repr(round(r.accuracy, 4)),
                    repr(round(r.train_fraction, 4)),
                    repr(round(r.infer_fraction, 4)),
                    repr(round(r.seconds, 3)),
                    r.status,
                ]
            )
    # summary.json intentionally omits wall-clock fields so that reruns of the
    # same config are byte-identical.
    summary = {
        "teacher_train_accuracy": (
            None if ctx.teacher_train_accuracy is None else round(ctx.teacher_train_accuracy, 4)
        ),
        "teacher_test_accuracy": (
            None if ctx.teacher_test_accuracy is None else round(ctx.teacher_test_accuracy, 4)
        ),
        "pretrain_note": (
            "the 'pretrain' row is the frozen proxy alone; the teacher's own "
            "accuracy above is the oracle ceiling"
        ),
        "methods": {
            r.method: {
                "accuracy": None if math.isnan(r.accuracy) else round(r.accuracy, 4),
                "train_fraction": round(r.train_fraction, 4),
                "infer_fraction": round(r.infer_fraction, 4),
                "status": r.status,
            }
            for r in reports
        },
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    save_predictions_csv(eval_results, out / "predictions.csv")


def sweep_alpha(
    config: ExperimentConfig, grid: list[tuple[float, float]], write_artifacts: bool = True
) -> list[tuple[float, float, float]]:
    """GP-filter accuracy per (alpha_train, alpha_test) cell, sharing D' and the GP."""
    if not grid:
        raise ConfigError("alpha sweep requires a nonempty grid")
    out = Path(config.out_dir) if write_artifacts else None
    ctx = prepare(config)
    cfg = ctx.config

    setup_ledger = ApiLedger(len(ctx.train))
    thresholds = calibrate_thresholds(
        ctx.train,
        ctx.minus_train_logits,
        p=cfg.selection_percentile,
        metric=cfg.selection_metric,
        mode=cfg.calibration_mode,
    )
    candidates = filter_select(
        ctx.train, ctx.minus_train_logits, thresholds, max_selected=cfg.max_pairs
    )
    pairs = build_logitmap(candidates, ctx.oracle, setup_ledger)
    posterior = fit_gp(pairs, noise=NoiseParams(noise_variance=cfg.gp_noise))
    gate = calibrate_gate_threshold(
        posterior, ctx.train.features, p=cfg.gate_percentile, aggregate=cfg.uncertainty_aggregate
    )

    cells: list[tuple[float, float, float]] = []
    for alpha_train, alpha_test in grid:
        cell_cfg = dataclasses.replace(cfg, alpha_train=alpha_train, alpha_test=alpha_test)
        train_ledger = ApiLedger(len(ctx.train))
        infer_ledger = ApiLedger(len(ctx.test))
        tr = train_proxy(
            _train_config(cell_cfg, "gp_gated", ctx.seeds, gate=gate),
            ctx.train,
            ctx.minus,
            gp=posterior,
            oracle=ctx.oracle,
            ledger=train_ledger,
        )
        predictor = ensemble_predictor(
            tr.params, ctx.minus, ctx.oracle, infer_ledger, alpha_test
        )
        result = evaluate(predictor, ctx.test, ledger=infer_ledger)
        cells.append((alpha_train, alpha_test, result.accuracy))

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "alpha_sweep.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha_train", "alpha_test", "accuracy"])
            for alpha_train, alpha_test, acc in cells:
                writer.writerow([repr(alpha_train), repr(alpha_test), repr(round(acc, 4))])
    return cells


def export_diagnostics(config: ExperimentConfig, run_dir: str | Path | None = None) -> list[Path]:
    """Post-run exports from a completed GP-filter run.

    Writes (a) the sorted uncertainty curve with the gate cut marked, (b)
    paired GP-vs-oracle logits on the test split, and (c) the training
    ledger timeline. Raises MissingArtifacts if the run directory lacks the
    GP artifacts.
    """
    run = Path(run_dir) if run_dir is not None else Path(config.out_dir)
    gp_dir = run / "gp_filter"
    needed = [
        run / "train.jsonl",
        run / "test.jsonl",
        gp_dir / "posterior.npz",
        gp_dir / "gate.json",
        gp_dir / "ledger_train_timeline.csv",
    ]
    missing = [str(p) for p in needed if not p.exists()]
    if missing:
        raise MissingArtifacts(f"diagnostics need a completed gp_filter run; missing {missing}")

    train = load_dataset(run / "train.jsonl")
    test = load_dataset(run / "test.jsonl")
    posterior = load_posterior(gp_dir / "posterior.npz")
    gate_blob = json.loads((gp_dir / "gate.json").read_text(encoding="utf-8"))
    threshold = float(gate_blob["threshold"])

    diag = run / "diagnostics"
    diag.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    _, scalar = predict_uncertainty_batch(
        posterior, train.features, aggregate=config.uncertainty_aggregate
    )
    order = np.argsort(-scalar, kind="stable")
    path = diag / "uncertainty_curve.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "example_id", "uncertainty", "above_threshold"])
        for rank, idx in enumerate(order, start=1):
            writer.writerow(
                [
                    rank,
                    train.examples[int(idx)].id,
                    repr(float(scalar[idx])),
                    int(scalar[idx] > threshold),
                ]
            )
    written.append(path)

    # Paired logits on the held-out split; teacher queries go to a private
    # diagnostics ledger so run budgets stay untouched.
    ctx = prepare(config)
    diag_ledger = ApiLedger(len(test))
    gp_logits = predict_mean_batch(posterior, test.features)
    oracle_logits = np.stack([ctx.oracle.query(ex, diag_ledger) for ex in test])
    path = diag / "gp_vs_oracle_logits.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        v = gp_logits.shape[1]
        writer.writerow(
            ["id"] + [f"gp_{j}" for j in range(v)] + [f"oracle_{j}" for j in range(v)]
        )
        for i, ex in enumerate(test.examples):
            writer.writerow(
                [ex.id]
                + [repr(float(x)) for x in gp_logits[i]]
                + [repr(float(x)) for x in oracle_logits[i]]
            )
    written.append(path)
    mae = float(np.mean(np.abs(gp_logits - oracle_logits)))
    path = diag / "diag_summary.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "gp_vs_oracle_mae": mae,
                "gate_threshold": threshold,
                "n_above_threshold": int(np.sum(scalar > threshold)),
                "n_train": len(train),
            },
            fh,
            indent=2,
        )
    written.append(path)

    path = diag / "ledger_timeline.csv"
    path.write_text(
        (gp_dir / "ledger_train_timeline.csv").read_text(encoding="utf-8"), encoding="utf-8"
    )
    written.append(path)
    return written
