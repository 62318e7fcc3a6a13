"""Logit arithmetic for proxy-shifted inference, softmax, and evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import ApiLedger, Dataset, Example
from .errors import DimensionMismatch, EmptySplit, NonFiniteInput


def combine_logits(
    s_plus: np.ndarray, s_minus: np.ndarray, s_large: np.ndarray, alpha: float
) -> np.ndarray:
    """s_plus + alpha * (s_large - s_minus), elementwise.

    alpha=1 recovers the plain proxy-shift rule; alpha=0 leaves s_plus
    untouched.
    """
    s_plus = np.asarray(s_plus, dtype=np.float64)
    s_minus = np.asarray(s_minus, dtype=np.float64)
    s_large = np.asarray(s_large, dtype=np.float64)
    if not (s_plus.shape == s_minus.shape == s_large.shape):
        raise DimensionMismatch(
            f"logit shapes differ: {s_plus.shape}, {s_minus.shape}, {s_large.shape}"
        )
    return s_plus + alpha * (s_large - s_minus)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable (max-subtracted) softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteInput("softmax input contains non-finite entries")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteInput("log_softmax input contains non-finite entries")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(eq=False)
class EnsemblePrediction:
    combined_logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int


def predict_ensemble(
    s_plus: np.ndarray, s_minus: np.ndarray, s_large: np.ndarray, alpha: float
) -> EnsemblePrediction:
    combined = combine_logits(s_plus, s_minus, s_large, alpha)
    probs = softmax(combined)
    return EnsemblePrediction(
        combined_logits=combined,
        probabilities=probs,
        predicted_class=int(np.argmax(combined)),
    )


@dataclass(eq=False)
class EvalResult:
    accuracy: float
    predictions: list[tuple[str, int, int]]  # (id, true, predicted)
    ledger_unique_delta: int


def evaluate(
    predictor: Callable[[Example], "int | EnsemblePrediction"],
    split: Dataset,
    ledger: ApiLedger | None = None,
) -> EvalResult:
    """Accuracy of ``predictor`` over a split plus the oracle queries it cost."""
    if len(split) == 0:
        raise EmptySplit("cannot evaluate on an empty split")
    before = ledger.unique_count if ledger is not None else 0
    rows: list[tuple[str, int, int]] = []
    correct = 0
    for ex in split:
        out = predictor(ex)
        pred = out.predicted_class if isinstance(out, EnsemblePrediction) else int(out)
        rows.append((ex.id, ex.label, pred))
        correct += pred == ex.label
    delta = (ledger.unique_count - before) if ledger is not None else 0
    return EvalResult(accuracy=correct / len(split), predictions=rows, ledger_unique_delta=delta)


# Predictor factories -------------------------------------------------------


def proxy_predictor(params) -> Callable[[Example], int]:
    """Argmax of the proxy's own logits; no oracle involved."""
    from .training import proxy_forward

    def predict(ex: Example) -> int:
        return int(np.argmax(proxy_forward(params, ex.embedding)))

    return predict


def ensemble_predictor(
    plus, minus, oracle, ledger: ApiLedger, alpha_test: float
) -> Callable[[Example], EnsemblePrediction]:
    """Combined-logit inference: one oracle call per test example."""
    from .training import proxy_forward

    def predict(ex: Example) -> EnsemblePrediction:
        s_large = oracle.query(ex, ledger)
        return predict_ensemble(
            proxy_forward(plus, ex.embedding),
            proxy_forward(minus, ex.embedding),
            s_large,
            alpha_test,
        )

    return predict


def oracle_predictor(oracle, ledger: ApiLedger) -> Callable[[Example], int]:
    def predict(ex: Example) -> int:
        return int(np.argmax(oracle.query(ex, ledger)))

    return predict


def save_predictions_csv(results: dict[str, EvalResult], path) -> None:
    """Long-form CSV: id,true_label,pred_label,method."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "true_label", "pred_label", "method"])
        for method, result in results.items():
            for ex_id, true_label, pred in result.predictions:
                writer.writerow([ex_id, true_label, pred, method])
