"""GP training-set construction: distance metrics, diversity filter, calibration.

The filter seeds with the first example and accepts a candidate only when
both its input-embedding distance and its proxy-logit distance strictly
exceed the thresholds against *every* already-selected point (rejection on
"<="). Filtering touches only the frozen proxy -- the oracle is queried
exclusively by :func:`build_logitmap`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import ApiLedger, Dataset, Example, LogitMapPair, LogitMapSet
from .errors import (
    CountOutOfRange,
    DimensionMismatch,
    EmptyInput,
    NonFiniteInput,
    ZeroVector,
)

METRICS = ("euclidean", "manhattan", "cosine_distance")

# Keeps exact GP fitting tractable and well-conditioned; selections beyond
# this are truncated in selection order with a warning.
DEFAULT_MAX_SELECTED = 3000


@dataclass(frozen=True)
class SelectionThresholds:
    """Minimum distances a candidate must exceed against all selected points.

    ``metric`` applies to input embeddings; output logit distances are always
    euclidean.
    """

    tau_in: float
    tau_out: float
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        if self.tau_in < 0 or self.tau_out < 0:
            raise NonFiniteInput(f"thresholds must be >= 0, got ({self.tau_in}, {self.tau_out})")
        if self.metric not in METRICS:
            raise NonFiniteInput(f"unknown metric {self.metric!r}")


@dataclass(frozen=True, eq=False)
class CandidateEntry:
    example: Example
    proxy_logits: np.ndarray | None


@dataclass(eq=False)
class CandidateSet:
    """Insertion-ordered selection, each entry paired with its frozen-proxy logits."""

    entries: list[CandidateEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.example.id for e in self.entries]

    def save(self, path) -> None:
        import json

        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                row = {
                    "id": e.example.id,
                    "proxy_logits": None if e.proxy_logits is None else e.proxy_logits.tolist(),
                }
                fh.write(json.dumps(row) + "\n")


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"distance inputs have shapes {a.shape} vs {b.shape}")
    return a, b


def input_distance(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> float:
    """Distance between embeddings under the configured metric."""
    a, b = _check_pair(a, b)
    if metric == "euclidean":
        dist = float(np.linalg.norm(a - b))
    elif metric == "manhattan":
        dist = float(np.abs(a - b).sum())
    elif metric == "cosine_distance":
        norm_a = float(np.linalg.norm(a))
        norm_b = float(np.linalg.norm(b))
        if norm_a == 0.0 or norm_b == 0.0:
            raise ZeroVector("cosine distance undefined for a zero-norm vector")
        dist = 1.0 - float(np.dot(a, b)) / (norm_a * norm_b)
    else:
        raise NonFiniteInput(f"unknown metric {metric!r}")
    if not math.isfinite(dist):
        raise NonFiniteInput("distance came out non-finite")
    return dist


def output_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between logit vectors."""
    a, b = _check_pair(a, b)
    dist = float(np.linalg.norm(a - b))
    if not math.isfinite(dist):
        raise NonFiniteInput("distance came out non-finite")
    return dist


def _input_distances_to(block: np.ndarray, x: np.ndarray, metric: str) -> np.ndarray:
    """Vectorized input distances from x to each row of block."""
    if metric == "euclidean":
        return np.linalg.norm(block - x, axis=1)
    if metric == "manhattan":
        return np.abs(block - x).sum(axis=1)
    norms = np.linalg.norm(block, axis=1)
    norm_x = np.linalg.norm(x)
    if norm_x == 0.0 or np.any(norms == 0.0):
        raise ZeroVector("cosine distance undefined for a zero-norm vector")
    return 1.0 - (block @ x) / (norms * norm_x)


def _resolve_proxy_logits(proxy, dataset: Dataset) -> np.ndarray:
    """Accept ProxyParams or a precomputed (N, V) logits matrix."""
    if isinstance(proxy, np.ndarray):
        logits = np.asarray(proxy, dtype=np.float64)
        if logits.shape[0] != len(dataset):
            raise DimensionMismatch(
                f"precomputed logits have {logits.shape[0]} rows, expected {len(dataset)}"
            )
        return logits
    from .training import forward_batch

    return forward_batch(proxy, dataset.features)


def ascending_quantile(values: np.ndarray, p: float) -> float:
    """The value at 1-based rank ceil(p * N) of the ascending sort."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("quantile of an empty collection")
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("quantile input contains non-finite values")
    ordered = np.sort(values)
    idx = min(max(math.ceil(p * ordered.size) - 1, 0), ordered.size - 1)
    return float(ordered[idx])


def calibrate_thresholds(
    dataset: Dataset,
    proxy,
    p: float = 0.01,
    metric: str = "euclidean",
    mode: str = "permissive",
) -> SelectionThresholds:
    """Set tau_in/tau_out at the p-quantile of observed distances.

    ``mode="permissive"`` (default) replays the filter with zero thresholds
    and collects every candidate-versus-selected comparison; ``"pairwise"``
    collects all N*(N-1)/2 pairs (small datasets only).
    """
    if len(dataset) < 2:
        raise EmptyInput("threshold calibration needs at least two examples")
    if not 0 < p < 1:
        raise EmptyInput(f"calibration percentile must be in (0,1), got {p}")
    if mode not in ("permissive", "pairwise"):
        raise NonFiniteInput(f"unknown calibration mode {mode!r}")
    logits = _resolve_proxy_logits(proxy, dataset)
    feats = dataset.features

    d_in: list[np.ndarray] = []
    d_out: list[np.ndarray] = []
    if mode == "pairwise":
        for i in range(1, len(dataset)):
            d_in.append(_input_distances_to(feats[:i], feats[i], metric))
            d_out.append(np.linalg.norm(logits[:i] - logits[i], axis=1))
    else:
        selected = [0]
        for i in range(1, len(dataset)):
            block = feats[selected]
            din = _input_distances_to(block, feats[i], metric)
            dout = np.linalg.norm(logits[selected] - logits[i], axis=1)
            d_in.append(din)
            d_out.append(dout)
            if not np.any((din <= 0.0) | (dout <= 0.0)):
                selected.append(i)
    flat_in = np.concatenate(d_in)
    flat_out = np.concatenate(d_out)
    if not (np.all(np.isfinite(flat_in)) and np.all(np.isfinite(flat_out))):
        raise NonFiniteInput("calibration distances contain non-finite values")
    return SelectionThresholds(
        tau_in=ascending_quantile(flat_in, p),
        tau_out=ascending_quantile(flat_out, p),
        metric=metric,
    )


def filter_select(
    dataset: Dataset,
    proxy,
    thresholds: SelectionThresholds,
    max_selected: int = DEFAULT_MAX_SELECTED,
) -> CandidateSet:
    """Greedy diversity filter over the dataset in its given order.

    Seeds with the first example; each later example is accepted iff, against
    every current candidate, input distance > tau_in AND output distance >
    tau_out. Uses the frozen proxy's logits only -- no oracle calls happen
    here. Deterministic given dataset order.
    """
    if len(dataset) == 0:
        raise EmptyInput("cannot select from an empty dataset")
    if max_selected < 1:
        raise CountOutOfRange(f"max_selected must be >= 1, got {max_selected}")
    logits = _resolve_proxy_logits(proxy, dataset)
    feats = dataset.features
    n = len(dataset)

    sel_feats = np.empty((min(n, max_selected), feats.shape[1]))
    sel_logits = np.empty((min(n, max_selected), logits.shape[1]))
    sel_idx: list[int] = [0]
    sel_feats[0] = feats[0]
    sel_logits[0] = logits[0]
    truncated = False
    for i in range(1, n):
        m = len(sel_idx)
        if m >= max_selected:
            truncated = True
            break
        din = _input_distances_to(sel_feats[:m], feats[i], thresholds.metric)
        if not np.all(np.isfinite(din)):
            raise NonFiniteInput(f"non-finite input distance at example {dataset.examples[i].id!r}")
        dout = np.linalg.norm(sel_logits[:m] - logits[i], axis=1)
        if np.any((din <= thresholds.tau_in) | (dout <= thresholds.tau_out)):
            continue
        sel_feats[m] = feats[i]
        sel_logits[m] = logits[i]
        sel_idx.append(i)
    if truncated:
        warnings.warn(
            f"diversity filter hit the cap of {max_selected} selections; "
            "remaining examples were not scanned",
            stacklevel=2,
        )
    entries = [
        CandidateEntry(example=dataset.examples[i], proxy_logits=logits[i].copy())
        for i in sel_idx
    ]
    return CandidateSet(entries=entries)


def random_select(
    dataset: Dataset, count: int, seed: int, proxy=None
) -> CandidateSet:
    """Uniform sample without replacement, reproducible from the seed."""
    if not 1 <= count <= len(dataset):
        raise CountOutOfRange(f"count {count} outside [1, {len(dataset)}]")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(dataset), size=count, replace=False)
    logits = None if proxy is None else _resolve_proxy_logits(proxy, dataset)
    entries = [
        CandidateEntry(
            example=dataset.examples[int(i)],
            proxy_logits=None if logits is None else logits[int(i)].copy(),
        )
        for i in chosen
    ]
    return CandidateSet(entries=entries)


def build_logitmap(candidates: CandidateSet, oracle, ledger: ApiLedger) -> LogitMapSet:
    """Query the oracle once per candidate id and pair embeddings with its logits.

    Cache hits cost nothing; the returned pairs carry the *oracle's* logits,
    not the proxy's.
    """
    pairs = []
    for entry in candidates.entries:
        logits = oracle.query(entry.example, ledger)
        pairs.append(
            LogitMapPair(
                example_id=entry.example.id,
                embedding=entry.example.embedding,
                oracle_logits=logits,
            )
        )
    return LogitMapSet(pairs=pairs)
