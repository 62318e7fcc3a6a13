"""Domain types shared by all modules: examples, datasets, logit records, query ledger.

Embeddings and logit vectors are plain 1-D float64 numpy arrays; the helpers
here validate them at the boundaries (file loads, constructors) so numerical
code downstream can assume finite, consistently-shaped inputs.
"""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    LabelOutOfRange,
    NonFiniteInput,
    ParseError,
    ZeroDenominator,
)


def as_vector(values, *, what: str = "vector") -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 array or raise."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{what} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class Example:
    """One labelled input: a unique id, an embedding vector, and a class index."""

    id: str
    embedding: np.ndarray
    label: int


@dataclass(eq=False)
class Dataset:
    """An ordered collection of examples sharing embedding dim ``d`` and class count ``V``.

    Treated as immutable once constructed; selection and training never
    mutate examples.
    """

    examples: list[Example]
    V: int
    d: int

    def __post_init__(self) -> None:
        if self.V <= 0 or self.d <= 0:
            raise DimensionMismatch(f"V and d must be positive, got V={self.V}, d={self.d}")
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ParseError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)
            if ex.embedding.shape != (self.d,):
                raise DimensionMismatch(
                    f"example {ex.id!r} has {ex.embedding.shape[0]} features, expected d={self.d}"
                )
            if not 0 <= ex.label < self.V:
                raise LabelOutOfRange(f"example {ex.id!r} label {ex.label} outside [0, {self.V})")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @cached_property
    def features(self) -> np.ndarray:
        """(N, d) matrix of embeddings, row order = example order."""
        if not self.examples:
            return np.zeros((0, self.d))
        return np.stack([ex.embedding for ex in self.examples])

    @cached_property
    def labels(self) -> np.ndarray:
        """(N,) integer label array."""
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def by_id(self, example_id: str) -> Example:
        try:
            return self._index[example_id]
        except KeyError:
            raise KeyError(f"no example with id {example_id!r}") from None

    @cached_property
    def _index(self) -> dict[str, Example]:
        return {ex.id: ex for ex in self.examples}


@dataclass(frozen=True, eq=False)
class LogitMapPair:
    """One (embedding, oracle-logits) record: the atom of the GP training set."""

    example_id: str
    embedding: np.ndarray
    oracle_logits: np.ndarray


@dataclass(eq=False)
class LogitMapSet:
    """A set of LogitMap pairs with distinct example ids."""

    pairs: list[LogitMapPair]

    def __post_init__(self) -> None:
        ids = [p.example_id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise ParseError("LogitMapSet contains duplicate example ids")

    @property
    def M(self) -> int:
        return len(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def inputs(self) -> np.ndarray:
        """(M, d) matrix of embeddings."""
        return np.stack([p.embedding for p in self.pairs])

    def targets(self) -> np.ndarray:
        """(M, V) matrix of oracle logits."""
        return np.stack([p.oracle_logits for p in self.pairs])

    def ids(self) -> list[str]:
        return [p.example_id for p in self.pairs]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for p in self.pairs:
                fh.write(
                    json.dumps(
                        {
                            "id": p.example_id,
                            "embedding": p.embedding.tolist(),
                            "oracle_logits": p.oracle_logits.tolist(),
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "LogitMapSet":
        pairs = []
        for lineno, row in _iter_jsonl(path):
            try:
                pairs.append(
                    LogitMapPair(
                        example_id=row["id"],
                        embedding=as_vector([float(v) for v in row["embedding"]], what="embedding"),
                        oracle_logits=as_vector(
                            [float(v) for v in row["oracle_logits"]], what="oracle_logits"
                        ),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: bad logitmap row ({exc})") from exc
        return cls(pairs)


class ApiLedger:
    """Append-only record of oracle queries; the source of every usage figure.

    ``unique_count`` tracks distinct example ids ever queried; ``total_requests``
    counts every query event including cache hits. Thread-safe: records are
    serialized under an internal lock, and re-recording an id never
    double-counts it.
    """

    def __init__(self, denominator: int):
        if denominator < 0:
            raise ZeroDenominator(f"denominator must be >= 0, got {denominator}")
        self.denominator = denominator
        self._lock = threading.Lock()
        self._unique: set[str] = set()
        self._total = 0
        self._timeline: list[tuple[int, str]] = []  # (request seq, id) for new unique ids

    def record(self, example_id: str, budget_cap: int | None = None) -> bool:
        """Count one query for ``example_id``; return True when the id is new.

        When ``budget_cap`` is given and admitting a *new* id would push the
        unique count past the cap, raises BudgetExceeded before mutating.
        """
        from .errors import BudgetExceeded

        with self._lock:
            new = example_id not in self._unique
            if new and budget_cap is not None and len(self._unique) >= budget_cap:
                raise BudgetExceeded(
                    f"unique query cap {budget_cap} reached; refusing id {example_id!r}"
                )
            self._total += 1
            if new:
                self._unique.add(example_id)
                self._timeline.append((self._total, example_id))
            return new

    def seen(self, example_id: str) -> bool:
        with self._lock:
            return example_id in self._unique

    @property
    def unique_count(self) -> int:
        with self._lock:
            return len(self._unique)

    @property
    def total_requests(self) -> int:
        with self._lock:
            return self._total

    def unique_ids(self) -> set[str]:
        with self._lock:
            return set(self._unique)

    def timeline(self) -> list[tuple[int, str]]:
        with self._lock:
            return list(self._timeline)

    def export(self) -> dict:
        """JSON-ready summary; the fraction is reported to 4 decimal places."""
        return {
            "unique": self.unique_count,
            "total": self.total_requests,
            "denominator": self.denominator,
            "fraction": round(usage_fraction(self), 4),
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.export(), fh, indent=2)
            fh.write("\n")

    def save_timeline(self, path: str | Path) -> None:
        """CSV timeline: one row per newly-seen unique id."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["request_seq", "example_id", "unique_count"])
            for rank, (seq, ex_id) in enumerate(self.timeline(), start=1):
                writer.writerow([seq, ex_id, rank])


def usage_fraction(ledger: ApiLedger) -> float:
    """Unique queries over the reference dataset size, in [0, 1]."""
    if ledger.denominator == 0:
        raise ZeroDenominator("usage fraction undefined for denominator 0")
    return ledger.unique_count / ledger.denominator


def apply_embedder(dataset: Dataset, embedder) -> Dataset:
    """Re-embed every example through a hook mapping (N, d) -> (N, d').

    Inputs are pre-embedded feature vectors, so the default pipeline never
    calls this; plug in a learned encoder here when raw features need a
    representation before distance filtering and GP fitting.
    """
    transformed = np.asarray(embedder(dataset.features), dtype=np.float64)
    if transformed.ndim != 2 or transformed.shape[0] != len(dataset):
        raise DimensionMismatch(
            f"embedder must return one row per example, got shape {transformed.shape}"
        )
    examples = [
        Example(id=ex.id, embedding=as_vector(transformed[i], what="embedded features"), label=ex.label)
        for i, ex in enumerate(dataset.examples)
    ]
    return Dataset(examples=examples, V=dataset.V, d=transformed.shape[1])


# ---------------------------------------------------------------------------
# Dataset file I/O
#
# JSONL rows: {"id": "<str>", "features": [<float>...], "label": <int>}, with
# an optional leading header record {"V": <int>, "d": <int>}. CSV uses the
# header id,f0..f{d-1},label. Floats are written with repr() so that
# save -> load round-trips bit-exactly.
# ---------------------------------------------------------------------------


def _iter_jsonl(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc


def _infer_format(path: str | Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("jsonl", "csv"):
            raise ParseError(f"unknown dataset format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise ParseError(f"cannot infer dataset format from {path!r}; pass fmt=")


def load_dataset(path: str | Path, fmt: str | None = None) -> Dataset:
    """Load a dataset from a JSONL or CSV file, validating shape and labels."""
    fmt = _infer_format(path, fmt)
    if fmt == "jsonl":
        return _load_jsonl(path)
    return _load_csv(path)


def _load_jsonl(path: str | Path) -> Dataset:
    examples: list[Example] = []
    declared_v: int | None = None
    declared_d: int | None = None
    d: int | None = None
    for lineno, row in _iter_jsonl(path):
        if not isinstance(row, dict):
            raise ParseError(f"{path}:{lineno}: row is not an object")
        if "id" not in row:
            if {"V", "d"} <= set(row):
                declared_v, declared_d = int(row["V"]), int(row["d"])
                continue
            raise ParseError(f"{path}:{lineno}: row missing 'id'")
        try:
            features = [float(v) for v in row["features"]]
            label = int(row["label"])
            ex_id = str(row["id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: bad row ({exc})") from exc
        if d is None:
            d = declared_d if declared_d is not None else len(features)
        if len(features) != d:
            raise DimensionMismatch(
                f"{path}:{lineno}: row has {len(features)} features, expected {d}"
            )
        examples.append(Example(id=ex_id, embedding=as_vector(features, what="features"), label=label))
    if not examples:
        raise ParseError(f"{path}: no data rows")
    labels = [ex.label for ex in examples]
    if min(labels) < 0:
        raise LabelOutOfRange(f"{path}: negative label {min(labels)}")
    v = declared_v if declared_v is not None else max(labels) + 1
    if max(labels) >= v:
        raise LabelOutOfRange(f"{path}: label {max(labels)} outside declared V={v}")
    return Dataset(examples=examples, V=v, d=d if d is not None else 0)


def _load_csv(path: str | Path) -> Dataset:
    examples: list[Example] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "id" or header[-1] != "label":
            raise ParseError(f"{path}: expected header id,f0..f{{d-1}},label, got {header}")
        d = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DimensionMismatch(
                    f"{path}:{lineno}: row has {len(row) - 2} features, expected {d}"
                )
            try:
                features = [float(v) for v in row[1:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad row ({exc})") from exc
            examples.append(
                Example(id=row[0], embedding=as_vector(features, what="features"), label=label)
            )
    if not examples:
        raise ParseError(f"{path}: no data rows")
    labels = [ex.label for ex in examples]
    if min(labels) < 0:
        raise LabelOutOfRange(f"{path}: negative label {min(labels)}")
    return Dataset(examples=examples, V=max(labels) + 1, d=d)


def save_dataset(dataset: Dataset, path: str | Path, fmt: str | None = None) -> None:
    """Write a dataset; JSONL includes a {"V", "d"} header record."""
    fmt = _infer_format(path, fmt)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"V": dataset.V, "d": dataset.d}) + "\n")
            for ex in dataset.examples:
                row = {
                    "id": ex.id,
                    "features": ex.embedding.tolist(),
                    "label": int(ex.label),
                }
                fh.write(json.dumps(row) + "\n")
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + [f"f{i}" for i in range(dataset.d)] + ["label"])
            for ex in dataset.examples:
                writer.writerow([ex.id] + [repr(v) for v in ex.embedding.tolist()] + [int(ex.label)])
