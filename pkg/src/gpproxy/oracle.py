"""Black-box oracle abstraction: query contract, cache, synthetic teacher, top-k tools.

An oracle maps an example to a V-dim logit vector. Every concrete backend
sits behind :class:`Oracle.query`, which consults the cache first, enforces
the unique-query budget, and records the request in the ledger -- so cache
hits bypass the backend and answers are deterministic per id within a run
even for stochastic backends.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import ApiLedger, Dataset, Example, as_vector
from .ensemble import log_softmax
from .errors import (
    KOutOfRange,
    OracleUnavailable,
    ParseError,
    TokenIdOutOfRange,
    TrainingDiverged,
)


class OracleCache:
    """In-memory id -> logits map with optional JSONL persistence.

    File rows: {"id": "<str>", "logits": [<float>...]}. When ``persist_path``
    is set, new entries are appended as they arrive so a crashed run can
    resume. Persisted entries reload identically (json round-trips float64).
    """

    def __init__(self, persist_path: str | Path | None = None):
        self._lock = threading.Lock()
        self._store: dict[str, np.ndarray] = {}
        self.persist_path = Path(persist_path) if persist_path is not None else None
        if self.persist_path is not None and self.persist_path.exists():
            self._load_into(self.persist_path)

    def _load_into(self, path: Path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    self._store[str(row["id"])] = as_vector(row["logits"], what="cached logits")
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(f"{path}:{lineno}: bad cache row ({exc})") from exc

    @classmethod
    def load(cls, path: str | Path) -> "OracleCache":
        cache = cls()
        cache._load_into(Path(path))
        return cache

    def get(self, example_id: str) -> np.ndarray | None:
        with self._lock:
            return self._store.get(example_id)

    def put_if_absent(self, example_id: str, logits: np.ndarray) -> np.ndarray:
        """First writer wins; returns the stored value either way."""
        with self._lock:
            existing = self._store.get(example_id)
            if existing is not None:
                return existing
            self._store[example_id] = logits
            if self.persist_path is not None:
                with open(self.persist_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"id": example_id, "logits": logits.tolist()}) + "\n")
            return logits

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)

    def ids(self) -> set[str]:
        with self._lock:
            return set(self._store)

    def save(self, path: str | Path) -> None:
        with self._lock:
            items = list(self._store.items())
        with open(path, "w", encoding="utf-8") as fh:
            for ex_id, logits in items:
                fh.write(json.dumps({"id": ex_id, "logits": logits.tolist()}) + "\n")


class Oracle:
    """Base class: subclasses implement ``_evaluate``; ``query`` owns the contract."""

    def __init__(self, cache: OracleCache | None = None, budget_cap: int | None = None):
        self.cache = cache if cache is not None else OracleCache()
        self.budget_cap = budget_cap
        self._backend_lock = threading.Lock()
        self.backend_calls = 0

    def _evaluate(self, example: Example) -> np.ndarray:
        raise NotImplementedError

    def query(self, example: Example, ledger: ApiLedger) -> np.ndarray:
        """Return V-dim logits; cache hits bypass the backend.

        Records every request in the ledger (the unique count grows only for
        unseen ids) and raises BudgetExceeded before a new id would cross the
        configured cap.
        """
        cached = self.cache.get(example.id)
        if cached is not None:
            ledger.record(example.id, budget_cap=self.budget_cap)
            return cached
        ledger.record(example.id, budget_cap=self.budget_cap)
        logits = as_vector(self._evaluate(example), what="oracle logits")
        with self._backend_lock:
            self.backend_calls += 1
        return self.cache.put_if_absent(example.id, logits)


class CacheOnlyOracle(Oracle):
    """Serves pre-materialized answers only; any miss is an oracle failure.

    The backbone of offline runs: a dumped cache file drives the whole
    pipeline with zero live calls.
    """

    def _evaluate(self, example: Example) -> np.ndarray:
        raise OracleUnavailable(f"id {example.id!r} not in the offline cache")


class SyntheticTeacher(Oracle):
    """A sealed higher-capacity classifier standing in for the foundation model."""

    def __init__(
        self,
        params,
        train_accuracy: float,
        cache: OracleCache | None = None,
        budget_cap: int | None = None,
    ):
        super().__init__(cache=cache, budget_cap=budget_cap)
        self.params = params
        self.train_accuracy = train_accuracy

    def _evaluate(self, example: Example) -> np.ndarray:
        from .training import proxy_forward

        return proxy_forward(self.params, example.embedding)


def make_synthetic_teacher(
    dataset: Dataset,
    capacity: int = 64,
    label_noise: float = 0.0,
    seed: int = 0,
    epochs: int = 30,
    learning_rate: float = 0.1,
    batch_size: int = 32,
    budget_cap: int | None = None,
) -> SyntheticTeacher:
    """Train an MLP on (optionally label-corrupted) data, then seal it.

    ``label_noise`` flips that fraction of training labels to a random other
    class before fitting, emulating an imperfect foundation model. The
    reported ``train_accuracy`` is measured against the dataset's own labels.
    """
    from .data import Dataset as _Dataset
    from .training import (
        TrainConfig,
        forward_batch,
        init_proxy,
        train_proxy,
    )

    if len(dataset) == 0:
        raise TrainingDiverged("cannot build a teacher from an empty dataset")
    rng = np.random.default_rng(seed)
    examples = dataset.examples
    if label_noise > 0:
        n_flip = int(round(label_noise * len(examples)))
        flip = rng.choice(len(examples), size=n_flip, replace=False)
        flip_set = set(int(i) for i in flip)
        corrupted = []
        for i, ex in enumerate(examples):
            if i in flip_set:
                wrong = int(rng.integers(dataset.V - 1))
                wrong = wrong + 1 if wrong >= ex.label else wrong
                corrupted.append(Example(id=ex.id, embedding=ex.embedding, label=wrong))
            else:
                corrupted.append(ex)
        fit_data = _Dataset(examples=corrupted, V=dataset.V, d=dataset.d)
    else:
        fit_data = dataset

    init = init_proxy("mlp", dataset.d, dataset.V, hidden=capacity, seed=seed)
    config = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        seed=seed,
        objective="plain_ft",
    )
    result = train_proxy(config, fit_data, init)
    sealed = result.params.copy(role="frozen_minus").seal()
    accuracy = float(
        (forward_batch(sealed, dataset.features).argmax(axis=1) == dataset.labels).mean()
    )
    return SyntheticTeacher(params=sealed, train_accuracy=accuracy, budget_cap=budget_cap)


# ---------------------------------------------------------------------------
# Top-k logprob truncation and vocabulary alignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopKLogprobs:
    """The k most likely token ids with their logprobs, sorted descending."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        ids = [tid for tid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ParseError("top-k entries contain duplicate token ids")
        lps = [lp for _, lp in self.entries]
        if any(a < b for a, b in zip(lps, lps[1:])):
            raise ParseError("top-k logprobs must be descending")

    @property
    def k(self) -> int:
        return len(self.entries)


def truncate_topk(logits: np.ndarray, k: int) -> TopKLogprobs:
    """Log-softmax the logits and keep the k largest entries, descending."""
    logits = as_vector(logits, what="logits")
    v = logits.shape[0]
    if not 1 <= k <= v:
        raise KOutOfRange(f"k={k} outside [1, {v}]")
    logprobs = log_softmax(logits)
    order = np.argsort(-logprobs, kind="stable")[:k]
    return TopKLogprobs(entries=tuple((int(i), float(logprobs[i])) for i in order))


def align_topk(sparse: TopKLogprobs, vocab_size: int, floor: float | None = None) -> np.ndarray:
    """Densify top-k logprobs into a V-vector, filling gaps with ``floor``.

    Default floor is (min observed logprob) - 10, which keeps the observed
    ranking intact and makes unobserved dimensions negligible under softmax.
    """
    if sparse.k == 0:
        raise KOutOfRange("cannot align an empty top-k response")
    for tid, _ in sparse.entries:
        if not 0 <= tid < vocab_size:
            raise TokenIdOutOfRange(f"token id {tid} outside [0, {vocab_size})")
    if floor is None:
        floor = min(lp for _, lp in sparse.entries) - 10.0
    dense = np.full(vocab_size, float(floor))
    for tid, lp in sparse.entries:
        dense[tid] = lp
    return dense


def topk_mask(sparse: TopKLogprobs, vocab_size: int) -> np.ndarray:
    """Boolean mask of the dimensions a top-k response actually observed.

    Pair with GatedSignal.observed_mask to exclude floor-filled dimensions
    from the supervision shift instead of trusting them.
    """
    for tid, _ in sparse.entries:
        if not 0 <= tid < vocab_size:
            raise TokenIdOutOfRange(f"token id {tid} outside [0, {vocab_size})")
    mask = np.zeros(vocab_size, dtype=bool)
    for tid, _ in sparse.entries:
        mask[tid] = True
    return mask
