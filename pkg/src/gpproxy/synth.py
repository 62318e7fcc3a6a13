"""Seeded Gaussian-blob classification data with controllable difficulty.

Each class owns ``blobs_per_class`` Gaussian clusters; with more than one
blob per class the classes are generally not linearly separable, which is
what lets a small linear proxy underperform a higher-capacity teacher.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Example
from .errors import InvalidSpec


@dataclass(frozen=True)
class SyntheticSpec:
    n_train: int = 2000
    n_test: int = 500
    d: int = 16
    V: int = 4
    blobs_per_class: int = 2
    separation: float = 3.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.V < 2 or self.d < 1 or self.blobs_per_class < 1:
            raise InvalidSpec(f"need V >= 2, d >= 1, blobs >= 1; got {self}")
        if self.n_train < self.V or self.n_test < self.V:
            raise InvalidSpec(f"split sizes must be >= V={self.V}; got {self}")
        if self.separation <= 0 or self.noise < 0:
            raise InvalidSpec(f"separation must be > 0 and noise >= 0; got {self}")


def _centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """(V, blobs, d) cluster centers at radius ``separation`` from the origin."""
    raw = rng.standard_normal((spec.V, spec.blobs_per_class, spec.d))
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    return spec.separation * raw / norms


def _sample_split(
    spec: SyntheticSpec,
    centers: np.ndarray,
    size: int,
    prefix: str,
    rng: np.random.Generator,
) -> Dataset:
    # Balanced labels: sizes split as evenly as possible, then shuffled.
    labels = np.repeat(np.arange(spec.V), size // spec.V)
    labels = np.concatenate([labels, np.arange(size - labels.size)])
    rng.shuffle(labels)
    blob_ids = rng.integers(spec.blobs_per_class, size=size)
    points = centers[labels, blob_ids] + spec.noise * rng.standard_normal((size, spec.d))
    examples = [
        Example(id=f"{prefix}-{i:05d}", embedding=points[i], label=int(labels[i]))
        for i in range(size)
    ]
    return Dataset(examples=examples, V=spec.V, d=spec.d)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """(train, test) datasets; identical for identical specs."""
    seq = np.random.SeedSequence(spec.seed)
    center_seed, train_seed, test_seed = seq.spawn(3)
    centers = _centers(spec, np.random.default_rng(center_seed))
    train = _sample_split(spec, centers, spec.n_train, "train", np.random.default_rng(train_seed))
    test = _sample_split(spec, centers, spec.n_test, "test", np.random.default_rng(test_seed))
    return train, test


def generate_extra_split(spec: SyntheticSpec, size: int, name: str) -> Dataset:
    """An additional split from the same blob geometry (e.g. a pretraining slice).

    ``name`` keys the sampling stream, so distinct names give independent
    draws that are each deterministic in the spec seed.
    """
    if size < spec.V:
        raise InvalidSpec(f"extra split size {size} must be >= V={spec.V}")
    seq = np.random.SeedSequence(spec.seed)
    center_seed = seq.spawn(3)[0]
    centers = _centers(spec, np.random.default_rng(center_seed))
    name_key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")
    stream = np.random.SeedSequence((spec.seed, name_key))
    return _sample_split(spec, centers, size, name, np.random.default_rng(stream))
