import numpy as np
import pytest

from gpproxy.data import Dataset, Example, LogitMapPair, LogitMapSet


def make_blob_dataset(
    n: int = 60, d: int = 3, v: int = 2, separation: float = 4.0, noise: float = 0.5, seed: int = 0
) -> Dataset:
    """Small well-separated blobs for unit tests."""
    rng = np.random.default_rng(seed)
    centers = separation * rng.standard_normal((v, d))
    labels = np.arange(n) % v
    points = centers[labels] + noise * rng.standard_normal((n, d))
    examples = [
        Example(id=f"ex-{i:04d}", embedding=points[i], label=int(labels[i])) for i in range(n)
    ]
    return Dataset(examples=examples, V=v, d=d)


def make_random_pairs(m: int, d: int, v: int, seed: int = 0, scale: float = 1.0) -> LogitMapSet:
    rng = np.random.default_rng(seed)
    X = scale * rng.standard_normal((m, d))
    S = rng.standard_normal((m, v))
    return LogitMapSet(
        pairs=[
            LogitMapPair(example_id=f"p-{i:04d}", embedding=X[i], oracle_logits=S[i])
            for i in range(m)
        ]
    )


@pytest.fixture
def blob_dataset() -> Dataset:
    return make_blob_dataset()
