import json
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
WIRE_SCHEMA = json.loads((REPO_ROOT / "schemas" / "logits_wire.schema.json").read_text())


def make_linear_checkpoint(path: Path, d: int = 4, v: int = 3, seed: int = 0) -> None:
    """A classifier checkpoint in the pipeline's npz container format."""
    rng = np.random.default_rng(seed)
    np.savez(
        path,
        format_version=np.int64(1),
        arch=np.str_("linear_softmax"),
        role=np.str_("frozen_minus"),
        seed=np.int64(seed),
        config_hash=np.str_(""),
        weight_W=rng.standard_normal((v, d)),
        weight_b=rng.standard_normal(v),
    )


def make_mlp_checkpoint(path: Path, d: int = 4, v: int = 3, hidden: int = 6, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    np.savez(
        path,
        format_version=np.int64(1),
        arch=np.str_("mlp"),
        role=np.str_("frozen_minus"),
        seed=np.int64(seed),
        config_hash=np.str_(""),
        weight_W1=rng.standard_normal((hidden, d)),
        weight_b1=rng.standard_normal(hidden),
        weight_W2=rng.standard_normal((v, hidden)),
        weight_b2=rng.standard_normal(v),
    )


@pytest.fixture
def prompt_corpus() -> list[str]:
    return [f"classify item number {i} please" for i in range(50)]
