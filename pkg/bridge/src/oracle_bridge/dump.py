"""Offline cache materialization: pre-answer a dataset so pipeline runs need no live backend.

Reads dataset rows (JSONL with "id" plus "features" and/or "prompt"; extra
keys like labels are ignored), queries the backend in-process through the
same extraction path the server uses, aligns top-k logprobs into dense
vectors, and appends rows in the oracle cache format
{"id": ..., "logits": [...]}. Reruns skip ids already present; failures land
in a manifest instead of aborting the dump.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .backends import BackendError, BadRequest, RateLimited, make_backend, top_k_entries
from .config import BridgeConfig


def align_entries(entries: list[tuple[int, float]], vocab_size: int) -> np.ndarray:
    """Dense vector with observed logprobs in place; gaps filled at min - 10."""
    floor = min(lp for _, lp in entries) - 10.0
    dense = np.full(vocab_size, floor)
    for token_id, logprob in entries:
        if not 0 <= token_id < vocab_size:
            raise BackendError(f"token id {token_id} outside [0, {vocab_size})")
        dense[token_id] = logprob
    return dense


def iter_dataset_rows(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "id" not in row:
                continue  # header records carry no scoreable payload
            yield lineno, row


def dump_cache(
    data_path: str | Path,
    config: BridgeConfig,
    out_path: str | Path,
    backend=None,
    vocab_size: int | None = None,
) -> dict:
    """Materialize one cache row per dataset id; returns the manifest.

    The manifest {"dumped", "skipped", "missing", "errors"} accounts for every
    row: ids that could not be answered (backend failures, provider refusals)
    appear under "missing"/"errors" and the manifest is written alongside the
    cache as <out_path>.manifest.json.
    """
    backend = backend if backend is not None else make_backend(config)
    vmap = None if getattr(backend, "remaps_internally", False) else config.vocab_map
    if vocab_size is None:
        vocab_size = getattr(backend, "vocab_size", None)
    if vocab_size is None:
        raise BackendError("cannot infer vocab_size; pass it explicitly")

    out_path = Path(out_path)
    existing: set[str] = set()
    if out_path.exists():
        with open(out_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    existing.add(str(json.loads(line)["id"]))

    dumped, skipped = 0, 0
    errors: dict[str, str] = {}
    with open(out_path, "a", encoding="utf-8") as fh:
        for lineno, row in iter_dataset_rows(data_path):
            row_id = str(row["id"])
            if row_id in existing:
                skipped += 1
                continue
            try:
                logprobs = backend.full_logprobs(row.get("features"), row.get("prompt"))
                entries = top_k_entries(logprobs, min(config.top_k, vocab_size), vmap)
                dense = align_entries(entries, vocab_size)
            except (BadRequest, BackendError, RateLimited) as exc:
                errors[row_id] = f"{type(exc).__name__}: {exc}"
                continue
            fh.write(json.dumps({"id": row_id, "logits": dense.tolist()}) + "\n")
            existing.add(row_id)
            dumped += 1

    manifest = {
        "dumped": dumped,
        "skipped": skipped,
        "missing": sorted(errors),
        "errors": errors,
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
