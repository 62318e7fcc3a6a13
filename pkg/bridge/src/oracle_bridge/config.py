"""Bridge configuration: backend selection, top-k, vocab remapping, listen address.

Credentials come from the environment (ORACLE_BRIDGE_API_KEY); everything
else from a JSON config file or keyword arguments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

BACKENDS = ("checkpoint", "hash", "remote")


class BridgeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    backend: str = "checkpoint"
    model_path: str | None = None  # checkpoint backend: classifier npz
    vocab_size: int | None = None  # hash backend vocabulary
    remote_base_url: str | None = None  # remote backend: OpenAI-style chat API
    remote_model: str | None = None
    top_k: int = 5
    vocab_map: dict[str, int] | None = None  # source token (or id) -> served token id
    host: str = "127.0.0.1"
    port: int = 8080
    max_requests: int | None = None  # answered requests beyond this get 429
    model_id: str = "oracle-bridge"

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise BridgeConfigError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.top_k < 1:
            raise BridgeConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.backend == "checkpoint" and not self.model_path:
            raise BridgeConfigError("checkpoint backend requires model_path")
        if self.backend == "hash" and not self.vocab_size:
            raise BridgeConfigError("hash backend requires vocab_size")
        if self.backend == "remote" and not (self.remote_base_url and self.remote_model):
            raise BridgeConfigError("remote backend requires remote_base_url and remote_model")
        if self.vocab_map is not None:
            targets = list(self.vocab_map.values())
            if len(set(targets)) != len(targets):
                raise BridgeConfigError("vocab_map must be injective (distinct target ids)")

    @classmethod
    def from_file(cls, path: str | Path) -> "BridgeConfig":
        path = Path(path)
        if not path.exists():
            raise BridgeConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise BridgeConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise BridgeConfigError(f"{path}: config root must be an object")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise BridgeConfigError(f"{path}: {exc}") from exc
