"""Model backends the bridge can serve.

A backend turns one request (features and/or prompt) into a full logprob
distribution over its vocabulary. The server and the cache dumper both go
through `top_k_entries`, which log-softmaxes, truncates, and applies the
configured vocabulary remapping.
"""

from __future__ import annotations

import hashlib
import os

import httpx
import numpy as np

from .config import BridgeConfig, BridgeConfigError


class BackendError(RuntimeError):
    """The backend failed to produce an answer (served as 502)."""


class RateLimited(RuntimeError):
    """The upstream provider is throttling (served as 429)."""


class BadRequest(ValueError):
    """The request cannot be served by this backend (served as 400)."""


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


class CheckpointBackend:
    """Serves a classifier checkpoint (npz) as a local model.

    Understands the pipeline's checkpoint container: an ``arch`` tag plus
    ``weight_*`` tensors; linear_softmax is W x + b, mlp is a tanh hidden
    layer. Requests must carry features.
    """

    remaps_internally = False

    def __init__(self, model_path: str):
        with np.load(model_path) as blob:
            self.arch = str(blob["arch"])
            self.weights = {
                key[len("weight_") :]: blob[key].astype(np.float64)
                for key in blob.files
                if key.startswith("weight_")
            }
        if self.arch == "linear_softmax":
            self.vocab_size = self.weights["W"].shape[0]
            self.input_dim = self.weights["W"].shape[1]
        elif self.arch == "mlp":
            self.vocab_size = self.weights["W2"].shape[0]
            self.input_dim = self.weights["W1"].shape[1]
        else:
            raise BridgeConfigError(f"unsupported checkpoint architecture {self.arch!r}")

    def full_logprobs(self, features, prompt) -> np.ndarray:
        if features is None:
            raise BadRequest("this backend scores feature vectors; no features in request")
        x = np.asarray(features, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise BadRequest(f"expected {self.input_dim} features, got {x.shape}")
        w = self.weights
        if self.arch == "linear_softmax":
            logits = w["W"] @ x + w["b"]
        else:
            logits = w["W2"] @ np.tanh(w["W1"] @ x + w["b1"]) + w["b2"]
        return log_softmax(logits)


class HashBackend:
    """Deterministic prompt-keyed pseudo-model; handy for wire tests and demos.

    The distribution depends only on the prompt text (temperature-0
    semantics: identical requests get identical entries).
    """

    remaps_internally = False

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def full_logprobs(self, features, prompt) -> np.ndarray:
        if prompt is None:
            raise BadRequest("this backend scores prompts; no prompt in request")
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        rng = np.random.default_rng(seed)
        return log_softmax(rng.standard_normal(self.vocab_size) * 2.0)


class RemoteProviderBackend:
    """OpenAI-style chat-completions provider with top logprobs.

    Extracts the first generated token's top logprobs and maps token strings
    to served ids via the configured vocab_map (which must cover every token
    the task can return). Credentials come from ORACLE_BRIDGE_API_KEY.
    """

    remaps_internally = True

    def __init__(
        self,
        base_url: str,
        model: str,
        vocab_map: dict[str, int],
        vocab_size: int | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 30.0,
    ):
        if not vocab_map:
            raise BridgeConfigError("remote backend requires a token -> id vocab_map")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.vocab_map = vocab_map
        self.vocab_size = (
            vocab_size if vocab_size is not None else max(vocab_map.values()) + 1
        )
        headers = {}
        api_key = os.environ.get("ORACLE_BRIDGE_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def full_logprobs(self, features, prompt) -> np.ndarray:
        if prompt is None:
            raise BadRequest("remote providers score prompts; no prompt in request")
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": "You are a helpful assistant."},
                {"role": "user", "content": prompt},
            ],
            "logprobs": True,
            "top_logprobs": min(20, max(5, len(self.vocab_map))),
            "max_tokens": 1,
        }
        try:
            response = self._client.post(f"{self.base_url}/chat/completions", json=payload)
        except httpx.HTTPError as exc:
            raise BackendError(f"provider unreachable: {exc}") from exc
        if response.status_code == 429:
            raise RateLimited("provider rate limit")
        if response.status_code != 200:
            raise BackendError(f"provider returned {response.status_code}: {response.text}")
        try:
            body = response.json()
            top = body["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            # Includes provider safety refusals, which return no logprobs.
            raise BackendError(f"no logprobs in provider response: {exc}") from exc
        floor = min(float(e["logprob"]) for e in top) - 10.0
        dense = np.full(self.vocab_size, floor)
        for entry in top:
            served = self.vocab_map.get(str(entry["token"]))
            if served is not None and 0 <= served < self.vocab_size:
                dense[served] = float(entry["logprob"])
        return log_softmax(dense)


def make_backend(config: BridgeConfig, transport: httpx.BaseTransport | None = None):
    if config.backend == "checkpoint":
        return CheckpointBackend(config.model_path)
    if config.backend == "hash":
        return HashBackend(config.vocab_size)
    return RemoteProviderBackend(
        base_url=config.remote_base_url,
        model=config.remote_model,
        vocab_map=config.vocab_map or {},
        vocab_size=config.vocab_size,
        transport=transport,
    )


def top_k_entries(
    logprobs: np.ndarray, k: int, vocab_map: dict[str, int] | None
) -> list[tuple[int, float]]:
    """The k most likely (token_id, logprob) pairs, descending, ids remapped."""
    v = logprobs.shape[0]
    if not 1 <= k <= v:
        raise BadRequest(f"top_k={k} outside [1, {v}]")
    order = np.argsort(-logprobs, kind="stable")[:k]
    entries = []
    for idx in order:
        token_id = int(idx)
        if vocab_map is not None:
            mapped = vocab_map.get(str(token_id))
            if mapped is None:
                raise BackendError(f"vocab_map does not cover token id {token_id}")
            token_id = mapped
        entries.append((token_id, float(logprobs[idx])))
    return entries
