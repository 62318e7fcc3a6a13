"""HTTP client for the logits wire protocol.

POST {endpoint}/v1/logits with {"id", "prompt"?, "features", "top_k"};
the response's top-k logprob entries are aligned into a dense logit vector.
HTTP 429 maps to BudgetExceeded; 5xx and transport failures retry with
exponential backoff (3 attempts starting at 0.5 s) before surfacing as
OracleUnavailable.
"""

from __future__ import annotations

import time
from typing import Callable

import httpx
import numpy as np

from .data import Example
from .errors import BudgetExceeded, OracleUnavailable, ParseError
from .oracle import Oracle, OracleCache, TopKLogprobs, align_topk

_RETRY_ATTEMPTS = 3
_BACKOFF_START = 0.5


class RemoteOracle(Oracle):
    """Oracle backed by a wire-protocol server (e.g. the oracle bridge)."""

    def __init__(
        self,
        endpoint: str,
        vocab_size: int,
        top_k: int = 5,
        floor: float | None = None,
        timeout: float = 30.0,
        prompt_fn: Callable[[Example], str] | None = None,
        cache: OracleCache | None = None,
        budget_cap: int | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(cache=cache, budget_cap=budget_cap)
        self.endpoint = endpoint.rstrip("/")
        self.vocab_size = vocab_size
        self.top_k = top_k
        self.floor = floor
        self.prompt_fn = prompt_fn
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _request_payload(self, example: Example) -> dict:
        payload = {
            "id": example.id,
            "features": example.embedding.tolist(),
            "top_k": self.top_k,
        }
        if self.prompt_fn is not None:
            payload["prompt"] = self.prompt_fn(example)
        return payload

    def _post_with_retry(self, payload: dict) -> httpx.Response:
        delay = _BACKOFF_START
        last_error: Exception | None = None
        for attempt in range(_RETRY_ATTEMPTS):
            try:
                response = self._client.post(f"{self.endpoint}/v1/logits", json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
            else:
                if response.status_code == 429:
                    raise BudgetExceeded(f"server rate limit for id {payload['id']!r}")
                if response.status_code < 500:
                    return response
                last_error = OracleUnavailable(
                    f"server error {response.status_code} for id {payload['id']!r}"
                )
            if attempt + 1 < _RETRY_ATTEMPTS:
                self._sleep(delay)
                delay *= 2.0
        raise OracleUnavailable(f"backend unreachable after {_RETRY_ATTEMPTS} attempts: {last_error}")

    def _evaluate(self, example: Example) -> np.ndarray:
        response = self._post_with_retry(self._request_payload(example))
        if response.status_code != 200:
            raise OracleUnavailable(
                f"unexpected status {response.status_code} for id {example.id!r}: {response.text}"
            )
        try:
            body = response.json()
            entries = tuple(
                (int(e["token_id"]), float(e["logprob"])) for e in body["entries"]
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise OracleUnavailable(f"malformed response for id {example.id!r}: {exc}") from exc
        try:
            sparse = TopKLogprobs(entries=entries)
        except ParseError as exc:
            raise OracleUnavailable(f"invalid top-k entries for id {example.id!r}: {exc}") from exc
        return align_topk(sparse, self.vocab_size, floor=self.floor)
