import json

import httpx
import numpy as np
import pytest

from oracle_bridge.backends import (
    BackendError,
    BadRequest,
    CheckpointBackend,
    HashBackend,
    RateLimited,
    RemoteProviderBackend,
    log_softmax,
    top_k_entries,
)

from conftest import make_linear_checkpoint, make_mlp_checkpoint


class TestCheckpointBackend:
    def test_linear_matches_manual_forward(self, tmp_path):
        path = tmp_path / "linear.npz"
        make_linear_checkpoint(path, d=5, v=4, seed=3)
        backend = CheckpointBackend(str(path))
        blob = np.load(path)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.standard_normal(5)
            expected = log_softmax(blob["weight_W"] @ x + blob["weight_b"])
            assert backend.full_logprobs(x, None) == pytest.approx(expected, rel=1e-12)

    def test_mlp_matches_manual_forward(self, tmp_path):
        path = tmp_path / "mlp.npz"
        make_mlp_checkpoint(path, d=3, v=2, hidden=5, seed=4)
        backend = CheckpointBackend(str(path))
        blob = np.load(path)
        x = np.array([0.5, -0.25, 1.5])
        hidden = np.tanh(blob["weight_W1"] @ x + blob["weight_b1"])
        expected = log_softmax(blob["weight_W2"] @ hidden + blob["weight_b2"])
        assert backend.full_logprobs(x, None) == pytest.approx(expected, rel=1e-12)

    def test_missing_features_rejected(self, tmp_path):
        path = tmp_path / "linear.npz"
        make_linear_checkpoint(path)
        backend = CheckpointBackend(str(path))
        with pytest.raises(BadRequest):
            backend.full_logprobs(None, "a prompt")


class TestHashBackend:
    def test_deterministic_per_prompt(self):
        backend = HashBackend(vocab_size=5)
        a = backend.full_logprobs(None, "same text")
        b = backend.full_logprobs(None, "same text")
        other = backend.full_logprobs(None, "different text")
        assert np.array_equal(a, b)
        assert not np.array_equal(a, other)

    def test_distribution_normalized(self):
        backend = HashBackend(vocab_size=7)
        lp = backend.full_logprobs(None, "check mass")
        assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)

    def test_missing_prompt_rejected(self):
        with pytest.raises(BadRequest):
            HashBackend(vocab_size=3).full_logprobs([1.0, 2.0], None)


def provider_transport(responses: dict[str, dict], status_code: int = 200):
    """MockTransport returning a canned chat-completions payload per prompt."""

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        prompt = body["messages"][-1]["content"]
        if status_code != 200:
            return httpx.Response(status_code, json={})
        return httpx.Response(200, json=responses[prompt])

    return httpx.MockTransport(handler)


def chat_payload(top_logprobs: list[tuple[str, float]]) -> dict:
    return {
        "choices": [
            {
                "logprobs": {
                    "content": [
                        {
                            "top_logprobs": [
                                {"token": token, "logprob": lp} for token, lp in top_logprobs
                            ]
                        }
                    ]
                }
            }
        ]
    }


class TestRemoteProviderBackend:
    def test_parses_first_token_top_logprobs(self):
        responses = {
            "is this grammatical?": chat_payload([("Yes", -0.2), ("No", -1.8), (" the", -5.0)])
        }
        backend = RemoteProviderBackend(
            base_url="https://provider.example/v1",
            model="big-model",
            vocab_map={"Yes": 1, "No": 0},
            transport=provider_transport(responses),
        )
        lp = backend.full_logprobs(None, "is this grammatical?")
        assert lp.shape == (2,)
        assert int(np.argmax(lp)) == 1  # "Yes" wins
        assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)

    def test_rate_limit_maps_to_ratelimited(self):
        backend = RemoteProviderBackend(
            base_url="https://provider.example/v1",
            model="big-model",
            vocab_map={"Yes": 1, "No": 0},
            transport=provider_transport({}, status_code=429),
        )
        with pytest.raises(RateLimited):
            backend.full_logprobs(None, "anything")

    def test_refusal_without_logprobs_is_backend_error(self):
        responses = {"filtered prompt": {"choices": [{"logprobs": None}]}}
        backend = RemoteProviderBackend(
            base_url="https://provider.example/v1",
            model="big-model",
            vocab_map={"Yes": 1, "No": 0},
            transport=provider_transport(responses),
        )
        with pytest.raises(BackendError):
            backend.full_logprobs(None, "filtered prompt")

    def test_api_key_header_from_environment(self, monkeypatch):
        captured = {}

        def handler(request: httpx.Request) -> httpx.Response:
            captured["auth"] = request.headers.get("Authorization")
            return httpx.Response(200, json=chat_payload([("Yes", -0.1), ("No", -2.0)]))

        monkeypatch.setenv("ORACLE_BRIDGE_API_KEY", "sk-test-123")
        backend = RemoteProviderBackend(
            base_url="https://provider.example/v1",
            model="big-model",
            vocab_map={"Yes": 1, "No": 0},
            transport=httpx.MockTransport(handler),
        )
        backend.full_logprobs(None, "check header")
        assert captured["auth"] == "Bearer sk-test-123"


class TestTopKEntries:
    def test_descending_and_bounded(self):
        lp = log_softmax(np.array([0.5, 2.0, -1.0, 0.0]))
        entries = top_k_entries(lp, 3, None)
        assert [tid for tid, _ in entries] == [1, 0, 3]
        assert all(a >= b for (_, a), (_, b) in zip(entries, entries[1:]))

    def test_bad_k(self):
        lp = log_softmax(np.zeros(3))
        with pytest.raises(BadRequest):
            top_k_entries(lp, 0, None)
        with pytest.raises(BadRequest):
            top_k_entries(lp, 4, None)

    def test_uncovered_vocab_map_is_backend_error(self):
        lp = log_softmax(np.array([3.0, 1.0]))
        with pytest.raises(BackendError):
            top_k_entries(lp, 2, {"0": 5})
