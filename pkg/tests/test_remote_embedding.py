"""Tests for the remote embedding client against the in-process stub server."""

import numpy as np
import pytest
import requests

from trialmatch.embedding import (
    EmbedderConfig,
    StubEmbeddingServer,
    check_wire_contract,
    embed_batch,
    embed_text,
)
from trialmatch.embedding.providers import hashing_embed
from trialmatch.errors import EmbeddingServiceError


def remote_config(server, dim, batch_size=64):
    return EmbedderConfig(
        provider="remote",
        dim=dim,
        provider_id=server.model,
        endpoint=server.url,
        batch_size=batch_size,
        timeout_s=10.0,
    )


def post_via_http(server):
    def post(payload):
        response = requests.post(f"{server.url}/embed", json=payload, timeout=10.0)
        return response.status_code, response.json()

    return post


def test_remote_matches_hashing_bit_for_bit():
    # The stub serves hashing vectors, and JSON float serialization
    # round-trips float64 exactly, so equality must be exact.
    texts = ["patient denies chest pain", "aspirin", "", "Troponin I elevated"]
    with StubEmbeddingServer(dim=32) as server:
        got = embed_batch(texts, remote_config(server, dim=32))
    assert len(got) == 4
    for text, vec in zip(texts, got):
        assert np.array_equal(vec, hashing_embed(text, 32))


def test_thousand_texts_batch_size_hundred_makes_ten_requests():
    texts = [f"note text number {i}" for i in range(1000)]
    with StubEmbeddingServer(dim=16, max_batch=100) as server:
        got = embed_batch(texts, remote_config(server, dim=16, batch_size=100))
        assert server.embed_requests == 10
    assert len(got) == 1000
    assert np.array_equal(got[0], hashing_embed("note text number 0", 16))
    assert np.array_equal(got[999], hashing_embed("note text number 999", 16))


def test_trailing_partial_batch():
    # 7 texts at batch size 3: two full requests plus one of a single text.
    texts = [f"t{i}" for i in range(7)]
    with StubEmbeddingServer(dim=8) as server:
        got = embed_batch(texts, remote_config(server, dim=8, batch_size=3))
        assert server.embed_requests == 3
    assert [np.array_equal(v, hashing_embed(t, 8)) for t, v in zip(texts, got)] == [True] * 7


def test_empty_input_makes_no_requests():
    with StubEmbeddingServer(dim=8) as server:
        assert embed_batch([], remote_config(server, dim=8)) == []
        assert server.embed_requests == 0


def test_embed_text_delegates_to_batch():
    with StubEmbeddingServer(dim=8) as server:
        vec = embed_text("aspirin", remote_config(server, dim=8))
    assert np.array_equal(vec, hashing_embed("aspirin", 8))


def test_oversize_batch_error_names_limit_and_range():
    with StubEmbeddingServer(dim=8, max_batch=8) as server:
        with pytest.raises(EmbeddingServiceError) as excinfo:
            embed_batch([f"t{i}" for i in range(10)], remote_config(server, dim=8, batch_size=16))
    message = str(excinfo.value)
    assert "texts[0:10]" in message
    assert "limit of 8" in message


def test_dim_mismatch_raises():
    with StubEmbeddingServer(dim=16) as server:
        with pytest.raises(EmbeddingServiceError, match="dim 16.*32"):
            embed_batch(["a", "b"], remote_config(server, dim=32, batch_size=4))


def test_failure_in_later_batch_names_its_range(monkeypatch):
    calls = {"n": 0}
    real_post = requests.post

    def flaky_post(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] >= 2:
            raise requests.ConnectionError("socket closed")
        return real_post(*args, **kwargs)

    monkeypatch.setattr("trialmatch.embedding.providers.requests.post", flaky_post)
    with StubEmbeddingServer(dim=8) as server:
        with pytest.raises(EmbeddingServiceError, match=r"texts\[6:10\]"):
            embed_batch([f"t{i}" for i in range(10)], remote_config(server, dim=8, batch_size=6))


def test_connection_refused_raises_service_error():
    server = StubEmbeddingServer(dim=8).start()
    url = server.url
    server.stop()
    cfg = EmbedderConfig(
        provider="remote", dim=8, provider_id="hash-v1", endpoint=url, timeout_s=2.0
    )
    with pytest.raises(EmbeddingServiceError, match=r"texts\[0:1\] failed"):
        embed_batch(["a"], cfg)


class _FakeResponse:
    def __init__(self, status_code, body):
        self.status_code = status_code
        self._body = body
        self.text = str(body)

    def json(self):
        return self._body


def test_row_count_mismatch_raises(monkeypatch):
    body = {"dim": 4, "embeddings": [[0.0, 0.0, 0.0, 1.0]]}
    monkeypatch.setattr(
        "trialmatch.embedding.providers.requests.post",
        lambda *a, **k: _FakeResponse(200, body),
    )
    cfg = EmbedderConfig(provider="remote", dim=4, provider_id="x", endpoint="http://h")
    with pytest.raises(EmbeddingServiceError, match="1 vectors for 2 texts"):
        embed_batch(["a", "b"], cfg)


def test_non_finite_vector_rejected(monkeypatch):
    body = {"dim": 2, "embeddings": [[1.0, float("nan")]]}
    monkeypatch.setattr(
        "trialmatch.embedding.providers.requests.post",
        lambda *a, **k: _FakeResponse(200, body),
    )
    cfg = EmbedderConfig(provider="remote", dim=2, provider_id="x", endpoint="http://h")
    with pytest.raises(EmbeddingServiceError, match="text index 0.*non-finite"):
        embed_batch(["a"], cfg)


def test_wrong_row_length_names_text_index(monkeypatch):
    body = {"dim": 3, "embeddings": [[1.0, 0.0, 0.0], [1.0, 0.0]]}
    monkeypatch.setattr(
        "trialmatch.embedding.providers.requests.post",
        lambda *a, **k: _FakeResponse(200, body),
    )
    cfg = EmbedderConfig(provider="remote", dim=3, provider_id="x", endpoint="http://h")
    with pytest.raises(EmbeddingServiceError, match="text index 1"):
        embed_batch(["a", "b"], cfg)


def test_contract_suite_passes_against_stub():
    with StubEmbeddingServer(dim=24, max_batch=16) as server:
        check_wire_contract(
            post_via_http(server),
            model=server.model,
            dim=24,
            max_batch=16,
            norm_tolerance=1e-9,
        )


def test_contract_suite_rejects_wrong_dim_expectation():
    with StubEmbeddingServer(dim=24, max_batch=16) as server:
        with pytest.raises(AssertionError, match="dim"):
            check_wire_contract(post_via_http(server), model=server.model, dim=25, max_batch=16)


def test_health_endpoint_reports_model_and_dim():
    with StubEmbeddingServer(dim=24, model="hash-v1") as server:
        response = requests.get(f"{server.url}/health", timeout=10.0)
    assert response.status_code == 200
    assert response.json() == {"model": "hash-v1", "dim": 24}


def test_stub_rejects_malformed_body_and_unknown_path():
    with StubEmbeddingServer(dim=8) as server:
        bad = requests.post(f"{server.url}/embed", data=b"not json", timeout=10.0)
        assert bad.status_code == 400
        lost = requests.get(f"{server.url}/nowhere", timeout=10.0)
        assert lost.status_code == 404
