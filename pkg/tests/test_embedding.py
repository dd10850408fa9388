"""Hash embedder determinism/geometry and the HTTP provider client."""

import json

import numpy as np
import pytest

from dialectmt.embedding import (
    HashEmbedder,
    HttpEmbeddingProvider,
    TokenEmbeddings,
    provider_from_env,
)
from dialectmt.errors import DimensionMismatch, EmptyInput, ProviderUnavailable


class TestHashEmbedder:
    def test_deterministic(self):
        emb = HashEmbedder(dim=64)
        a = emb.embed_sentences(["ami bhalo achi"])
        b = emb.embed_sentences(["ami bhalo achi"])
        assert np.array_equal(a, b)

    def test_unit_norm_self_similarity(self):
        emb = HashEmbedder(dim=64)
        v = emb.embed_one("ami bhalo achi")
        assert float(v @ v) == pytest.approx(1.0, abs=1e-6)

    def test_empty_text_is_basis_vector(self):
        v = HashEmbedder(dim=8).embed_one("")
        assert v[0] == 1.0 and np.count_nonzero(v) == 1

    def test_disjoint_gram_buckets_give_zero_cosine(self):
        emb = HashEmbedder(dim=64)
        a, b = "ami bhalo", "kita gori"
        # Fixture choice verified structurally: no shared hash buckets.
        assert not set(emb.buckets(a)) & set(emb.buckets(b))
        assert float(emb.embed_one(a) @ emb.embed_one(b)) == pytest.approx(0.0, abs=1e-6)

    def test_partial_gram_overlap_strictly_between(self):
        emb = HashEmbedder(dim=64)
        cos = float(emb.embed_one("ami bhalo") @ emb.embed_one("ami gori"))
        assert 0.0 < cos < 1.0

    def test_order_preserving_batch(self):
        emb = HashEmbedder(dim=32)
        texts = ["ek", "dui", "tin"]
        batch = emb.embed_sentences(texts)
        for i, text in enumerate(texts):
            assert np.array_equal(batch[i], emb.embed_one(text))

    def test_short_text_embeds_nonzero(self):
        v = HashEmbedder(dim=16).embed_one("ki")
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_token_embeddings_parallel(self):
        emb = HashEmbedder(dim=32)
        te = emb.embed_tokens("ami bhalo achi")
        assert isinstance(te, TokenEmbeddings)
        assert te.tokens == ["ami", "bhalo", "achi"]
        assert te.vectors.shape == (3, 32)

    def test_token_embeddings_context_free(self):
        emb = HashEmbedder(dim=32)
        te = emb.embed_tokens("ki re ki")
        assert np.array_equal(te.vectors[0], te.vectors[2])

    def test_empty_tokens_rejected(self):
        with pytest.raises(EmptyInput):
            HashEmbedder(dim=8).embed_tokens("   ")

    def test_seed_changes_vectors(self):
        a = HashEmbedder(dim=64, seed=0).embed_one("ami bhalo achi")
        b = HashEmbedder(dim=64, seed=1).embed_one("ami bhalo achi")
        assert not np.array_equal(a, b)


class _FakeEmbedService:
    """Stub of requests.Session for HttpEmbeddingProvider tests."""

    def __init__(self, responses):
        self.responses = responses
        self.calls = []

    def post(self, url, json=None, timeout=None):
        self.calls.append((url, json))
        payload = self.responses.pop(0)

        class _Resp:
            status_code = payload.get("status", 200)

            def json(self_inner):
                return payload["body"]

            text = ""

        return _Resp()


def _http_provider(responses, expected_dim=None):
    provider = HttpEmbeddingProvider("http://svc", expected_dim=expected_dim)
    provider._session = _FakeEmbedService(responses)
    return provider


class TestHttpProvider:
    def test_embed_sentences_round_trip(self):
        vecs = np.eye(3)[:2].tolist()
        provider = _http_provider([{"body": {"vectors": vecs, "dim": 3, "model": "m"}}])
        out = provider.embed_sentences(["a", "b"])
        assert out.shape == (2, 3)

    def test_dim_mismatch_detected(self):
        provider = _http_provider(
            [{"body": {"vectors": [[1.0, 0.0]], "dim": 2, "model": "m"}}], expected_dim=3
        )
        with pytest.raises(DimensionMismatch):
            provider.embed_sentences(["a"])

    def test_http_error_wrapped(self):
        provider = _http_provider([{"status": 500, "body": {"error": "boom"}}])
        with pytest.raises(ProviderUnavailable):
            provider.embed_sentences(["a"])

    def test_batching_splits_requests(self):
        dim = 2
        batch1 = {"vectors": [[1.0, 0.0]] * 64, "dim": dim, "model": "m"}
        batch2 = {"vectors": [[1.0, 0.0]] * 6, "dim": dim, "model": "m"}
        provider = _http_provider([{"body": batch1}, {"body": batch2}])
        out = provider.embed_sentences(["x"] * 70)
        assert out.shape == (70, 2)
        assert len(provider._session.calls) == 2

    def test_token_pooling_realigns_counts(self):
        # 4 subwords for 2 local tokens; pooled vectors must be unit norm.
        vectors = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]
        body = {"tokens": ["am", "##i", "bha", "##lo"], "vectors": vectors}
        provider = _http_provider([{"body": body}])
        te = provider.embed_tokens("ami bhalo")
        assert te.tokens == ["ami", "bhalo"]
        assert te.vectors.shape == (2, 2)
        norms = np.linalg.norm(te.vectors, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)

    def test_non_unit_vectors_rejected(self):
        provider = _http_provider([{"body": {"vectors": [[3.0, 0.0]], "dim": 2, "model": "m"}}])
        with pytest.raises(DimensionMismatch):
            provider.embed_sentences(["a"])


class TestProviderFromEnv:
    def test_default_is_hash(self):
        provider = provider_from_env(dim=16)
        assert isinstance(provider, HashEmbedder)
        assert provider.dim == 16

    def test_embed_url_selects_http(self, monkeypatch):
        monkeypatch.setenv("EMBED_URL", "http://127.0.0.1:9/")
        provider = provider_from_env(dim=8)
        assert isinstance(provider, HttpEmbeddingProvider)
        assert provider.base_url == "http://127.0.0.1:9"
