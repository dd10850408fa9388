"""Embedding providers: the deterministic hash embedder and the HTTP client.

Every provider returns L2-normalized float64 vectors of a fixed dimension.
``HashEmbedder`` needs no network or model weights: it hashes character
3-grams into buckets with a seeded stable hash, so the whole test suite
and the offline CLI path run against it. Setting ``EMBED_URL`` switches
to :class:`HttpEmbeddingProvider`, which speaks the wire protocol of the
companion embedding service (POST /embed and /embed_tokens).
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .errors import DimensionMismatch, EmptyInput, ProviderUnavailable
from .textnorm import tokenize

DEFAULT_DIM = 768
TEST_DIM = 64  # hash embedder default in tests; any D works

_BATCH_SIZE = 64
_MAX_IN_FLIGHT = 4


@dataclass
class TokenEmbeddings:
    """Parallel token strings and unit vectors for one sentence."""

    tokens: list[str]
    vectors: np.ndarray  # (len(tokens), dim)


def _check_unit_rows(matrix: np.ndarray, tol: float = 1e-6) -> None:
    norms = np.linalg.norm(matrix, axis=1)
    if not np.all(np.abs(norms - 1.0) <= tol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise DimensionMismatch(f"provider returned non-unit vectors (max deviation {worst:.2e})")


class HashEmbedder:
    """Deterministic character-3-gram embedder for offline use.

    3-grams are hashed into ``dim`` buckets with blake2b under a fixed
    seed; the bucket-count vector is L2-normalized. Texts shorter than 3
    characters hash as a single gram; the empty text maps to the basis
    vector e0. Identical inputs give bitwise-identical vectors.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.model_name = f"hash-3gram-{dim}"
        self._key = seed.to_bytes(8, "little")

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dim

    def buckets(self, text: str) -> list[int]:
        """Bucket indices for the text's 3-grams (exposed for tests)."""
        if not text:
            return []
        grams = [text[i:i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
        return [self._bucket(g) for g in grams]

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        buckets = self.buckets(text)
        if not buckets:
            vec[0] = 1.0
            return vec
        for b in buckets:
            vec[b] += 1.0
        return vec / np.linalg.norm(vec)

    def embed_sentences(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self.embed_one(text)
        return out

    def embed_tokens(self, text: str) -> TokenEmbeddings:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyInput("no tokens to embed")
        return TokenEmbeddings(tokens=tokens, vectors=self.embed_sentences(tokens))


class HttpEmbeddingProvider:
    """Client for the embedding service wire protocol.

    Sends at most 64 texts per request and bounds concurrent in-flight
    requests with a semaphore; otherwise stateless and thread-safe.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        expected_dim: int | None = None,
        max_in_flight: int = _MAX_IN_FLIGHT,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.expected_dim = expected_dim
        self._semaphore = threading.Semaphore(max_in_flight)
        self._session = requests.Session()

    def _post(self, route: str, payload: dict) -> dict:
        with self._semaphore:
            try:
                resp = self._session.post(
                    f"{self.base_url}{route}", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise ProviderUnavailable(f"{route}: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderUnavailable(f"{route}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderUnavailable(f"{route}: non-JSON response") from exc

    def embed_sentences(self, texts: list[str]) -> np.ndarray:
        chunks = []
        for start in range(0, len(texts), _BATCH_SIZE):
            body = self._post("/embed", {"texts": texts[start:start + _BATCH_SIZE]})
            vectors = np.asarray(body.get("vectors"), dtype=np.float64)
            dim = body.get("dim")
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise ProviderUnavailable("/embed: malformed vectors payload")
            if self.expected_dim is not None and dim != self.expected_dim:
                raise DimensionMismatch(f"service dim {dim} != expected {self.expected_dim}")
            chunks.append(vectors)
        out = np.vstack(chunks) if chunks else np.empty((0, self.expected_dim or 0))
        if len(out):
            _check_unit_rows(out)
        return out

    def embed_tokens(self, text: str) -> TokenEmbeddings:
        local_tokens = tokenize(text)
        if not local_tokens:
            raise EmptyInput("no tokens to embed")
        body = self._post("/embed_tokens", {"text": text})
        remote_tokens = body.get("tokens")
        vectors = np.asarray(body.get("vectors"), dtype=np.float64)
        if not isinstance(remote_tokens, list) or vectors.ndim != 2 or len(remote_tokens) != len(vectors):
            raise ProviderUnavailable("/embed_tokens: malformed payload")
        if len(remote_tokens) == len(local_tokens):
            _check_unit_rows(vectors)
            return TokenEmbeddings(tokens=local_tokens, vectors=vectors)
        pooled = _pool_subwords(text, local_tokens, remote_tokens, vectors)
        _check_unit_rows(pooled)
        return TokenEmbeddings(tokens=local_tokens, vectors=pooled)


def _pool_subwords(
    text: str,
    local_tokens: list[str],
    remote_tokens: list[str],
    vectors: np.ndarray,
) -> np.ndarray:
    """Mean-pool subword vectors per local token, then re-normalize.

    Remote subword tokenizers disagree with the whitespace tokenizer on
    counts; subwords are assigned to local tokens greedily by character
    consumption (marker prefixes like ## or a leading metaspace stripped).
    Local tokens that attract no subwords fall back to the sentence mean.
    """
    sums = np.zeros((len(local_tokens), vectors.shape[1]), dtype=np.float64)
    counts = np.zeros(len(local_tokens), dtype=np.int64)
    local_lens = [len(t) for t in local_tokens]
    li = 0
    consumed = 0
    for token, vec in zip(remote_tokens, vectors):
        piece = token.replace("##", "").replace("▁", "").strip()
        if li >= len(local_tokens):
            li = len(local_tokens) - 1
        sums[li] += vec
        counts[li] += 1
        consumed += len(piece)
        if consumed >= local_lens[li] and li < len(local_tokens) - 1:
            li += 1
            consumed = 0
    mean_all = vectors.mean(axis=0)
    out = np.empty_like(sums)
    for i in range(len(local_tokens)):
        pooled = sums[i] / counts[i] if counts[i] else mean_all
        norm = np.linalg.norm(pooled)
        out[i] = pooled / norm if norm > 0 else _basis(vectors.shape[1])
    return out


def _basis(dim: int) -> np.ndarray:
    e0 = np.zeros(dim, dtype=np.float64)
    e0[0] = 1.0
    return e0


def provider_from_env(dim: int | None = None):
    """EMBED_URL selects the HTTP provider; otherwise the hash embedder."""
    url = os.environ.get("EMBED_URL", "").strip()
    if url:
        return HttpEmbeddingProvider(url, expected_dim=dim)
    return HashEmbedder(dim=dim or DEFAULT_DIM)
