"""Encoder backends: the real sentence-similarity transformer and a
deterministic hash encoder for offline deployments and tests.

``MODEL_NAME`` selects the backend: ``hash:<dim>`` builds the hash
encoder, anything else is treated as a sentence-transformers model name.
Every backend returns L2-normalized float vectors and is deterministic
for a fixed input.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_MODEL = "l3cube-pune/bengali-sentence-similarity-sbert"


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


class HashEncoder:
    """Character-3-gram bucket counts under a seeded stable hash.

    Needs no weights and no network; identical inputs give bitwise
    identical vectors, which is what the conformance tests check.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.name = f"hash:{dim}"
        self._key = seed.to_bytes(8, "little")

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        if not text:
            vec[0] = 1.0
            return vec
        grams = [text[i:i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
        for gram in grams:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
            vec[int.from_bytes(digest, "little") % self.dim] += 1.0
        return vec / np.linalg.norm(vec)

    def encode_sentences(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts])

    def encode_tokens(self, text: str) -> tuple[list[str], np.ndarray]:
        tokens = text.split()
        return tokens, np.stack([self._vector(t) for t in tokens])


class SbertEncoder:
    """Sentence-transformers model plus final-hidden-layer token vectors.

    The heavyweight imports happen lazily so the service module stays
    importable without torch installed.
    """

    def __init__(self, model_name: str = DEFAULT_MODEL):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.name = model_name
        self.dim = int(self._model.get_sentence_embedding_dimension())
        # First module holds the underlying transformer + tokenizer.
        self._transformer = self._model[0].auto_model
        self._tokenizer = self._model[0].tokenizer

    def encode_sentences(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            texts, normalize_embeddings=True, convert_to_numpy=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float64)

    def encode_tokens(self, text: str) -> tuple[list[str], np.ndarray]:
        import torch

        encoded = self._tokenizer(text, return_tensors="pt", truncation=True)
        with torch.no_grad():
            hidden = self._transformer(**encoded).last_hidden_state[0]
        ids = encoded["input_ids"][0].tolist()
        tokens = self._tokenizer.convert_ids_to_tokens(ids)
        special = set(self._tokenizer.all_special_tokens)
        keep = [i for i, tok in enumerate(tokens) if tok not in special]
        vectors = hidden[keep].numpy().astype(np.float64)
        return [tokens[i] for i in keep], _normalize_rows(vectors)


def build_encoder(model_name: str):
    """hash:<dim> selects the offline encoder, else sentence-transformers."""
    if model_name.startswith("hash:"):
        return HashEncoder(dim=int(model_name.split(":", 1)[1]))
    return SbertEncoder(model_name)
