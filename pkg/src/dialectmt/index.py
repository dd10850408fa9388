"""The two retrieval indices: flat inner-product dense + Okapi BM25 sparse.

Both indices are built over the same record set and are immutable after
construction; concurrent searches are safe. Dense search is exact
brute-force cosine over unit vectors (no approximation); sparse scoring
is Okapi BM25 with the +1-inside-log IDF so scores are never negative.

Persistence is a single binary file: magic ``DFIX``, u32 version, u32 D,
u32 N, row-major little-endian float32 rows, a length-prefixed JSON
postings section, and a trailing 64-bit checksum over all prior bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .corpus import CorpusRecord
from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    EmptyCorpus,
    InvalidK,
    VersionMismatch,
)
from .textnorm import tokenize

MAGIC = b"DFIX"
FORMAT_VERSION = 1

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75

_UNIT_TOL = 1e-5


class DenseIndex:
    """Flat matrix of unit row vectors with parallel record ids.

    The in-memory matrix holds float32-quantized values upcast to float64,
    so save/load is lossless and scoring runs in double precision.
    """

    def __init__(self, matrix: np.ndarray, ids: list[str]):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise DimensionMismatch("matrix rows must match ids")
        if matrix.shape[0] == 0:
            raise EmptyCorpus("dense index needs at least one record")
        norms = np.linalg.norm(matrix, axis=1)
        if not np.all(np.abs(norms - 1.0) <= _UNIT_TOL):
            raise DimensionMismatch("dense index rows must be unit-norm")
        self.matrix = matrix
        self.ids = list(ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


class SparseIndex:
    """Okapi BM25 inverted index.

    Postings are stored per term as parallel (doc index, term frequency)
    arrays; the per-document length normalization k1*(1 - b + b*len/avgdl)
    is precomputed once so scoring is a single pass per query term.
    """

    def __init__(
        self,
        postings: dict[str, tuple[np.ndarray, np.ndarray]],
        doc_lengths: list[int],
        ids: list[str],
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ):
        self.postings = postings
        self.doc_lengths = list(doc_lengths)
        self.ids = list(ids)
        self.k1 = float(k1)
        self.b = float(b)
        self.N = len(ids)
        # Integer sum keeps avgdl exactly reproducible.
        self.avgdl = sum(self.doc_lengths) / self.N if self.N else 0.0
        dl = np.asarray(self.doc_lengths, dtype=np.float64)
        self._dnorm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl) if self.N else dl

    def idf(self, term: str) -> float:
        df = len(self.postings[term][0]) if term in self.postings else 0
        return math.log((self.N - df + 0.5) / (df + 0.5) + 1.0)


@dataclass(frozen=True)
class HybridIndex:
    """Immutable pair of dense and sparse indices over one record set."""

    dense: DenseIndex
    sparse: SparseIndex

    @property
    def ids(self) -> list[str]:
        return self.dense.ids

    @property
    def dim(self) -> int:
        return self.dense.dim


def build_dense(records: list[CorpusRecord], provider) -> DenseIndex:
    """Embed every record (structured text for pairs) into a flat index."""
    if not records:
        raise EmptyCorpus("no records to index")
    texts = [r.embedding_text for r in records]
    vectors = provider.embed_sentences(texts)
    if vectors.shape[0] != len(records):
        raise DimensionMismatch("provider returned wrong number of vectors")
    quantized = vectors.astype(np.float32).astype(np.float64)
    return DenseIndex(quantized, [r.id for r in records])


def build_sparse(
    records: list[CorpusRecord], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> SparseIndex:
    """Tokenize every record's embedding text into a BM25 index."""
    if not records:
        raise EmptyCorpus("no records to index")
    raw: dict[str, list[tuple[int, int]]] = {}
    doc_lengths = []
    for doc, rec in enumerate(records):
        tokens = tokenize(rec.embedding_text)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            raw.setdefault(term, []).append((doc, tf))
    postings = {
        term: (
            np.asarray([d for d, _ in plist], dtype=np.int32),
            np.asarray([tf for _, tf in plist], dtype=np.float64),
        )
        for term, plist in raw.items()
    }
    return SparseIndex(postings, doc_lengths, [r.id for r in records], k1=k1, b=b)


def build_hybrid(records: list[CorpusRecord], provider) -> HybridIndex:
    return HybridIndex(dense=build_dense(records, provider), sparse=build_sparse(records))


def _rank(scored: list[tuple[str, float]], k: int) -> list[tuple[str, float]]:
    """Sort by descending score, ties by ascending id; truncate to k."""
    return sorted(scored, key=lambda item: (-item[1], item[0]))[:k]


def search_dense(index: DenseIndex, query_vec: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact top-k by dot product over unit vectors.

    Raises:
        DimensionMismatch: query dimension differs from the index.
        InvalidK: k < 1.
    """
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    query_vec = np.asarray(query_vec, dtype=np.float64)
    if query_vec.shape != (index.dim,):
        raise DimensionMismatch(f"query dim {query_vec.shape} != index dim {index.dim}")
    if abs(float(np.linalg.norm(query_vec)) - 1.0) > 1e-4:
        raise DimensionMismatch("query vector must be unit-norm")
    scores = index.matrix @ query_vec
    return _rank(list(zip(index.ids, scores.tolist())), k)


def bm25_scores(index: SparseIndex, query_tokens: list[str]) -> dict[str, float]:
    """Okapi BM25 scores for every document with term overlap.

    Summation runs over query-token occurrences (a repeated query token
    contributes once per occurrence), which makes per-token score
    aggregation exactly additive. Documents with zero overlap are omitted.
    """
    scores = np.zeros(index.N, dtype=np.float64)
    touched = np.zeros(index.N, dtype=bool)
    for term in query_tokens:
        if term not in index.postings:
            continue
        doc_idx, tfs = index.postings[term]
        kernels.bm25_term(doc_idx, tfs, index._dnorm, index.idf(term), index.k1, scores)
        touched[doc_idx] = True
    return {index.ids[d]: float(scores[d]) for d in np.flatnonzero(touched)}


def search_sparse(
    index: SparseIndex, query_tokens: list[str], k: int
) -> list[tuple[str, float]]:
    """Top-k of bm25_scores with the dense tie-break (ascending id)."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    return _rank(list(bm25_scores(index, query_tokens).items()), k)


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def save(index: HybridIndex, path: str) -> None:
    """Write the hybrid index in the DFIX binary format."""
    dense, sparse = index.dense, index.sparse
    matrix32 = np.ascontiguousarray(dense.matrix, dtype="<f4")
    header = MAGIC + struct.pack("<III", FORMAT_VERSION, dense.dim, len(dense))
    postings_obj = {
        "ids": dense.ids,
        "doc_lengths": sparse.doc_lengths,
        "k1": sparse.k1,
        "b": sparse.b,
        "postings": {
            term: [[int(d), float(tf)] for d, tf in zip(doc_idx.tolist(), tfs.tolist())]
            for term, (doc_idx, tfs) in sparse.postings.items()
        },
    }
    postings_bytes = json.dumps(postings_obj, ensure_ascii=False, sort_keys=True).encode("utf-8")
    body = header + matrix32.tobytes(order="C")
    body += struct.pack("<Q", len(postings_bytes)) + postings_bytes
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(_checksum(body))


def load(path: str) -> HybridIndex:
    """Read a DFIX file back into a HybridIndex.

    Raises:
        VersionMismatch: unknown magic bytes or unsupported version.
        ChecksumMismatch: truncated file or checksum failure.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 12 + 8:
        raise ChecksumMismatch("file too short")
    body, stored = blob[:-8], blob[-8:]
    if _checksum(body) != stored:
        raise ChecksumMismatch("checksum does not verify")
    if body[:4] != MAGIC:
        raise VersionMismatch(f"bad magic {body[:4]!r}")
    version, dim, n = struct.unpack("<III", body[4:16])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {version}")
    offset = 16
    matrix_bytes = 4 * dim * n
    matrix = np.frombuffer(body[offset:offset + matrix_bytes], dtype="<f4").reshape(n, dim)
    offset += matrix_bytes
    (plen,) = struct.unpack("<Q", body[offset:offset + 8])
    offset += 8
    obj = json.loads(body[offset:offset + plen].decode("utf-8"))
    postings = {
        term: (
            np.asarray([d for d, _ in plist], dtype=np.int32),
            np.asarray([tf for _, tf in plist], dtype=np.float64),
        )
        for term, plist in obj["postings"].items()
    }
    dense = DenseIndex(matrix.astype(np.float64), obj["ids"])
    sparse = SparseIndex(postings, obj["doc_lengths"], obj["ids"], k1=obj["k1"], b=obj["b"])
    return HybridIndex(dense=dense, sparse=sparse)
