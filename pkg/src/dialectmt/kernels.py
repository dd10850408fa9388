"""Hot numeric kernels: Levenshtein distance and BM25 score accumulation.

Both kernels exist twice: a numba ``@njit`` version and a pure-numpy
fallback. The fallback is selected when numba is unavailable or when the
environment variable ``DIALECTMT_PURE_NUMPY`` is set to a truthy value
(``1``, ``true``, ``yes``). ``benchmarks/bench_kernels.py`` compares the
two paths.

The BM25 accumulation is written so that the sequence of float operations
per document is identical across the numba path, the numpy path, and a
naive per-document loop: one fused multiply chain per posting, added in
query-term order. Scores are therefore reproducible bit-for-bit.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("DIALECTMT_PURE_NUMPY", "").strip().lower()
PURE_NUMPY = _FLAG in ("1", "true", "yes")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not PURE_NUMPY
BACKEND = "numba" if USE_NUMBA else "numpy"


def _lev_py(a: np.ndarray, b: np.ndarray) -> int:
    """Two-row Levenshtein DP; the njit kernel compiles this body."""
    n = a.size
    m = b.size
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.arange(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            best = sub if sub < dele else dele
            cur[j] = best if best < ins else ins
        prev, cur = cur, prev
    return int(prev[m])


def levenshtein_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """Vectorized row DP.

    The insertion term has a sequential dependency along the row; it is
    resolved with the scan identity min_k<=j (cur[k] + j - k) =
    minimum.accumulate(cur - arange) + arange.
    """
    n = a.size
    m = b.size
    if n == 0:
        return m
    if m == 0:
        return n
    ar = np.arange(m + 1, dtype=np.int64)
    prev = ar.copy()
    for i in range(n):
        cur = np.empty(m + 1, dtype=np.int64)
        cur[0] = i + 1
        cur[1:] = np.minimum(prev[:-1] + (b != a[i]), prev[1:] + 1)
        cur = np.minimum.accumulate(cur - ar) + ar
        prev = cur
    return int(prev[m])


def _bm25_term_py(
    doc_idx: np.ndarray,
    tfs: np.ndarray,
    dnorm: np.ndarray,
    idf: float,
    k1: float,
    scores: np.ndarray,
) -> None:
    """Add one query term's contributions into ``scores`` in place."""
    for j in range(doc_idx.size):
        d = doc_idx[j]
        tf = tfs[j]
        scores[d] += idf * (tf * (k1 + 1.0)) / (tf + dnorm[d])


def bm25_term_numpy(
    doc_idx: np.ndarray,
    tfs: np.ndarray,
    dnorm: np.ndarray,
    idf: float,
    k1: float,
    scores: np.ndarray,
) -> None:
    # Posting lists hold each doc at most once, so fancy-index += is safe.
    scores[doc_idx] += idf * (tfs * (k1 + 1.0)) / (tfs + dnorm[doc_idx])


if HAS_NUMBA:
    # Compiled lazily on first call, so defining both variants is free
    # even when the env flag routes dispatch to the numpy path.
    levenshtein_numba = njit(cache=True)(_lev_py)
    bm25_term_numba = njit(cache=True)(_bm25_term_py)

if USE_NUMBA:
    levenshtein_codes = levenshtein_numba
    bm25_term = bm25_term_numba
else:
    levenshtein_codes = levenshtein_numpy
    bm25_term = bm25_term_numpy


def levenshtein(a, b) -> int:
    """Edit distance between two sequences of hashable items."""
    codes: dict = {}
    xa = np.fromiter((codes.setdefault(t, len(codes)) for t in a), dtype=np.int32, count=len(a))
    xb = np.fromiter((codes.setdefault(t, len(codes)) for t in b), dtype=np.int32, count=len(b))
    return levenshtein_codes(xa, xb)


def char_similarity(a: str, b: str) -> float:
    """Normalized character-level similarity: 1 - dist / max(len).

    Two empty strings count as identical (1.0).
    """
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    xa = np.fromiter(map(ord, a), dtype=np.int32, count=len(a))
    xb = np.fromiter(map(ord, b), dtype=np.int32, count=len(b))
    return 1.0 - levenshtein_codes(xa, xb) / longest
