"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]

Times the two hot kernels on synthetic workloads shaped like real usage:
Levenshtein over token/character sequences (WER and the char-similarity
retrieval bonus) and per-term BM25 accumulation over Zipf-ish postings.
The dispatcher's env flag DIALECTMT_PURE_NUMPY does not matter here; both
variants are exercised explicitly.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dialectmt import kernels


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_levenshtein(repeats: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(7)
    rows = []
    for label, length, pairs in (
        ("tokens ~12", 12, 2000),
        ("chars ~40", 40, 1000),
        ("chars ~200", 200, 50),
    ):
        seqs = [
            (
                rng.integers(0, 30, size=length).astype(np.int32),
                rng.integers(0, 30, size=length).astype(np.int32),
            )
            for _ in range(pairs)
        ]

        def run(fn, seqs=seqs):
            total = 0
            for a, b in seqs:
                total += fn(a, b)
            return total

        if kernels.HAS_NUMBA:
            kernels.levenshtein_numba(seqs[0][0], seqs[0][1])  # JIT warm-up
            numba_t = _time(lambda: run(kernels.levenshtein_numba), repeats)
        else:
            numba_t = float("nan")
        numpy_t = _time(lambda: run(kernels.levenshtein_numpy), repeats)
        rows.append((f"levenshtein {label} x{pairs}", numba_t, numpy_t))
    return rows


def bench_bm25(repeats: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(11)
    rows = []
    for label, n_docs, n_terms in (("20k docs, 6 terms", 20_000, 6), ("2k docs, 30 terms", 2_000, 30)):
        doc_lengths = rng.integers(3, 40, size=n_docs).astype(np.float64)
        avgdl = float(doc_lengths.sum() / n_docs)
        dnorm = 1.5 * (1.0 - 0.75 + 0.75 * doc_lengths / avgdl)
        terms = []
        for _ in range(n_terms):
            df = int(rng.integers(10, n_docs // 2))
            docs = np.sort(rng.choice(n_docs, size=df, replace=False)).astype(np.int32)
            tfs = rng.integers(1, 5, size=df).astype(np.float64)
            idf = float(rng.uniform(0.2, 3.0))
            terms.append((docs, tfs, idf))

        def run(fn):
            scores = np.zeros(n_docs, dtype=np.float64)
            for docs, tfs, idf in terms:
                fn(docs, tfs, dnorm, idf, 1.5, scores)
            return scores

        if kernels.HAS_NUMBA:
            run(kernels.bm25_term_numba)  # JIT warm-up
            numba_t = _time(lambda: run(kernels.bm25_term_numba), repeats)
        else:
            numba_t = float("nan")
        numpy_t = _time(lambda: run(kernels.bm25_term_numpy), repeats)
        rows.append((f"bm25 {label}", numba_t, numpy_t))
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rows = bench_levenshtein(args.repeats) + bench_bm25(args.repeats)
    width = max(len(name) for name, _, _ in rows)
    print(f"{'workload':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, numba_t, numpy_t in rows:
        speedup = numpy_t / numba_t if numba_t == numba_t and numba_t > 0 else float("nan")
        print(f"{name:<{width}}  {numba_t * 1e3:>8.2f}ms  {numpy_t * 1e3:>8.2f}ms  {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
