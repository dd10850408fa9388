"""Both kernel backends agree with the full-matrix DP oracle."""

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialectmt import kernels
from oracles import naive_levenshtein

_seqs = st.lists(st.integers(min_value=0, max_value=5), max_size=12)


def _codes(seq):
    return np.asarray(seq, dtype=np.int32)


class TestLevenshteinBackends:
    @given(_seqs, _seqs)
    @settings(max_examples=150, deadline=None)  # first call may JIT-compile
    def test_active_backend_matches_oracle(self, a, b):
        assert kernels.levenshtein_codes(_codes(a), _codes(b)) == naive_levenshtein(a, b)

    @given(_seqs, _seqs)
    @settings(max_examples=150)
    def test_numpy_fallback_matches_oracle(self, a, b):
        assert kernels.levenshtein_numpy(_codes(a), _codes(b)) == naive_levenshtein(a, b)

    def test_backends_agree_on_random_inputs(self):
        rng = random.Random(7)
        for _ in range(100):
            a = [rng.randint(0, 9) for _ in range(rng.randint(0, 20))]
            b = [rng.randint(0, 9) for _ in range(rng.randint(0, 20))]
            assert kernels.levenshtein_codes(_codes(a), _codes(b)) == kernels.levenshtein_numpy(
                _codes(a), _codes(b)
            )

    def test_empty_sides(self):
        assert kernels.levenshtein([], []) == 0
        assert kernels.levenshtein([], ["a", "b"]) == 2
        assert kernels.levenshtein(["a", "b"], []) == 2

    def test_token_sequences(self):
        assert kernels.levenshtein(["a", "b", "c"], ["a", "x", "c"]) == 1


class TestCharSimilarity:
    def test_identical(self):
        assert kernels.char_similarity("abc", "abc") == 1.0

    def test_disjoint(self):
        assert kernels.char_similarity("aaa", "bbb") == 0.0

    def test_both_empty(self):
        assert kernels.char_similarity("", "") == 1.0

    def test_one_empty(self):
        assert kernels.char_similarity("abcd", "") == 0.0

    def test_matches_oracle_value(self):
        # dist("kita", "kola") = 2 substitutions, max len 4
        assert kernels.char_similarity("kita", "kola") == pytest.approx(0.5)


class TestBm25TermKernel:
    def _run(self, fn):
        doc_idx = np.asarray([0, 2, 3], dtype=np.int32)
        tfs = np.asarray([1.0, 3.0, 2.0], dtype=np.float64)
        dnorm = np.asarray([1.2, 0.9, 1.5, 1.1], dtype=np.float64)
        scores = np.zeros(4, dtype=np.float64)
        fn(doc_idx, tfs, dnorm, 0.7, 1.5, scores)
        return scores

    def test_backends_bitwise_equal(self):
        numba_scores = self._run(kernels.bm25_term)
        numpy_scores = self._run(kernels.bm25_term_numpy)
        assert np.array_equal(numba_scores, numpy_scores)

    def test_untouched_docs_stay_zero(self):
        scores = self._run(kernels.bm25_term_numpy)
        assert scores[1] == 0.0

    def test_accumulates_across_calls(self):
        doc_idx = np.asarray([0], dtype=np.int32)
        tfs = np.asarray([2.0], dtype=np.float64)
        dnorm = np.asarray([1.0], dtype=np.float64)
        scores = np.zeros(1, dtype=np.float64)
        kernels.bm25_term_numpy(doc_idx, tfs, dnorm, 1.0, 1.5, scores)
        once = scores[0]
        kernels.bm25_term_numpy(doc_idx, tfs, dnorm, 1.0, 1.5, scores)
        assert scores[0] == once + once
