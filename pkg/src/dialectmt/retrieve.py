"""Hybrid retrieval strategies over a HybridIndex.

Pipeline 1 (transcripts): fixed-weight fusion, 70% dense / 30% sparse,
50 candidates per channel, then a dialect filter.

Pipeline 2 (sentence pairs): adaptive weighting by query length.
Standard queries weigh the channels (0.55, 0.35); short queries (fewer
than four tokens) flip to (0.35, 0.55) and widen the candidate pool from
(50, 50) to (100, 200). Short queries carry an appended ``[[SHORT]]``
marker into both channels so they land near other short examples.
Candidates are ranked by a blended score: the weighted channel scores
plus a district-match bonus, a dominant exact-match bonus, a substring
bonus, and a small character-similarity bonus. When the initial pool has
fewer than two unique examples, a deep search re-runs BM25 per query
token, sums the scores per document, and re-ranks with sparse-favoring
weights.

Channel scores are min-max normalized to [0, 1] over each candidate list
before fusion (BM25 is unbounded, cosine is not); a candidate missing
from a channel scores 0 there. All rankings break ties by ascending
record id, so results are deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .corpus import CorpusRecord, normalize_district
from .errors import EmptyCorpus, InvalidK, UnknownDialect
from .index import HybridIndex, bm25_scores, search_dense, search_sparse
from .kernels import char_similarity
from .textnorm import normalize_basic, normalize_full, tokenize

P1_WEIGHTS = (0.70, 0.30)
P1_CANDIDATES = (50, 50)
P2_WEIGHTS_STANDARD = (0.55, 0.35)
P2_WEIGHTS_SHORT = (0.35, 0.55)
P2_CANDIDATES_STANDARD = (50, 50)
P2_CANDIDATES_SHORT = (100, 200)

# Query-side short threshold (record-side tagging uses < 3 at index time).
SHORT_QUERY_TOKENS = 4
SHORT_QUERY_MARKER = "[[SHORT]]"

# Deep search fires automatically below this many unique examples.
MIN_UNIQUE_EXAMPLES = 2


class EmptyQueryWarning(UserWarning):
    """Raised as a warning when a query normalizes to nothing."""


@dataclass(frozen=True)
class BonusConfig:
    """Magnitudes of the pipeline-2 ranking bonuses."""

    district: float = 0.15
    exact: float = 0.50
    substring: float = 0.20
    char_sim_cap: float = 0.05


@dataclass(frozen=True)
class FusionConfig:
    """Weights and per-channel candidate counts for one retrieval run."""

    w_dense: float
    w_sparse: float
    k_dense: int
    k_sparse: int
    pipeline: str  # "P1" | "P2"
    bonuses: BonusConfig = BonusConfig()

    @classmethod
    def for_p1(cls) -> "FusionConfig":
        return cls(*P1_WEIGHTS, *P1_CANDIDATES, "P1")

    @classmethod
    def for_p2(cls, query_class: str, bonuses: BonusConfig = BonusConfig()) -> "FusionConfig":
        if query_class == "short":
            return cls(*P2_WEIGHTS_SHORT, *P2_CANDIDATES_SHORT, "P2", bonuses)
        return cls(*P2_WEIGHTS_STANDARD, *P2_CANDIDATES_STANDARD, "P2", bonuses)


@dataclass
class RetrievalCandidate:
    """One scored record with the full score breakdown."""

    record: CorpusRecord
    dense_raw: float | None = None
    sparse_raw: float | None = None
    dense_norm: float = 0.0
    sparse_norm: float = 0.0
    bonuses: dict = field(default_factory=dict)
    blended: float = 0.0

    @property
    def id(self) -> str:
        return self.record.id

    def to_dict(self) -> dict:
        return {
            "id": self.record.id,
            "district": self.record.district,
            "dense_raw": self.dense_raw,
            "sparse_raw": self.sparse_raw,
            "dense_norm": self.dense_norm,
            "sparse_norm": self.sparse_norm,
            "bonuses": dict(self.bonuses),
            "blended": self.blended,
        }


@dataclass
class RetrievalTrace:
    """Instrumentation record behind the --explain surface."""

    pipeline: str
    query_norm: str
    query_for_search: str
    query_class: str | None
    w_dense: float
    w_sparse: float
    k_dense: int
    k_sparse: int
    deep_mode: str | None
    deep_fired: bool
    unique_examples_initial: int | None
    pool: list[RetrievalCandidate] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "query_norm": self.query_norm,
            "query_for_search": self.query_for_search,
            "query_class": self.query_class,
            "weights": {"dense": self.w_dense, "sparse": self.w_sparse},
            "k_dense": self.k_dense,
            "k_sparse": self.k_sparse,
            "deep_mode": self.deep_mode,
            "deep_search_fired": self.deep_fired,
            "unique_examples_initial": self.unique_examples_initial,
            "pool": [c.to_dict() for c in self.pool],
        }


@dataclass
class RetrievalResult:
    candidates: list[RetrievalCandidate]
    trace: RetrievalTrace


def classify_query(query_norm: str) -> str:
    """"short" below four tokens, else "standard"; warns on empty input."""
    n_tokens = len(tokenize(query_norm))
    if n_tokens == 0:
        warnings.warn("query normalized to zero tokens", EmptyQueryWarning, stacklevel=2)
    return "short" if n_tokens < SHORT_QUERY_TOKENS else "standard"


def minmax_normalize(scored: list[tuple[str, float]]) -> dict[str, float]:
    """Map a channel's scores onto [0, 1].

    Degenerate channel (all scores equal): everything becomes 1.0 when the
    shared score is positive, else 0.0.
    """
    if not scored:
        return {}
    values = [s for _, s in scored]
    lo, hi = min(values), max(values)
    if hi > lo:
        return {rid: (s - lo) / (hi - lo) for rid, s in scored}
    return {rid: (1.0 if hi > 0 else 0.0) for rid, _ in scored}


def blend_score(
    candidate: RetrievalCandidate,
    query_norm: str,
    dialect: str,
    weights: tuple[float, float],
    bonuses: BonusConfig = BonusConfig(),
) -> RetrievalCandidate:
    """Fill in the pipeline-2 blended score and bonus breakdown.

    Exact and substring bonuses are mutually exclusive (exact wins) and
    require a nonempty query; the character-similarity bonus always
    applies, scaled by the normalized Levenshtein similarity between the
    query and the candidate's standard text.
    """
    rec = candidate.record
    district_bonus = bonuses.district if rec.district == dialect else 0.0
    std = rec.standard_norm
    exact = bool(query_norm) and std == query_norm
    contains = bool(query_norm) and bool(std) and (query_norm in std or std in query_norm)
    exact_bonus = bonuses.exact if exact else 0.0
    substring_bonus = bonuses.substring if (contains and not exact) else 0.0
    char_bonus = bonuses.char_sim_cap * char_similarity(query_norm, std)
    candidate.bonuses = {
        "district": district_bonus,
        "exact": exact_bonus,
        "substring": substring_bonus,
        "char_sim": char_bonus,
    }
    candidate.blended = (
        weights[0] * candidate.dense_norm
        + weights[1] * candidate.sparse_norm
        + district_bonus
        + exact_bonus
        + substring_bonus
        + char_bonus
    )
    return candidate


def deep_search(query_tokens: list[str], index) -> dict[str, float]:
    """Per-token BM25 with per-document summation.

    BM25 is additive over query-token occurrences, so for tokens that hit
    the same documents this equals one multi-token search exactly.
    """
    aggregated: dict[str, float] = {}
    for token in query_tokens:
        for rid, score in bm25_scores(index, [token]).items():
            aggregated[rid] = aggregated.get(rid, 0.0) + score
    return aggregated


class Retriever:
    """Binds records, a hybrid index, and an embedding provider."""

    def __init__(
        self,
        records: list[CorpusRecord],
        index: HybridIndex,
        provider,
        bonuses: BonusConfig = BonusConfig(),
    ):
        if not records:
            raise EmptyCorpus("retriever needs at least one record")
        self.records = {r.id: r for r in records}
        missing = [rid for rid in index.ids if rid not in self.records]
        if missing:
            raise ValueError(f"index ids missing from corpus: {missing[:5]}")
        self.index = index
        self.provider = provider
        self.bonuses = bonuses
        self.districts = {r.district for r in records}

    def _check_dialect(self, dialect: str) -> str:
        canonical = normalize_district(dialect)
        if canonical not in self.districts:
            raise UnknownDialect(f"dialect {canonical!r} not present in corpus")
        return canonical

    def _channels(
        self, query_text: str, k_dense: int, k_sparse: int
    ) -> tuple[list[tuple[str, float]], list[tuple[str, float]]]:
        query_vec = self.provider.embed_sentences([query_text])[0]
        dense = search_dense(self.index.dense, query_vec, k_dense)
        sparse = search_sparse(self.index.sparse, tokenize(query_text), k_sparse)
        return dense, sparse

    def _build_pool(
        self,
        dense: list[tuple[str, float]],
        sparse: list[tuple[str, float]],
    ) -> list[RetrievalCandidate]:
        dense_raw = dict(dense)
        sparse_raw = dict(sparse)
        dense_norm = minmax_normalize(dense)
        sparse_norm = minmax_normalize(sparse)
        pool_ids = sorted(set(dense_raw) | set(sparse_raw))
        return [
            RetrievalCandidate(
                record=self.records[rid],
                dense_raw=dense_raw.get(rid),
                sparse_raw=sparse_raw.get(rid),
                dense_norm=dense_norm.get(rid, 0.0),
                sparse_norm=sparse_norm.get(rid, 0.0),
            )
            for rid in pool_ids
        ]

    @staticmethod
    def _finalize(
        pool: list[RetrievalCandidate], dialect: str, k: int
    ) -> list[RetrievalCandidate]:
        kept = [c for c in pool if c.record.district == dialect]
        kept.sort(key=lambda c: (-c.blended, c.id))
        return kept[:k]

    def retrieve_p1(self, query: str, dialect: str, k: int) -> RetrievalResult:
        """Fixed-weight fusion over the transcript corpus."""
        if k < 1:
            raise InvalidK(f"k must be >= 1, got {k}")
        dialect = self._check_dialect(dialect)
        query_norm = normalize_basic(query)
        config = FusionConfig.for_p1()
        dense, sparse = self._channels(query_norm, config.k_dense, config.k_sparse)
        pool = self._build_pool(dense, sparse)
        for cand in pool:
            cand.blended = config.w_dense * cand.dense_norm + config.w_sparse * cand.sparse_norm
            cand.bonuses = {"district": 0.0, "exact": 0.0, "substring": 0.0, "char_sim": 0.0}
        pool.sort(key=lambda c: (-c.blended, c.id))
        trace = RetrievalTrace(
            pipeline="P1",
            query_norm=query_norm,
            query_for_search=query_norm,
            query_class=None,
            w_dense=config.w_dense,
            w_sparse=config.w_sparse,
            k_dense=config.k_dense,
            k_sparse=config.k_sparse,
            deep_mode=None,
            deep_fired=False,
            unique_examples_initial=None,
            pool=pool,
        )
        return RetrievalResult(candidates=self._finalize(pool, dialect, k), trace=trace)

    def retrieve_p2(
        self, query: str, dialect: str, k: int, deep: str = "auto"
    ) -> RetrievalResult:
        """Adaptive-weight fusion with bonuses over the pair corpus."""
        if k < 1:
            raise InvalidK(f"k must be >= 1, got {k}")
        if deep not in ("auto", "on", "off"):
            raise ValueError(f"deep must be auto|on|off, got {deep!r}")
        dialect = self._check_dialect(dialect)
        query_norm = normalize_full(query)
        query_class = classify_query(query_norm)
        short = query_class == "short"
        config = FusionConfig.for_p2(query_class, self.bonuses)
        weights = (config.w_dense, config.w_sparse)
        query_for_search = f"{query_norm} {SHORT_QUERY_MARKER}".strip() if short else query_norm

        dense, sparse = self._channels(query_for_search, config.k_dense, config.k_sparse)
        pool = self._build_pool(dense, sparse)
        unique_examples = len({c.record.example_key for c in pool})

        deep_fired = deep == "on" or (deep == "auto" and unique_examples < MIN_UNIQUE_EXAMPLES)
        if deep_fired:
            aggregated = deep_search(tokenize(query_for_search), self.index.sparse)
            sparse = sorted(aggregated.items(), key=lambda item: (-item[1], item[0]))
            sparse = sparse[: config.k_sparse]
            weights = P2_WEIGHTS_SHORT  # re-weight toward sparse
            pool = self._build_pool(dense, sparse)

        for cand in pool:
            blend_score(cand, query_norm, dialect, weights, config.bonuses)
        pool.sort(key=lambda c: (-c.blended, c.id))
        trace = RetrievalTrace(
            pipeline="P2",
            query_norm=query_norm,
            query_for_search=query_for_search,
            query_class=query_class,
            w_dense=weights[0],
            w_sparse=weights[1],
            k_dense=config.k_dense,
            k_sparse=config.k_sparse,
            deep_mode=deep,
            deep_fired=deep_fired,
            unique_examples_initial=unique_examples,
            pool=pool,
        )
        return RetrievalResult(candidates=self._finalize(pool, dialect, k), trace=trace)
