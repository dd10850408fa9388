"""Corpus-level translation metrics: BLEU, ChrF, WER, BERTScore F1.

BLEU and ChrF aggregate their internal counts (n-gram matches and
totals) across all sentences first and apply the scoring formula once,
never as an average of per-sentence scores, which inflates results on
small test sets. WER is the token edit distance normalized by reference
length, aggregated as a reference-length-weighted average. BERTScore F1
is greedy soft token alignment in embedding space, averaged arithmetically
over sentences.

BLEU uses no smoothing: a zero match count at any n-gram order scores 0.
Tokenization is the shared whitespace+punctuation tokenizer, for BLEU and
WER alike.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

from . import kernels
from .errors import (
    AllTranslationsFailed,
    DataError,
    EmptyCorpus,
    EmptyInput,
    EmptyReference,
    LengthMismatch,
)
from .textnorm import tokenize

BLEU_MAX_ORDER = 4
CHRF_MAX_ORDER = 6
CHRF_BETA = 2.0


def _ngram_counts(items, n: int) -> Counter:
    return Counter(tuple(items[i:i + n]) for i in range(len(items) - n + 1))


def _chrf_stream(text: str) -> str:
    """Character stream for ChrF: whitespace runs become single spaces."""
    return " ".join(text.split())


@dataclass
class SentenceScore:
    """Per-sentence internal counts plus the per-sentence metrics.

    Carrying the raw counts in the report makes every corpus value
    recomputable from the per-sentence table (see bleu_from_counts and
    chrf_from_counts).
    """

    index: int
    bleu_matches: list = field(default_factory=list)  # per order 1..4
    bleu_totals: list = field(default_factory=list)
    hyp_len: int = 0
    ref_len: int = 0
    chrf_matches: list = field(default_factory=list)  # per order 1..6
    chrf_hyp_totals: list = field(default_factory=list)
    chrf_ref_totals: list = field(default_factory=list)
    wer: float = 0.0
    ref_wc: int = 0
    bert_f1: float = 0.0
    missing: bool = False

    @classmethod
    def compute(cls, index: int, hyp: str, ref: str, wer: float, bert_f1: float,
                missing: bool) -> "SentenceScore":
        hyp_tokens, ref_tokens = tokenize(hyp), tokenize(ref)
        bleu_matches, bleu_totals = bleu_sentence_counts(hyp_tokens, ref_tokens)
        chrf_matches, chrf_hyp, chrf_ref = chrf_sentence_counts(hyp, ref)
        return cls(
            index=index,
            bleu_matches=bleu_matches,
            bleu_totals=bleu_totals,
            hyp_len=len(hyp_tokens),
            ref_len=len(ref_tokens),
            chrf_matches=chrf_matches,
            chrf_hyp_totals=chrf_hyp,
            chrf_ref_totals=chrf_ref,
            wer=wer,
            ref_wc=len(ref_tokens),
            bert_f1=bert_f1,
            missing=missing,
        )

    def counts_dict(self) -> dict:
        return {
            "bleu_matches": list(self.bleu_matches),
            "bleu_totals": list(self.bleu_totals),
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "chrf_matches": list(self.chrf_matches),
            "chrf_hyp_totals": list(self.chrf_hyp_totals),
            "chrf_ref_totals": list(self.chrf_ref_totals),
        }


def bleu_sentence_counts(hyp_tokens: list[str], ref_tokens: list[str]) -> tuple[list, list]:
    """Clipped n-gram matches and hypothesis totals for orders 1..4."""
    matches, totals = [], []
    for n in range(1, BLEU_MAX_ORDER + 1):
        hyp_grams = _ngram_counts(hyp_tokens, n)
        ref_grams = _ngram_counts(ref_tokens, n)
        matches.append(sum(min(count, ref_grams[gram]) for gram, count in hyp_grams.items()))
        totals.append(max(len(hyp_tokens) - n + 1, 0))
    return matches, totals


def bleu_from_counts(matches: list, totals: list, hyp_len: int, ref_len: int) -> float:
    """Score BLEU from aggregated counts: clipped precisions, geometric
    mean over orders 1..4, brevity penalty. A zero match count at any
    order scores 0 (no smoothing)."""
    if any(m == 0 for m in matches):
        return 0.0
    log_precision_sum = sum(
        math.log(m / t) for m, t in zip(matches, totals)
    ) / BLEU_MAX_ORDER
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision_sum)


def corpus_bleu(hyps: list[str], refs: list[str]) -> float:
    """Count-aggregated corpus BLEU in [0, 100], no smoothing.

    Raises:
        LengthMismatch: hyp/ref lists differ in length.
        EmptyCorpus: empty input lists.
    """
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise EmptyCorpus("nothing to score")
    agg_matches = [0] * BLEU_MAX_ORDER
    agg_totals = [0] * BLEU_MAX_ORDER
    hyp_len_sum = 0
    ref_len_sum = 0
    for hyp, ref in zip(hyps, refs):
        hyp_tokens, ref_tokens = tokenize(hyp), tokenize(ref)
        matches, totals = bleu_sentence_counts(hyp_tokens, ref_tokens)
        for i in range(BLEU_MAX_ORDER):
            agg_matches[i] += matches[i]
            agg_totals[i] += totals[i]
        hyp_len_sum += len(hyp_tokens)
        ref_len_sum += len(ref_tokens)
    return bleu_from_counts(agg_matches, agg_totals, hyp_len_sum, ref_len_sum)


def chrf_sentence_counts(hyp: str, ref: str) -> tuple[list, list, list]:
    """Char n-gram matches and totals for orders 1..6 (spaces included)."""
    hyp_stream, ref_stream = _chrf_stream(hyp), _chrf_stream(ref)
    matches, hyp_totals, ref_totals = [], [], []
    for n in range(1, CHRF_MAX_ORDER + 1):
        hyp_grams = _ngram_counts(hyp_stream, n)
        ref_grams = _ngram_counts(ref_stream, n)
        matches.append(sum(min(count, ref_grams[gram]) for gram, count in hyp_grams.items()))
        hyp_totals.append(max(len(hyp_stream) - n + 1, 0))
        ref_totals.append(max(len(ref_stream) - n + 1, 0))
    return matches, hyp_totals, ref_totals


def chrf_from_counts(matches: list, hyp_totals: list, ref_totals: list) -> float:
    """Score ChrF from aggregated counts: precision and recall averaged
    over the n-gram orders that have any totals, combined once with the
    F-beta formula (beta=2)."""
    precisions, recalls = [], []
    for m, h, r in zip(matches, hyp_totals, ref_totals):
        if h == 0 and r == 0:
            continue  # order longer than every sentence; not informative
        precisions.append(m / h if h > 0 else 0.0)
        recalls.append(m / r if r > 0 else 0.0)
    if not precisions:
        return 0.0
    avg_p = sum(precisions) / len(precisions)
    avg_r = sum(recalls) / len(recalls)
    beta_sq = CHRF_BETA * CHRF_BETA
    denom = beta_sq * avg_p + avg_r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta_sq) * avg_p * avg_r / denom


def corpus_chrf(hyps: list[str], refs: list[str]) -> float:
    """Count-aggregated corpus ChrF (orders 1..6, beta=2) in [0, 100]."""
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise EmptyCorpus("nothing to score")
    agg_m = [0] * CHRF_MAX_ORDER
    agg_h = [0] * CHRF_MAX_ORDER
    agg_r = [0] * CHRF_MAX_ORDER
    for hyp, ref in zip(hyps, refs):
        matches, hyp_totals, ref_totals = chrf_sentence_counts(hyp, ref)
        for i in range(CHRF_MAX_ORDER):
            agg_m[i] += matches[i]
            agg_h[i] += hyp_totals[i]
            agg_r[i] += ref_totals[i]
    return chrf_from_counts(agg_m, agg_h, agg_r)


def sentence_wer(hyp_tokens: list[str], ref_tokens: list[str]) -> float:
    """Token edit distance / reference length; can exceed 1.

    Raises:
        EmptyReference: the reference has no tokens.
    """
    if not ref_tokens:
        raise EmptyReference("reference has no tokens")
    return kernels.levenshtein(hyp_tokens, ref_tokens) / len(ref_tokens)


def corpus_wer(sentence_scores: list[tuple[float, int]]) -> float:
    """Reference-length-weighted mean of per-sentence WERs.

    Takes (wer, reference word count) pairs.
    """
    if not sentence_scores:
        raise EmptyCorpus("nothing to score")
    weight_sum = sum(wc for _, wc in sentence_scores)
    if weight_sum == 0:
        raise EmptyReference("all references empty")
    return sum(wer * wc for wer, wc in sentence_scores) / weight_sum


def bertscore_f1(hyp: str, ref: str, provider) -> float:
    """Greedy soft token alignment F1 via the provider's token vectors.

    Precision is the mean over hypothesis tokens of the best cosine to any
    reference token; recall is symmetric; F1 their harmonic mean. No IDF
    weighting, no baseline rescaling.
    """
    if not hyp.strip() or not ref.strip():
        raise EmptyInput("bertscore needs nonempty hypothesis and reference")
    hyp_emb = provider.embed_tokens(hyp)
    ref_emb = provider.embed_tokens(ref)
    sim = hyp_emb.vectors @ ref_emb.vectors.T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def corpus_bertscore(per_sentence_f1: list[float]) -> float:
    """Arithmetic mean of the sentence-level F1 scores."""
    if not per_sentence_f1:
        raise EmptyCorpus("nothing to score")
    return sum(per_sentence_f1) / len(per_sentence_f1)


@dataclass
class GroupScores:
    dialect: str
    count: int
    missing: int
    bleu: float
    chrf: float
    wer: float
    bertscore: float

    def to_dict(self) -> dict:
        return {
            "dialect": self.dialect,
            "count": self.count,
            "missing": self.missing,
            "bleu": self.bleu,
            "chrf": self.chrf,
            "wer": self.wer,
            "bertscore": self.bertscore,
        }


@dataclass
class MetricReport:
    """Full evaluation output: corpus scores plus the sentence table."""

    model: str
    pipeline: str
    n: int
    total: int
    missing: int
    overall: GroupScores
    groups: list[GroupScores]
    sentences: list[dict]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "pipeline": self.pipeline,
            "n": self.n,
            "total": self.total,
            "missing": self.missing,
            "overall": self.overall.to_dict(),
            "groups": [g.to_dict() for g in self.groups],
            "sentences": self.sentences,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        """One row per dialect: Dialect, Model, BLEU, ChrF, BERTScore F1, WER."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["Dialect", "Model", "BLEU", "ChrF", "BERTScore F1", "WER"])
        for group in self.groups:
            writer.writerow([
                group.dialect,
                self.model,
                f"{group.bleu:.2f}",
                f"{group.chrf:.2f}",
                f"{group.bertscore:.4f}",
                f"{group.wer:.2f}",
            ])
        return buf.getvalue()


def score_rows(dialect: str, rows: list[dict]) -> GroupScores:
    """Corpus scores for a group, aggregated from per-sentence counts.

    Works on the serialized sentence table, which is what makes persisted
    reports recomputable.
    """
    agg = {
        "bleu_matches": [0] * BLEU_MAX_ORDER,
        "bleu_totals": [0] * BLEU_MAX_ORDER,
        "chrf_matches": [0] * CHRF_MAX_ORDER,
        "chrf_hyp_totals": [0] * CHRF_MAX_ORDER,
        "chrf_ref_totals": [0] * CHRF_MAX_ORDER,
    }
    hyp_len = ref_len = 0
    for row in rows:
        counts = row["counts"]
        hyp_len += counts["hyp_len"]
        ref_len += counts["ref_len"]
        for key, acc in agg.items():
            for i, value in enumerate(counts[key]):
                acc[i] += value
    return GroupScores(
        dialect=dialect,
        count=len(rows),
        missing=sum(1 for r in rows if r["missing"]),
        bleu=bleu_from_counts(agg["bleu_matches"], agg["bleu_totals"], hyp_len, ref_len),
        chrf=chrf_from_counts(
            agg["chrf_matches"], agg["chrf_hyp_totals"], agg["chrf_ref_totals"]
        ),
        wer=corpus_wer([(r["wer"], r["ref_wc"]) for r in rows]),
        bertscore=corpus_bertscore([r["bert_f1"] for r in rows]),
    )


def evaluate_run(
    pairs: list[tuple[str, str, str]],
    translator,
    provider,
    *,
    model: str,
    pipeline: str,
    n: int,
    parallelism: int = 1,
) -> MetricReport:
    """Translate every (input, reference, dialect) pair and score the run.

    Per-item translation failures are kept as missing rows: empty
    hypothesis (WER 1.0, zero BLEU/ChrF counts, BERTScore 0.0) with the
    error recorded. The run fails only when every item errors.

    Raises:
        EmptyCorpus: no pairs.
        DataError: a pair with an empty reference.
        AllTranslationsFailed: nothing translated successfully.
    """
    if not pairs:
        raise EmptyCorpus("no evaluation pairs")
    for i, (_, reference, _) in enumerate(pairs):
        if not tokenize(reference):
            raise DataError(f"pair {i}: reference has no tokens")

    results = translator.translate_many(
        [(inp, dialect) for inp, _, dialect in pairs], parallelism=parallelism
    )
    if all(r.error is not None for r in results):
        raise AllTranslationsFailed(results[0].error or "all items failed")

    sentences: list[dict] = []
    for i, ((inp, reference, dialect), result) in enumerate(zip(pairs, results)):
        missing = result.error is not None
        hypothesis = "" if missing else result.output_text
        ref_tokens = tokenize(reference)
        wer = sentence_wer(tokenize(hypothesis), ref_tokens)
        if missing or not hypothesis.strip():
            bert = 0.0
        else:
            bert = bertscore_f1(hypothesis, reference, provider)
        score = SentenceScore.compute(i, hypothesis, reference, wer, bert, missing)
        sentences.append({
            "index": i,
            "dialect": dialect,
            "input": inp,
            "reference": reference,
            "hypothesis": hypothesis,
            "wer": score.wer,
            "ref_wc": score.ref_wc,
            "bert_f1": score.bert_f1,
            "missing": score.missing,
            "error": result.error,
            "counts": score.counts_dict(),
        })

    by_dialect: dict[str, list[dict]] = {}
    for row in sentences:
        by_dialect.setdefault(row["dialect"], []).append(row)
    groups = [score_rows(d, rows) for d, rows in sorted(by_dialect.items())]
    overall = score_rows("ALL", sentences)
    return MetricReport(
        model=model,
        pipeline=pipeline,
        n=n,
        total=len(sentences),
        missing=sum(1 for r in sentences if r["missing"]),
        overall=overall,
        groups=groups,
        sentences=sentences,
    )


def heatmap_csv(reports: list[MetricReport], metric: str = "wer") -> str:
    """Pipeline x dialect matrix of one corpus metric, as CSV text."""
    if metric not in ("bleu", "chrf", "wer", "bertscore"):
        raise ValueError(f"unknown metric {metric!r}")
    dialects = sorted({g.dialect for rep in reports for g in rep.groups})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["pipeline"] + dialects)
    for rep in sorted(reports, key=lambda r: r.pipeline):
        row = [rep.pipeline]
        values = {g.dialect: getattr(g, metric) for g in rep.groups}
        for dialect in dialects:
            row.append(f"{values[dialect]:.2f}" if dialect in values else "")
        writer.writerow(row)
    return buf.getvalue()
