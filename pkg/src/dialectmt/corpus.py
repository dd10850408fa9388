"""Corpus ingestion: the two dataset formats, tagging, merging, stats.

Two record kinds flow through here:

* ``transcript``: one dialect sentence per line (long spoken-language
  transcriptions); cleaned with :func:`dialectmt.textnorm.normalize_basic`.
* ``pair``: a local-dialect sentence with its standard-Bengali
  translation; cleaned with :func:`dialectmt.textnorm.normalize_full`,
  then tagged ([[SHORT]], [[QUESTION]]), and consecutive short entries
  from the same district merged into [[MERGED]] records.

Pair records also get a structured representation
``District: {district} | STANDARD: {standard} | LOCAL: {local_tagged}``
which is what the dense and sparse indices are built from.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

from .errors import FormatError, InvalidEncoding
from .textnorm import normalize_basic, normalize_full, tokenize

TAG_SHORT = "SHORT"
TAG_QUESTION = "QUESTION"
TAG_MERGED = "MERGED"
_TAG_ORDER = (TAG_SHORT, TAG_QUESTION, TAG_MERGED)

# Index-side threshold: a record is SHORT below this many tokens. The
# query side uses a looser threshold (see dialectmt.retrieve).
SHORT_TOKEN_THRESHOLD = 3

_QUESTION_FINALS = ("?", "？")


@dataclass(frozen=True)
class RawEntry:
    """One validated input line before normalization-derived fields."""

    id: str
    district: str
    source_line: int
    text: str = ""
    local: str = ""
    standard: str = ""


@dataclass(frozen=True)
class CorpusRecord:
    """A fully preprocessed corpus entry, immutable and shareable."""

    id: str
    district: str
    kind: str  # "transcript" | "pair"
    text_norm: str  # transcript text, or the local sentence for pairs
    standard_norm: str = ""
    local_norm_tagged: str = ""
    tags: frozenset = frozenset()
    word_count: int = 0
    complexity: float = 0.0
    structured: str = ""
    source_line: int = 0

    @property
    def embedding_text(self) -> str:
        """Text the dense index embeds: structured for pairs, plain else."""
        return self.structured if self.kind == "pair" else self.text_norm

    @property
    def example_key(self) -> tuple[str, str]:
        """Identity of the rendered example; duplicates collapse on this."""
        return (self.standard_norm, self.text_norm)


def normalize_district(raw: str) -> str:
    """Canonical district form: fully normalized, title-cased."""
    return normalize_full(raw).title()


def quality_metrics(text: str) -> tuple[int, float]:
    """Word count and complexity = unique-token ratio x mean token length."""
    tokens = tokenize(text)
    if not tokens:
        return 0, 0.0
    unique_ratio = len(set(tokens)) / len(tokens)
    mean_len = sum(len(t) for t in tokens) / len(tokens)
    return len(tokens), unique_ratio * mean_len


def render_tags(text: str, tags: frozenset) -> str:
    """Append literal tag markers in canonical order (SHORT first)."""
    markers = [f"[[{t}]]" for t in _TAG_ORDER if t in tags]
    return " ".join([text] + markers) if markers else text


def build_structured(district: str, standard_norm: str, local_norm_tagged: str) -> str:
    """Structured embedding text for a pair record.

    The normalizer folds "|" away, so the " | " separators cannot occur
    inside the fields; asserted here because parse_structured relies on it.
    """
    for part in (district, standard_norm, local_norm_tagged):
        assert " | " not in part, f"reserved separator inside field: {part!r}"
    return f"District: {district} | STANDARD: {standard_norm} | LOCAL: {local_norm_tagged}"


def parse_structured(structured: str) -> tuple[str, str, str]:
    """Inverse of build_structured; returns (district, standard, local)."""
    if not structured.startswith("District: "):
        raise ValueError(f"not a structured representation: {structured!r}")
    rest = structured[len("District: "):]
    district, sep, rest = rest.partition(" | STANDARD: ")
    if not sep:
        raise ValueError("missing STANDARD field")
    standard, sep, local = rest.partition(" | LOCAL: ")
    if not sep:
        raise ValueError("missing LOCAL field")
    return district, standard, local


def tag_record(rec: CorpusRecord) -> CorpusRecord:
    """Recompute SHORT/QUESTION tags and derived fields for a pair record.

    SHORT fires when the local text has fewer than SHORT_TOKEN_THRESHOLD
    tokens; QUESTION when it ends with a question mark. Markers are
    rendered into ``local_norm_tagged`` after the text, SHORT before
    QUESTION.
    """
    tags = set(rec.tags) - {TAG_SHORT, TAG_QUESTION}
    if len(tokenize(rec.text_norm)) < SHORT_TOKEN_THRESHOLD:
        tags.add(TAG_SHORT)
    if rec.text_norm.endswith(_QUESTION_FINALS):
        tags.add(TAG_QUESTION)
    return _finish_pair(rec, frozenset(tags))


def _finish_pair(rec: CorpusRecord, tags: frozenset) -> CorpusRecord:
    wc, cx = quality_metrics(rec.text_norm)
    tagged = render_tags(rec.text_norm, tags)
    return replace(
        rec,
        tags=tags,
        word_count=wc,
        complexity=cx,
        local_norm_tagged=tagged,
        structured=build_structured(rec.district, rec.standard_norm, tagged),
    )


def make_pair_record(entry: RawEntry) -> CorpusRecord:
    """Build a fully derived pair record from a validated raw entry."""
    rec = CorpusRecord(
        id=entry.id,
        district=normalize_district(entry.district),
        kind="pair",
        text_norm=normalize_full(entry.local),
        standard_norm=normalize_full(entry.standard),
        source_line=entry.source_line,
    )
    return tag_record(rec)


def make_transcript_record(entry: RawEntry) -> CorpusRecord:
    text_norm = normalize_basic(entry.text)
    wc, cx = quality_metrics(text_norm)
    return CorpusRecord(
        id=entry.id,
        district=normalize_district(entry.district),
        kind="transcript",
        text_norm=text_norm,
        word_count=wc,
        complexity=cx,
        source_line=entry.source_line,
    )


def _merge_run(run: list[CorpusRecord]) -> CorpusRecord:
    merged_local = " ".join(r.text_norm for r in run)
    merged_standard = " ".join(r.standard_norm for r in run)
    tags = {TAG_MERGED}
    if merged_local.endswith(_QUESTION_FINALS):
        tags.add(TAG_QUESTION)
    rec = CorpusRecord(
        id="+".join(r.id for r in run),
        district=run[0].district,
        kind="pair",
        text_norm=merged_local,
        standard_norm=merged_standard,
        source_line=run[0].source_line,
    )
    return _finish_pair(rec, frozenset(tags))


def merge_short_runs(records: list[CorpusRecord]) -> list[CorpusRecord]:
    """Merge maximal runs of 2+ consecutive SHORT records per district.

    The merged record space-joins the local and standard sides, drops the
    constituent SHORT tags and carries [[MERGED]] instead. Everything else
    passes through unchanged, in order.
    """
    out: list[CorpusRecord] = []
    run: list[CorpusRecord] = []

    def flush() -> None:
        if len(run) >= 2:
            out.append(_merge_run(run))
        else:
            out.extend(run)
        run.clear()

    for rec in records:
        mergeable = rec.kind == "pair" and TAG_SHORT in rec.tags
        if mergeable and run and rec.district != run[0].district:
            flush()
        if mergeable:
            run.append(rec)
        else:
            flush()
            out.append(rec)
    flush()
    return out


@dataclass
class IngestStats:
    """Counts reported by ingest: per-district coverage and rejects."""

    format: str
    records_in: int = 0
    records_out: int = 0
    rejected: int = 0
    reject_reasons: list = field(default_factory=list)  # (line_no, reason)
    district_counts_before: dict = field(default_factory=dict)
    district_counts_after: dict = field(default_factory=dict)
    mean_word_count: float = 0.0
    merged_runs: int = 0

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "records_in": self.records_in,
            "records_out": self.records_out,
            "rejected": self.rejected,
            "reject_reasons": [
                {"line": line, "reason": reason} for line, reason in self.reject_reasons
            ],
            "district_counts_before": dict(sorted(self.district_counts_before.items())),
            "district_counts_after": dict(sorted(self.district_counts_after.items())),
            "mean_word_count": self.mean_word_count,
            "merged_runs": self.merged_runs,
        }


def _parse_json_line(raw: bytes, line_no: int, keys: tuple[str, ...]) -> dict:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidEncoding(f"line {line_no}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise FormatError(line_no, "expected a JSON object")
    for key in keys:
        if key not in obj:
            raise FormatError(line_no, f"missing field {key!r}")
        if not isinstance(obj[key], str):
            raise FormatError(line_no, f"field {key!r} must be a string")
    return obj


def _validate_entry(obj: dict, line_no: int, fmt: str) -> RawEntry:
    district = normalize_district(obj["district"])
    if not district:
        raise FormatError(line_no, "empty district")
    if fmt == "pairs":
        local = normalize_full(obj["local"])
        if not local:
            raise FormatError(line_no, "empty local text")
        return RawEntry(
            id=obj["id"], district=district, source_line=line_no,
            local=obj["local"], standard=obj["standard"],
        )
    text = normalize_basic(obj["text"])
    if not text:
        raise FormatError(line_no, "empty text")
    return RawEntry(id=obj["id"], district=district, source_line=line_no, text=obj["text"])


def _iter_json_lines(data: bytes, keys: tuple[str, ...]):
    for line_no, raw in enumerate(data.split(b"\n"), start=1):
        if not raw.strip():
            continue
        yield line_no, lambda raw=raw, n=line_no: _parse_json_line(raw, n, keys)


def _iter_csv_lines(data: bytes, keys: tuple[str, ...]):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidEncoding(str(exc)) from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(1, "empty CSV file") from None
    positions = {}
    for key in keys:
        if key not in header:
            raise FormatError(1, f"CSV header missing column {key!r}")
        positions[key] = header.index(key)
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue

        def parse(row=row, n=line_no):
            if len(row) <= max(positions.values()):
                raise FormatError(n, "row has too few columns")
            return {key: row[pos] for key, pos in positions.items()}

        yield line_no, parse


def ingest(path: str, fmt: str, strict: bool = True) -> tuple[list[CorpusRecord], IngestStats]:
    """Read, validate, normalize and (for pairs) tag+merge a corpus file.

    ``fmt`` is ``"pairs"`` (JSON Lines with id/district/local/standard) or
    ``"transcript"`` (JSON Lines with id/district/text, or a CSV with the
    same columns when the path ends in .csv).

    Strict mode raises on the first malformed line; lenient mode skips it
    and counts it in the stats.

    Raises:
        FileNotFoundError: missing input file.
        FormatError: malformed line in strict mode.
        InvalidEncoding: undecodable bytes in strict mode.
    """
    if fmt not in ("pairs", "transcript"):
        raise ValueError(f"unknown format: {fmt!r}")
    keys = ("id", "district", "local", "standard") if fmt == "pairs" else ("id", "district", "text")
    with open(path, "rb") as fh:
        data = fh.read()

    if fmt == "transcript" and str(path).endswith(".csv"):
        lines = _iter_csv_lines(data, keys)
    else:
        lines = _iter_json_lines(data, keys)

    stats = IngestStats(format=fmt)
    records: list[CorpusRecord] = []
    for line_no, parse in lines:
        try:
            entry = _validate_entry(parse(), line_no, fmt)
            rec = make_pair_record(entry) if fmt == "pairs" else make_transcript_record(entry)
        except (FormatError, InvalidEncoding) as exc:
            if strict:
                raise
            reason = exc.reason if isinstance(exc, FormatError) else "invalid UTF-8"
            stats.rejected += 1
            stats.reject_reasons.append((line_no, reason))
            continue
        records.append(rec)
        stats.records_in += 1
        stats.district_counts_before[rec.district] = (
            stats.district_counts_before.get(rec.district, 0) + 1
        )

    if fmt == "pairs":
        merged = merge_short_runs(records)
        stats.merged_runs = sum(1 for r in merged if TAG_MERGED in r.tags)
        records = merged

    stats.records_out = len(records)
    for rec in records:
        stats.district_counts_after[rec.district] = (
            stats.district_counts_after.get(rec.district, 0) + 1
        )
    if records:
        stats.mean_word_count = sum(r.word_count for r in records) / len(records)
    return records, stats


def save_records(records: list[CorpusRecord], path: str) -> None:
    """Write the normalized corpus as JSON Lines (one record per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "id": rec.id,
                "district": rec.district,
                "kind": rec.kind,
                "text_norm": rec.text_norm,
                "standard_norm": rec.standard_norm,
                "local_norm_tagged": rec.local_norm_tagged,
                "tags": sorted(rec.tags),
                "word_count": rec.word_count,
                "complexity": rec.complexity,
                "structured": rec.structured,
                "source_line": rec.source_line,
            }, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_records(path: str) -> list[CorpusRecord]:
    """Read a normalized corpus written by save_records."""
    records = []
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh.read().split(b"\n"), start=1):
            if not raw.strip():
                continue
            obj = _parse_json_line(raw, line_no, ("id", "district", "kind", "text_norm"))
            records.append(CorpusRecord(
                id=obj["id"],
                district=obj["district"],
                kind=obj["kind"],
                text_norm=obj["text_norm"],
                standard_norm=obj.get("standard_norm", ""),
                local_norm_tagged=obj.get("local_norm_tagged", ""),
                tags=frozenset(obj.get("tags", [])),
                word_count=obj.get("word_count", 0),
                complexity=obj.get("complexity", 0.0),
                structured=obj.get("structured", ""),
                source_line=obj.get("source_line", 0),
            ))
    return records
