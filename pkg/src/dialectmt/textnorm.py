"""Text normalization and tokenization for Bengali corpus processing.

Two normalization regimes exist:

* ``normalize_basic``: trim + whitespace collapse, used for the transcript
  corpus whose text is long-form and already fairly clean.
* ``normalize_full``: the heavier chain for short conversational pairs,
  Unicode NFC, zero-width removal, Bengali digit mapping, punctuation
  unification, character-run collapse, whitespace collapse.

Both are idempotent: applying them twice gives the same string as once.
The tokenizer splits on whitespace and detaches sentence punctuation so
that downstream BM25, WER and SHORT-tagging all count tokens identically.
"""

from __future__ import annotations

import re
import unicodedata

from .errors import InvalidEncoding

_WS_RE = re.compile(r"\s+")

# U+200B zero width space, U+200C ZWNJ, U+200D ZWJ, U+FEFF BOM/ZWNBSP
_ZERO_WIDTH_RE = re.compile("[​‌‍﻿]")

# Runs of 3+ identical non-digit characters collapse to 2. Digits are
# exempt so years and amounts ("2000") survive.
_CHAR_RUN_RE = re.compile(r"(\D)\1{2,}")

# Bengali digit block U+09E6..U+09EF maps onto ASCII 0..9.
_BENGALI_DIGITS = {0x09E6 + i: ord("0") + i for i in range(10)}

# Quote and dash variants unify onto ASCII. The Bengali danda (U+0964) and
# double danda (U+0965) are kept as-is; the ASCII pipe is a common keyboard
# stand-in for the danda and is folded into it, which also keeps "|" out of
# normalized text (the structured-representation separator relies on that).
_PUNCT_MAP = {
    0x2018: ord("'"),  # left single quote
    0x2019: ord("'"),  # right single quote
    0x201A: ord("'"),  # low single quote
    0x201B: ord("'"),  # reversed single quote
    0x2032: ord("'"),  # prime
    0x201C: ord('"'),  # left double quote
    0x201D: ord('"'),  # right double quote
    0x201E: ord('"'),  # low double quote
    0x201F: ord('"'),  # reversed double quote
    0x2033: ord('"'),  # double prime
    0x00AB: ord('"'),  # left guillemet
    0x00BB: ord('"'),  # right guillemet
    0x2010: ord("-"),  # hyphen
    0x2011: ord("-"),  # non-breaking hyphen
    0x2012: ord("-"),  # figure dash
    0x2013: ord("-"),  # en dash
    0x2014: ord("-"),  # em dash
    0x2015: ord("-"),  # horizontal bar
    0x2212: ord("-"),  # minus sign
    0x007C: 0x0964,    # pipe -> danda
}

# Punctuation detached by the tokenizer when leading/trailing a chunk.
TOKEN_PUNCT = frozenset("।॥.,?!？！")


def _ensure_text(text: str | bytes) -> str:
    """Decode bytes strictly; verify str round-trips through UTF-8."""
    if isinstance(text, bytes):
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidEncoding(str(exc)) from exc
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise InvalidEncoding(str(exc)) from exc
    return text


def normalize_basic(text: str | bytes) -> str:
    """Trim and collapse whitespace; reject invalid UTF-8.

    Raises:
        InvalidEncoding: input bytes are not decodable as UTF-8.
    """
    return _WS_RE.sub(" ", _ensure_text(text)).strip()


def normalize_full(text: str | bytes) -> str:
    """Full normalization chain for the sentence-pair corpus.

    Applies, in order: Unicode NFC, zero-width character removal (with a
    second NFC pass, since removal can expose composable vowel-sign pairs),
    Bengali digit to ASCII digit mapping, quote/dash unification, collapse
    of runs of 3+ identical non-digit characters to 2, whitespace collapse,
    trim. Idempotent.

    Raises:
        InvalidEncoding: input bytes are not decodable as UTF-8.
    """
    s = unicodedata.normalize("NFC", _ensure_text(text))
    s = unicodedata.normalize("NFC", _ZERO_WIDTH_RE.sub("", s))
    s = s.translate(_BENGALI_DIGITS)
    s = s.translate(_PUNCT_MAP)
    s = _CHAR_RUN_RE.sub(r"\1\1", s)
    return _WS_RE.sub(" ", s).strip()


def tokenize(text: str) -> list[str]:
    """Split on whitespace, detaching sentence punctuation as own tokens.

    Leading and trailing danda, period, comma, question and exclamation
    marks come off one character at a time, preserving order:
    ``"ami bhalo achi?"`` -> ``["ami", "bhalo", "achi", "?"]``.
    """
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        while chunk and chunk[0] in TOKEN_PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in TOKEN_PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens
