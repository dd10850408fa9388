"""Prompt rendering for zero-shot and both few-shot pipelines.

Templates live as text files (``templates/{zero,p1,p2}.txt``) with
``{dialect}``, ``{examples}`` and ``{input}`` placeholders; a directory
override lets experiments swap wording without code changes. Rendering is
deterministic byte-for-byte for fixed template version and inputs.

Pipeline-1 examples are plain dialect sentences; pipeline-2 examples are
``STANDARD: ... → LOCAL: ...`` pairs. Retrieval tag markers ([[SHORT]]
and friends) never appear in prompt text. Examples that would push the
prompt past the character budget are dropped from the tail (lowest rank
first), never reordered.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import EmptyInput
from .retrieve import RetrievalCandidate

TEMPLATE_VERSION = "v1"
DEFAULT_CHAR_BUDGET = 8000

_BLANK_RUN_RE = re.compile(r"\n{3,}")


@dataclass(frozen=True)
class FewShotPrompt:
    """A rendered prompt plus the examples and budget that produced it."""

    text: str
    examples: tuple  # ordered (record id, rendered example) pairs
    n_requested: int
    n_used: int
    pipeline: str  # "zero" | "P1" | "P2"
    dialect: str
    input_sentence: str
    template_version: str = TEMPLATE_VERSION


def load_template(name: str, template_dir: str | None = None) -> str:
    """Read a template by name ("zero", "p1", "p2")."""
    if template_dir is not None:
        return Path(template_dir, f"{name}.txt").read_text(encoding="utf-8")
    return resources.files("dialectmt.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def _render(template: str, dialect: str, examples_block: str, input_sentence: str) -> str:
    text = (
        template.replace("{dialect}", dialect)
        .replace("{examples}", examples_block)
        .replace("{input}", input_sentence)
    )
    # An empty examples block leaves a blank hole; collapse it.
    return _BLANK_RUN_RE.sub("\n\n", text)


def _assemble(
    pipeline: str,
    template_name: str,
    input_sentence: str,
    dialect: str,
    rendered: list[tuple[str, str]],
    n: int,
    template_dir: str | None,
    char_budget: int,
) -> FewShotPrompt:
    if not input_sentence.strip():
        raise EmptyInput("input sentence is empty")
    template = load_template(template_name, template_dir)
    chosen = rendered[: max(n, 0)]
    while True:
        block = "\n".join(line for _, line in chosen)
        text = _render(template, dialect, block, input_sentence)
        if len(text) <= char_budget or not chosen:
            break
        chosen = chosen[:-1]  # drop lowest-ranked example
    return FewShotPrompt(
        text=text,
        examples=tuple(chosen),
        n_requested=n,
        n_used=len(chosen),
        pipeline=pipeline,
        dialect=dialect,
        input_sentence=input_sentence,
    )


def build_zero_shot(
    input_sentence: str,
    dialect: str,
    template_dir: str | None = None,
) -> FewShotPrompt:
    """Instruction + input only; the no-retrieval baseline."""
    return _assemble(
        "zero", "zero", input_sentence, dialect, [], 0, template_dir, DEFAULT_CHAR_BUDGET
    )


def build_p1(
    input_sentence: str,
    dialect: str,
    candidates: list[RetrievalCandidate],
    n: int,
    template_dir: str | None = None,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> FewShotPrompt:
    """Transcript-style prompt: each example is one dialect sentence."""
    rendered = [(c.record.id, f"- {c.record.text_norm}") for c in candidates]
    return _assemble("P1", "p1", input_sentence, dialect, rendered, n, template_dir, char_budget)


def build_p2(
    input_sentence: str,
    dialect: str,
    candidates: list[RetrievalCandidate],
    n: int,
    template_dir: str | None = None,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> FewShotPrompt:
    """Pair-style prompt: STANDARD → LOCAL lines in rank order.

    Candidates are rendered from their stored pair fields (tags excluded);
    callers pass dialect-filtered, score-sorted candidates from retrieval.
    """
    rendered = [
        (c.record.id, f"STANDARD: {c.record.standard_norm} → LOCAL: {c.record.text_norm}")
        for c in candidates
    ]
    return _assemble("P2", "p2", input_sentence, dialect, rendered, n, template_dir, char_budget)
