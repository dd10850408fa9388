"""Composes retrieval, prompt construction and the chat client.

One :class:`DialectTranslator` fixes a pipeline ("zero", "p1", "p2"),
an example budget n, and a deep-search mode, then turns (sentence,
dialect) pairs into prompts and translations. Zero-shot needs no
retriever at all.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .llm import ChatClient, TranslationResult
from .prompt import DEFAULT_CHAR_BUDGET, FewShotPrompt, build_p1, build_p2, build_zero_shot
from .retrieve import Retriever

PIPELINES = ("zero", "p1", "p2")


@dataclass
class DialectTranslator:
    client: ChatClient
    pipeline: str
    n: int = 5
    retriever: Retriever | None = None
    deep: str = "auto"
    template_dir: str | None = None
    char_budget: int = DEFAULT_CHAR_BUDGET

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.pipeline != "zero" and self.retriever is None:
            raise DataError(f"pipeline {self.pipeline} needs a corpus and index")

    def build_prompt(self, sentence: str, dialect: str) -> FewShotPrompt:
        if self.pipeline == "zero":
            return build_zero_shot(sentence, dialect, template_dir=self.template_dir)
        candidates = []
        if self.n > 0:
            if self.pipeline == "p1":
                candidates = self.retriever.retrieve_p1(sentence, dialect, self.n).candidates
            else:
                candidates = self.retriever.retrieve_p2(
                    sentence, dialect, self.n, deep=self.deep
                ).candidates
        builder = build_p1 if self.pipeline == "p1" else build_p2
        return builder(
            sentence,
            dialect,
            candidates,
            self.n,
            template_dir=self.template_dir,
            char_budget=self.char_budget,
        )

    def translate(self, sentence: str, dialect: str) -> tuple[FewShotPrompt, TranslationResult]:
        prompt = self.build_prompt(sentence, dialect)
        return prompt, self.client.translate(prompt)

    def translate_many(
        self, items: list[tuple[str, str]], parallelism: int = 1
    ) -> list[TranslationResult]:
        """Translate (sentence, dialect) pairs, preserving input order."""
        prompts = [self.build_prompt(sentence, dialect) for sentence, dialect in items]
        return self.client.translate_batch(prompts, parallelism=parallelism)
