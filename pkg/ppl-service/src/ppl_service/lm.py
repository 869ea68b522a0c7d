"""The pinned scoring model: a smoothed word-level trigram LM.

The JSON artifact fully describes the scoring rule; nothing here is
tunable at runtime.  Perplexity is exp of the negated mean natural-log
probability per token:

    PPL = exp(-(1/N) * sum(ln P(w_i | w_{i-2}, w_{i-1})))

All conditional probabilities are strictly below 1 (additive smoothing
spreads mass over the whole vocabulary), so perplexity is always > 1.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

DEFAULT_MODEL_ID = "tiny-trigram-en-v1"


class EmptyTextError(ValueError):
    """No scoreable tokens in the input."""


class ContextExceededError(ValueError):
    """Input is longer than the model's pinned context window."""

    def __init__(self, token_count: int, window: int):
        super().__init__(
            f"input has {token_count} tokens; the context window is {window}"
        )
        self.token_count = token_count
        self.window = window


@dataclass(frozen=True)
class LanguageModel:
    model_id: str
    token_pattern: str
    bos: str
    unk: str
    alpha: float
    context_window: int
    vocab: frozenset
    trigrams: Mapping[str, Mapping[str, int]]
    context_totals: Mapping[str, int]
    _token_re: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_token_re", re.compile(self.token_pattern))
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.unk not in self.vocab:
            raise ValueError("the unknown marker must be in the vocabulary")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "LanguageModel":
        with Path(path).open(encoding="utf-8") as handle:
            raw = json.load(handle)
        return cls(
            model_id=raw["model_id"],
            token_pattern=raw["token_pattern"],
            bos=raw["bos"],
            unk=raw["unk"],
            alpha=float(raw["alpha"]),
            context_window=int(raw["context_window"]),
            vocab=frozenset(raw["vocab"]),
            trigrams=raw["trigrams"],
            context_totals=raw["context_totals"],
        )

    @classmethod
    def bundled(cls, model_id: str = DEFAULT_MODEL_ID) -> "LanguageModel":
        ref = resources.files("ppl_service").joinpath("assets", f"{model_id}.json")
        with resources.as_file(ref) as path:
            return cls.from_file(path)

    def tokenize(self, text: str) -> list[str]:
        return self._token_re.findall(text.lower())

    def probability(self, history: tuple[str, str], token: str) -> float:
        context = " ".join(history)
        count = self.trigrams.get(context, {}).get(token, 0)
        total = self.context_totals.get(context, 0)
        return (count + self.alpha) / (total + self.alpha * len(self.vocab))

    def token_log_probs(self, tokens: list[str]) -> list[float]:
        mapped = [t if t in self.vocab else self.unk for t in tokens]
        history = (self.bos, self.bos)
        out = []
        for token in mapped:
            out.append(math.log(self.probability(history, token)))
            history = (history[1], token)
        return out

    def perplexity(self, text: str) -> tuple[float, int]:
        """Score one text; returns (perplexity, token_count)."""
        tokens = self.tokenize(text)
        if not tokens:
            raise EmptyTextError("no scoreable tokens in the input")
        if len(tokens) > self.context_window:
            raise ContextExceededError(len(tokens), self.context_window)
        log_probs = self.token_log_probs(tokens)
        mean_log = math.fsum(log_probs) / len(log_probs)
        return math.exp(-mean_log), len(tokens)


def load_default(path: Optional[Union[str, Path]] = None) -> LanguageModel:
    if path is not None:
        return LanguageModel.from_file(path)
    return LanguageModel.bundled()
