"""Per-token log-probability providers for the fluency score.

The built-in provider is a token-bigram model with add-one smoothing
fit on a plain-text corpus; it keeps the whole toolkit runnable
offline. A neural scoring service speaking the /logprobs wire protocol
is a drop-in upgrade via HttpLogprobProvider.

Normalization knob: the bigram model scores one log-probability per
corpus token, so H divides by the corpus token count. The HTTP provider
returns the model's own (sub)tokenization; H then divides by the
subword count, with any null leading log-probability dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .corpus import Sentence

_BOS = "<s>"
_UNK = "<unk>"


class FluencyTransportError(RuntimeError):
    """The log-probability endpoint failed or answered out of shape."""


@dataclass
class BigramFluencyModel:
    """Add-one-smoothed token bigram model emitting natural-log probs."""

    bigrams: dict[tuple[str, str], int] = field(default_factory=dict)
    context_totals: dict[str, int] = field(default_factory=dict)
    vocab: set[str] = field(default_factory=set)

    @classmethod
    def fit(cls, sentences: Iterable[Sequence[str]]) -> "BigramFluencyModel":
        model = cls()
        for tokens in sentences:
            prev = _BOS
            for token in tokens:
                model.vocab.add(token)
                model.bigrams[(prev, token)] = model.bigrams.get((prev, token), 0) + 1
                model.context_totals[prev] = model.context_totals.get(prev, 0) + 1
                prev = token
        model.vocab.add(_UNK)
        return model

    @classmethod
    def fit_file(cls, path: str | Path) -> "BigramFluencyModel":
        """Fit on a corpus file of one space-tokenized sentence per line."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.fit(line.split() for line in lines if line.strip())

    def _known(self, token: str) -> str:
        return token if token in self.vocab else _UNK

    def logprob(self, prev: str, token: str) -> float:
        prev = prev if prev == _BOS else self._known(prev)
        token = self._known(token)
        count = self.bigrams.get((prev, token), 0)
        total = self.context_totals.get(prev, 0)
        return math.log((count + 1) / (total + len(self.vocab)))

    def logprobs(self, tokens: Sequence[str]) -> list[float]:
        if not tokens:
            raise ValueError("cannot score an empty token sequence")
        out = []
        prev = _BOS
        for token in tokens:
            out.append(self.logprob(prev, token))
            prev = token
        return out

    def __call__(self, sentence: Sentence) -> list[float]:
        return self.logprobs(sentence.tokens)


@dataclass
class HttpLogprobProvider:
    """Fetch per-token log-probabilities from a scoring service.

    POSTs {text} to the endpoint and expects {tokens, logprobs} back
    with natural-log values; a null first entry (no unconditional
    probability) is dropped before normalization.
    """

    endpoint: str
    timeout: float = 30.0
    post: Callable = requests.post

    def __call__(self, sentence: Sentence) -> list[float]:
        try:
            response = self.post(self.endpoint, json={"text": sentence.text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise FluencyTransportError(f"logprob endpoint unreachable: {exc}") from exc
        if response.status_code != 200:
            raise FluencyTransportError(f"logprob endpoint returned HTTP {response.status_code}")
        data = response.json()
        if not isinstance(data, dict) or "logprobs" not in data or "tokens" not in data:
            raise FluencyTransportError(f"malformed logprob response: {data!r}")
        if len(data["logprobs"]) != len(data["tokens"]):
            raise FluencyTransportError("tokens and logprobs lengths differ")
        values = [v for v in data["logprobs"] if v is not None]
        if not values:
            raise FluencyTransportError("no usable log-probabilities in response")
        if any(v > 0 for v in values):
            raise FluencyTransportError("log-probabilities must be <= 0")
        return values
