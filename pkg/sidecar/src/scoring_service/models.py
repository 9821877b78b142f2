"""Scoring models behind the service endpoints.

All three are deterministic functions of their input and a fixed model
state, so identical requests always produce identical responses:

- a word-bigram language model with add-one smoothing for per-token
  natural-log probabilities,
- a hashed bag-of-ngrams sentence embedder for cosine similarity,
- an edit-validity classifier: either a published heuristic over
  (similarity, fluency gain) or a small logistic checkpoint loaded
  from disk.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

_BOS = "<s>"
_UNK = "<unk>"

EMBEDDING_DIM = 256


def tokenize(text: str) -> list[str]:
    """The models' own tokenization: lowercased whitespace tokens."""
    return text.lower().split()


def default_corpus_path():
    return resources.files("scoring_service").joinpath("data/corpus.txt")


@dataclass
class BigramLogprobModel:
    """Add-one-smoothed bigram LM emitting natural-log probabilities."""

    bigrams: dict[tuple[str, str], int] = field(default_factory=dict)
    totals: dict[str, int] = field(default_factory=dict)
    vocab: set[str] = field(default_factory=set)
    version: str = "bigram-v1"

    @classmethod
    def fit_text(cls, text: str, version_salt: str = "") -> "BigramLogprobModel":
        model = cls()
        for line in text.splitlines():
            tokens = tokenize(line)
            if not tokens:
                continue
            prev = _BOS
            for token in tokens:
                model.vocab.add(token)
                model.bigrams[(prev, token)] = model.bigrams.get((prev, token), 0) + 1
                model.totals[prev] = model.totals.get(prev, 0) + 1
                prev = token
        model.vocab.add(_UNK)
        digest = hashlib.sha256((version_salt + text).encode("utf-8")).hexdigest()[:8]
        model.version = f"bigram-v1-{digest}"
        return model

    @classmethod
    def load(cls, path: str | Path | None = None) -> "BigramLogprobModel":
        if path is None:
            return cls.fit_text(default_corpus_path().read_text(encoding="utf-8"))
        return cls.fit_text(Path(path).read_text(encoding="utf-8"))

    def _known(self, token: str) -> str:
        return token if token in self.vocab else _UNK

    def logprob(self, prev: str, token: str) -> float:
        prev = prev if prev == _BOS else self._known(prev)
        count = self.bigrams.get((prev, self._known(token)), 0)
        total = self.totals.get(prev, 0)
        return math.log((count + 1) / (total + len(self.vocab)))

    def score(self, text: str) -> tuple[list[str], list[float]]:
        """Model tokenization of the input plus one logprob per token."""
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("empty text")
        logprobs = []
        prev = _BOS
        for token in tokens:
            logprobs.append(self.logprob(prev, token))
            prev = token
        return tokens, logprobs

    def mean_neg_logprob(self, text: str) -> float:
        _, logprobs = self.score(text)
        return -sum(logprobs) / len(logprobs)


@dataclass
class HashedEmbedder:
    """Signed hashed bag of token uni/bigrams, L2-normalized.

    Deterministic and vocabulary-free; cosine similarity of two
    embeddings is exactly 1 for identical inputs.
    """

    dim: int = EMBEDDING_DIM
    version: str = "hashed-ngram-v1"

    def _features(self, tokens: list[str]):
        yield from tokens
        for a, b in zip(tokens, tokens[1:]):
            yield f"{a} {b}"

    def embed(self, text: str) -> list[float]:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("empty text")
        vector = [0.0] * self.dim
        for feature in self._features(tokens):
            digest = hashlib.sha256(feature.encode("utf-8")).digest()
            index = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vector[index] += sign
        norm = math.sqrt(sum(v * v for v in vector))
        if norm == 0:
            # all features cancelled in one bucket; fall back to a unit axis
            vector[0] = 1.0
            norm = 1.0
        return [v / norm for v in vector]

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.embed(a), self.embed(b)
        return max(-1.0, min(1.0, sum(x * y for x, y in zip(va, vb))))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass
class HeuristicClassifier:
    """Published no-checkpoint rule over the two auxiliary signals.

    score = max(0, similarity(s1, s2)) * sigmoid(gain_scale * (H(s1) - H(s2)))
    with score forced to 0 for identical sides (no contrast means no
    improvement). valid == score >= threshold by construction.
    """

    lm: BigramLogprobModel
    embedder: HashedEmbedder
    threshold: float = 0.5
    gain_scale: float = 12.0
    version: str = "heuristic-v1"

    def classify(self, s1: str, s2: str) -> tuple[bool, float]:
        if tokenize(s1) == tokenize(s2):
            return False, 0.0
        meaning = max(0.0, self.embedder.similarity(s1, s2))
        gain = self.lm.mean_neg_logprob(s1) - self.lm.mean_neg_logprob(s2)
        score = meaning * _sigmoid(self.gain_scale * gain)
        score = max(0.0, min(1.0, score))
        return score >= self.threshold, score


@dataclass
class CheckpointClassifier:
    """Logistic head over [similarity, fluency gain] loaded from disk.

    Checkpoint JSON: {"weights": [w_sim, w_gain], "bias": b,
    "threshold": t, "version": id}. Training happens elsewhere; this
    only serves inference.
    """

    lm: BigramLogprobModel
    embedder: HashedEmbedder
    weights: tuple[float, float]
    bias: float
    threshold: float
    version: str

    @classmethod
    def load(cls, path: str | Path, lm: BigramLogprobModel,
             embedder: HashedEmbedder) -> "CheckpointClassifier":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        weights = obj["weights"]
        if len(weights) != 2:
            raise ValueError("checkpoint must carry exactly two weights")
        return cls(
            lm=lm,
            embedder=embedder,
            weights=(float(weights[0]), float(weights[1])),
            bias=float(obj["bias"]),
            threshold=float(obj.get("threshold", 0.5)),
            version=str(obj.get("version", "checkpoint-v1")),
        )

    def classify(self, s1: str, s2: str) -> tuple[bool, float]:
        if tokenize(s1) == tokenize(s2):
            return False, 0.0
        similarity = self.embedder.similarity(s1, s2)
        gain = self.lm.mean_neg_logprob(s1) - self.lm.mean_neg_logprob(s2)
        score = _sigmoid(self.weights[0] * similarity + self.weights[1] * gain + self.bias)
        return score >= self.threshold, score
