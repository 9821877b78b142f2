from __future__ import annotations

import math

import pytest

from gecval.corpus import Sentence
from gecval.fluency import BigramFluencyModel, FluencyTransportError, HttpLogprobProvider
from gecval.metric import fluency_score

CORPUS = [
    "the cat sat on the mat".split(),
    "the dog sat on the rug".split(),
    "a cat and a dog".split(),
    "the cat and the dog sat".split(),
]


@pytest.fixture
def model():
    return BigramFluencyModel.fit(CORPUS)


class TestBigramModel:
    def test_logprobs_are_negative(self, model):
        lps = model.logprobs("the cat sat".split())
        assert len(lps) == 3
        assert all(lp < 0 for lp in lps)

    def test_seen_bigram_beats_unseen(self, model):
        seen = model.logprob("the", "cat")
        unseen = model.logprob("the", "zebra")
        assert seen > unseen

    def test_natural_sentence_beats_scrambled(self, model):
        natural = "the cat sat on the mat".split()
        scrambled = "mat the on sat cat the".split()
        mean = lambda xs: sum(xs) / len(xs)  # noqa: E731
        assert mean(model.logprobs(natural)) > mean(model.logprobs(scrambled))

    def test_unknown_tokens_map_to_unk(self, model):
        lps = model.logprobs(["totally", "unknown", "words"])
        assert all(lp < 0 for lp in lps)

    def test_empty_sequence_rejected(self, model):
        with pytest.raises(ValueError):
            model.logprobs([])

    def test_deterministic(self, model):
        tokens = "the dog sat".split()
        assert model.logprobs(tokens) == model.logprobs(tokens)

    def test_callable_on_sentence(self, model):
        sentence = Sentence("d", 0, ("the", "cat"))
        assert model(sentence) == model.logprobs(("the", "cat"))

    def test_fit_file(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("a b c\nb c d\n\n", encoding="utf-8")
        model = BigramFluencyModel.fit_file(path)
        assert model.logprob("a", "b") > model.logprob("a", "d")

    def test_integrates_with_fluency_score(self, model):
        sentence = Sentence("d", 0, tuple("the cat sat".split()))
        result = fluency_score(model(sentence))
        assert 0.0 < result.f < 1.0
        assert result.h > 0
        assert math.isclose(result.f, 1.0 / (1.0 + result.h))


class FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        return self._payload


class TestHttpProvider:
    def sentence(self):
        return Sentence("d", 0, ("a", "b"))

    def test_drops_null_first_logprob(self):
        def post(url, json=None, timeout=None):
            return FakeResponse(payload={"tokens": ["a", "b"], "logprobs": [None, -1.0]})

        provider = HttpLogprobProvider("http://x/logprobs", post=post)
        assert provider(self.sentence()) == [-1.0]

    def test_length_mismatch_rejected(self):
        def post(url, json=None, timeout=None):
            return FakeResponse(payload={"tokens": ["a"], "logprobs": [-1.0, -2.0]})

        provider = HttpLogprobProvider("http://x/logprobs", post=post)
        with pytest.raises(FluencyTransportError):
            provider(self.sentence())

    def test_positive_logprob_rejected(self):
        def post(url, json=None, timeout=None):
            return FakeResponse(payload={"tokens": ["a", "b"], "logprobs": [0.5, -1.0]})

        provider = HttpLogprobProvider("http://x/logprobs", post=post)
        with pytest.raises(FluencyTransportError):
            provider(self.sentence())

    def test_http_error_propagates(self):
        def post(url, json=None, timeout=None):
            return FakeResponse(status_code=503)

        provider = HttpLogprobProvider("http://x/logprobs", post=post)
        with pytest.raises(FluencyTransportError):
            provider(self.sentence())
