from __future__ import annotations

import random

import pytest

from gecval.align import EditPair
from gecval.corpus import Edit, Sentence
from gecval.judge import Exemplar, IclMemory, JudgeConfig, ModelEndpoint

SAMPLE_M2 = """\
S I likes cats
A 1 2|||SVA|||like|||REQUIRED|||-NONE-|||0
A 1 2|||SVA|||love|||REQUIRED|||-NONE-|||1

S He go to home every day
A 1 2|||SVA|||goes|||REQUIRED|||-NONE-|||0
A 2 3|||PREP|||-NONE-|||REQUIRED|||-NONE-|||0

S Fine .
A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0
"""


@pytest.fixture
def sample_m2() -> str:
    return SAMPLE_M2


@pytest.fixture
def sentence() -> Sentence:
    return Sentence("doc", 0, tuple("He go to home every day".split()),
                    prev="Hello .", next="Bye .")


@pytest.fixture
def simple_pair() -> EditPair:
    return EditPair(
        s1=("I", "likes", "cats"),
        s2=("I", "like", "cats"),
        edit=Edit(1, 2, ("like",)),
        prev="Hi .",
        next="Bye .",
    )


def make_memory(n_valid: int = 1, n_invalid: int = 1) -> IclMemory:
    exemplars = []
    for i in range(n_valid):
        exemplars.append(Exemplar(
            EditPair(("a", f"v{i}"), ("a", f"w{i}"), Edit(1, 2, (f"w{i}",))),
            True, f"valid example {i}.",
        ))
    for i in range(n_invalid):
        exemplars.append(Exemplar(
            EditPair(("b", f"p{i}"), ("b", f"q{i}"), Edit(1, 2, (f"q{i}",))),
            False, f"invalid example {i}.",
        ))
    return IclMemory(tuple(exemplars))


@pytest.fixture
def memory() -> IclMemory:
    return make_memory()


@pytest.fixture
def three_turn_config(memory) -> JudgeConfig:
    turns = tuple(ModelEndpoint(f"model-{i}", retries=2, backoff=0.0) for i in range(3))
    return JudgeConfig(turns=turns, memory=memory, seed=0)


def random_tokens(rng: random.Random, max_len: int = 12, vocab: int = 5) -> tuple[str, ...]:
    return tuple(rng.choice("abcde"[:vocab]) for _ in range(rng.randint(0, max_len)))
