import numpy as np
import pytest

from lexmt import Corpus, Vocabulary, build_vocab


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_corpus():
    text = [
        "the cat sat on the mat",
        "the dog sat on the log",
        "a cat and a dog",
        "the mat and the log",
        "cats chase dogs , dogs chase cats",
    ]
    return Corpus([s.split() for s in text], lang="en")


@pytest.fixture
def tiny_vocab(tiny_corpus):
    return build_vocab(tiny_corpus, min_count=1)


def random_token_sentences(rng, n_sentences, alphabet, min_len=1, max_len=8):
    """Random word-token sentences over a small alphabet."""
    out = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        out.append([alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=length)])
    return out
