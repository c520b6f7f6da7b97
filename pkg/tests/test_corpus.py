"""Tokenization, BPE learning/application, and vocabulary behavior.

The BPE learner is checked against a from-scratch reference that recounts
pair frequencies each iteration and breaks count ties by lexicographically
smallest pair.
"""

import pytest

from lexmt import BPEModel, Corpus, Vocabulary, apply_bpe, apply_bpe_corpus, build_vocab, detokenize, learn_bpe
from lexmt.corpus import DEFAULT_SPECIALS, filter_long, tokenize

from reference_impls import ref_learn_bpe, ref_split_word


# -- tokenize / Corpus ----------------------------------------------------------


def test_tokenize_splits_words_and_punctuation():
    assert tokenize("don't stop, now!") == ["don", "'", "t", "stop", ",", "now", "!"]
    assert tokenize("") == []
    assert tokenize("  spaced\tout \n") == ["spaced", "out"]


def test_corpus_from_text_drops_empty_lines():
    corpus = Corpus.from_text("a b\n\n  \nc\n".splitlines(), lang="xx")
    assert corpus.sentences == [["a", "b"], ["c"]]
    assert corpus.lang == "xx"
    assert len(corpus) == 2


def test_corpus_validate_rejects_empty_sentence():
    with pytest.raises(ValueError):
        Corpus([["ok"], []], lang="xx").validate()


def test_corpus_validate_rejects_whitespace_in_token():
    with pytest.raises(ValueError):
        Corpus([["a b"]], lang="xx").validate()


def test_corpus_save_load_roundtrip(tmp_path, tiny_corpus):
    path = tmp_path / "corpus.txt"
    tiny_corpus.save(path)
    back = Corpus.load(path, lang=tiny_corpus.lang, pretokenized=True)
    assert back.sentences == tiny_corpus.sentences


def test_filter_long():
    corpus = Corpus([["a"], ["a", "b"], ["a", "b", "c"]], lang="xx")
    kept = filter_long(corpus, max_len=2)
    assert kept.sentences == [["a"], ["a", "b"]]


# -- BPE oracle -------------------------------------------------------------------


def _assert_matches_reference(corpora, n_merges):
    model = learn_bpe(corpora, n_merges)
    ref = ref_learn_bpe([c.sentences for c in corpora], n_merges)
    assert model.merges == ref


def test_learn_bpe_matches_reference_small(tiny_corpus):
    _assert_matches_reference([tiny_corpus], 30)


def test_learn_bpe_matches_reference_multi_corpus(tiny_corpus):
    other = Corpus([list("abab"), list("baba"), ["abba", "baab"]], lang="yy")
    _assert_matches_reference([tiny_corpus, other], 25)


def test_learn_bpe_matches_reference_random(rng):
    # up to 200 word instances, repeated letters force count ties
    alphabet = list("abcde")
    for trial in range(5):
        words = [
            "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=rng.integers(1, 7)))
            for _ in range(40)
        ]
        corpus = Corpus([words[i : i + 5] for i in range(0, 40, 5)], lang="zz")
        _assert_matches_reference([corpus], 50)


def test_learn_bpe_tie_breaks_lexicographically():
    # "ab" and "cd" both occur exactly twice; (a, b) < (c, d)
    corpus = Corpus([["ab", "cd", "ab", "cd"]], lang="xx")
    model = learn_bpe(corpus, 1)
    assert model.merges == [("a", "b")]


def test_learn_bpe_stops_when_exhausted(tiny_corpus):
    model = learn_bpe(tiny_corpus, 10_000)
    assert len(model.merges) < 10_000
    # every corpus word must now be a single token
    for sent in tiny_corpus.sentences:
        for word in sent:
            assert model.split_word(word) == [word]


def test_split_word_matches_reference(tiny_corpus, rng):
    model = learn_bpe(tiny_corpus, 12)
    words = sorted({w for s in tiny_corpus.sentences for w in s}) + ["catdog", "zzz", "a"]
    for word in words:
        got = model.split_word(word)
        want = ref_split_word(word, model.merges)
        # every piece but the last carries the continuation marker
        plain = [got[i][: -len(model.marker)] if i < len(got) - 1 else got[i] for i in range(len(got))]
        assert plain == want


def test_split_word_marker_placement():
    model = BPEModel(merges=[("a", "b")])
    assert model.split_word("abc") == ["ab@@", "c"]
    assert model.split_word("ab") == ["ab"]
    assert model.split_word("x") == ["x"]


def test_bpemodel_rejects_duplicate_merges():
    with pytest.raises(ValueError):
        BPEModel(merges=[("a", "b"), ("a", "b")])


def test_apply_bpe_and_detokenize_roundtrip(tiny_corpus):
    model = learn_bpe(tiny_corpus, 8)
    for sent in tiny_corpus.sentences:
        pieces = apply_bpe(model, sent)
        assert detokenize(pieces) == sent


def test_detokenize_handles_trailing_marker():
    assert detokenize(["ca@@", "t"]) == ["cat"]
    assert detokenize(["ca@@"]) == ["ca"]
    assert detokenize([]) == []


def test_apply_bpe_corpus_preserves_shape(tiny_corpus):
    model = learn_bpe(tiny_corpus, 8)
    split = apply_bpe_corpus(model, tiny_corpus)
    assert len(split) == len(tiny_corpus)
    assert split.lang == tiny_corpus.lang
    for orig, pieces in zip(tiny_corpus.sentences, split.sentences):
        assert detokenize(pieces) == orig


def test_bpe_save_load_roundtrip(tmp_path, tiny_corpus):
    model = learn_bpe(tiny_corpus, 10)
    path = tmp_path / "bpe.model"
    model.save(path)
    back = BPEModel.load(path)
    assert back.merges == model.merges
    assert back.marker == model.marker
    assert back.split_word("cats") == model.split_word("cats")


# -- Vocabulary ----------------------------------------------------------------------


def test_build_vocab_sorts_by_freq_then_token(tiny_corpus):
    vocab = build_vocab(tiny_corpus, min_count=1)
    n = vocab.n_specials
    body = vocab.id_to_token[n:]
    freqs = vocab.freqs[n:]
    assert sorted(zip(body, freqs), key=lambda tf: (-tf[1], tf[0])) == list(zip(body, freqs))
    assert body[0] == "the"  # most frequent token first


def test_build_vocab_min_count(tiny_corpus):
    vocab = build_vocab(tiny_corpus, min_count=2)
    assert "the" in vocab
    assert "chase" in vocab  # occurs twice
    assert "mat" in vocab
    assert "on" in vocab
    assert "log" in vocab
    assert "sat" in vocab
    assert "and" in vocab
    assert "a" in vocab
    assert "," not in vocab  # occurs once


def test_build_vocab_requires_specials(tiny_corpus):
    with pytest.raises(ValueError):
        build_vocab(tiny_corpus, specials=[])


def test_default_specials_present(tiny_vocab):
    assert tiny_vocab.id_to_token[: len(DEFAULT_SPECIALS)] == list(DEFAULT_SPECIALS)
    assert tiny_vocab.pad_id == 0
    assert tiny_vocab.unk_id == 1
    assert tiny_vocab.bos_id == 2
    assert tiny_vocab.eos_id == 3
    assert tiny_vocab.mask_id == 4
    assert tiny_vocab.n_specials == len(DEFAULT_SPECIALS)


def test_vocab_encode_decode(tiny_vocab):
    ids = tiny_vocab.encode(["the", "cat", "never-seen"])
    assert ids[:2] == [tiny_vocab.token_to_id["the"], tiny_vocab.token_to_id["cat"]]
    assert ids[2] == tiny_vocab.unk_id
    assert tiny_vocab.decode(ids[:2]) == ["the", "cat"]


def test_vocab_encode_drop_oov(tiny_vocab):
    assert tiny_vocab.encode(["never-seen", "cat"], drop_oov=True) == [tiny_vocab.token_to_id["cat"]]


def test_vocab_encode_without_unk_raises():
    vocab = Vocabulary(["a", "b"], [2, 1], specials=[])
    with pytest.raises(KeyError):
        vocab.encode(["a", "zzz"])


def test_vocab_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocabulary(["a", "a"], [1, 1], specials=[])
    with pytest.raises(ValueError):
        Vocabulary(["<pad>"], [1], specials=["<pad>"])


def test_vocab_save_load_roundtrip(tmp_path, tiny_vocab):
    path = tmp_path / "vocab.txt"
    tiny_vocab.save(path)
    back = Vocabulary.load(path)
    assert back.id_to_token == tiny_vocab.id_to_token
    assert back.freqs == tiny_vocab.freqs
    assert back.specials == tiny_vocab.specials


def test_vocab_save_load_without_specials(tmp_path):
    vocab = Vocabulary(["b", "a"], [3, 1], specials=[])
    path = tmp_path / "plain.txt"
    vocab.save(path)
    back = Vocabulary.load(path)
    assert back.id_to_token == ["b", "a"]
    assert back.n_specials == 0
