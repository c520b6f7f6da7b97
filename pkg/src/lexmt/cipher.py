"""Synthetic cipher language pair: a controllable stand-in for a real
low-resource pair with a known gold lexicon.

Both languages realize the same abstract token process: a shared unigram
distribution with mild rank skew and a low-rank bigram transition model,
so the two corpora have near-isomorphic co-occurrence geometry. Each
abstract meaning gets one surface word per language. A configurable
fraction of meanings are anchors whose surface is identical in both
languages; all other surfaces use per-language disjoint alphabets, so no
non-anchor subword can collide across languages. The gold dictionary maps
every L1 surface to its L2 surface (anchors map to themselves).

The train corpora are independent samples (non-parallel); validation and
test sets are parallel by construction (the same abstract sentences
rendered in both languages).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .mapping import BilingualDictionary

L1_LETTERS = "abcdefghij"
L2_LETTERS = "klmnopqrst"
ANCHOR_LETTERS = "uvwxyz"


@dataclass
class CipherSpec:
    vocab_size: int = 1000
    n_sentences: int = 50000
    min_len: int = 5
    max_len: int = 15
    anchor_fraction: float = 0.05
    seed: int = 0
    n_valid: int = 0
    n_test: int = 0
    latent_dim: int = 16
    unigram_skew: float = 0.8

    def validate(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.n_sentences < 1:
            raise ValueError("n_sentences must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if not 0.0 < self.anchor_fraction <= 1.0:
            raise ValueError("anchor_fraction must be in (0, 1]")
        if self.n_valid < 0 or self.n_test < 0:
            raise ValueError("n_valid and n_test must be >= 0")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")


@dataclass
class CipherBundle:
    """Everything one pipeline run needs, generated in one deterministic pass."""

    l1: Corpus
    l2: Corpus
    gold: BilingualDictionary
    valid: tuple[Corpus, Corpus] | None = None
    test: tuple[Corpus, Corpus] | None = None
    surfaces: tuple[list[str], list[str]] = field(default_factory=lambda: ([], []))


def _make_surfaces(rng: np.random.Generator, count: int, letters: str, taken: set[str]) -> list[str]:
    """Distinct pronounceable-ish words: 2-4 two-letter syllables."""
    syllables = ["".join(rng.choice(list(letters), size=2)) for _ in range(30)]
    out = []
    for _ in range(count):
        while True:
            n_syll = int(rng.integers(2, 5))
            word = "".join(syllables[int(rng.integers(0, len(syllables)))] for _ in range(n_syll))
            if word not in taken:
                taken.add(word)
                out.append(word)
                break
    return out


def _transition_cdfs(rng: np.random.Generator, v: int, latent_dim: int, unigram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise CDFs for the start distribution and the bigram transitions.

    Transition row m is proportional to unigram * exp(a_m . b / sqrt(g)),
    which keeps the marginal close to the unigram skew while giving every
    meaning a distinctive context signature.
    """
    a = rng.normal(0.0, 1.0, size=(v, latent_dim))
    b = rng.normal(0.0, 1.0, size=(v, latent_dim))
    logits = (a @ b.T) / np.sqrt(latent_dim) + np.log(unigram)[None, :]
    logits -= logits.max(axis=1, keepdims=True)
    t = np.exp(logits)
    t /= t.sum(axis=1, keepdims=True)
    return np.cumsum(unigram), np.cumsum(t, axis=1)


def _sample_sentences(
    rng: np.random.Generator,
    n: int,
    min_len: int,
    max_len: int,
    start_cdf: np.ndarray,
    trans_cdf: np.ndarray,
) -> list[list[int]]:
    lengths = rng.integers(min_len, max_len + 1, size=n)
    top = len(start_cdf) - 1
    sentences = []
    for length in lengths:
        u = rng.random(int(length))
        # clamp guards the u >= cdf[-1] edge from accumulated rounding
        sent = [min(int(np.searchsorted(start_cdf, u[0])), top)]
        for t in range(1, int(length)):
            sent.append(min(int(np.searchsorted(trans_cdf[sent[-1]], u[t])), top))
        sentences.append(sent)
    return sentences


def _render(sentences: list[list[int]], surfaces: list[str], lang: str) -> Corpus:
    return Corpus([[surfaces[m] for m in sent] for sent in sentences], lang)


def gen_cipher_bundle(spec: CipherSpec) -> CipherBundle:
    """Generate train corpora, the gold lexicon, and optional parallel sets."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    v = spec.vocab_size
    n_anchor = max(1, int(round(spec.anchor_fraction * v))) if spec.anchor_fraction < 1.0 else v
    anchor_ids = set(rng.choice(v, size=n_anchor, replace=False).tolist())
    taken: set[str] = set()
    anchor_surfaces = _make_surfaces(rng, n_anchor, ANCHOR_LETTERS, taken)
    surf1_pool = _make_surfaces(rng, v - n_anchor, L1_LETTERS, taken)
    surf2_pool = _make_surfaces(rng, v - n_anchor, L2_LETTERS, taken)
    surf1, surf2 = [], []
    i_anchor = i_plain = 0
    for m in range(v):
        if m in anchor_ids:
            surf1.append(anchor_surfaces[i_anchor])
            surf2.append(anchor_surfaces[i_anchor])
            i_anchor += 1
        else:
            surf1.append(surf1_pool[i_plain])
            surf2.append(surf2_pool[i_plain])
            i_plain += 1
    unigram = (np.arange(v) + 5.0) ** -spec.unigram_skew
    unigram /= unigram.sum()
    start_cdf, trans_cdf = _transition_cdfs(rng, v, spec.latent_dim, unigram)
    sample1 = _sample_sentences(rng, spec.n_sentences, spec.min_len, spec.max_len, start_cdf, trans_cdf)
    sample2 = _sample_sentences(rng, spec.n_sentences, spec.min_len, spec.max_len, start_cdf, trans_cdf)
    gold = BilingualDictionary([(surf1[m], surf2[m]) for m in range(v)], provenance="gold")
    bundle = CipherBundle(
        l1=_render(sample1, surf1, "l1"),
        l2=_render(sample2, surf2, "l2"),
        gold=gold,
        surfaces=(surf1, surf2),
    )
    if spec.n_valid:
        shared = _sample_sentences(rng, spec.n_valid, spec.min_len, spec.max_len, start_cdf, trans_cdf)
        bundle.valid = (_render(shared, surf1, "l1"), _render(shared, surf2, "l2"))
    if spec.n_test:
        shared = _sample_sentences(rng, spec.n_test, spec.min_len, spec.max_len, start_cdf, trans_cdf)
        bundle.test = (_render(shared, surf1, "l1"), _render(shared, surf2, "l2"))
    return bundle


def gen_cipher_pair(spec: CipherSpec) -> tuple[Corpus, Corpus, BilingualDictionary]:
    """The train corpora and the gold lexicon (gold size = vocab size)."""
    bundle = gen_cipher_bundle(spec)
    return bundle.l1, bundle.l2, bundle.gold


def apply_mapping(corpus: Corpus, table: dict[str, str], lang: str = "") -> Corpus:
    """Token-wise substitution; raises on tokens missing from the table."""
    out = []
    for i, sent in enumerate(corpus.sentences):
        row = []
        for tok in sent:
            if tok not in table:
                raise ValueError(f"token {tok!r} in sentence {i} missing from mapping table")
            row.append(table[tok])
        out.append(row)
    return Corpus(out, lang or corpus.lang)
