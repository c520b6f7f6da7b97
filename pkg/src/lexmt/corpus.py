"""Text ingestion, tokenization, BPE and vocabulary construction.

Everything downstream (embeddings, language models) consumes corpora that
went through this module: raw text -> tokens -> BPE subwords -> id sequences.
The tokenizer is a deliberately simple whitespace + punctuation splitter;
BPE follows the usual iterative most-frequent-pair merging with "@@" as the
continuation marker on non-final subwords.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

PAD = "<pad>"
UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"
MASK = "<mask>"
DEFAULT_SPECIALS = (PAD, UNK, BOS, EOS, MASK)

BPE_MARKER = "@@"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    """Split text into word and punctuation tokens.

    Runs of word characters stay together, every other non-space character
    becomes its own token. "Hello, world!" -> ["Hello", ",", "world", "!"].
    """
    if lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


@dataclass
class Corpus:
    """An ordered list of token sequences with a language tag."""

    sentences: list[list[str]]
    lang: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def validate(self) -> None:
        for i, sent in enumerate(self.sentences):
            if not sent:
                raise ValueError(f"empty sentence at line {i}")
            for tok in sent:
                if not tok or any(c.isspace() for c in tok):
                    raise ValueError(f"token with whitespace at line {i}: {tok!r}")

    @classmethod
    def from_text(cls, lines, lang: str = "", lowercase: bool = False) -> "Corpus":
        """Tokenize raw lines, dropping lines that come out empty."""
        sentences = []
        for line in lines:
            toks = tokenize(line, lowercase=lowercase)
            if toks:
                sentences.append(toks)
        return cls(sentences, lang)

    @classmethod
    def load(cls, path, lang: str = "", pretokenized: bool = True) -> "Corpus":
        """Read a one-sentence-per-line UTF-8 file.

        With pretokenized=True lines are split on whitespace; otherwise the
        simplified tokenizer is applied.
        """
        with open(path, encoding="utf-8") as f:
            if pretokenized:
                sentences = [line.split() for line in f]
                sentences = [s for s in sentences if s]
                return cls(sentences, lang)
            return cls.from_text(f, lang)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for sent in self.sentences:
                f.write(" ".join(sent) + "\n")


# ---------------------------------------------------------------------------
# BPE
# ---------------------------------------------------------------------------


@dataclass
class BPEModel:
    """Ordered merge list plus the continuation marker convention."""

    merges: list[tuple[str, str]]
    marker: str = BPE_MARKER
    _ranks: dict = field(default_factory=dict, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pair in BPE model")
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for a, b in self.merges:
                f.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path, marker: str = BPE_MARKER) -> "BPEModel":
        merges = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                a, b = line.split(" ")
                merges.append((a, b))
        return cls(merges, marker)

    def split_word(self, word: str) -> list[str]:
        """Decompose one word into subwords, marker on all but the last."""
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = list(word)
        while len(symbols) > 1:
            pairs = [(symbols[i], symbols[i + 1]) for i in range(len(symbols) - 1)]
            ranked = [(self._ranks[p], i) for i, p in enumerate(pairs) if p in self._ranks]
            if not ranked:
                break
            best_rank = min(r for r, _ in ranked)
            a, b = self.merges[best_rank]
            merged = []
            i = 0
            while i < len(symbols):
                if i < len(symbols) - 1 and symbols[i] == a and symbols[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        out = [s + self.marker for s in symbols[:-1]] + [symbols[-1]]
        self._cache[word] = out
        return out


def learn_bpe(corpus: Corpus | list[Corpus], n_merges: int, marker: str = BPE_MARKER) -> BPEModel:
    """Learn BPE merges by iteratively merging the most frequent adjacent pair.

    Passing several corpora learns joint merges on their concatenation.
    Ties are broken by lexicographic order of the pair, so the merge list is
    deterministic for a given corpus. Stops early when no pairs are left,
    returning min(n_merges, available) merges.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    corpora = corpus if isinstance(corpus, list) else [corpus]
    word_freq: Counter[str] = Counter()
    for c in corpora:
        for sent in c.sentences:
            word_freq.update(sent)
    if not word_freq:
        raise ValueError("empty corpus")

    # word id -> (symbol tuple, frequency); pair stats reference word ids
    words: list[list[str]] = []
    freqs: list[int] = []
    for w, f in sorted(word_freq.items()):
        words.append(list(w))
        freqs.append(f)

    pair_counts: Counter[tuple[str, str]] = Counter()
    pair_words: dict[tuple[str, str], set[int]] = {}

    def count_word(wi: int, sign: int) -> None:
        syms = words[wi]
        f = freqs[wi] * sign
        for i in range(len(syms) - 1):
            p = (syms[i], syms[i + 1])
            pair_counts[p] += f
            if sign > 0:
                pair_words.setdefault(p, set()).add(wi)

    for wi in range(len(words)):
        count_word(wi, +1)

    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        best_pair = None
        best_count = 0
        for p, cnt in pair_counts.items():
            if cnt > best_count or (cnt == best_count and best_pair is not None and p < best_pair):
                best_pair, best_count = p, cnt
        if best_pair is None or best_count <= 0:
            break
        merges.append(best_pair)
        a, b = best_pair
        affected = pair_words.get(best_pair, set())
        for wi in list(affected):
            syms = words[wi]
            count_word(wi, -1)
            merged = []
            i = 0
            while i < len(syms):
                if i < len(syms) - 1 and syms[i] == a and syms[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(syms[i])
                    i += 1
            words[wi] = merged
            count_word(wi, +1)
        # drop exhausted entries so the argmax scan stays small
        for p in [p for p, c in pair_counts.items() if c <= 0]:
            del pair_counts[p]
            pair_words.pop(p, None)

    return BPEModel(merges, marker)


def apply_bpe(model: BPEModel, tokens: list[str]) -> list[str]:
    """Split each token into subwords under the model's merge list."""
    out: list[str] = []
    for tok in tokens:
        out.extend(model.split_word(tok))
    return out


def apply_bpe_corpus(model: BPEModel, corpus: Corpus) -> Corpus:
    return Corpus([apply_bpe(model, sent) for sent in corpus.sentences], corpus.lang)


def detokenize(subwords: list[str], marker: str = BPE_MARKER) -> list[str]:
    """Invert apply_bpe: join marker-carrying subwords back into words."""
    words: list[str] = []
    buf = ""
    for sw in subwords:
        if sw.endswith(marker) and len(sw) > len(marker):
            buf += sw[: -len(marker)]
        else:
            words.append(buf + sw)
            buf = ""
    if buf:
        words.append(buf)
    return words


def filter_long(corpus: Corpus, max_len: int) -> Corpus:
    """Drop sentences longer than max_len tokens (boundary inclusive)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    kept = [s for s in corpus.sentences if len(s) <= max_len]
    return Corpus(kept, corpus.lang)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocabulary:
    """Bijective token<->id map with special tokens at the lowest ids."""

    def __init__(self, tokens: list[str], freqs: list[int], specials: list[str]):
        if len(set(specials)) != len(specials):
            raise ValueError("special tokens must be pairwise distinct")
        self.id_to_token: list[str] = list(specials) + list(tokens)
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise ValueError("duplicate token in vocabulary")
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        self.freqs: list[int] = [0] * len(specials) + list(freqs)
        self.specials: dict[str, int] = {s: i for i, s in enumerate(specials)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def n_specials(self) -> int:
        return len(self.specials)

    def special_id(self, token: str) -> int:
        return self.specials[token]

    @property
    def pad_id(self) -> int:
        return self.specials[PAD]

    @property
    def unk_id(self) -> int:
        return self.specials[UNK]

    @property
    def bos_id(self) -> int:
        return self.specials[BOS]

    @property
    def eos_id(self) -> int:
        return self.specials[EOS]

    @property
    def mask_id(self) -> int:
        return self.specials[MASK]

    def encode(self, tokens: list[str], drop_oov: bool = False) -> list[int]:
        """Map tokens to ids; unknown tokens go to UNK or are dropped."""
        if drop_oov:
            return [self.token_to_id[t] for t in tokens if t in self.token_to_id]
        unk = self.specials.get(UNK)
        if unk is None:
            missing = [t for t in tokens if t not in self.token_to_id]
            if missing:
                raise KeyError(f"out-of-vocabulary tokens without UNK: {missing[:5]}")
            return [self.token_to_id[t] for t in tokens]
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok, freq in zip(self.id_to_token, self.freqs):
                f.write(f"{tok} {freq}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        toks, freqs = [], []
        with open(path, encoding="utf-8") as f:
            for line in f:
                tok, freq = line.rstrip("\n").rsplit(" ", 1)
                toks.append(tok)
                freqs.append(int(freq))
        specials = []
        known = set(DEFAULT_SPECIALS)
        while len(specials) < len(toks) and toks[len(specials)] in known:
            specials.append(toks[len(specials)])
        n = len(specials)
        return cls(toks[n:], freqs[n:], specials)


def build_vocab(
    corpus: Corpus | list[Corpus],
    min_count: int = 1,
    specials: list[str] = list(DEFAULT_SPECIALS),
) -> Vocabulary:
    """Frequency-sorted vocabulary over one or more corpora.

    Tokens with frequency >= min_count are kept, ordered by descending
    frequency then lexicographically; specials take the lowest ids.
    """
    if not specials:
        raise ValueError("specials must be non-empty")
    corpora = corpus if isinstance(corpus, list) else [corpus]
    counts: Counter[str] = Counter()
    for c in corpora:
        for sent in c.sentences:
            counts.update(sent)
    for s in specials:
        counts.pop(s, None)
    items = [(t, f) for t, f in counts.items() if f >= min_count]
    items.sort(key=lambda tf: (-tf[1], tf[0]))
    return Vocabulary([t for t, _ in items], [f for _, f in items], specials)
