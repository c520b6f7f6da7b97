"""Evaluation: bilingual lexicon induction precision, BLEU, and chrF.

BLEU here is corpus-level 4-gram BLEU with clipped precisions, brevity
penalty exp(1 - r/c) for c < r, and exponential smoothing of zero
precisions for n >= 2 only: the first zero precision becomes
1 / (2 * denominator), the next 1 / (4 * denominator), doubling each time.
The 1-gram precision is always reported raw; if it is zero the score is 0.
The reported score is recomputable from the report's own fields.

chrF operates on character n-grams (n = 1..max_n) of the sentences with
all whitespace removed, aggregates match/total statistics over the corpus,
macro-averages precision and recall over the orders that have any n-grams,
and combines them with an F_beta (beta = 1 by default, so chrF1).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import BPEModel
from .embeddings import EmbeddingMatrix
from .mapping import BilingualDictionary


@dataclass
class BliReport:
    method: str
    k: int
    precision: float
    evaluated_count: int
    skipped_oov_count: int

    def tsv(self) -> str:
        return "\t".join(
            [self.method, str(self.k), f"{self.precision:.6f}", str(self.evaluated_count), str(self.skipped_oov_count)]
        )

    def __str__(self) -> str:
        return (
            f"P@{self.k} ({self.method}) = {self.precision:.4f} "
            f"over {self.evaluated_count} pairs ({self.skipped_oov_count} skipped as OOV)"
        )


def word_vector(word: str, bpe: BPEModel, emb: EmbeddingMatrix) -> np.ndarray | None:
    """Type-level word vector: mean of the word's subword vectors.

    The word is BPE-split in isolation. Returns None (OOV) when any
    subword is missing from the embedding vocabulary.
    """
    if not word:
        raise ValueError("word must be non-empty")
    pieces = bpe.split_word(word)
    ids = []
    for piece in pieces:
        idx = emb.vocab.token_to_id.get(piece)
        if idx is None:
            return None
        ids.append(idx)
    return emb.vectors[ids].mean(axis=0)


def word_level_matrix(words: list[str], bpe: BPEModel, emb: EmbeddingMatrix) -> tuple[EmbeddingMatrix, list[str]]:
    """Subword-averaged vectors for each distinct in-vocabulary word.

    Returns the word-level matrix and the list of skipped OOV words.
    """
    from .corpus import Vocabulary

    seen = []
    vecs = []
    skipped = []
    done = set()
    for w in words:
        if w in done:
            continue
        done.add(w)
        v = word_vector(w, bpe, emb)
        if v is None:
            skipped.append(w)
        else:
            seen.append(w)
            vecs.append(v)
    if not seen:
        raise ValueError("no in-vocabulary words")
    vocab = Vocabulary(seen, [0] * len(seen), specials=[])
    return EmbeddingMatrix(vocab, np.vstack(vecs)), skipped


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def _topk_rows(scores: np.ndarray, k: int) -> np.ndarray:
    """Top-k column indices per row, ordered by score desc then index asc."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def bli_precision(
    src_emb: EmbeddingMatrix,
    tgt_emb: EmbeddingMatrix,
    gold: BilingualDictionary,
    k: int = 5,
    method: str = "nn",
    csls_k: int = 10,
) -> BliReport:
    """Precision@k of translation retrieval over the target vocabulary.

    Each distinct gold source word contributes one evaluation unit; it is a
    hit when any of its gold targets appears in the top-k ranking. Source
    words absent from the source matrix are skipped and counted as OOV
    (evaluated + skipped = distinct gold source words). Gold targets absent
    from the target matrix are simply unreachable.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if method not in ("nn", "csls"):
        raise ValueError(f"unknown method {method!r}; expected 'nn' or 'csls'")
    targets_by_src: dict[str, list[str]] = {}
    for s, t in gold.pairs:
        targets_by_src.setdefault(s, []).append(t)
    eval_words = []
    eval_ids = []
    skipped = 0
    for s in targets_by_src:
        idx = src_emb.vocab.token_to_id.get(s)
        if idx is None:
            skipped += 1
        else:
            eval_words.append(s)
            eval_ids.append(idx)
    if not eval_words:
        raise ValueError("no evaluable pairs")
    X = _unit_rows(src_emb.vectors.astype(np.float64))[eval_ids]
    Z = _unit_rows(tgt_emb.vectors.astype(np.float64))
    sims = X @ Z.T
    if method == "csls":
        kk = min(csls_k, Z.shape[0])
        full_src = _unit_rows(src_emb.vectors.astype(np.float64))
        all_sims = full_src @ Z.T
        r_tgt = np.sort(all_sims, axis=0)[-kk:, :].mean(axis=0)
        r_src_eval = np.sort(sims, axis=1)[:, -kk:].mean(axis=1)
        sims = 2.0 * sims - r_src_eval[:, None] - r_tgt[None, :]
    top = _topk_rows(sims, min(k, Z.shape[0]))
    hits = 0
    for row, word in enumerate(eval_words):
        wanted = set(targets_by_src[word])
        retrieved = {tgt_emb.vocab.id_to_token[j] for j in top[row]}
        if wanted & retrieved:
            hits += 1
    return BliReport(method, k, hits / len(eval_words), len(eval_words), skipped)


# -- BLEU ------------------------------------------------------------------------


@dataclass
class BleuReport:
    bleu: float
    ngram_precisions: tuple[float, float, float, float]
    brevity_penalty: float
    sys_len: int
    ref_len: int

    def tsv(self) -> str:
        ps = "\t".join(f"{p:.6f}" for p in self.ngram_precisions)
        return f"{self.bleu:.6f}\t{ps}\t{self.brevity_penalty:.6f}\t{self.sys_len}\t{self.ref_len}"

    def __str__(self) -> str:
        ps = "/".join(f"{100 * p:.1f}" for p in self.ngram_precisions)
        return f"BLEU = {self.bleu:.2f} ({ps}) BP = {self.brevity_penalty:.3f} len {self.sys_len}/{self.ref_len}"


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_lists(hypotheses, references) -> None:
    if len(hypotheses) != len(references):
        raise ValueError(f"length mismatch: {len(hypotheses)} hypotheses vs {len(references)} references")
    if len(hypotheses) == 0:
        raise ValueError("empty evaluation set")


def bleu(hypotheses: list[list[str]], references: list[list[str]]) -> BleuReport:
    """Corpus BLEU over tokenized sentences (single reference each)."""
    _check_lists(hypotheses, references)
    max_n = 4
    correct = [0] * max_n
    total = [0] * max_n
    sys_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        sys_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hyp_grams = _ngrams(hyp, n)
            ref_grams = _ngrams(ref, n)
            total[n - 1] += max(len(hyp) - n + 1, 0)
            correct[n - 1] += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())
    precisions = []
    smooth = 1.0
    for n in range(max_n):
        if total[n] == 0:
            precisions.append(0.0)
        elif correct[n] == 0 and n > 0:
            smooth *= 2.0
            precisions.append(1.0 / (smooth * total[n]))
        else:
            precisions.append(correct[n] / total[n])
    if sys_len == 0:
        bp = 0.0
    elif sys_len < ref_len:
        bp = float(np.exp(1.0 - ref_len / sys_len))
    else:
        bp = 1.0
    if min(precisions) > 0:
        score = 100.0 * bp * float(np.exp(np.mean(np.log(precisions))))
    else:
        score = 0.0
    return BleuReport(score, tuple(precisions), bp, sys_len, ref_len)


def unigram_precision(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    """The BLEU report's raw 1-gram precision as a percentage."""
    return bleu(hypotheses, references).ngram_precisions[0] * 100.0


def chrf(hypotheses: list[list[str]], references: list[list[str]], max_n: int = 6, beta: float = 1.0) -> float:
    """Character n-gram F_beta score in [0, 100], whitespace excluded."""
    _check_lists(hypotheses, references)
    if max_n < 1 or beta <= 0:
        raise ValueError("max_n must be >= 1 and beta positive")
    match = [0] * max_n
    hyp_total = [0] * max_n
    ref_total = [0] * max_n
    for hyp, ref in zip(hypotheses, references):
        h = "".join("".join(hyp).split())
        r = "".join("".join(ref).split())
        for n in range(1, max_n + 1):
            hg = _ngrams(list(h), n)
            rg = _ngrams(list(r), n)
            hyp_total[n - 1] += sum(hg.values())
            ref_total[n - 1] += sum(rg.values())
            match[n - 1] += sum(min(c, rg[g]) for g, c in hg.items())
    precisions = []
    recalls = []
    for n in range(max_n):
        if hyp_total[n] == 0 and ref_total[n] == 0:
            continue
        precisions.append(match[n] / hyp_total[n] if hyp_total[n] else 0.0)
        recalls.append(match[n] / ref_total[n] if ref_total[n] else 0.0)
    if not precisions:
        return 0.0
    p = float(np.mean(precisions))
    r = float(np.mean(recalls))
    if p == 0.0 and r == 0.0:
        return 0.0
    b2 = beta * beta
    denom = b2 * p + r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + b2) * p * r / denom
