"""Brute-force reference implementations used as oracles by the tests.

Everything here is written for clarity over speed: counts are recomputed
from scratch, rankings are exhaustive, and nothing shares code with the
library under test.
"""

from collections import Counter

import numpy as np


# -- BPE ---------------------------------------------------------------------


def ref_pair_counts(word_freq: dict[tuple[str, ...], int]) -> Counter:
    """Frequency-weighted adjacent-pair counts over segmented words."""
    counts: Counter = Counter()
    for symbols, freq in word_freq.items():
        for i in range(len(symbols) - 1):
            counts[(symbols[i], symbols[i + 1])] += freq
    return counts


def ref_merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    """Merge non-overlapping occurrences of pair, scanning left to right."""
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            out.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def ref_learn_bpe(corpora_sentences: list[list[list[str]]], n_merges: int) -> list[tuple[str, str]]:
    """Reference BPE merge learning.

    Each iteration recounts all pairs from scratch and picks the pair with
    the highest frequency-weighted count, breaking ties by lexicographically
    smallest pair. Stops early when no adjacent pair remains.
    """
    freq: Counter = Counter()
    for sentences in corpora_sentences:
        for sent in sentences:
            freq.update(sent)
    word_freq = {tuple(word): count for word, count in freq.items()}
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        counts = ref_pair_counts(word_freq)
        if not counts:
            break
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        word_freq = {ref_merge_word(symbols, best): c for symbols, c in word_freq.items()}
    return merges


def ref_split_word(word: str, merges: list[tuple[str, str]]) -> list[str]:
    """Apply ranked merges to one word: always the lowest-rank present pair."""
    ranks = {pair: i for i, pair in enumerate(merges)}
    symbols = tuple(word)
    while len(symbols) > 1:
        pairs = [(symbols[i], symbols[i + 1]) for i in range(len(symbols) - 1)]
        ranked = [(ranks[p], p) for p in set(pairs) if p in ranks]
        if not ranked:
            break
        _, pair = min(ranked)
        symbols = ref_merge_word(symbols, pair)
    return list(symbols)


# -- BLEU ----------------------------------------------------------------------


def ref_ngram_stats(hyp: list[str], ref: list[str], n: int) -> tuple[int, int]:
    """(clipped matches, hypothesis n-gram total) for one sentence pair."""
    hyp_grams = Counter(tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1))
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    clipped = sum(min(count, ref_grams[gram]) for gram, count in hyp_grams.items())
    return clipped, max(len(hyp) - n + 1, 0)


def ref_bleu(hypotheses: list[list[str]], references: list[list[str]]) -> dict:
    """Corpus BLEU with the same smoothing and brevity-penalty conventions.

    Zero precisions of order >= 2 are smoothed to 1 / (2^z * total) where z
    counts zero orders seen so far; a zero 1-gram precision (or an order with
    no hypothesis n-grams at all) zeroes the final score.
    """
    correct = [0] * 4
    total = [0] * 4
    sys_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    for hyp, ref in zip(hypotheses, references):
        for n in range(1, 5):
            c, t = ref_ngram_stats(hyp, ref, n)
            correct[n - 1] += c
            total[n - 1] += t
    precisions = []
    smooth = 1.0
    for n in range(4):
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
        score = 100.0 * bp * float(np.exp(sum(np.log(p) for p in precisions) / 4.0))
    else:
        score = 0.0
    return {
        "bleu": score,
        "precisions": precisions,
        "bp": bp,
        "sys_len": sys_len,
        "ref_len": ref_len,
    }


# -- similarity ranking -----------------------------------------------------------


def ref_unit_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def ref_topk_indices(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest scores, ties broken by smaller index."""
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return order[:k]


def ref_csls_matrix(X: np.ndarray, Z: np.ndarray, k: int) -> np.ndarray:
    """CSLS(x_i, z_j) = 2 cos - mean top-k cos of x_i over Z - of z_j over X."""
    Xn, Zn = ref_unit_rows(X), ref_unit_rows(Z)
    sims = Xn @ Zn.T
    kx = min(k, sims.shape[1])
    kz = min(k, sims.shape[0])
    r_src = np.array([np.mean(sorted(sims[i], reverse=True)[:kx]) for i in range(sims.shape[0])])
    r_tgt = np.array([np.mean(sorted(sims[:, j], reverse=True)[:kz]) for j in range(sims.shape[1])])
    return 2.0 * sims - r_src[:, None] - r_tgt[None, :]


def ref_bli_precision(
    src_words: list[str],
    src_vectors: np.ndarray,
    tgt_words: list[str],
    tgt_vectors: np.ndarray,
    gold_pairs: list[tuple[str, str]],
    k: int,
    method: str,
    csls_k: int = 10,
) -> tuple[float, int, int]:
    """(precision, evaluated, skipped) for top-k retrieval over the targets.

    The CSLS neighborhood of a target is computed against the full source
    matrix; the neighborhood of an evaluated source is computed against the
    full target matrix.
    """
    targets_by_src: dict[str, set] = {}
    for s, t in gold_pairs:
        targets_by_src.setdefault(s, set()).add(t)
    src_index = {w: i for i, w in enumerate(src_words)}
    Xn = ref_unit_rows(src_vectors)
    Zn = ref_unit_rows(tgt_vectors)
    all_sims = Xn @ Zn.T
    n_src, n_tgt = all_sims.shape
    kk = min(csls_k, n_tgt)
    r_tgt = np.array(
        [np.mean(sorted(all_sims[:, j], reverse=True)[: min(kk, n_src)]) for j in range(n_tgt)]
    )
    hits = 0
    evaluated = 0
    skipped = 0
    for s, wanted in targets_by_src.items():
        if s not in src_index:
            skipped += 1
            continue
        evaluated += 1
        sims = all_sims[src_index[s]]
        if method == "csls":
            r_src = np.mean(sorted(sims, reverse=True)[:kk])
            scores = 2.0 * sims - r_src - r_tgt
        else:
            scores = sims
        top = ref_topk_indices(scores, min(k, n_tgt))
        if wanted & {tgt_words[j] for j in top}:
            hits += 1
    return hits / evaluated, evaluated, skipped


def ref_induce_dictionary(
    src_words: list[str],
    X_mapped: np.ndarray,
    tgt_words: list[str],
    Z_mapped: np.ndarray,
    csls_k: int,
) -> list[tuple[str, str]]:
    """Deterministic CSLS dictionary induction (keep probability 1).

    Union of best matches in both directions over row-normalized inputs:
    forward pairs in source order, then backward pairs in target order,
    with exact duplicates removed. The per-query neighborhood term is
    constant within a row, so the ranking uses 2 cos - r(other side).
    """
    X = np.asarray(X_mapped, dtype=np.float64)
    Z = np.asarray(Z_mapped, dtype=np.float64)
    k = min(csls_k, len(src_words), len(tgt_words))
    sims = X @ Z.T
    r_src = np.array([np.mean(sorted(sims[i], reverse=True)[:k]) for i in range(len(src_words))])
    r_tgt = np.array([np.mean(sorted(sims[:, j], reverse=True)[:k]) for j in range(len(tgt_words))])
    pairs = []
    for i in range(len(src_words)):
        fwd = 2.0 * sims[i] - r_tgt
        pairs.append((i, ref_topk_indices(fwd, 1)[0]))
    for j in range(len(tgt_words)):
        bwd = 2.0 * sims[:, j] - r_src
        pairs.append((ref_topk_indices(bwd, 1)[0], j))
    seen = set()
    out = []
    for i, j in pairs:
        if (i, j) not in seen:
            seen.add((i, j))
            out.append((src_words[i], tgt_words[j]))
    return out
