"""Skip-gram with negative sampling over BPE-split corpora.

Plain SGNS over subword tokens: the corpus units are already subwords, so no
character n-gram features are used. Training is deterministic for a fixed
seed; updates are applied in minibatches whose gradient is the exact sum of
per-sample gradients evaluated at the batch-start parameters (batch_size=1
reproduces classic one-sample SGD exactly).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Vocabulary
from .embeddings import EmbeddingMatrix


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def build_unigram_table(freqs, power: float = 0.75) -> np.ndarray:
    """Negative-sampling distribution proportional to freq**power."""
    freqs = np.asarray(freqs, dtype=np.float64)
    if np.any(freqs <= 0):
        raise ValueError("frequencies must be positive")
    probs = freqs**power
    return probs / probs.sum()


@dataclass
class SgnsConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    # batch updates sum per-pair gradients, so a frequent token's row moves by
    # (its in-batch multiplicity) x lr; lr and batch_size are sized together
    # to keep that product stable
    lr: float = 0.0125
    subsample: float = 1e-3  # 0 disables frequent-token subsampling
    min_count: int = 1
    power: float = 0.75
    batch_size: int = 1024
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("bad epochs/lr")


class SgnsModel:
    """Center (syn0) and context (syn1) matrices plus the training loop."""

    def __init__(self, vocab: Vocabulary, config: SgnsConfig, dtype=np.float32):
        config.validate()
        if len(vocab) < config.negatives + 1:
            raise ValueError("vocabulary too small for negative sampling")
        self.vocab = vocab
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.dim
        self.syn0 = ((rng.random((len(vocab), d)) - 0.5) / d).astype(dtype)
        self.syn1 = np.zeros((len(vocab), d), dtype=dtype)
        self.noise = build_unigram_table(np.maximum(vocab.freqs, 1), config.power)
        self._noise_cum = np.cumsum(self.noise)
        self.epoch_losses: list[float] = []

    def step(self, center: int, context: int, negatives: list[int], lr: float) -> float:
        """One exact-gradient update for a (center, context, negatives) sample.

        Returns -log sigma(u_ctx . v) - sum_neg log sigma(-u_neg . v); all
        three parameter groups move by the gradient of that value at the
        current parameters.
        """
        v = self.syn0[center].copy()
        u_ctx = self.syn1[context].copy()
        u_neg = self.syn1[negatives].copy()
        s_pos = float(u_ctx @ v)
        s_neg = u_neg @ v
        loss = float(np.logaddexp(0.0, -s_pos) + np.logaddexp(0.0, s_neg).sum())
        g_pos = _sigmoid(np.array([s_pos]))[0] - 1.0
        g_neg = _sigmoid(s_neg)
        grad_v = g_pos * u_ctx + g_neg @ u_neg
        self.syn0[center] -= lr * grad_v
        self.syn1[context] -= lr * g_pos * v
        np.add.at(self.syn1, negatives, -lr * np.outer(g_neg, v))
        return loss

    # -- training ----------------------------------------------------------

    def _sentence_pairs(self, ids: np.ndarray, rng: np.random.Generator, keep: np.ndarray | None):
        if keep is not None:
            ids = ids[rng.random(len(ids)) < keep[ids]]
        n = len(ids)
        if n < 2:
            return None
        b = rng.integers(1, self.config.window + 1, size=n)
        centers, contexts = [], []
        for i in range(n):
            lo = max(0, i - b[i])
            hi = min(n, i + b[i] + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(ids[i])
                    contexts.append(ids[j])
        if not centers:
            return None
        return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)

    def _apply_batch(self, centers, contexts, negs, lr: float) -> float:
        """Summed-gradient update over a pair batch; returns total loss."""
        v = self.syn0[centers]  # (B, d)
        u_pos = self.syn1[contexts]  # (B, d)
        u_neg = self.syn1[negs]  # (B, k, d)
        s_pos = np.einsum("bd,bd->b", u_pos, v)
        s_neg = np.einsum("bkd,bd->bk", u_neg, v)
        loss = np.logaddexp(0.0, -s_pos).sum() + np.logaddexp(0.0, s_neg).sum()
        g_pos = _sigmoid(s_pos) - 1.0  # (B,)
        g_neg = _sigmoid(s_neg)  # (B, k)
        grad_v = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
        np.add.at(self.syn0, centers, (-lr * grad_v).astype(self.syn0.dtype))
        np.add.at(self.syn1, contexts, (-lr * g_pos[:, None] * v).astype(self.syn1.dtype))
        np.add.at(
            self.syn1,
            negs.reshape(-1),
            (-lr * g_neg[..., None] * v[:, None, :]).reshape(-1, v.shape[1]).astype(self.syn1.dtype),
        )
        return float(loss)

    def train(self, corpus: Corpus) -> EmbeddingMatrix:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed + 1)
        encoded = [np.array(self.vocab.encode(s, drop_oov=True), dtype=np.int64) for s in corpus.sentences]
        encoded = [s for s in encoded if len(s) >= 2]
        if not encoded:
            raise ValueError("no trainable sentences after vocabulary filtering")

        keep = None
        if cfg.subsample > 0:
            freqs = np.maximum(np.asarray(self.vocab.freqs, dtype=np.float64), 1.0)
            rel = freqs / freqs.sum()
            keep = np.minimum(1.0, np.sqrt(cfg.subsample / rel) + cfg.subsample / rel)

        self.epoch_losses = []
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(encoded))
            buf_c, buf_o = [], []
            total_loss, total_pairs = 0.0, 0
            n_batches = max(1, sum(len(s) for s in encoded) * cfg.window // cfg.batch_size)
            batch_idx = 0

            def flush():
                nonlocal total_loss, total_pairs, batch_idx
                if not buf_c:
                    return
                centers = np.concatenate(buf_c)
                contexts = np.concatenate(buf_o)
                buf_c.clear()
                buf_o.clear()
                negs = np.searchsorted(
                    self._noise_cum, rng.random((len(centers), cfg.negatives))
                ).astype(np.int64)
                progress = (epoch + min(1.0, batch_idx / n_batches)) / cfg.epochs
                lr = max(cfg.lr * (1.0 - progress), cfg.lr * 1e-4)
                total_loss += self._apply_batch(centers, contexts, negs, lr)
                total_pairs += len(centers)
                batch_idx += 1

            pending = 0
            for si in order:
                pairs = self._sentence_pairs(encoded[si], rng, keep)
                if pairs is None:
                    continue
                buf_c.append(pairs[0])
                buf_o.append(pairs[1])
                pending += len(pairs[0])
                if pending >= cfg.batch_size:
                    flush()
                    pending = 0
            flush()
            self.epoch_losses.append(total_loss / max(1, total_pairs))

        if not np.all(np.isfinite(self.syn0)) or not np.all(np.isfinite(self.syn1)):
            raise FloatingPointError("non-finite values after SGNS training")
        return EmbeddingMatrix(self.vocab, self.syn0.copy())


def make_sgns_vocab(corpus: Corpus | list[Corpus], min_count: int = 1) -> Vocabulary:
    """Frequency-sorted vocabulary without special tokens (embedding side)."""
    corpora = corpus if isinstance(corpus, list) else [corpus]
    counts: Counter[str] = Counter()
    for c in corpora:
        for sent in c.sentences:
            counts.update(sent)
    items = [(t, f) for t, f in counts.items() if f >= min_count]
    if not items:
        raise ValueError("empty corpus")
    items.sort(key=lambda tf: (-tf[1], tf[0]))
    return Vocabulary([t for t, _ in items], [f for _, f in items], specials=[])


def train_sgns(corpus: Corpus | list[Corpus], config: SgnsConfig) -> EmbeddingMatrix:
    """Train subword embeddings; returns the center-side vectors."""
    corpora = corpus if isinstance(corpus, list) else [corpus]
    if not any(len(c) for c in corpora):
        raise ValueError("empty corpus")
    vocab = make_sgns_vocab(corpora, config.min_count)
    model = SgnsModel(vocab, config)
    merged = corpora[0] if len(corpora) == 1 else Corpus(
        [s for c in corpora for s in c.sentences], "+".join(c.lang for c in corpora)
    )
    if config.epochs == 0:
        return EmbeddingMatrix(vocab, model.syn0.copy())
    return model.train(merged)
