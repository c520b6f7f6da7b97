"""Bilingual masked-LM training with pluggable embedding initialization.

Three initialization modes for the token embedding table:
  random             seed-deterministic initialization (the usual baseline)
  aligned_finetuned  rows copied from a cross-lingually aligned embedding
                     matrix, then trained like any other parameter
  aligned_frozen     same copy, but the table (and therefore the tied output
                     projection weights, though not the output bias) is
                     excluded from optimizer updates

The vocabulary-extension path supports the pretrain-monolingually /
extend / fine-tune-bilingually recipe: train with schedule weights (1, 0),
extend_vocab to the joint vocabulary, then train on both languages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, clip_grad_norm, cross_entropy, reshape
from .corpus import Corpus, Vocabulary
from .embeddings import EmbeddingMatrix
from .transformer import (
    ModelParams,
    Tensor,
    TransformerConfig,
    encoder_forward,
    init_model,
    output_logits,
    vocabulary_hash,
)

IGNORE_INDEX = -1


@dataclass
class InitMode:
    mode: str
    source: EmbeddingMatrix | None = None

    MODES = ("random", "aligned_finetuned", "aligned_frozen")

    def validate(self) -> None:
        if self.mode not in self.MODES:
            raise ValueError(f"unknown init mode {self.mode!r}; expected one of {self.MODES}")
        if self.mode.startswith("aligned") and self.source is None:
            raise ValueError(f"init mode {self.mode!r} requires a source embedding matrix")


@dataclass
class MaskingPolicy:
    mask_rate: float = 0.15
    mask_token_share: float = 0.8
    random_share: float = 0.1
    keep_share: float = 0.1

    def validate(self) -> None:
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ValueError("mask_rate must be in [0, 1]")
        total = self.mask_token_share + self.random_share + self.keep_share
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mask/random/keep shares sum to {total}, expected 1")
        if min(self.mask_token_share, self.random_share, self.keep_share) < 0:
            raise ValueError("shares must be non-negative")


@dataclass
class StreamSchedule:
    """Sampling weights for drawing each training batch's language."""

    weights: tuple[float, float] = (1.0, 1.0)

    def validate(self) -> None:
        if len(self.weights) != 2 or min(self.weights) < 0 or sum(self.weights) <= 0:
            raise ValueError("schedule needs two non-negative weights with a positive sum")

    def probabilities(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=np.float64)
        return w / w.sum()


def _copy_aligned_rows(table: np.ndarray, vocab: Vocabulary, source: EmbeddingMatrix) -> None:
    if source.vectors.shape[1] != table.shape[1]:
        raise ValueError(
            f"aligned source dimension {source.vectors.shape[1]} does not match model dimension {table.shape[1]}"
        )
    special_ids = set(vocab.specials.values())
    missing = [t for i, t in enumerate(vocab.id_to_token) if i not in special_ids and t not in source.vocab.token_to_id]
    if missing:
        shown = ", ".join(repr(t) for t in missing[:10])
        raise ValueError(f"{len(missing)} vocabulary tokens missing from aligned source: {shown}")
    for i, tok in enumerate(vocab.id_to_token):
        if i in special_ids:
            continue
        table[i] = source.vectors[source.vocab.token_to_id[tok]].astype(table.dtype)


def init_mlm(config: TransformerConfig, vocab: Vocabulary, mode: InitMode, seed: int = 0) -> ModelParams:
    """Encoder-only model; aligned modes overwrite non-special embedding rows.

    Special-token rows always come from the seeded random initialization.
    aligned_frozen marks "tok_emb" frozen, which the optimizer honors.
    """
    mode.validate()
    if config.vocab_size != len(vocab):
        raise ValueError(f"config vocab_size {config.vocab_size} != vocabulary size {len(vocab)}")
    model = init_model(config, seed=seed, with_decoder=False, vocab_hash=vocabulary_hash(vocab))
    if mode.mode.startswith("aligned"):
        _copy_aligned_rows(model["tok_emb"].data, vocab, mode.source)
        if mode.mode == "aligned_frozen":
            model.frozen.add("tok_emb")
    return model


def mask_batch(
    batch: np.ndarray,
    policy: MaskingPolicy,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """MLM corruption. Returns (masked inputs, targets, selected mask).

    Every non-special position is selected independently with mask_rate.
    Selected positions become MASK / a uniform random non-special token /
    stay unchanged, per the policy shares. Targets hold the original id at
    selected positions and IGNORE_INDEX elsewhere.
    """
    policy.validate()
    batch = np.asarray(batch)
    special_ids = np.array(sorted(vocab.specials.values()))
    eligible = ~np.isin(batch, special_ids)
    selected = eligible & (rng.random(batch.shape) < policy.mask_rate)
    targets = np.where(selected, batch, IGNORE_INDEX)
    masked = batch.copy()
    u = rng.random(batch.shape)
    use_mask = selected & (u < policy.mask_token_share)
    use_random = selected & (u >= policy.mask_token_share) & (u < policy.mask_token_share + policy.random_share)
    masked[use_mask] = vocab.mask_id
    n_random = int(use_random.sum())
    if n_random:
        candidates = np.setdiff1d(np.arange(len(vocab)), special_ids)
        masked[use_random] = rng.choice(candidates, size=n_random)
    return masked, targets, selected


def encode_rows(vocab: Vocabulary, sentences: list[list[str]], max_positions: int) -> list[list[int]]:
    """Subword token rows with BOS/EOS, truncated to the position budget."""
    rows = []
    budget = max_positions - 2
    for sent in sentences:
        ids = vocab.encode(sent)[:budget]
        rows.append([vocab.bos_id] + ids + [vocab.eos_id])
    return rows


def pad_rows(rows: list[list[int]], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    L = max(len(r) for r in rows)
    ids = np.full((len(rows), L), pad_id, dtype=np.int64)
    keep = np.zeros((len(rows), L), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        keep[i, : len(r)] = True
    return ids, keep


def mlm_step(
    model: ModelParams,
    masked: np.ndarray,
    targets: np.ndarray,
    lang_ids,
    keep: np.ndarray,
    rng: np.random.Generator | None = None,
):
    """Masked cross-entropy loss tensor for one corrupted batch."""
    hidden = encoder_forward(model, masked, lang_ids, padding_mask=keep, rng=rng)
    logits = output_logits(model, hidden)
    B, L, V = logits.shape
    return cross_entropy(reshape(logits, (B * L, V)), np.asarray(targets).reshape(-1), ignore_index=IGNORE_INDEX)


@dataclass
class MlmTrainConfig:
    steps: int = 1000
    batch_size: int = 32
    lr: float = 1e-4
    warmup: int = 0
    grad_clip: float = 5.0
    eval_every: int = 0
    eval_sentences: int = 256
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("invalid training configuration")


@dataclass
class MetricsRow:
    """step, mean train loss since the previous row, then per-checkpoint
    validation values (perplexity per language for the masked LM, BLEU per
    direction for the translator)."""

    step: int
    train_loss: float
    values: tuple[float, ...] = field(default_factory=tuple)

    def tsv(self) -> str:
        cells = [str(self.step), f"{self.train_loss:.6f}"] + [f"{p:.6f}" for p in self.values]
        return "\t".join(cells)


def write_metrics(path: str, rows: list[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(row.tsv() + "\n")


def train_mlm(
    model: ModelParams,
    corpora: tuple[Corpus, Corpus],
    vocab: Vocabulary,
    policy: MaskingPolicy,
    schedule: StreamSchedule,
    cfg: MlmTrainConfig,
    valid_corpora: tuple[Corpus, Corpus] | None = None,
) -> tuple[ModelParams, list[MetricsRow]]:
    """Alternate language batches per the schedule; train in place.

    A metrics row (step, mean train loss since the previous row, validation
    perplexity per language) is emitted every eval_every steps and at the
    end. A language with schedule weight 0 is never sampled and never
    touched. Frozen tensors are never updated.
    """
    policy.validate()
    schedule.validate()
    cfg.validate()
    for i, corpus in enumerate(corpora):
        if not corpus.sentences:
            raise ValueError(f"corpus {i} is empty")
    rows_by_lang = [encode_rows(vocab, c.sentences, model.config.max_positions) for c in corpora]
    probs = schedule.probabilities()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.tensors, lr=cfg.lr, warmup=cfg.warmup, frozen=model.frozen)
    metrics: list[MetricsRow] = []
    recent: list[float] = []

    def evaluate(step: int) -> None:
        ppls = []
        eval_sets = valid_corpora if valid_corpora is not None else corpora
        for lang, corpus in enumerate(eval_sets):
            sub = Corpus(corpus.sentences[: cfg.eval_sentences], corpus.lang)
            if probs[lang] == 0:
                continue
            ppls.append(perplexity(model, sub, vocab, policy, lang=lang, seed=cfg.seed))
        mean_loss = float(np.mean(recent)) if recent else float("nan")
        metrics.append(MetricsRow(step, mean_loss, tuple(ppls)))
        recent.clear()

    for step in range(1, cfg.steps + 1):
        lang = int(rng.choice(2, p=probs))
        pool = rows_by_lang[lang]
        idx = rng.integers(0, len(pool), size=min(cfg.batch_size, len(pool)))
        ids, keep = pad_rows([pool[i] for i in idx], vocab.pad_id)
        masked, targets, _ = mask_batch(ids, policy, rng, vocab)
        targets[~keep] = IGNORE_INDEX
        loss = mlm_step(model, masked, targets, np.full(len(ids), lang), keep, rng=rng)
        opt.zero_grad()
        loss.backward()
        if cfg.grad_clip > 0:
            clip_grad_norm(model.tensors, cfg.grad_clip)
        opt.step()
        recent.append(loss.item())
        if cfg.eval_every and step % cfg.eval_every == 0:
            evaluate(step)
    if cfg.steps and (not cfg.eval_every or cfg.steps % cfg.eval_every != 0):
        evaluate(cfg.steps)
    return model, metrics


def perplexity(
    model: ModelParams,
    corpus: Corpus,
    vocab: Vocabulary,
    policy: MaskingPolicy,
    lang: int = 0,
    seed: int = 0,
    batch_size: int = 64,
) -> float:
    """exp(mean masked cross-entropy) under a fixed masking seed."""
    if not corpus.sentences:
        raise ValueError("corpus is empty")
    rows = encode_rows(vocab, corpus.sentences, model.config.max_positions)
    rng = np.random.default_rng(seed)
    total_loss = 0.0
    total_count = 0
    for start in range(0, len(rows), batch_size):
        chunk = rows[start : start + batch_size]
        ids, keep = pad_rows(chunk, vocab.pad_id)
        masked, targets, selected = mask_batch(ids, policy, rng, vocab)
        targets[~keep] = IGNORE_INDEX
        count = int((targets != IGNORE_INDEX).sum())
        if count == 0:
            continue
        loss = mlm_step(model, masked, targets, np.full(len(ids), lang), keep, rng=None)
        total_loss += loss.item() * count
        total_count += count
    if total_count == 0:
        raise ValueError("no masked positions; raise mask_rate or corpus size")
    return float(np.exp(total_loss / total_count))


def extend_vocab(
    model: ModelParams,
    old_vocab: Vocabulary,
    new_vocab: Vocabulary,
    init: str | EmbeddingMatrix = "random",
    seed: int = 0,
) -> ModelParams:
    """Grow the model to a superset vocabulary, remapping rows by token.

    Retained tokens copy their embedding row and output bias entry; new
    tokens are seeded-random (init="random") or copied from an aligned
    matrix (init=EmbeddingMatrix, which must cover every new token).
    Tying and the frozen-name set are preserved.
    """
    missing_old = [t for t in old_vocab.id_to_token if t not in new_vocab.token_to_id]
    if missing_old:
        shown = ", ".join(repr(t) for t in missing_old[:10])
        raise ValueError(f"new vocabulary drops {len(missing_old)} tokens: {shown}")
    cfg = model.config
    new_cfg = TransformerConfig(
        vocab_size=len(new_vocab),
        model_dim=cfg.model_dim,
        heads=cfg.heads,
        layers=cfg.layers,
        ffn_dim=cfg.ffn_dim,
        dropout=cfg.dropout,
        max_positions=cfg.max_positions,
        n_langs=cfg.n_langs,
        dtype=cfg.dtype,
    )
    dt = new_cfg.np_dtype
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, cfg.model_dim**-0.5, size=(len(new_vocab), cfg.model_dim)).astype(dt)
    bias = np.zeros(len(new_vocab), dtype=dt)
    new_ids = []
    for i, tok in enumerate(new_vocab.id_to_token):
        if tok in old_vocab.token_to_id:
            j = old_vocab.token_to_id[tok]
            table[i] = model["tok_emb"].data[j]
            bias[i] = model["out_bias"].data[j]
        else:
            new_ids.append(i)
    if isinstance(init, EmbeddingMatrix):
        missing_new = [new_vocab.id_to_token[i] for i in new_ids if new_vocab.id_to_token[i] not in init.vocab.token_to_id]
        if missing_new:
            shown = ", ".join(repr(t) for t in missing_new[:10])
            raise ValueError(f"aligned init missing rows for {len(missing_new)} new tokens: {shown}")
        if init.vectors.shape[1] != cfg.model_dim:
            raise ValueError(f"aligned init dimension {init.vectors.shape[1]} != model dimension {cfg.model_dim}")
        for i in new_ids:
            table[i] = init.vectors[init.vocab.token_to_id[new_vocab.id_to_token[i]]].astype(dt)
    elif init != "random":
        raise ValueError("init must be 'random' or an EmbeddingMatrix")
    tensors = {}
    for name, t in model.tensors.items():
        if name == "tok_emb":
            tensors[name] = Tensor.param(table)
        elif name == "out_bias":
            tensors[name] = Tensor.param(bias)
        else:
            tensors[name] = Tensor.param(t.data.copy())
    return ModelParams(new_cfg, tensors, vocabulary_hash(new_vocab), set(model.frozen))
