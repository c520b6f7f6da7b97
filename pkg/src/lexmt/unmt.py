"""Unsupervised NMT: transfer a trained masked LM into an encoder-decoder
and train it with denoising auto-encoding plus online back-translation.

Transfer copies every encoder layer and reuses the encoder layers to seed
the decoder's self-attention and FFN blocks; only the decoder's
cross-attention (and its following layer norm) starts fresh. The token,
positional, and language embedding tables are single tensors used by the
encoder, the decoder, and the output projection alike.

Training is a strict round-robin over four objectives: DAE on language 1,
DAE on language 2, back-translation 1->2->1, back-translation 2->1->2.
Back-translation generates with greedy decoding under no-grad inference;
only the reconstruction pass contributes gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Adam, clip_grad_norm, cross_entropy, reshape
from .corpus import Corpus, Vocabulary, detokenize
from .decoding import DecodeConfig, greedy_translate, translate
from .evaluation import bleu
from .mlm import IGNORE_INDEX, MetricsRow, pad_rows
from .transformer import (
    ModelParams,
    Tensor,
    decoder_forward,
    encoder_forward,
    init_model,
    output_logits,
)

Seq2SeqParams = ModelParams


@dataclass
class NoiseConfig:
    drop_prob: float = 0.1
    blank_prob: float = 0.1
    shuffle_window: int = 3

    def validate(self) -> None:
        if not 0.0 <= self.drop_prob < 1.0 or not 0.0 <= self.blank_prob < 1.0:
            raise ValueError("drop_prob and blank_prob must be in [0, 1)")
        if self.shuffle_window < 1:
            raise ValueError("shuffle_window must be >= 1 (1 = no shuffle)")


def init_unmt_from_mlm(mlm_model: ModelParams, seed: int = 0) -> ModelParams:
    """Build an encoder-decoder whose trained parts come from the MLM.

    Encoder layer i copies MLM encoder layer i. Decoder layer i seeds its
    self-attention block and first layer norm from the same MLM layer, its
    FFN block and final layer norm from that layer's FFN/norm, and draws
    fresh cross-attention parameters from the given seed. The frozen-name
    set carries over, so a frozen embedding table stays frozen here.
    """
    cfg = mlm_model.config
    fresh = init_model(cfg, seed=seed, with_decoder=True, vocab_hash=mlm_model.vocab_hash)
    tensors: dict[str, Tensor] = {}
    for name in fresh.tensors:
        if name.startswith("dec.") and (".cross." in name or ".ln2." in name):
            tensors[name] = Tensor.param(fresh[name].data.copy())
            continue
        source = name
        if name.startswith("dec."):
            _, i, block, leaf = name.split(".")
            mapped = {"self": "attn", "ln1": "ln1", "ffn": "ffn", "ln3": "ln2"}[block]
            source = f"enc.{i}.{mapped}.{leaf}"
        tensors[name] = Tensor.param(mlm_model[source].data.copy())
    return ModelParams(cfg, tensors, mlm_model.vocab_hash, set(mlm_model.frozen))


def noise(seq: list[int], cfg: NoiseConfig, rng: np.random.Generator, unk_id: int) -> list[int]:
    """Corrupt one sentence: local shuffle, then drop, then blank to UNK.

    The shuffle sorts positions by i + U[0, shuffle_window), which moves
    every token at most shuffle_window - 1 positions. Dropping keeps each
    token with probability 1 - drop_prob but never deletes the last
    survivor: if all tokens would drop, the first one is kept.
    """
    cfg.validate()
    if not seq:
        raise ValueError("cannot noise an empty sentence")
    n = len(seq)
    order = np.argsort(np.arange(n) + rng.uniform(0.0, cfg.shuffle_window, size=n), kind="stable")
    shuffled = [seq[i] for i in order]
    keep = rng.random(n) >= cfg.drop_prob
    if not keep.any():
        keep[0] = True
    survived = [tok for tok, k in zip(shuffled, keep) if k]
    blank = rng.random(len(survived)) < cfg.blank_prob
    return [unk_id if b else tok for tok, b in zip(survived, blank)]


def _seq2seq_loss(
    model: ModelParams,
    src_rows: list[list[int]],
    tgt_rows: list[list[int]],
    src_lang: int,
    tgt_lang: int,
    vocab: Vocabulary,
    rng: np.random.Generator | None,
):
    """Teacher-forced translation loss tensor for aligned row lists."""
    B = len(src_rows)
    enc_ids, enc_keep = pad_rows([[vocab.bos_id] + r + [vocab.eos_id] for r in src_rows], vocab.pad_id)
    enc_out = encoder_forward(model, enc_ids, np.full(B, src_lang), padding_mask=enc_keep, rng=rng)
    dec_ids, dec_keep = pad_rows([[vocab.bos_id] + r for r in tgt_rows], vocab.pad_id)
    targets = np.full(dec_ids.shape, IGNORE_INDEX, dtype=np.int64)
    for i, r in enumerate(tgt_rows):
        targets[i, : len(r)] = r
        targets[i, len(r)] = vocab.eos_id
    hidden = decoder_forward(
        model,
        dec_ids,
        np.full(B, tgt_lang),
        enc_out,
        src_padding_mask=enc_keep,
        tgt_padding_mask=dec_keep,
        rng=rng,
    )
    logits = output_logits(model, hidden)
    B2, L, V = logits.shape
    return cross_entropy(reshape(logits, (B2 * L, V)), targets.reshape(-1), ignore_index=IGNORE_INDEX)


def dae_step(
    model: ModelParams,
    batch: list[list[int]],
    lang: int,
    noise_cfg: NoiseConfig,
    vocab: Vocabulary,
    rng: np.random.Generator,
    dropout_rng: np.random.Generator | None = None,
):
    """Reconstruct clean sentences from their noised versions (lang -> lang)."""
    noised = [noise(row, noise_cfg, rng, vocab.unk_id) for row in batch]
    return _seq2seq_loss(model, noised, batch, lang, lang, vocab, dropout_rng)


def bt_step(
    model: ModelParams,
    batch: list[list[int]],
    src_lang: int,
    tgt_lang: int,
    gen: DecodeConfig,
    vocab: Vocabulary,
    dropout_rng: np.random.Generator | None = None,
):
    """Online back-translation: src -> synthetic tgt (no grad) -> src (loss).

    Generation runs on a read-only view of the current parameters; an empty
    synthetic translation is replaced by a single EOS token so the reverse
    pass always has a non-empty source.
    """
    hyps = greedy_translate(model, batch, src_lang, tgt_lang, gen, vocab.pad_id, vocab.bos_id, vocab.eos_id)
    synthetic = [h.tokens if h.tokens else [vocab.eos_id] for h in hyps]
    return _seq2seq_loss(model, synthetic, batch, tgt_lang, src_lang, vocab, dropout_rng)


def ids_to_words(ids: list[int], vocab: Vocabulary) -> list[str]:
    """Generated subword ids -> words (BPE markers joined)."""
    return detokenize(vocab.decode(list(ids)))


def translate_corpus(
    model: ModelParams,
    sentences: list[list[str]],
    vocab: Vocabulary,
    src_lang: int,
    tgt_lang: int,
    decode_cfg: DecodeConfig,
) -> list[list[str]]:
    """Translate tokenized sentences; returns detokenized word lists."""
    budget = model.config.max_positions - 2
    rows = [vocab.encode(s)[:budget] for s in sentences]
    hyps = translate(model, rows, src_lang, tgt_lang, decode_cfg, vocab.pad_id, vocab.bos_id, vocab.eos_id)
    return [ids_to_words(h.tokens, vocab) for h in hyps]


@dataclass
class UnmtTrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-4
    warmup: int = 0
    grad_clip: float = 5.0
    eval_every: int = 0
    eval_sentences: int = 200
    patience: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0 or self.patience < 1:
            raise ValueError("invalid training configuration")


def train_unmt(
    model: ModelParams,
    corpora: tuple[Corpus, Corpus],
    vocab: Vocabulary,
    noise_cfg: NoiseConfig,
    cfg: UnmtTrainConfig,
    valid_pair: tuple[Corpus, Corpus] | None = None,
) -> tuple[ModelParams, list[MetricsRow]]:
    """Round-robin DAE1 / DAE2 / BT 1->2->1 / BT 2->1->2, trained in place.

    When a line-aligned validation pair is given, greedy validation BLEU is
    computed in both directions every eval_every steps; the mean drives
    early stopping with the configured patience, and the best parameters
    are restored before returning.
    """
    noise_cfg.validate()
    cfg.validate()
    for i, corpus in enumerate(corpora):
        if not corpus.sentences:
            raise ValueError(f"corpus {i} is empty")
    budget = model.config.max_positions - 2
    rows_by_lang = [[vocab.encode(s)[:budget] for s in c.sentences] for c in corpora]
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.tensors, lr=cfg.lr, warmup=cfg.warmup, frozen=model.frozen)
    gen = DecodeConfig(beam_size=1)
    metrics: list[MetricsRow] = []
    recent: list[float] = []
    best_score = -np.inf
    best_tensors: dict[str, np.ndarray] | None = None
    evals_since_best = 0

    def evaluate(step: int) -> float | None:
        nonlocal best_score, best_tensors, evals_since_best
        if valid_pair is None:
            metrics.append(MetricsRow(step, float(np.mean(recent)) if recent else float("nan"), ()))
            recent.clear()
            return None
        greedy_cfg = DecodeConfig(beam_size=1)
        n = cfg.eval_sentences
        src1 = valid_pair[0].sentences[:n]
        src2 = valid_pair[1].sentences[:n]
        refs2 = [detokenize(s) for s in src2]
        refs1 = [detokenize(s) for s in src1]
        hyp12 = translate_corpus(model, src1, vocab, 0, 1, greedy_cfg)
        hyp21 = translate_corpus(model, src2, vocab, 1, 0, greedy_cfg)
        bleu12 = bleu(hyp12, refs2).bleu
        bleu21 = bleu(hyp21, refs1).bleu
        score = (bleu12 + bleu21) / 2.0
        metrics.append(MetricsRow(step, float(np.mean(recent)) if recent else float("nan"), (bleu12, bleu21)))
        recent.clear()
        if score > best_score:
            best_score = score
            best_tensors = {k: t.data.copy() for k, t in model.tensors.items()}
            evals_since_best = 0
        else:
            evals_since_best += 1
        return score

    stopped = False
    for step in range(1, cfg.steps + 1):
        objective = (step - 1) % 4
        lang = objective if objective < 2 else objective - 2
        pool = rows_by_lang[lang]
        idx = rng.integers(0, len(pool), size=min(cfg.batch_size, len(pool)))
        batch = [pool[i] for i in idx]
        if objective < 2:
            loss = dae_step(model, batch, lang, noise_cfg, vocab, rng, dropout_rng=rng)
        else:
            loss = bt_step(model, batch, lang, 1 - lang, gen, vocab, dropout_rng=rng)
        opt.zero_grad()
        loss.backward()
        if cfg.grad_clip > 0:
            clip_grad_norm(model.tensors, cfg.grad_clip)
        opt.step()
        recent.append(loss.item())
        if cfg.eval_every and step % cfg.eval_every == 0:
            evaluate(step)
            if evals_since_best >= cfg.patience:
                stopped = True
                break
    if cfg.steps and not stopped and (not cfg.eval_every or cfg.steps % cfg.eval_every != 0):
        evaluate(cfg.steps)
    if best_tensors is not None:
        for k, t in model.tensors.items():
            t.data[...] = best_tensors[k]
    return model, metrics
