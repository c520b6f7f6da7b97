"""Generation: plain-numpy incremental decoding with a KV cache.

Training uses the autodiff graph; generation does not need gradients, so
this module re-implements the forward passes over raw numpy arrays (same
math, same post-norm architecture) and caches per-layer attention keys and
values across steps. The arrays are read-only views of the live model
storage, so generation always reflects the current parameters.

Conventions: a source sequence is encoded as BOS + tokens + EOS; the
decoder starts from BOS and emits tokens until EOS or the length cap
int(max_len_factor * len(src)) + max_len_offset. Returned hypotheses hold
generated ids without BOS/EOS. Candidate ties break by flat candidate
index (beam-major, then token id), which makes beam_size=1 reproduce
greedy argmax decoding exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transformer import ModelParams

_GELU_C = np.sqrt(2.0 / np.pi)


def _ln(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return (xc / np.sqrt(var + eps)) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class DecodeConfig:
    beam_size: int = 5
    max_len_factor: float = 1.5
    max_len_offset: int = 5
    length_penalty: float = 1.0

    def validate(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_len_factor <= 0 or self.max_len_offset < 0:
            raise ValueError("invalid generation length cap")


@dataclass
class Hypothesis:
    """Generated ids (no BOS/EOS) and the length-penalized log-probability."""

    tokens: list[int]
    score: float
    ended_with_eos: bool


def pad_batch(seqs: list[list[int]], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to a rectangle; returns (ids, boolean keep mask)."""
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), pad_id, dtype=np.int64)
    keep = np.zeros((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        keep[i, : len(s)] = True
    return ids, keep


class InferenceModel:
    """Gradient-free forward passes over the live parameter arrays."""

    def __init__(self, model: ModelParams):
        self.cfg = model.config
        self.p = {name: t.data for name, t in model.tensors.items()}
        self.nh = self.cfg.heads
        self.dh = self.cfg.model_dim // self.cfg.heads
        self.scale = 1.0 / np.sqrt(self.dh)

    def _heads(self, x: np.ndarray) -> np.ndarray:
        B, L, _ = x.shape
        return x.reshape(B, L, self.nh, self.dh).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        B, _, L, _ = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, L, self.cfg.model_dim)

    def _embed(self, tokens: np.ndarray, lang_ids: np.ndarray, positions: np.ndarray) -> np.ndarray:
        h = self.p["tok_emb"][tokens] + self.p["pos_emb"][positions] + self.p["lang_emb"][lang_ids][:, None, :]
        return _ln(h, self.p["emb_ln.g"], self.p["emb_ln.b"])

    def _attn(self, prefix: str, q_in: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
        q = self._heads(q_in @ self.p[f"{prefix}.wq"] + self.p[f"{prefix}.bq"])
        scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * self.scale
        if mask is not None:
            scores = scores + mask
        ctx = np.matmul(_softmax(scores), v)
        return self._merge(ctx) @ self.p[f"{prefix}.wo"] + self.p[f"{prefix}.bo"]

    def _kv(self, prefix: str, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self._heads(x @ self.p[f"{prefix}.wk"] + self.p[f"{prefix}.bk"])
        v = self._heads(x @ self.p[f"{prefix}.wv"] + self.p[f"{prefix}.bv"])
        return k, v

    def _ffn(self, prefix: str, x: np.ndarray) -> np.ndarray:
        return _gelu(x @ self.p[f"{prefix}.w1"] + self.p[f"{prefix}.b1"]) @ self.p[f"{prefix}.w2"] + self.p[f"{prefix}.b2"]

    def _res(self, prefix: str, x: np.ndarray, sub: np.ndarray) -> np.ndarray:
        return _ln(x + sub, self.p[f"{prefix}.g"], self.p[f"{prefix}.b"])

    def encode(self, tokens: np.ndarray, lang_ids: np.ndarray, keep: np.ndarray) -> np.ndarray:
        B, L = tokens.shape
        mask = np.where(keep[:, None, None, :], 0.0, -np.inf).astype(self.cfg.np_dtype)
        h = self._embed(tokens, lang_ids, np.arange(L))
        for i in range(self.cfg.layers):
            k, v = self._kv(f"enc.{i}.attn", h)
            h = self._res(f"enc.{i}.ln1", h, self._attn(f"enc.{i}.attn", h, k, v, mask))
            h = self._res(f"enc.{i}.ln2", h, self._ffn(f"enc.{i}.ffn", h))
        return h

    def start_decoder(self, enc_out: np.ndarray, src_keep: np.ndarray) -> dict:
        """Precompute cross-attention KV and empty self-attention caches."""
        B = enc_out.shape[0]
        state: dict = {"t": 0, "B": B}
        state["cross_mask"] = np.where(src_keep[:, None, None, :], 0.0, -np.inf).astype(self.cfg.np_dtype)
        empty = np.zeros((B, self.nh, 0, self.dh), dtype=self.cfg.np_dtype)
        for i in range(self.cfg.layers):
            ck, cv = self._kv(f"dec.{i}.cross", enc_out)
            state[f"cross_k.{i}"], state[f"cross_v.{i}"] = ck, cv
            state[f"self_k.{i}"] = empty
            state[f"self_v.{i}"] = empty
        return state

    def step(self, state: dict, last_ids: np.ndarray, lang_ids: np.ndarray) -> np.ndarray:
        """Feed one token per sequence; returns next-token logits (B, V)."""
        t = state["t"]
        h = self._embed(last_ids[:, None], lang_ids, np.array([t]))
        for i in range(self.cfg.layers):
            knew, vnew = self._kv(f"dec.{i}.self", h)
            state[f"self_k.{i}"] = np.concatenate([state[f"self_k.{i}"], knew], axis=2)
            state[f"self_v.{i}"] = np.concatenate([state[f"self_v.{i}"], vnew], axis=2)
            a = self._attn(f"dec.{i}.self", h, state[f"self_k.{i}"], state[f"self_v.{i}"], None)
            h = self._res(f"dec.{i}.ln1", h, a)
            c = self._attn(f"dec.{i}.cross", h, state[f"cross_k.{i}"], state[f"cross_v.{i}"], state["cross_mask"])
            h = self._res(f"dec.{i}.ln2", h, c)
            h = self._res(f"dec.{i}.ln3", h, self._ffn(f"dec.{i}.ffn", h))
        state["t"] = t + 1
        logits = h[:, 0, :] @ self.p["tok_emb"].T + self.p["out_bias"]
        return logits

    def reindex(self, state: dict, order: np.ndarray) -> dict:
        """Reorder the batch axis of every cached array (beam reshuffling)."""
        out = {"t": state["t"], "B": len(order), "cross_mask": state["cross_mask"][order]}
        for i in range(self.cfg.layers):
            for key in (f"cross_k.{i}", f"cross_v.{i}", f"self_k.{i}", f"self_v.{i}"):
                out[key] = state[key][order]
        return out


def _max_new(cfg: DecodeConfig, src_len: int) -> int:
    return int(cfg.max_len_factor * src_len) + cfg.max_len_offset


def greedy_translate(
    model: ModelParams,
    src_seqs: list[list[int]],
    src_lang: int,
    tgt_lang: int,
    cfg: DecodeConfig,
    pad_id: int,
    bos_id: int,
    eos_id: int,
) -> list[Hypothesis]:
    """Batched greedy decoding (argmax every step, first index on ties)."""
    cfg.validate()
    infer = InferenceModel(model)
    B = len(src_seqs)
    ids, keep = pad_batch([[bos_id] + s + [eos_id] for s in src_seqs], pad_id)
    enc = infer.encode(ids, np.full(B, src_lang), keep)
    state = infer.start_decoder(enc, keep)
    caps = np.array([_max_new(cfg, len(s)) for s in src_seqs])
    # BOS plus the generated tokens must fit the positional table
    caps = np.minimum(caps, model.config.max_positions - 2)
    tgt_langs = np.full(B, tgt_lang)
    last = np.full(B, bos_id, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    scores = np.zeros(B)
    ended = np.zeros(B, dtype=bool)
    tokens: list[list[int]] = [[] for _ in range(B)]
    for t in range(int(caps.max())):
        if not alive.any():
            break
        logits = infer.step(state, last, tgt_langs)
        logprobs = _log_softmax(logits)
        nxt = np.argmax(logits, axis=-1)
        for b in range(B):
            if not alive[b]:
                continue
            scores[b] += logprobs[b, nxt[b]]
            if nxt[b] == eos_id:
                alive[b] = False
                ended[b] = True
            else:
                tokens[b].append(int(nxt[b]))
                if len(tokens[b]) >= caps[b]:
                    alive[b] = False
        last = np.where(alive, nxt, np.int64(pad_id))
        last[~alive] = pad_id
    out = []
    for b in range(B):
        length = len(tokens[b]) + (1 if ended[b] else 0)
        out.append(Hypothesis(tokens[b], float(scores[b]) / max(length, 1) ** cfg.length_penalty, bool(ended[b])))
    return out


def beam_search(
    model: ModelParams,
    src_seq: list[int],
    src_lang: int,
    tgt_lang: int,
    cfg: DecodeConfig,
    pad_id: int,
    bos_id: int,
    eos_id: int,
) -> Hypothesis:
    """Length-penalized beam search over one source sentence.

    Each step ranks beam expansions by accumulated log-probability (ties by
    candidate index). EOS candidates move to the finished pool; the top
    beam_size non-EOS candidates stay live. Returns the best finished
    hypothesis by score / len^length_penalty, falling back to the best live
    prefix if nothing finished within the length cap.
    """
    cfg.validate()
    if not src_seq:
        raise ValueError("beam search requires a non-empty source sequence")
    infer = InferenceModel(model)
    ids, keep = pad_batch([[bos_id] + src_seq + [eos_id]], pad_id)
    enc = infer.encode(ids, np.full(1, src_lang), keep)
    state = infer.start_decoder(enc, keep)
    k = cfg.beam_size
    cap = min(_max_new(cfg, len(src_seq)), model.config.max_positions - 2)
    beams: list[list[int]] = [[]]
    beam_scores = np.zeros(1)
    last = np.full(1, bos_id, dtype=np.int64)
    finished: list[tuple[float, list[int]]] = []
    for _ in range(cap):
        lang_col = np.full(len(beams), tgt_lang)
        logprobs = _log_softmax(infer.step(state, last, lang_col))
        cand = beam_scores[:, None] + logprobs
        flat = cand.ravel()
        top = np.argsort(-flat, kind="stable")[: 2 * k]
        new_beams: list[list[int]] = []
        new_scores: list[float] = []
        new_last: list[int] = []
        origin: list[int] = []
        for rank, idx in enumerate(top):
            b, tok = divmod(int(idx), logprobs.shape[1])
            if tok == eos_id:
                # only EOS within the top k finalizes; lower ranks are dropped
                if rank < k:
                    length = len(beams[b]) + 1
                    finished.append((float(flat[idx]) / length**cfg.length_penalty, beams[b]))
            elif len(new_beams) < k:
                new_beams.append(beams[b] + [tok])
                new_scores.append(float(flat[idx]))
                new_last.append(tok)
                origin.append(b)
        if len(finished) >= k or not new_beams:
            break
        state = infer.reindex(state, np.asarray(origin))
        beams = new_beams
        beam_scores = np.asarray(new_scores)
        last = np.asarray(new_last, dtype=np.int64)
    if finished:
        best = max(range(len(finished)), key=lambda i: finished[i][0])
        score, toks = finished[best]
        return Hypothesis(list(toks), score, True)
    best = int(np.argmax(beam_scores))
    length = max(len(beams[best]), 1)
    return Hypothesis(beams[best], float(beam_scores[best]) / length**cfg.length_penalty, False)


def translate(
    model: ModelParams,
    src_seqs: list[list[int]],
    src_lang: int,
    tgt_lang: int,
    cfg: DecodeConfig,
    pad_id: int,
    bos_id: int,
    eos_id: int,
) -> list[Hypothesis]:
    """Dispatch: batched greedy for beam_size 1, per-sentence beam otherwise."""
    if cfg.beam_size == 1:
        return greedy_translate(model, src_seqs, src_lang, tgt_lang, cfg, pad_id, bos_id, eos_id)
    return [beam_search(model, s, src_lang, tgt_lang, cfg, pad_id, bos_id, eos_id) for s in src_seqs]
