"""Transformer building blocks shared by the masked LM and the translator.

Architecture (fixed, so tests can be exact about it):
  - inputs = token embedding + learned positional embedding + language
    embedding, then LayerNorm, then dropout
  - post-norm residual blocks: x = LN(x + dropout(sublayer(x)))
  - multi-head scaled dot-product attention with additive masks (0 or -inf);
    a masked key receives exactly zero attention weight
  - FFN = linear -> GELU (tanh approximation) -> linear
  - output projection is the token embedding table transposed (tied storage)
    plus a separate bias vector

Checkpoint byte layout (version 1):
  bytes 0..7    magic b"LXMTCKPT"
  bytes 8..11   format version, little-endian uint32
  bytes 12..15  header length H, little-endian uint32
  bytes 16..16+H  UTF-8 JSON header with keys "config", "vocab_hash",
                  "dtype", "frozen", "params" (list of [name, shape] in the
                  exact payload order; names sorted)
  remainder     for each params entry in order, the raw little-endian
                C-order bytes of that array
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, add, dropout, gelu, layer_norm, matmul, reshape, softmax, take, transpose
from .corpus import Vocabulary

CHECKPOINT_MAGIC = b"LXMTCKPT"
CHECKPOINT_VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class TransformerConfig:
    vocab_size: int
    model_dim: int = 64
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 256
    dropout: float = 0.1
    max_positions: int = 256
    n_langs: int = 2
    dtype: str = "float32"

    def validate(self) -> None:
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.model_dim < 1 or self.heads < 1 or self.layers < 1 or self.ffn_dim < 1:
            raise ValueError("model_dim, heads, layers, ffn_dim must be positive")
        if self.model_dim % self.heads != 0:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_positions < 1 or self.n_langs < 1:
            raise ValueError("max_positions and n_langs must be positive")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def np_dtype(self):
        return _DTYPES[self.dtype]


class ModelParams:
    """Named tensor tree plus the config, vocab hash, and frozen-name set."""

    def __init__(self, config: TransformerConfig, tensors: dict[str, Tensor], vocab_hash: str = "", frozen: set[str] | None = None):
        self.config = config
        self.tensors = tensors
        self.vocab_hash = vocab_hash
        self.frozen = set(frozen or ())

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def items(self):
        return [(n, self.tensors[n]) for n in self.names()]

    @property
    def has_decoder(self) -> bool:
        return any(n.startswith("dec.") for n in self.tensors)

    def copy(self) -> "ModelParams":
        tensors = {n: Tensor.param(t.data.copy()) for n, t in self.tensors.items()}
        return ModelParams(self.config, tensors, self.vocab_hash, set(self.frozen))

    def astype(self, dtype: str) -> "ModelParams":
        cfg = TransformerConfig(**{**asdict(self.config), "dtype": dtype})
        np_dt = cfg.np_dtype
        tensors = {n: Tensor.param(t.data.astype(np_dt)) for n, t in self.tensors.items()}
        return ModelParams(cfg, tensors, self.vocab_hash, set(self.frozen))


def vocabulary_hash(vocab: Vocabulary) -> str:
    """Identity of a vocabulary = sha256 over its ordered token list."""
    h = hashlib.sha256()
    for tok in vocab.id_to_token:
        h.update(tok.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


# -- initialization ---------------------------------------------------------------


def _linear_init(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _attn_params(rng, d, dtype, out, prefix):
    for name in ("wq", "wk", "wv", "wo"):
        out[f"{prefix}.{name}"] = Tensor.param(_linear_init(rng, d, d, dtype))
    for name in ("bq", "bk", "bv", "bo"):
        out[f"{prefix}.{name}"] = Tensor.param(np.zeros(d, dtype=dtype))


def _ln_params(d, dtype, out, prefix):
    out[f"{prefix}.g"] = Tensor.param(np.ones(d, dtype=dtype))
    out[f"{prefix}.b"] = Tensor.param(np.zeros(d, dtype=dtype))


def _ffn_params(rng, d, f, dtype, out, prefix):
    out[f"{prefix}.w1"] = Tensor.param(_linear_init(rng, d, f, dtype))
    out[f"{prefix}.b1"] = Tensor.param(np.zeros(f, dtype=dtype))
    out[f"{prefix}.w2"] = Tensor.param(_linear_init(rng, f, d, dtype))
    out[f"{prefix}.b2"] = Tensor.param(np.zeros(d, dtype=dtype))


def init_model(config: TransformerConfig, seed: int = 0, with_decoder: bool = False, vocab_hash: str = "") -> ModelParams:
    """Seed-deterministic parameter initialization.

    Embeddings ~ N(0, model_dim^-0.5); linear weights Xavier-uniform; biases
    zero; layer-norm gain 1 / bias 0. Decoder layers (self-attention,
    cross-attention, FFN) are created only when with_decoder is set; the
    embedding tables are shared between encoder and decoder by construction.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    d, f, dt = config.model_dim, config.ffn_dim, config.np_dtype
    out: dict[str, Tensor] = {}
    std = d**-0.5
    out["tok_emb"] = Tensor.param(rng.normal(0.0, std, size=(config.vocab_size, d)).astype(dt))
    out["pos_emb"] = Tensor.param(rng.normal(0.0, std, size=(config.max_positions, d)).astype(dt))
    out["lang_emb"] = Tensor.param(rng.normal(0.0, std, size=(config.n_langs, d)).astype(dt))
    _ln_params(d, dt, out, "emb_ln")
    out["out_bias"] = Tensor.param(np.zeros(config.vocab_size, dtype=dt))
    for i in range(config.layers):
        _attn_params(rng, d, dt, out, f"enc.{i}.attn")
        _ln_params(d, dt, out, f"enc.{i}.ln1")
        _ffn_params(rng, d, f, dt, out, f"enc.{i}.ffn")
        _ln_params(d, dt, out, f"enc.{i}.ln2")
    if with_decoder:
        for i in range(config.layers):
            _attn_params(rng, d, dt, out, f"dec.{i}.self")
            _ln_params(d, dt, out, f"dec.{i}.ln1")
            _attn_params(rng, d, dt, out, f"dec.{i}.cross")
            _ln_params(d, dt, out, f"dec.{i}.ln2")
            _ffn_params(rng, d, f, dt, out, f"dec.{i}.ffn")
            _ln_params(d, dt, out, f"dec.{i}.ln3")
    return ModelParams(config, out, vocab_hash=vocab_hash)


# -- masks -------------------------------------------------------------------------


def padding_additive(keep: np.ndarray, dtype) -> np.ndarray:
    """Boolean keep mask (batch, len) -> additive key mask (batch, 1, 1, len)."""
    mask = np.zeros(keep.shape, dtype=dtype)
    mask[~np.asarray(keep, dtype=bool)] = -np.inf
    return mask[:, None, None, :]


def causal_additive(length: int, dtype) -> np.ndarray:
    """Additive mask (1, 1, len, len): position t may attend to positions <= t."""
    mask = np.triu(np.full((length, length), -np.inf, dtype=dtype), k=1)
    return mask[None, None, :, :]


def _check_ids(ids: np.ndarray, limit: int, what: str) -> None:
    bad = (ids < 0) | (ids >= limit)
    if bad.any():
        b, t = np.argwhere(bad)[0][:2] if ids.ndim > 1 else (0, int(np.argwhere(bad)[0][0]))
        raise ValueError(f"{what} id {int(ids[bad][0])} out of range [0, {limit}) at batch {int(b)} position {int(t)}")


# -- forward passes -------------------------------------------------------------------


def _embed(model: ModelParams, tokens: np.ndarray, lang_ids, rng) -> Tensor:
    cfg = model.config
    tokens = np.asarray(tokens)
    B, L = tokens.shape
    if L > cfg.max_positions:
        raise ValueError(f"sequence length {L} exceeds max_positions {cfg.max_positions}")
    _check_ids(tokens, cfg.vocab_size, "token")
    lang_ids = np.asarray(lang_ids)
    _check_ids(lang_ids, cfg.n_langs, "language")
    h = take(model["tok_emb"], tokens)
    h = add(h, take(model["pos_emb"], np.arange(L)))
    if lang_ids.ndim == 1:
        h = add(h, reshape(take(model["lang_emb"], lang_ids), (B, 1, cfg.model_dim)))
    else:
        h = add(h, take(model["lang_emb"], lang_ids))
    h = layer_norm(h, model["emb_ln.g"], model["emb_ln.b"])
    return dropout(h, cfg.dropout, rng)


def _attention(model: ModelParams, prefix: str, q_in: Tensor, kv_in: Tensor, mask: np.ndarray | None, rng, capture: dict | None) -> Tensor:
    cfg = model.config
    B, Lq = q_in.shape[0], q_in.shape[1]
    Lk = kv_in.shape[1]
    nh, dh = cfg.heads, cfg.model_dim // cfg.heads

    def split(x: Tensor, length: int) -> Tensor:
        return transpose(reshape(x, (B, length, nh, dh)), (0, 2, 1, 3))

    q = split(add(matmul(q_in, model[f"{prefix}.wq"]), model[f"{prefix}.bq"]), Lq)
    k = split(add(matmul(kv_in, model[f"{prefix}.wk"]), model[f"{prefix}.bk"]), Lk)
    v = split(add(matmul(kv_in, model[f"{prefix}.wv"]), model[f"{prefix}.bv"]), Lk)
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / float(np.sqrt(dh)))
    if mask is not None:
        scores = add(scores, Tensor(mask.astype(cfg.np_dtype, copy=False)))
    weights = softmax(scores, axis=-1)
    if capture is not None:
        capture[prefix] = weights.data.copy()
    ctx = matmul(dropout(weights, cfg.dropout, rng), v)
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (B, Lq, cfg.model_dim))
    return add(matmul(ctx, model[f"{prefix}.wo"]), model[f"{prefix}.bo"])


def _ffn(model: ModelParams, prefix: str, x: Tensor) -> Tensor:
    h = gelu(add(matmul(x, model[f"{prefix}.w1"]), model[f"{prefix}.b1"]))
    return add(matmul(h, model[f"{prefix}.w2"]), model[f"{prefix}.b2"])


def _residual(model: ModelParams, ln_prefix: str, x: Tensor, sub: Tensor, rng) -> Tensor:
    return layer_norm(add(x, dropout(sub, model.config.dropout, rng)), model[f"{ln_prefix}.g"], model[f"{ln_prefix}.b"])


def encoder_forward(
    model: ModelParams,
    tokens: np.ndarray,
    lang_ids,
    padding_mask: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    capture: dict | None = None,
) -> Tensor:
    """Hidden states (batch, len, dim).

    padding_mask is a boolean keep mask (batch, len); padded keys receive
    exactly zero attention weight. rng enables dropout (training mode);
    rng=None runs deterministic evaluation mode.
    """
    mask = None if padding_mask is None else padding_additive(padding_mask, model.config.np_dtype)
    h = _embed(model, tokens, lang_ids, rng)
    for i in range(model.config.layers):
        a = _attention(model, f"enc.{i}.attn", h, h, mask, rng, capture)
        h = _residual(model, f"enc.{i}.ln1", h, a, rng)
        f = _ffn(model, f"enc.{i}.ffn", h)
        h = _residual(model, f"enc.{i}.ln2", h, f, rng)
    return h


def decoder_forward(
    model: ModelParams,
    tgt_tokens: np.ndarray,
    lang_ids,
    encoder_states: Tensor,
    src_padding_mask: np.ndarray | None = None,
    tgt_padding_mask: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    capture: dict | None = None,
) -> Tensor:
    """Decoder hidden states under a causal self-attention mask.

    Position t depends only on target tokens at positions <= t and on
    non-padded encoder states. A zero-length target yields an empty output.
    """
    if not model.has_decoder:
        raise ValueError("model has no decoder parameters")
    cfg = model.config
    tgt_tokens = np.asarray(tgt_tokens)
    B, L = tgt_tokens.shape
    if L == 0:
        return Tensor(np.zeros((B, 0, cfg.model_dim), dtype=cfg.np_dtype))
    self_mask = causal_additive(L, cfg.np_dtype)
    if tgt_padding_mask is not None:
        self_mask = self_mask + padding_additive(tgt_padding_mask, cfg.np_dtype)
    cross_mask = None if src_padding_mask is None else padding_additive(src_padding_mask, cfg.np_dtype)
    h = _embed(model, tgt_tokens, lang_ids, rng)
    for i in range(cfg.layers):
        a = _attention(model, f"dec.{i}.self", h, h, self_mask, rng, capture)
        h = _residual(model, f"dec.{i}.ln1", h, a, rng)
        c = _attention(model, f"dec.{i}.cross", h, encoder_states, cross_mask, rng, capture)
        h = _residual(model, f"dec.{i}.ln2", h, c, rng)
        f = _ffn(model, f"dec.{i}.ffn", h)
        h = _residual(model, f"dec.{i}.ln3", h, f, rng)
    return h


def output_logits(model: ModelParams, hidden: Tensor) -> Tensor:
    """Tied projection: logits = hidden @ tok_emb^T + out_bias.

    transpose() wraps a numpy view of the embedding storage, so writing to
    the table changes the logits with no copy step, and gradients through
    the projection accumulate into the same table as the input lookups.
    """
    return add(matmul(hidden, transpose(model["tok_emb"])), model["out_bias"])


# -- checkpoints --------------------------------------------------------------------


def save_checkpoint(path: str, model: ModelParams) -> None:
    names = model.names()
    header = {
        "config": asdict(model.config),
        "vocab_hash": model.vocab_hash,
        "dtype": model.config.dtype,
        "frozen": sorted(model.frozen),
        "params": [[n, list(model[n].data.shape)] for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        byte_order = "<f4" if model.config.dtype == "float32" else "<f8"
        for n in names:
            f.write(np.ascontiguousarray(model[n].data, dtype=byte_order).tobytes())


def load_checkpoint(path: str) -> ModelParams:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        config = TransformerConfig(**header["config"])
        config.validate()
        byte_order = "<f4" if header["dtype"] == "float32" else "<f8"
        itemsize = 4 if header["dtype"] == "float32" else 8
        tensors = {}
        for name, shape in header["params"]:
            n_items = int(np.prod(shape)) if shape else 1
            raw = f.read(n_items * itemsize)
            if len(raw) != n_items * itemsize:
                raise ValueError(f"truncated checkpoint: parameter {name}")
            arr = np.frombuffer(raw, dtype=byte_order).reshape(shape).astype(config.np_dtype)
            tensors[name] = Tensor.param(arr)
    return ModelParams(config, tensors, header["vocab_hash"], set(header["frozen"]))
