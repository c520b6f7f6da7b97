"""Experiment orchestration: flat key-value configs, artifact manifests,
and the six end-to-end pipeline variants over a cipher language pair.

Variants:
  xlm-baseline              random embedding init, bilingual MLM, UNMT
  lexically-aligned-xlm     per-language SGNS -> self-learned mapping ->
                            aligned embedding init (fine-tuned), MLM, UNMT
  frozen-ablation           as lexically-aligned-xlm but the embedding
                            table is frozen from initialization onward
  relm-baseline             monolingual MLM on L1, vocabulary extension
                            with random new rows, bilingual fine-tune, UNMT
  lexically-aligned-relm    extension rows come from L2 embeddings mapped
                            into the pretrained model's embedding space
  joint-embedding-ablation  one SGNS over the concatenated corpora (no
                            mapping step) used as the aligned init

Every stage appends a manifest record with its config hash, input/output
paths, output content hashes, seed, and wall-clock seconds. Reports and
metric logs contain no timing, so reruns with identical configs and seeds
reproduce them byte for byte in deterministic mode.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .cipher import CipherSpec, gen_cipher_bundle
from .corpus import Corpus, Vocabulary, apply_bpe_corpus, build_vocab, learn_bpe
from .decoding import DecodeConfig
from .embeddings import EmbeddingMatrix
from .evaluation import BleuReport, BliReport, bleu, bli_precision, chrf, unigram_precision, word_level_matrix
from .mapping import MapConfig, align_to_model_space, concat_mapped, map_embeddings, seed_identical, self_learn
from .mlm import (
    InitMode,
    MaskingPolicy,
    MlmTrainConfig,
    StreamSchedule,
    extend_vocab,
    init_mlm,
    train_mlm,
    write_metrics,
)
from .sgns import SgnsConfig, train_sgns
from .transformer import ModelParams, TransformerConfig, save_checkpoint
from .unmt import NoiseConfig, UnmtTrainConfig, init_unmt_from_mlm, train_unmt, translate_corpus

VARIANTS = (
    "xlm-baseline",
    "lexically-aligned-xlm",
    "relm-baseline",
    "lexically-aligned-relm",
    "frozen-ablation",
    "joint-embedding-ablation",
)

DEFAULT_CONFIG: dict[str, str] = {
    "cipher.vocab_size": "300",
    "cipher.sentences": "20000",
    "cipher.min_len": "5",
    "cipher.max_len": "15",
    "cipher.anchor_fraction": "0.08",
    "cipher.latent_dim": "16",
    "cipher.valid": "500",
    "cipher.test": "500",
    "cipher.seed": "11",
    # enough merges to reassemble the full closed word inventory; the cipher
    # alphabets are disjoint, so sharing across languages comes from anchors
    "bpe.merges": "1200",
    "vocab.min_count": "1",
    "sgns.dim": "64",
    # the cipher transition process is first-order, so distance-1 context
    # carries the signal; wider windows dilute it
    "sgns.window": "1",
    "sgns.negatives": "5",
    "sgns.epochs": "10",
    "sgns.lr": "0.005",
    "sgns.subsample": "0.0",
    "sgns.min_count": "1",
    "sgns.batch": "4096",
    "sgns.seed": "7",
    "map.csls_k": "10",
    "map.cutoff": "20000",
    "map.max_iters": "100",
    "map.tol": "1e-6",
    "map.seed": "3",
    "model.dim": "64",
    "model.heads": "4",
    "model.layers": "2",
    "model.ffn_dim": "256",
    "model.max_positions": "64",
    "model.dropout": "0.1",
    "mask.rate": "0.15",
    "mask.mask_share": "0.8",
    "mask.random_share": "0.1",
    "mask.keep_share": "0.1",
    "mlm.steps": "4000",
    "mlm.mono_steps": "1000",
    "mlm.batch": "32",
    "mlm.lr": "0.0003",
    "mlm.warmup": "50",
    "mlm.grad_clip": "5.0",
    "mlm.eval_every": "500",
    "mlm.eval_sentences": "128",
    "mlm.seed": "5",
    "unmt.steps": "8000",
    "unmt.batch": "16",
    "unmt.lr": "0.0003",
    "unmt.warmup": "50",
    "unmt.grad_clip": "5.0",
    "unmt.eval_every": "500",
    "unmt.eval_sentences": "100",
    "unmt.patience": "10",
    "unmt.seed": "9",
    "noise.drop": "0.1",
    "noise.blank": "0.1",
    "noise.window": "3",
    "decode.beam": "5",
    "decode.alpha": "1.0",
    "decode.max_len_factor": "1.5",
    "decode.max_len_offset": "5",
    "eval.bli_k": "5",
    "eval.csls_k": "10",
    "init.seed": "13",
}


class ConfigError(ValueError):
    """All config validation problems, collected before failing."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("config validation failed:\n  " + "\n  ".join(self.problems))


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key-value lines: "key value" or "key = value", '#' comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError([f"line {lineno}: expected 'key value', got {raw!r}"])
        out[key] = value
    return out


def load_config(path: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as f:
        return parse_config_text(f.read())


def save_config(path: str, cfg: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(cfg):
            f.write(f"{key} {cfg[key]}\n")


def config_hash(cfg: dict[str, str]) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ConfigReader:
    """Typed accessors over a flat string config; problems are collected so
    every validation failure is reported in one pass."""

    def __init__(self, raw: dict[str, str], known: dict[str, str] | None = None):
        self.raw = dict(raw)
        self.problems: list[str] = []
        if known is not None:
            for key in raw:
                if key not in known:
                    self.problems.append(f"unknown config key {key!r}")

    def _fetch(self, key: str):
        return self.raw.get(key, DEFAULT_CONFIG[key])

    def get_str(self, key: str) -> str:
        return str(self._fetch(key))

    def get_int(self, key: str) -> int:
        val = self._fetch(key)
        try:
            return int(val)
        except ValueError:
            self.problems.append(f"{key}: expected integer, got {val!r}")
            return 0

    def get_float(self, key: str) -> float:
        val = self._fetch(key)
        try:
            return float(val)
        except ValueError:
            self.problems.append(f"{key}: expected number, got {val!r}")
            return 0.0

    def finish(self) -> None:
        if self.problems:
            raise ConfigError(self.problems)


@dataclass
class PipelineSettings:
    """Typed view of one flat config, shared by the CLI and the pipeline."""

    spec: CipherSpec
    n_merges: int
    min_count: int
    sgns: SgnsConfig
    mapping: MapConfig
    model_kwargs: dict
    policy: MaskingPolicy
    mlm: MlmTrainConfig
    mono_steps: int
    unmt: UnmtTrainConfig
    noise: NoiseConfig
    decode: DecodeConfig
    bli_k: int
    csls_k: int
    init_seed: int


def parse_settings(config: dict[str, str]) -> PipelineSettings:
    """Parse and validate a flat config, reporting every problem at once."""
    g = ConfigReader(config, known=DEFAULT_CONFIG)
    spec = CipherSpec(
        vocab_size=g.get_int("cipher.vocab_size"),
        n_sentences=g.get_int("cipher.sentences"),
        min_len=g.get_int("cipher.min_len"),
        max_len=g.get_int("cipher.max_len"),
        anchor_fraction=g.get_float("cipher.anchor_fraction"),
        latent_dim=g.get_int("cipher.latent_dim"),
        seed=g.get_int("cipher.seed"),
        n_valid=g.get_int("cipher.valid"),
        n_test=g.get_int("cipher.test"),
    )
    sgns = SgnsConfig(
        dim=g.get_int("model.dim"),
        window=g.get_int("sgns.window"),
        negatives=g.get_int("sgns.negatives"),
        epochs=g.get_int("sgns.epochs"),
        lr=g.get_float("sgns.lr"),
        subsample=g.get_float("sgns.subsample"),
        min_count=g.get_int("sgns.min_count"),
        batch_size=g.get_int("sgns.batch"),
        seed=g.get_int("sgns.seed"),
    )
    mapping = MapConfig(
        csls_k=g.get_int("map.csls_k"),
        vocab_cutoff=g.get_int("map.cutoff"),
        tol=g.get_float("map.tol"),
        max_iters=g.get_int("map.max_iters"),
        seed=g.get_int("map.seed"),
    )
    model_kwargs = dict(
        model_dim=g.get_int("model.dim"),
        heads=g.get_int("model.heads"),
        layers=g.get_int("model.layers"),
        ffn_dim=g.get_int("model.ffn_dim"),
        max_positions=g.get_int("model.max_positions"),
        dropout=g.get_float("model.dropout"),
        n_langs=2,
        dtype="float32",
    )
    policy = MaskingPolicy(
        mask_rate=g.get_float("mask.rate"),
        mask_token_share=g.get_float("mask.mask_share"),
        random_share=g.get_float("mask.random_share"),
        keep_share=g.get_float("mask.keep_share"),
    )
    mlm = MlmTrainConfig(
        steps=g.get_int("mlm.steps"),
        batch_size=g.get_int("mlm.batch"),
        lr=g.get_float("mlm.lr"),
        warmup=g.get_int("mlm.warmup"),
        grad_clip=g.get_float("mlm.grad_clip"),
        eval_every=g.get_int("mlm.eval_every"),
        eval_sentences=g.get_int("mlm.eval_sentences"),
        seed=g.get_int("mlm.seed"),
    )
    unmt = UnmtTrainConfig(
        steps=g.get_int("unmt.steps"),
        batch_size=g.get_int("unmt.batch"),
        lr=g.get_float("unmt.lr"),
        warmup=g.get_int("unmt.warmup"),
        grad_clip=g.get_float("unmt.grad_clip"),
        eval_every=g.get_int("unmt.eval_every"),
        eval_sentences=g.get_int("unmt.eval_sentences"),
        patience=g.get_int("unmt.patience"),
        seed=g.get_int("unmt.seed"),
    )
    noise = NoiseConfig(
        drop_prob=g.get_float("noise.drop"),
        blank_prob=g.get_float("noise.blank"),
        shuffle_window=g.get_int("noise.window"),
    )
    decode = DecodeConfig(
        beam_size=g.get_int("decode.beam"),
        max_len_factor=g.get_float("decode.max_len_factor"),
        max_len_offset=g.get_int("decode.max_len_offset"),
        length_penalty=g.get_float("decode.alpha"),
    )
    settings = PipelineSettings(
        spec=spec,
        n_merges=g.get_int("bpe.merges"),
        min_count=g.get_int("vocab.min_count"),
        sgns=sgns,
        mapping=mapping,
        model_kwargs=model_kwargs,
        policy=policy,
        mlm=mlm,
        mono_steps=g.get_int("mlm.mono_steps"),
        unmt=unmt,
        noise=noise,
        decode=decode,
        bli_k=g.get_int("eval.bli_k"),
        csls_k=g.get_int("eval.csls_k"),
        init_seed=g.get_int("init.seed"),
    )
    if not g.problems:
        for obj in (spec, sgns, mapping, policy, mlm, unmt, noise, decode):
            try:
                obj.validate()
            except ValueError as exc:
                g.problems.append(str(exc))
        if settings.n_merges < 0:
            g.problems.append("bpe.merges must be >= 0")
        if settings.min_count < 1:
            g.problems.append("vocab.min_count must be >= 1")
        if settings.bli_k < 1 or settings.csls_k < 1:
            g.problems.append("eval.bli_k and eval.csls_k must be >= 1")
        try:
            TransformerConfig(vocab_size=2, **settings.model_kwargs).validate()
        except ValueError as exc:
            g.problems.append(str(exc))
    g.finish()
    return settings


@dataclass
class StageRecord:
    name: str
    config_hash: str
    inputs: list[str]
    outputs: list[str]
    output_hashes: dict[str, str]
    seed: int
    wall_seconds: float


@dataclass
class ExperimentManifest:
    experiment: str
    config: dict[str, str] = field(default_factory=dict)
    stages: list[StageRecord] = field(default_factory=list)

    def add(self, name: str, cfg: dict[str, str], inputs: list[str], outputs: list[str], seed: int, wall: float) -> None:
        hashes = {p: file_sha256(p) for p in outputs}
        self.stages.append(StageRecord(name, config_hash(cfg), list(inputs), list(outputs), hashes, seed, wall))

    def verify(self) -> list[str]:
        """Missing or modified artifacts, empty when everything matches."""
        problems = []
        for stage in self.stages:
            for path in stage.outputs:
                if not os.path.exists(path):
                    problems.append(f"{stage.name}: missing artifact {path}")
                elif file_sha256(path) != stage.output_hashes[path]:
                    problems.append(f"{stage.name}: artifact hash mismatch {path}")
        return problems

    def save(self, path: str) -> None:
        payload = {
            "experiment": self.experiment,
            "config": self.config,
            "stages": [asdict(s) for s in self.stages],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "ExperimentManifest":
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        manifest = cls(payload["experiment"], payload.get("config", {}))
        for s in payload["stages"]:
            manifest.stages.append(StageRecord(**s))
        return manifest


@dataclass
class PipelineResult:
    variant: str
    workdir: str
    manifest: ExperimentManifest
    bli: dict[str, BliReport]
    bleu_12: BleuReport
    bleu_21: BleuReport
    chrf_12: float
    chrf_21: float
    mlm_metrics: list
    unmt_metrics: list
    frozen_table_identical: bool | None
    paths: dict[str, str]

    @property
    def test_bleu(self) -> float:
        return (self.bleu_12.bleu + self.bleu_21.bleu) / 2.0

    @property
    def unigram_precision_12(self) -> float:
        return self.bleu_12.ngram_precisions[0] * 100.0

    @property
    def unigram_precision_21(self) -> float:
        return self.bleu_21.ngram_precisions[0] * 100.0


def build_pipeline_config(overrides: dict[str, str] | None = None) -> dict[str, str]:
    cfg = dict(DEFAULT_CONFIG)
    cfg.update(overrides or {})
    return cfg


def _slice(cfg: dict[str, str], *prefixes: str) -> dict[str, str]:
    return {k: v for k, v in cfg.items() if any(k.startswith(p) for p in prefixes)}


def model_embedding_matrix(model: ModelParams, vocab: Vocabulary) -> EmbeddingMatrix:
    """The model's token embedding rows as an embedding matrix (float64)."""
    return EmbeddingMatrix(vocab, model["tok_emb"].data.astype(np.float64))


def nonspecial_embedding_matrix(model: ModelParams, vocab: Vocabulary) -> EmbeddingMatrix:
    ids = [i for i in range(len(vocab)) if i not in set(vocab.specials.values())]
    tokens = [vocab.id_to_token[i] for i in ids]
    sub = Vocabulary(tokens, [0] * len(tokens), specials=[])
    return EmbeddingMatrix(sub, model["tok_emb"].data[ids].astype(np.float64))


def run_pipeline(variant: str, config: dict[str, str], workdir: str) -> PipelineResult:
    """Run one experiment variant end to end under one work directory."""
    if variant not in VARIANTS:
        raise ConfigError([f"unknown experiment variant {variant!r}; expected one of {', '.join(VARIANTS)}"])
    s = parse_settings(config)

    os.makedirs(workdir, exist_ok=True)
    paths = {name: os.path.join(workdir, name) for name in (
        "train.l1.txt", "train.l2.txt", "valid.l1.txt", "valid.l2.txt", "test.l1.txt", "test.l2.txt",
        "gold.dict", "bpe.model", "vocab.joint.txt", "vocab.l1.txt",
        "emb.l1.vec", "emb.l2.vec", "emb.aligned.vec",
        "mlm.ckpt", "mlm.metrics.tsv", "unmt.ckpt", "unmt.metrics.tsv",
        "hyp.l1_to_l2.txt", "hyp.l2_to_l1.txt", "report.tsv", "manifest.json",
    )}
    manifest = ExperimentManifest(variant, dict(config))

    # stage: cipher data
    t0 = time.perf_counter()
    bundle = gen_cipher_bundle(s.spec)
    bundle.l1.save(paths["train.l1.txt"])
    bundle.l2.save(paths["train.l2.txt"])
    bundle.valid[0].save(paths["valid.l1.txt"])
    bundle.valid[1].save(paths["valid.l2.txt"])
    bundle.test[0].save(paths["test.l1.txt"])
    bundle.test[1].save(paths["test.l2.txt"])
    bundle.gold.save(paths["gold.dict"])
    manifest.add(
        "gen-cipher", _slice(config, "cipher."), [],
        [paths[k] for k in ("train.l1.txt", "train.l2.txt", "valid.l1.txt", "valid.l2.txt",
                            "test.l1.txt", "test.l2.txt", "gold.dict")],
        s.spec.seed, time.perf_counter() - t0,
    )

    # stage: joint BPE over both languages
    t0 = time.perf_counter()
    bpe = learn_bpe([bundle.l1, bundle.l2], s.n_merges)
    bpe.save(paths["bpe.model"])
    bpe_l1 = apply_bpe_corpus(bpe, bundle.l1)
    bpe_l2 = apply_bpe_corpus(bpe, bundle.l2)
    bpe_valid = (apply_bpe_corpus(bpe, bundle.valid[0]), apply_bpe_corpus(bpe, bundle.valid[1]))
    bpe_test = (apply_bpe_corpus(bpe, bundle.test[0]), apply_bpe_corpus(bpe, bundle.test[1]))
    manifest.add("bpe-learn", _slice(config, "bpe."), [paths["train.l1.txt"], paths["train.l2.txt"]],
                 [paths["bpe.model"]], 0, time.perf_counter() - t0)

    # stage: vocabularies
    t0 = time.perf_counter()
    joint_vocab = build_vocab([bpe_l1, bpe_l2], min_count=s.min_count)
    joint_vocab.save(paths["vocab.joint.txt"])
    vocab_outputs = [paths["vocab.joint.txt"]]
    vocab_l1 = None
    if variant in ("relm-baseline", "lexically-aligned-relm"):
        vocab_l1 = build_vocab(bpe_l1, min_count=s.min_count)
        vocab_l1.save(paths["vocab.l1.txt"])
        vocab_outputs.append(paths["vocab.l1.txt"])
    manifest.add("vocab", _slice(config, "vocab."), [paths["bpe.model"]], vocab_outputs, 0,
                 time.perf_counter() - t0)

    aligned: EmbeddingMatrix | None = None
    if variant in ("lexically-aligned-xlm", "frozen-ablation"):
        t0 = time.perf_counter()
        e1 = train_sgns(bpe_l1, s.sgns)
        e2 = train_sgns(bpe_l2, SgnsConfig(**{**asdict(s.sgns), "seed": s.sgns.seed + 1}))
        e1.save(paths["emb.l1.vec"])
        e2.save(paths["emb.l2.vec"])
        manifest.add("emb-train", _slice(config, "sgns."), [paths["train.l1.txt"], paths["train.l2.txt"]],
                     [paths["emb.l1.vec"], paths["emb.l2.vec"]], s.sgns.seed, time.perf_counter() - t0)
        t0 = time.perf_counter()
        seed_dict = seed_identical(e1.vocab, e2.vocab)
        solution = self_learn(e1, e2, seed_dict, s.mapping)
        m1, m2 = map_embeddings(e1, e2, solution)
        aligned = concat_mapped(m1, m2, joint_vocab, seed=s.mapping.seed)
        aligned.save(paths["emb.aligned.vec"])
        manifest.add("map", _slice(config, "map."), [paths["emb.l1.vec"], paths["emb.l2.vec"]],
                     [paths["emb.aligned.vec"]], s.mapping.seed, time.perf_counter() - t0)
    elif variant == "joint-embedding-ablation":
        t0 = time.perf_counter()
        joint_emb = train_sgns([bpe_l1, bpe_l2], s.sgns)
        aligned = concat_mapped(joint_emb, joint_emb, joint_vocab, seed=s.mapping.seed)
        aligned.save(paths["emb.aligned.vec"])
        manifest.add("emb-train", _slice(config, "sgns."), [paths["train.l1.txt"], paths["train.l2.txt"]],
                     [paths["emb.aligned.vec"]], s.sgns.seed, time.perf_counter() - t0)

    # stage: masked LM
    t0 = time.perf_counter()
    frozen_snapshot = None
    if variant in ("relm-baseline", "lexically-aligned-relm"):
        cfg_mono = TransformerConfig(vocab_size=len(vocab_l1), **s.model_kwargs)
        model = init_mlm(cfg_mono, vocab_l1, InitMode("random"), seed=s.init_seed)
        mono_cfg = MlmTrainConfig(**{**asdict(s.mlm), "steps": s.mono_steps})
        model, metrics_mono = train_mlm(model, (bpe_l1, bpe_l2), vocab_l1, s.policy,
                                        StreamSchedule((1.0, 0.0)), mono_cfg)
        if variant == "lexically-aligned-relm":
            e2 = train_sgns(bpe_l2, SgnsConfig(**{**asdict(s.sgns), "seed": s.sgns.seed + 1}))
            e2.save(paths["emb.l2.vec"])
            mapped = align_to_model_space(e2, nonspecial_embedding_matrix(model, vocab_l1), s.mapping)
            model = extend_vocab(model, vocab_l1, joint_vocab, init=mapped, seed=s.init_seed + 1)
        else:
            model = extend_vocab(model, vocab_l1, joint_vocab, init="random", seed=s.init_seed + 1)
        model, metrics_bi = train_mlm(model, (bpe_l1, bpe_l2), joint_vocab, s.policy,
                                      StreamSchedule((1.0, 1.0)), s.mlm)
        mlm_metrics = metrics_mono + metrics_bi
    else:
        cfg_joint = TransformerConfig(vocab_size=len(joint_vocab), **s.model_kwargs)
        if variant == "xlm-baseline":
            mode = InitMode("random")
        elif variant == "frozen-ablation":
            mode = InitMode("aligned_frozen", aligned)
        else:
            mode = InitMode("aligned_finetuned", aligned)
        model = init_mlm(cfg_joint, joint_vocab, mode, seed=s.init_seed)
        if variant == "frozen-ablation":
            frozen_snapshot = model["tok_emb"].data.copy()
        model, mlm_metrics = train_mlm(model, (bpe_l1, bpe_l2), joint_vocab, s.policy,
                                       StreamSchedule((1.0, 1.0)), s.mlm)
    save_checkpoint(paths["mlm.ckpt"], model)
    write_metrics(paths["mlm.metrics.tsv"], mlm_metrics)
    manifest.add("mlm-train", _slice(config, "model.", "mask.", "mlm.", "init."),
                 [paths["vocab.joint.txt"]], [paths["mlm.ckpt"], paths["mlm.metrics.tsv"]],
                 s.mlm.seed, time.perf_counter() - t0)

    # stage: BLI on the MLM embedding layer (word level, subword averaged)
    t0 = time.perf_counter()
    emb_layer = model_embedding_matrix(model, joint_vocab)
    src_words = [p[0] for p in bundle.gold.pairs]
    tgt_words = [p[1] for p in bundle.gold.pairs]
    src_matrix, _ = word_level_matrix(src_words, bpe, emb_layer)
    tgt_matrix, _ = word_level_matrix(tgt_words, bpe, emb_layer)
    bli = {
        "nn": bli_precision(src_matrix, tgt_matrix, bundle.gold, k=s.bli_k, method="nn"),
        "csls": bli_precision(src_matrix, tgt_matrix, bundle.gold, k=s.bli_k, method="csls", csls_k=s.csls_k),
    }
    manifest.add("eval-bli", _slice(config, "eval."), [paths["mlm.ckpt"], paths["gold.dict"]], [], 0,
                 time.perf_counter() - t0)

    # stage: unsupervised NMT
    t0 = time.perf_counter()
    seq2seq = init_unmt_from_mlm(model, seed=s.init_seed + 2)
    seq2seq, unmt_metrics = train_unmt(seq2seq, (bpe_l1, bpe_l2), joint_vocab, s.noise, s.unmt,
                                       valid_pair=bpe_valid)
    save_checkpoint(paths["unmt.ckpt"], seq2seq)
    write_metrics(paths["unmt.metrics.tsv"], unmt_metrics)
    manifest.add("unmt-train", _slice(config, "unmt.", "noise."), [paths["mlm.ckpt"]],
                 [paths["unmt.ckpt"], paths["unmt.metrics.tsv"]], s.unmt.seed, time.perf_counter() - t0)

    frozen_identical: bool | None = None
    if frozen_snapshot is not None:
        frozen_identical = bool(np.array_equal(frozen_snapshot, seq2seq["tok_emb"].data))

    # stage: test decoding + metrics
    t0 = time.perf_counter()
    hyp12 = translate_corpus(seq2seq, bpe_test[0].sentences, joint_vocab, 0, 1, s.decode)
    hyp21 = translate_corpus(seq2seq, bpe_test[1].sentences, joint_vocab, 1, 0, s.decode)
    refs1 = bundle.test[0].sentences
    refs2 = bundle.test[1].sentences
    Corpus(hyp12, "l2").save(paths["hyp.l1_to_l2.txt"])
    Corpus(hyp21, "l1").save(paths["hyp.l2_to_l1.txt"])
    bleu_12 = bleu(hyp12, refs2)
    bleu_21 = bleu(hyp21, refs1)
    chrf_12 = chrf(hyp12, refs2)
    chrf_21 = chrf(hyp21, refs1)
    report_lines = [
        ("variant", variant),
        ("bli.nn.p_at_k", f"{bli['nn'].precision:.6f}"),
        ("bli.csls.p_at_k", f"{bli['csls'].precision:.6f}"),
        ("bleu.l1_to_l2", f"{bleu_12.bleu:.6f}"),
        ("bleu.l2_to_l1", f"{bleu_21.bleu:.6f}"),
        ("unigram_precision.l1_to_l2", f"{unigram_precision(hyp12, refs2):.6f}"),
        ("unigram_precision.l2_to_l1", f"{unigram_precision(hyp21, refs1):.6f}"),
        ("chrf.l1_to_l2", f"{chrf_12:.6f}"),
        ("chrf.l2_to_l1", f"{chrf_21:.6f}"),
    ]
    if frozen_identical is not None:
        report_lines.append(("frozen_table_identical", str(frozen_identical)))
    with open(paths["report.tsv"], "w", encoding="utf-8") as f:
        for key, value in report_lines:
            f.write(f"{key}\t{value}\n")
    manifest.add("translate+eval", _slice(config, "decode.", "eval."),
                 [paths["unmt.ckpt"], paths["test.l1.txt"], paths["test.l2.txt"]],
                 [paths["hyp.l1_to_l2.txt"], paths["hyp.l2_to_l1.txt"], paths["report.tsv"]],
                 0, time.perf_counter() - t0)

    manifest.save(paths["manifest.json"])
    return PipelineResult(
        variant=variant,
        workdir=workdir,
        manifest=manifest,
        bli=bli,
        bleu_12=bleu_12,
        bleu_21=bleu_21,
        chrf_12=chrf_12,
        chrf_21=chrf_21,
        mlm_metrics=mlm_metrics,
        unmt_metrics=unmt_metrics,
        frozen_table_identical=frozen_identical,
        paths=paths,
    )
