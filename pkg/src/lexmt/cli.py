"""Command-line interface: one subcommand per pipeline stage plus the
end-to-end experiment driver and the cipher-language generator.

Exit codes: 0 success, 1 validation error (bad flags or config), 2 runtime
error (missing or corrupt artifact, compute failure), 3 an evaluation
threshold given via --min-* was not met.

Setting the environment variable LEXMT_DETERMINISTIC=1 before launch pins
numerical backends to one thread (see the package __init__) so repeated
runs with identical configs and seeds produce byte-identical artifacts.

Every subcommand validates its configuration before any compute and, on
success, writes a single-stage manifest fragment next to its main output
recording config hash, inputs, outputs, artifact hashes, and wall time.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import experiment
from .cipher import gen_cipher_bundle
from .corpus import BPEModel, Corpus, Vocabulary, apply_bpe_corpus, build_vocab, learn_bpe
from .embeddings import EmbeddingMatrix
from .evaluation import bleu, bli_precision, chrf, unigram_precision, word_level_matrix
from .experiment import ConfigError, ExperimentManifest, load_config, parse_settings
from .mapping import BilingualDictionary, align_to_model_space, concat_mapped, map_embeddings, seed_identical, self_learn
from .mlm import InitMode, StreamSchedule, extend_vocab, init_mlm, train_mlm, write_metrics
from .sgns import train_sgns
from .transformer import TransformerConfig, load_checkpoint, save_checkpoint
from .unmt import init_unmt_from_mlm, train_unmt, translate_corpus


class ArtifactError(RuntimeError):
    """An input artifact is missing or cannot be parsed."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract reserves
    # 2 for runtime failures, so usage problems must exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._rc(message))

    @staticmethod
    def _rc(message):
        print(f"error: {message}", file=sys.stderr)
        return 1


def _load(kind: str, loader, path: str, **kwargs):
    try:
        return loader(path, **kwargs)
    except OSError as exc:
        raise ArtifactError(f"cannot read {kind} {path!r}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise ArtifactError(f"{kind} {path!r} is corrupt: {exc}") from exc


def _settings(args) -> experiment.PipelineSettings:
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(_load("config", load_config, args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError([f"--set expects key=value, got {item!r}"])
        key, _, value = item.partition("=")
        cfg[key.strip()] = value.strip()
    args._config_dict = cfg
    return parse_settings(cfg)


def _fragment(args, stage: str, inputs: list[str], outputs: list[str], seed: int, wall: float, anchor: str) -> None:
    manifest = ExperimentManifest(stage, getattr(args, "_config_dict", {}))
    manifest.add(stage, manifest.config, inputs, outputs, seed, wall)
    if os.path.isdir(anchor):
        manifest.save(os.path.join(anchor, f"manifest.{stage}.json"))
    else:
        manifest.save(anchor + ".manifest.json")


def _load_corpus(path: str, lang: str = "") -> Corpus:
    return _load("corpus", Corpus.load, path, lang=lang)


def _maybe_pair(a: str | None, b: str | None, what: str):
    if (a is None) != (b is None):
        raise ConfigError([f"--{what}-l1 and --{what}-l2 must be given together"])
    if a is None:
        return None
    return (_load_corpus(a, "l1"), _load_corpus(b, "l2"))


def cmd_gen_cipher(args) -> int:
    s = _settings(args)
    t0 = time.perf_counter()
    os.makedirs(args.out_dir, exist_ok=True)
    bundle = gen_cipher_bundle(s.spec)
    names = {
        "train.l1.txt": bundle.l1, "train.l2.txt": bundle.l2,
        "valid.l1.txt": bundle.valid[0], "valid.l2.txt": bundle.valid[1],
        "test.l1.txt": bundle.test[0], "test.l2.txt": bundle.test[1],
    }
    outputs = []
    for name, corpus in names.items():
        path = os.path.join(args.out_dir, name)
        corpus.save(path)
        outputs.append(path)
    gold_path = os.path.join(args.out_dir, "gold.dict")
    bundle.gold.save(gold_path)
    outputs.append(gold_path)
    _fragment(args, "gen-cipher", [], outputs, s.spec.seed, time.perf_counter() - t0, args.out_dir)
    print(f"wrote cipher pair ({s.spec.vocab_size} words, {s.spec.n_sentences} sentences/side) to {args.out_dir}")
    return 0


def cmd_bpe_learn(args) -> int:
    if args.merges < 0:
        raise ConfigError(["--merges must be >= 0"])
    corpora = [_load_corpus(p) for p in args.input]
    t0 = time.perf_counter()
    model = learn_bpe(corpora, args.merges)
    model.save(args.out)
    _fragment(args, "bpe-learn", list(args.input), [args.out], 0, time.perf_counter() - t0, args.out)
    print(f"learned {len(model.merges)} merges -> {args.out}")
    return 0


def cmd_bpe_apply(args) -> int:
    model = _load("BPE model", BPEModel.load, args.model)
    corpus = _load_corpus(args.input)
    t0 = time.perf_counter()
    segmented = apply_bpe_corpus(model, corpus)
    segmented.save(args.out)
    _fragment(args, "bpe-apply", [args.model, args.input], [args.out], 0, time.perf_counter() - t0, args.out)
    print(f"segmented {len(segmented.sentences)} sentences -> {args.out}")
    return 0


def cmd_build_vocab(args) -> int:
    # helper used by demos/tests; not one of the documented stages
    corpora = [_load_corpus(p) for p in args.input]
    vocab = build_vocab(corpora, min_count=args.min_count)
    vocab.save(args.out)
    print(f"{len(vocab)} types -> {args.out}")
    return 0


def cmd_emb_train(args) -> int:
    s = _settings(args)
    corpora = [_load_corpus(p) for p in args.input]
    t0 = time.perf_counter()
    emb = train_sgns(corpora if len(corpora) > 1 else corpora[0], s.sgns)
    emb.save(args.out)
    _fragment(args, "emb-train", list(args.input), [args.out], s.sgns.seed, time.perf_counter() - t0, args.out)
    print(f"trained {emb.vectors.shape[0]}x{emb.vectors.shape[1]} embeddings -> {args.out}")
    return 0


def cmd_map(args) -> int:
    s = _settings(args)
    e_src = _load("embeddings", EmbeddingMatrix.load, args.src)
    e_tgt = _load("embeddings", EmbeddingMatrix.load, args.tgt)
    t0 = time.perf_counter()
    seed_dict = seed_identical(e_src.vocab, e_tgt.vocab)
    solution = self_learn(e_src, e_tgt, seed_dict, s.mapping)
    m_src, m_tgt = map_embeddings(e_src, e_tgt, solution)
    m_src.save(args.out_src)
    m_tgt.save(args.out_tgt)
    outputs = [args.out_src, args.out_tgt]
    inputs = [args.src, args.tgt]
    if args.out_joint:
        if not args.joint_vocab:
            raise ConfigError(["--out-joint requires --joint-vocab"])
        joint_vocab = _load("vocabulary", Vocabulary.load, args.joint_vocab)
        joint = concat_mapped(m_src, m_tgt, joint_vocab, seed=s.mapping.seed)
        joint.save(args.out_joint)
        outputs.append(args.out_joint)
        inputs.append(args.joint_vocab)
    if args.dict_out:
        solution.final_dictionary.save(args.dict_out)
        outputs.append(args.dict_out)
    _fragment(args, "map", inputs, outputs, s.mapping.seed, time.perf_counter() - t0, args.out_src)
    print(f"mapping {solution.status} after {len(solution.objective_trace)} iterations, "
          f"{len(solution.final_dictionary)} induced pairs, seed {len(seed_dict)} pairs")
    return 0


def cmd_mlm_train(args) -> int:
    s = _settings(args)
    mode = InitMode(args.init)
    if mode.mode.startswith("aligned"):
        if not args.embeddings:
            raise ConfigError([f"--init {args.init} requires --embeddings"])
        mode = InitMode(args.init, _load("embeddings", EmbeddingMatrix.load, args.embeddings))
    vocab = _load("vocabulary", Vocabulary.load, args.vocab)
    train = (_load_corpus(args.train_l1, "l1"), _load_corpus(args.train_l2, "l2"))
    valid = _maybe_pair(args.valid_l1, args.valid_l2, "valid")
    schedule = StreamSchedule(tuple(args.schedule))
    schedule.validate()
    t0 = time.perf_counter()
    cfg = TransformerConfig(vocab_size=len(vocab), **s.model_kwargs)
    model = init_mlm(cfg, vocab, mode, seed=s.init_seed)
    model, metrics = train_mlm(model, train, vocab, s.policy, schedule, s.mlm, valid_corpora=valid)
    save_checkpoint(args.out, model)
    outputs = [args.out]
    if args.metrics:
        write_metrics(args.metrics, metrics)
        outputs.append(args.metrics)
    inputs = [args.train_l1, args.train_l2, args.vocab] + ([args.embeddings] if args.embeddings else [])
    _fragment(args, "mlm-train", inputs, outputs, s.mlm.seed, time.perf_counter() - t0, args.out)
    final = metrics[-1].train_loss if metrics else float("nan")
    print(f"trained masked LM for {s.mlm.steps} steps (final train loss {final:.4f}) -> {args.out}")
    return 0


def cmd_vocab_extend(args) -> int:
    s = _settings(args)
    model = _load("checkpoint", load_checkpoint, args.ckpt)
    old_vocab = _load("vocabulary", Vocabulary.load, args.old_vocab)
    new_vocab = _load("vocabulary", Vocabulary.load, args.new_vocab)
    t0 = time.perf_counter()
    if args.init == "aligned":
        if not args.embeddings:
            raise ConfigError(["--init aligned requires --embeddings"])
        emb = _load("embeddings", EmbeddingMatrix.load, args.embeddings)
        if not args.pre_mapped:
            emb = align_to_model_space(emb, experiment.nonspecial_embedding_matrix(model, old_vocab), s.mapping)
        extended = extend_vocab(model, old_vocab, new_vocab, init=emb, seed=s.init_seed)
    else:
        extended = extend_vocab(model, old_vocab, new_vocab, init="random", seed=s.init_seed)
    save_checkpoint(args.out, extended)
    inputs = [args.ckpt, args.old_vocab, args.new_vocab] + ([args.embeddings] if args.embeddings else [])
    _fragment(args, "vocab-extend", inputs, [args.out], s.init_seed, time.perf_counter() - t0, args.out)
    print(f"extended vocabulary {len(old_vocab)} -> {len(new_vocab)} rows ({args.init} new rows) -> {args.out}")
    return 0


def cmd_unmt_train(args) -> int:
    s = _settings(args)
    mlm_model = _load("checkpoint", load_checkpoint, args.ckpt)
    vocab = _load("vocabulary", Vocabulary.load, args.vocab)
    train = (_load_corpus(args.train_l1, "l1"), _load_corpus(args.train_l2, "l2"))
    valid = _maybe_pair(args.valid_l1, args.valid_l2, "valid")
    t0 = time.perf_counter()
    model = init_unmt_from_mlm(mlm_model, seed=s.init_seed + 2)
    model, metrics = train_unmt(model, train, vocab, s.noise, s.unmt, valid_pair=valid)
    save_checkpoint(args.out, model)
    outputs = [args.out]
    if args.metrics:
        write_metrics(args.metrics, metrics)
        outputs.append(args.metrics)
    _fragment(args, "unmt-train", [args.ckpt, args.train_l1, args.train_l2, args.vocab], outputs,
              s.unmt.seed, time.perf_counter() - t0, args.out)
    print(f"trained translator for {s.unmt.steps} steps -> {args.out}")
    return 0


def cmd_translate(args) -> int:
    s = _settings(args)
    model = _load("checkpoint", load_checkpoint, args.ckpt)
    vocab = _load("vocabulary", Vocabulary.load, args.vocab)
    if not model.has_decoder:
        raise ArtifactError(f"checkpoint {args.ckpt!r} has no decoder; train a translator first")
    n_langs = model.config.n_langs
    if not (0 <= args.src_lang < n_langs and 0 <= args.tgt_lang < n_langs):
        raise ConfigError([f"language ids must be in [0, {n_langs})"])
    corpus = _load_corpus(args.input)
    t0 = time.perf_counter()
    words = translate_corpus(model, corpus.sentences, vocab, args.src_lang, args.tgt_lang, s.decode)
    Corpus(words, str(args.tgt_lang)).save(args.out)
    _fragment(args, "translate", [args.ckpt, args.vocab, args.input], [args.out], 0,
              time.perf_counter() - t0, args.out)
    print(f"translated {len(words)} sentences -> {args.out}")
    return 0


def cmd_eval_bli(args) -> int:
    gold = _load("dictionary", BilingualDictionary.load, args.gold)
    if args.ckpt:
        if not (args.vocab and args.bpe):
            raise ConfigError(["--ckpt evaluation requires --vocab and --bpe"])
        model = _load("checkpoint", load_checkpoint, args.ckpt)
        vocab = _load("vocabulary", Vocabulary.load, args.vocab)
        bpe = _load("BPE model", BPEModel.load, args.bpe)
        if len(vocab) != model.config.vocab_size:
            raise ArtifactError(f"vocabulary size {len(vocab)} does not match checkpoint {model.config.vocab_size}")
        layer = experiment.model_embedding_matrix(model, vocab)
        src_emb, _ = word_level_matrix([p[0] for p in gold.pairs], bpe, layer)
        tgt_emb, _ = word_level_matrix([p[1] for p in gold.pairs], bpe, layer)
    else:
        if not (args.src and args.tgt):
            raise ConfigError(["give either --ckpt with --vocab/--bpe, or --src and --tgt embedding files"])
        src_emb = _load("embeddings", EmbeddingMatrix.load, args.src)
        tgt_emb = _load("embeddings", EmbeddingMatrix.load, args.tgt)
    methods = ("nn", "csls") if args.method == "both" else (args.method,)
    lines = []
    worst = 1.0
    for method in methods:
        report = bli_precision(src_emb, tgt_emb, gold, k=args.k, method=method, csls_k=args.csls_k)
        worst = min(worst, report.precision)
        lines.append(report.tsv())
        print(str(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    if args.min_p is not None and worst < args.min_p:
        print(f"threshold not met: P@{args.k} {worst:.4f} < {args.min_p}", file=sys.stderr)
        return 3
    return 0


def _read_eval_pair(args):
    hyp = _load_corpus(args.hyp).sentences
    ref = _load_corpus(args.ref).sentences
    if len(hyp) != len(ref):
        raise ArtifactError(f"hypothesis ({len(hyp)}) and reference ({len(ref)}) line counts differ")
    return hyp, ref


def cmd_eval_bleu(args) -> int:
    hyp, ref = _read_eval_pair(args)
    report = bleu(hyp, ref)
    print(str(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(report.tsv() + "\n")
    if args.min_bleu is not None and report.bleu < args.min_bleu:
        print(f"threshold not met: BLEU {report.bleu:.2f} < {args.min_bleu}", file=sys.stderr)
        return 3
    return 0


def cmd_eval_chrf(args) -> int:
    hyp, ref = _read_eval_pair(args)
    score = chrf(hyp, ref, max_n=args.max_n, beta=args.beta)
    label = "chrF" if args.beta == 1.0 else f"chrF{args.beta:g}"
    print(f"{label}\t{score:.2f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(f"chrf\t{score:.6f}\n")
    if args.min_chrf is not None and score < args.min_chrf:
        print(f"threshold not met: chrF {score:.2f} < {args.min_chrf}", file=sys.stderr)
        return 3
    return 0


def cmd_pipeline(args) -> int:
    cfg = experiment.build_pipeline_config()
    if args.config:
        cfg.update(_load("config", load_config, args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError([f"--set expects key=value, got {item!r}"])
        key, _, value = item.partition("=")
        cfg[key.strip()] = value.strip()
    result = experiment.run_pipeline(args.experiment, cfg, args.workdir)
    problems = result.manifest.verify()
    if problems:
        raise ArtifactError("; ".join(problems))
    print(f"experiment {args.experiment} finished:")
    print(f"  BLI   P@{result.bli['nn'].k}  nn {result.bli['nn'].precision:.4f}  "
          f"csls {result.bli['csls'].precision:.4f}")
    print(f"  BLEU  l1->l2 {result.bleu_12.bleu:.2f}  l2->l1 {result.bleu_21.bleu:.2f}")
    print(f"  chrF  l1->l2 {result.chrf_12:.2f}  l2->l1 {result.chrf_21:.2f}")
    if result.frozen_table_identical is not None:
        print(f"  frozen embedding table unchanged: {result.frozen_table_identical}")
    print(f"  artifacts under {result.workdir}")
    if args.min_bleu is not None and result.test_bleu < args.min_bleu:
        print(f"threshold not met: mean BLEU {result.test_bleu:.2f} < {args.min_bleu}", file=sys.stderr)
        return 3
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lexmt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("gen-cipher", help="generate a synthetic cipher language pair")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_cipher)

    p = sub.add_parser("bpe-learn", help="learn BPE merges from token files")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="segment a corpus with learned merges")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("build-vocab", help="count types in segmented corpora")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("emb-train", help="train skip-gram embeddings")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_emb_train)

    p = sub.add_parser("map", help="self-learn an orthogonal cross-lingual mapping")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.add_argument("--joint-vocab")
    p.add_argument("--out-joint")
    p.add_argument("--dict-out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("mlm-train", help="pretrain the masked language model")
    p.add_argument("--train-l1", required=True)
    p.add_argument("--train-l2", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--init", choices=InitMode.MODES, default="random")
    p.add_argument("--embeddings", help="aligned embedding file for aligned init modes")
    p.add_argument("--schedule", type=float, nargs=2, default=[1.0, 1.0],
                   metavar=("W1", "W2"), help="language sampling weights")
    p.add_argument("--valid-l1")
    p.add_argument("--valid-l2")
    _add_config_flags(p)
    p.set_defaults(func=cmd_mlm_train)

    p = sub.add_parser("vocab-extend", help="extend a checkpoint to a larger vocabulary")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--old-vocab", required=True)
    p.add_argument("--new-vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", choices=("random", "aligned"), default="random")
    p.add_argument("--embeddings", help="embeddings for the new tokens (aligned init)")
    p.add_argument("--pre-mapped", action="store_true",
                   help="embeddings are already in the model space; skip alignment")
    _add_config_flags(p)
    p.set_defaults(func=cmd_vocab_extend)

    p = sub.add_parser("unmt-train", help="train the unsupervised translator from an MLM checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--train-l1", required=True)
    p.add_argument("--train-l2", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--valid-l1")
    p.add_argument("--valid-l2")
    _add_config_flags(p)
    p.set_defaults(func=cmd_unmt_train)

    p = sub.add_parser("translate", help="translate a segmented corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--src-lang", type=int, required=True)
    p.add_argument("--tgt-lang", type=int, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval-bli", help="bilingual lexicon induction precision@k")
    p.add_argument("--src", help="source embedding file")
    p.add_argument("--tgt", help="target embedding file")
    p.add_argument("--ckpt", help="evaluate a checkpoint's embedding layer instead")
    p.add_argument("--vocab")
    p.add_argument("--bpe")
    p.add_argument("--gold", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--method", choices=("nn", "csls", "both"), default="both")
    p.add_argument("--csls-k", type=int, default=10)
    p.add_argument("--out")
    p.add_argument("--min-p", type=float, help="exit 3 if any method scores below this")
    p.set_defaults(func=cmd_eval_bli)

    p = sub.add_parser("eval-bleu", help="corpus BLEU of a translation file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out")
    p.add_argument("--min-bleu", type=float, help="exit 3 if BLEU is below this")
    p.set_defaults(func=cmd_eval_bleu)

    p = sub.add_parser("eval-chrf", help="character n-gram F score of a translation file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--min-chrf", type=float, help="exit 3 if chrF is below this")
    p.set_defaults(func=cmd_eval_chrf)

    p = sub.add_parser("pipeline", help="run one experiment variant end to end")
    p.add_argument("--experiment", required=True, choices=experiment.VARIANTS)
    p.add_argument("--workdir", required=True)
    p.add_argument("--min-bleu", type=float, help="exit 3 if mean test BLEU is below this")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = getattr(args, "command", "lexmt")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"[{command}] {exc}", file=sys.stderr)
        return 1
    except ArtifactError as exc:
        print(f"[{command}] error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"[{command}] invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError) as exc:
        print(f"[{command}] runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
