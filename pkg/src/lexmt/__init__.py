"""Lexically aligned cross-lingual pretraining for unsupervised NMT,
built from scratch on numpy: BPE, skip-gram embeddings, self-learned
orthogonal mappings, a reverse-mode autodiff transformer, masked-LM
pretraining with aligned embedding initialization, denoising plus
back-translation training, and BLI/BLEU/chrF evaluation.

Deterministic mode: set LEXMT_DETERMINISTIC=1 in the environment before
Python starts (or before this package is first imported) to pin the BLAS
thread pools to one thread. Multi-threaded BLAS reductions can reorder
float additions between runs; with one thread, every run with identical
configs and seeds produces byte-identical artifacts.
"""

import os as _os

if _os.environ.get("LEXMT_DETERMINISTIC", "").strip() not in ("", "0"):
    # Effective only if numpy has not been imported yet, hence set here,
    # before this package pulls numpy in.
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        _os.environ.setdefault(_var, "1")

from . import autodiff, cipher, corpus, decoding, embeddings, evaluation, experiment, mapping, mlm, sgns, transformer, unmt  # noqa: E402
from .corpus import BPEModel, Corpus, Vocabulary, apply_bpe, apply_bpe_corpus, build_vocab, detokenize, learn_bpe  # noqa: E402
from .embeddings import EmbeddingMatrix  # noqa: E402
from .mapping import BilingualDictionary, MapConfig, MappingSolution, align_to_model_space, concat_mapped, map_embeddings, procrustes, seed_identical, self_learn  # noqa: E402
from .sgns import SgnsConfig, train_sgns  # noqa: E402
from .autodiff import Adam, Tensor  # noqa: E402
from .transformer import ModelParams, TransformerConfig, init_model, load_checkpoint, save_checkpoint  # noqa: E402
from .decoding import DecodeConfig, beam_search, greedy_translate, translate  # noqa: E402
from .mlm import InitMode, MaskingPolicy, MlmTrainConfig, StreamSchedule, extend_vocab, init_mlm, mask_batch, perplexity, train_mlm  # noqa: E402
from .unmt import NoiseConfig, UnmtTrainConfig, init_unmt_from_mlm, noise, train_unmt, translate_corpus  # noqa: E402
from .evaluation import BleuReport, BliReport, bleu, bli_precision, chrf, unigram_precision, word_level_matrix  # noqa: E402
from .cipher import CipherSpec, gen_cipher_bundle, gen_cipher_pair  # noqa: E402
from .experiment import VARIANTS, ConfigError, ExperimentManifest, PipelineResult, build_pipeline_config, config_hash, load_config, parse_settings, run_pipeline, save_config  # noqa: E402

__version__ = "0.1.0"
