"""Unsupervised cross-lingual embedding mapping.

Two monolingual embedding spaces are pulled into a shared space by
alternating an orthogonal Procrustes solve with CSLS-based dictionary
induction, seeded by tokens whose surface form appears in both
vocabularies. Induction is stochastic: candidate pairs survive with a
keep-probability that starts small and doubles whenever the objective
stalls, until it reaches 1 and the mean dictionary cosine converges.

All solves happen on normalized copies (unit rows, centered columns, unit
rows again); the target side is never rotated, so the returned solution maps
source rows into the normalized target space via ``x @ W_src``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary
from .embeddings import EmbeddingMatrix


@dataclass
class BilingualDictionary:
    """Token translation pairs; the seed, the induced and the gold standard."""

    pairs: list[tuple[str, str]]
    provenance: str = "seed"  # seed | induced | gold

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("duplicate pairs in dictionary")

    def __len__(self) -> int:
        return len(self.pairs)

    def check_vocabs(self, vocab_src: Vocabulary, vocab_tgt: Vocabulary) -> None:
        for s, t in self.pairs:
            if s not in vocab_src:
                raise ValueError(f"source token not in vocabulary: {s!r}")
            if t not in vocab_tgt:
                raise ValueError(f"target token not in vocabulary: {t!r}")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for s, t in self.pairs:
                f.write(f"{s} {t}\n")

    @classmethod
    def load(cls, path, provenance: str = "gold") -> "BilingualDictionary":
        pairs = []
        seen = set()
        with open(path, encoding="utf-8") as f:
            for line in f:
                parts = line.split()
                if len(parts) != 2:
                    continue
                pair = (parts[0], parts[1])
                if pair not in seen:
                    seen.add(pair)
                    pairs.append(pair)
        return cls(pairs, provenance)


@dataclass
class MapConfig:
    csls_k: int = 10
    vocab_cutoff: int = 20000
    keep_prob_init: float = 0.1
    keep_prob_growth: float = 2.0
    tol: float = 1e-6
    max_iters: int = 200
    seed: int = 0

    def validate(self) -> None:
        if self.csls_k < 1:
            raise ValueError("csls_k must be >= 1")
        if self.tol <= 0:
            raise ValueError("tolerance must be > 0")
        if not (0 < self.keep_prob_init <= 1):
            raise ValueError("keep_prob_init must be in (0, 1]")


@dataclass
class MappingSolution:
    w_src: np.ndarray
    w_tgt: np.ndarray
    final_dictionary: BilingualDictionary
    objective_trace: list[float]
    accepted: list[bool]
    status: str = "converged"  # converged | max_iterations_reached
    iteration_log: list[str] = field(default_factory=list)


def normalize(emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Unit-normalize rows, mean-center columns, unit-normalize rows again."""
    X = np.asarray(emb.vectors, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("degenerate: fewer than 2 rows")
    for stage in ("input", "centered"):
        norms = np.linalg.norm(X, axis=1)
        bad = np.where(norms == 0)[0]
        if bad.size:
            tok = emb.vocab.id_to_token[bad[0]]
            raise ValueError(f"zero {stage} row for token {tok!r}")
        X = X / norms[:, None]
        if stage == "input":
            X = X - X.mean(axis=0, keepdims=True)
    return EmbeddingMatrix(emb.vocab, X)


def seed_identical(vocab_src: Vocabulary, vocab_tgt: Vocabulary) -> BilingualDictionary:
    """Seed dictionary from tokens present in both vocabularies (specials excluded)."""
    skip = set(vocab_src.specials) | set(vocab_tgt.specials)
    shared = sorted((set(vocab_src.token_to_id) & set(vocab_tgt.token_to_id)) - skip)
    if not shared:
        raise ValueError("no identical tokens; cannot seed")
    return BilingualDictionary([(t, t) for t in shared], provenance="seed")


def procrustes(X: EmbeddingMatrix, Z: EmbeddingMatrix, dictionary: BilingualDictionary) -> np.ndarray:
    """Orthogonal map W (source rows -> target space) for the given pairs.

    W = U V^T with U S V^T = svd(X_d^T Z_d) over the dictionary rows, the
    closed-form maximizer of the summed cosine between mapped source and
    target vectors.
    """
    if len(dictionary) == 0:
        raise ValueError("empty dictionary")
    if X.dim != Z.dim:
        raise ValueError(f"dimension mismatch: {X.dim} vs {Z.dim}")
    src_idx = [X.vocab.token_to_id[s] for s, _ in dictionary.pairs]
    tgt_idx = [Z.vocab.token_to_id[t] for _, t in dictionary.pairs]
    M = X.vectors[src_idx].T @ Z.vectors[tgt_idx]
    u, _, vt = np.linalg.svd(M)
    return u @ vt


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def _topk_mean(sims: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mean of the k largest entries."""
    k = min(k, sims.shape[-1])
    part = np.partition(sims, sims.shape[-1] - k, axis=-1)[..., -k:]
    return part.mean(axis=-1)


def csls_score(x: np.ndarray, y: np.ndarray, X_mapped: np.ndarray, Y: np.ndarray, k: int) -> float:
    """CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y).

    r_T(x) is the mean cosine of x to its k nearest rows of Y; r_S(y) the
    mean cosine of y to its k nearest rows of X_mapped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    xn = x / np.linalg.norm(x)
    yn = y / np.linalg.norm(y)
    Yn = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    Xn = X_mapped / np.linalg.norm(X_mapped, axis=1, keepdims=True)
    r_t = float(_topk_mean(Yn @ xn, k))
    r_s = float(_topk_mean(Xn @ yn, k))
    return 2.0 * float(xn @ yn) - r_t - r_s


def _csls_neighborhoods(Xm: np.ndarray, Z: np.ndarray, k: int, chunk: int = 2048):
    """Mean top-k cross similarities for every row of both (unit-row) matrices."""
    n, m = Xm.shape[0], Z.shape[0]
    r_src = np.empty(n)
    r_tgt = np.empty(m)
    for lo in range(0, n, chunk):
        r_src[lo : lo + chunk] = _topk_mean(Xm[lo : lo + chunk] @ Z.T, k)
    for lo in range(0, m, chunk):
        r_tgt[lo : lo + chunk] = _topk_mean(Z[lo : lo + chunk] @ Xm.T, k)
    return r_src, r_tgt


def _csls_best(Xm, Z, r_tgt, chunk: int = 2048) -> np.ndarray:
    """argmax_j CSLS(x_i, z_j) for each row i (the r term of x_i is constant)."""
    best = np.empty(Xm.shape[0], dtype=np.int64)
    for lo in range(0, Xm.shape[0], chunk):
        scores = 2.0 * (Xm[lo : lo + chunk] @ Z.T) - r_tgt[None, :]
        best[lo : lo + chunk] = np.argmax(scores, axis=1)
    return best


def _candidate_ids(emb: EmbeddingMatrix, cutoff: int) -> np.ndarray:
    """First `cutoff` non-special rows (vocabularies are frequency sorted)."""
    n_spec = emb.vocab.n_specials
    hi = min(len(emb), n_spec + cutoff)
    return np.arange(n_spec, hi)


def induce_dictionary(
    X_mapped: EmbeddingMatrix,
    Z_mapped: EmbeddingMatrix,
    config: MapConfig,
    rng: np.random.Generator,
    keep_prob: float = 1.0,
) -> BilingualDictionary:
    """Union of CSLS-best matches in both directions, kept with keep_prob.

    Matrices are expected row-normalized (as produced by self-learning).
    """
    src_ids = _candidate_ids(X_mapped, config.vocab_cutoff)
    tgt_ids = _candidate_ids(Z_mapped, config.vocab_cutoff)
    Xc = X_mapped.vectors[src_ids]
    Zc = Z_mapped.vectors[tgt_ids]
    k = min(config.csls_k, len(src_ids), len(tgt_ids))
    r_src, r_tgt = _csls_neighborhoods(Xc, Zc, k)
    fwd = _csls_best(Xc, Zc, r_tgt)
    bwd = _csls_best(Zc, Xc, r_src)
    pairs = []
    seen = set()
    for i, j in enumerate(fwd):
        pairs.append((int(src_ids[i]), int(tgt_ids[j])))
    for j, i in enumerate(bwd):
        pairs.append((int(src_ids[i]), int(tgt_ids[j])))
    kept = []
    for p in pairs:
        if p in seen:
            continue
        seen.add(p)
        if keep_prob >= 1.0 or rng.random() < keep_prob:
            kept.append(p)
    tok_pairs = [
        (X_mapped.vocab.id_to_token[i], Z_mapped.vocab.id_to_token[j]) for i, j in kept
    ]
    return BilingualDictionary(tok_pairs, provenance="induced")


def self_learn(
    E_src: EmbeddingMatrix,
    E_tgt: EmbeddingMatrix,
    seed: BilingualDictionary,
    config: MapConfig | None = None,
) -> MappingSolution:
    """Alternate Procrustes solves with stochastic CSLS dictionary induction.

    The objective is the mean cosine between mapped source and target vectors
    over the current induced dictionary. When it stops improving by more than
    the tolerance, the keep-probability doubles; once at 1, a stall means
    convergence. Returns the best-objective solution seen.
    """
    config = config or MapConfig()
    config.validate()
    if len(seed) == 0:
        raise ValueError("empty seed dictionary")
    rng = np.random.default_rng(config.seed)
    X = normalize(E_src)
    Z = normalize(E_tgt)
    seed.check_vocabs(X.vocab, Z.vocab)

    dictionary = seed
    keep_prob = config.keep_prob_init
    best_obj = -np.inf
    best: tuple[np.ndarray, BilingualDictionary] | None = None
    trace: list[float] = []
    accepted: list[bool] = []
    log: list[str] = []
    status = "max_iterations_reached"

    for it in range(config.max_iters):
        W = procrustes(X, Z, dictionary)
        Xm = EmbeddingMatrix(X.vocab, X.vectors @ W)
        induced = induce_dictionary(Xm, Z, config, rng, keep_prob)
        if len(induced) == 0:
            induced = dictionary
        src_idx = [X.vocab.token_to_id[s] for s, _ in induced.pairs]
        tgt_idx = [Z.vocab.token_to_id[t] for _, t in induced.pairs]
        obj = float(np.mean(np.sum(Xm.vectors[src_idx] * Z.vectors[tgt_idx], axis=1)))
        trace.append(obj)
        improved = obj > best_obj + config.tol
        accepted.append(improved)
        log.append(
            f"iter={it}\tdict_size={len(induced)}\tmean_cos={obj:.6f}\tkeep_prob={keep_prob:g}"
        )
        if improved:
            best_obj = obj
            best = (W, induced)
        else:
            if keep_prob >= 1.0:
                status = "converged"
                break
            keep_prob = min(1.0, keep_prob * config.keep_prob_growth)
        dictionary = induced

    assert best is not None
    w_src, final_dict = best
    return MappingSolution(
        w_src=w_src,
        w_tgt=np.eye(E_src.dim),
        final_dictionary=final_dict,
        objective_trace=trace,
        accepted=accepted,
        status=status,
        iteration_log=log,
    )


def map_embeddings(E_src: EmbeddingMatrix, E_tgt: EmbeddingMatrix, solution: MappingSolution):
    """Apply a mapping solution: both sides normalized, source rotated."""
    src = normalize(E_src)
    tgt = normalize(E_tgt)
    return (
        EmbeddingMatrix(src.vocab, src.vectors @ solution.w_src),
        EmbeddingMatrix(tgt.vocab, tgt.vectors @ solution.w_tgt),
    )


def align_to_model_space(
    E_new: EmbeddingMatrix, E_model: EmbeddingMatrix, config: MapConfig | None = None
) -> EmbeddingMatrix:
    """Map new-language embeddings into a model's embedding space.

    The model side is held fixed: only the source rotation is applied, so the
    result is comparable with the (normalized) model embedding rows.
    """
    if E_new.dim != E_model.dim:
        raise ValueError(f"dimension mismatch: {E_new.dim} vs {E_model.dim}")
    seed = seed_identical(E_new.vocab, E_model.vocab)
    solution = self_learn(E_new, E_model, seed, config)
    mapped = normalize(E_new).vectors @ solution.w_src
    return EmbeddingMatrix(E_new.vocab, mapped)


def concat_mapped(
    E_src_mapped: EmbeddingMatrix,
    E_tgt_mapped: EmbeddingMatrix,
    joint_vocab: Vocabulary,
    seed: int = 0,
) -> EmbeddingMatrix:
    """Assemble one matrix over a joint vocabulary from two mapped spaces.

    Tokens present on one side copy that row; tokens on both sides take the
    element-wise mean; everything else (specials, tokens dropped by either
    side) gets seed-deterministic N(0, 1/sqrt(d)) rows.
    """
    if E_src_mapped.dim != E_tgt_mapped.dim:
        raise ValueError("dimension mismatch between mapped sides")
    d = E_src_mapped.dim
    rng = np.random.default_rng(seed)
    out = rng.normal(0.0, 1.0 / np.sqrt(d), size=(len(joint_vocab), d))
    for i, tok in enumerate(joint_vocab.id_to_token):
        in_src = tok in E_src_mapped.vocab
        in_tgt = tok in E_tgt_mapped.vocab
        if in_src and in_tgt:
            out[i] = (E_src_mapped.vector(tok) + E_tgt_mapped.vector(tok)) / 2.0
        elif in_src:
            out[i] = E_src_mapped.vector(tok)
        elif in_tgt:
            out[i] = E_tgt_mapped.vector(tok)
    return EmbeddingMatrix(joint_vocab, out)
