"""Tests for greedy and beam-search generation with the KV cache."""

import numpy as np
import pytest

from lexmt.decoding import (
    DecodeConfig,
    InferenceModel,
    beam_search,
    greedy_translate,
    pad_batch,
    translate,
)
from lexmt.transformer import (
    TransformerConfig,
    decoder_forward,
    encoder_forward,
    init_model,
    output_logits,
)

PAD, UNK, BOS, EOS = 0, 1, 2, 3


def _model(seed=0, vocab_size=20, max_positions=12):
    cfg = TransformerConfig(
        vocab_size=vocab_size,
        model_dim=16,
        heads=2,
        layers=2,
        ffn_dim=32,
        dropout=0.0,
        max_positions=max_positions,
        n_langs=2,
        dtype="float64",
    )
    return init_model(cfg, seed=seed, with_decoder=True)


def test_decode_config_validate():
    DecodeConfig().validate()
    with pytest.raises(ValueError):
        DecodeConfig(beam_size=0).validate()
    with pytest.raises(ValueError):
        DecodeConfig(max_len_factor=0.0).validate()
    with pytest.raises(ValueError):
        DecodeConfig(max_len_offset=-1).validate()


def test_pad_batch():
    ids, keep = pad_batch([[4, 5], [6]], pad_id=0)
    np.testing.assert_array_equal(ids, [[4, 5], [6, 0]])
    np.testing.assert_array_equal(keep, [[True, True], [True, False]])


def test_inference_encoder_matches_graph_forward():
    model = _model(seed=1)
    infer = InferenceModel(model)
    seqs = [[BOS, 4, 5, 6, EOS], [BOS, 7, 8, EOS]]
    ids, keep = pad_batch(seqs, PAD)
    lang = np.full(2, 0)
    got = infer.encode(ids, lang, keep)
    want = encoder_forward(model, ids, lang, keep).data
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_incremental_decoder_matches_full_forward():
    model = _model(seed=2)
    infer = InferenceModel(model)
    src = [[BOS, 4, 5, 6, EOS], [BOS, 9, 10, EOS]]
    ids, keep = pad_batch(src, PAD)
    src_lang = np.full(2, 0)
    enc_np = infer.encode(ids, src_lang, keep)
    enc_graph = encoder_forward(model, ids, src_lang, keep)

    prefix = np.array([[BOS, 11, 12, 13], [BOS, 14, 15, 16]])
    tgt_lang = np.full(2, 1)
    state = infer.start_decoder(enc_np, keep)
    for t in range(prefix.shape[1]):
        step_logits = infer.step(state, prefix[:, t], tgt_lang)
        hidden = decoder_forward(model, prefix[:, : t + 1], tgt_lang, enc_graph, keep)
        full_logits = output_logits(model, hidden).data[:, -1, :]
        np.testing.assert_allclose(step_logits, full_logits, atol=1e-9)


def test_reindex_matches_from_scratch_state():
    model = _model(seed=3)
    infer = InferenceModel(model)
    src = [[BOS, 4, 5, EOS], [BOS, 6, 7, EOS]]
    ids, keep = pad_batch(src, PAD)
    lang0 = np.full(2, 0)
    lang1 = np.full(2, 1)
    state = infer.start_decoder(infer.encode(ids, lang0, keep), keep)
    infer.step(state, np.array([BOS, BOS]), lang1)
    infer.step(state, np.array([8, 9]), lang1)
    swapped = infer.reindex(state, np.array([1, 0]))

    # rebuild the swapped batch from scratch with the swapped prefixes
    ids2, keep2 = pad_batch([src[1], src[0]], PAD)
    fresh = infer.start_decoder(infer.encode(ids2, lang0, keep2), keep2)
    infer.step(fresh, np.array([BOS, BOS]), lang1)
    infer.step(fresh, np.array([9, 8]), lang1)

    out_a = infer.step(swapped, np.array([10, 11]), lang1)
    out_b = infer.step(fresh, np.array([10, 11]), lang1)
    np.testing.assert_allclose(out_a, out_b, atol=1e-12)

    dup = infer.reindex(fresh, np.array([0, 0]))
    out_c = infer.step(dup, np.array([12, 12]), lang1)
    np.testing.assert_allclose(out_c[0], out_c[1], atol=1e-12)


def test_beam_one_equals_greedy():
    cfg = DecodeConfig(beam_size=1, max_len_factor=1.5, max_len_offset=3, length_penalty=1.0)
    rng = np.random.default_rng(5)
    for seed in range(4):
        model = _model(seed=seed)
        srcs = [[int(x) for x in rng.integers(4, 20, rng.integers(2, 6))] for _ in range(6)]
        greedy = greedy_translate(model, srcs, 0, 1, cfg, PAD, BOS, EOS)
        for src, g in zip(srcs, greedy):
            b = beam_search(model, src, 0, 1, cfg, PAD, BOS, EOS)
            assert b.tokens == g.tokens
            assert b.ended_with_eos == g.ended_with_eos
            assert b.score == pytest.approx(g.score, abs=1e-9)


def test_generation_respects_length_cap():
    model = _model(seed=6, max_positions=10)
    # make EOS unreachable so decoding must run into the cap
    model["out_bias"].data[EOS] = -1e9
    cfg = DecodeConfig(beam_size=1, max_len_factor=1.0, max_len_offset=2)
    src = [4, 5, 6]
    cap = min(int(1.0 * 3) + 2, 10 - 2)
    hyp = greedy_translate(model, [src], 0, 1, cfg, PAD, BOS, EOS)[0]
    assert len(hyp.tokens) == cap
    assert not hyp.ended_with_eos
    beam = beam_search(model, src, 0, 1, cfg, PAD, BOS, EOS)
    assert len(beam.tokens) == cap
    assert not beam.ended_with_eos


def test_forced_eos_yields_empty_hypothesis():
    model = _model(seed=7)
    model["out_bias"].data[EOS] = 1e9
    cfg = DecodeConfig(beam_size=2)
    hyp = greedy_translate(model, [[4, 5]], 0, 1, cfg, PAD, BOS, EOS)[0]
    assert hyp.tokens == []
    assert hyp.ended_with_eos
    beam = beam_search(model, [4, 5], 0, 1, cfg, PAD, BOS, EOS)
    assert beam.tokens == []
    assert beam.ended_with_eos


def test_beam_search_rejects_empty_source():
    model = _model(seed=8)
    with pytest.raises(ValueError):
        beam_search(model, [], 0, 1, DecodeConfig(), PAD, BOS, EOS)


def test_translate_dispatch():
    model = _model(seed=9)
    srcs = [[4, 5, 6], [7, 8]]
    one = translate(model, srcs, 0, 1, DecodeConfig(beam_size=1), PAD, BOS, EOS)
    greedy = greedy_translate(model, srcs, 0, 1, DecodeConfig(beam_size=1), PAD, BOS, EOS)
    assert [h.tokens for h in one] == [h.tokens for h in greedy]
    many = translate(model, srcs, 0, 1, DecodeConfig(beam_size=3), PAD, BOS, EOS)
    assert len(many) == 2
    for src, hyp in zip(srcs, many):
        single = beam_search(model, src, 0, 1, DecodeConfig(beam_size=3), PAD, BOS, EOS)
        assert hyp.tokens == single.tokens
