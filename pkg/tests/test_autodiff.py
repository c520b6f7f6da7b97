"""Gradient and optimizer tests for the reverse-mode autodiff core."""

import numpy as np
import pytest

from lexmt.autodiff import (
    Adam,
    Tensor,
    clip_grad_norm,
    cross_entropy,
    dropout,
    gelu,
    layer_norm,
    log,
    matmul,
    power,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    softmax,
    swapaxes,
    take,
    tanh,
    transpose,
    zero_grads,
)


def check_grads(make_loss, params, rtol=1e-5, atol=1e-7, eps=1e-6):
    """Compare reverse-mode gradients against central finite differences."""
    tensors = {k: Tensor.param(v.astype(np.float64)) for k, v in params.items()}
    loss = make_loss(tensors)
    loss.backward()

    def value(arrays):
        return make_loss({k: Tensor(v) for k, v in arrays.items()}).item()

    for name, base in params.items():
        got = tensors[name].grad_or_zero().reshape(-1)
        flat = base.astype(np.float64).reshape(-1)
        num = np.empty_like(flat)
        for i in range(flat.size):
            bumped = {k: v.astype(np.float64).copy() for k, v in params.items()}
            bumped[name].reshape(-1)[i] = flat[i] + eps
            up = value(bumped)
            bumped[name].reshape(-1)[i] = flat[i] - eps
            down = value(bumped)
            num[i] = (up - down) / (2.0 * eps)
        np.testing.assert_allclose(got, num, rtol=rtol, atol=atol, err_msg=name)


def _rng():
    return np.random.default_rng(0)


# ---------------------------------------------------------------------------
# per-op finite-difference checks
# ---------------------------------------------------------------------------


def test_add_mul_broadcast_grads():
    rng = _rng()
    params = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4,)), "c": rng.normal(size=(3, 1))}
    check_grads(lambda t: reduce_sum((t["a"] + t["b"]) * t["c"] + 2.0), params)
    check_grads(lambda t: reduce_sum(3.0 * t["a"] - t["b"] + (1.0 - t["c"])), params)


def test_division_and_power_grads():
    rng = _rng()
    params = {"a": rng.normal(size=(3, 3)), "b": rng.uniform(0.5, 2.0, size=(3, 3))}
    check_grads(lambda t: reduce_sum(t["a"] / t["b"]), params)
    check_grads(lambda t: reduce_sum(power(t["b"], 3.0) + t["b"] ** 0.5), params)
    check_grads(lambda t: reduce_mean(-t["a"]), params)


def test_matmul_grads_2d_batched_and_broadcast():
    rng = _rng()
    w = rng.normal(size=(5, 2))
    params = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 5))}
    check_grads(lambda t: reduce_sum(matmul(t["a"], t["b"]) @ w), params)
    params3 = {"a": rng.normal(size=(2, 3, 4)), "b": rng.normal(size=(2, 4, 5))}
    check_grads(lambda t: reduce_sum(matmul(t["a"], t["b"])), params3)
    mixed = {"a": rng.normal(size=(2, 3, 4)), "b": rng.normal(size=(4, 5))}
    check_grads(lambda t: reduce_sum(matmul(t["a"], t["b"])), mixed)


def test_shape_op_grads():
    rng = _rng()
    params = {"a": rng.normal(size=(2, 3, 4))}
    w = rng.normal(size=(4, 3, 2))
    check_grads(lambda t: reduce_sum(reshape(t["a"], (6, 4)) * 1.5), params)
    check_grads(lambda t: reduce_sum(transpose(t["a"], (2, 1, 0)) * w), params)
    check_grads(lambda t: reduce_sum(swapaxes(t["a"], 0, 2) * w), params)
    check_grads(lambda t: reduce_sum(transpose(reshape(t["a"], (4, 6)))), params)


def test_take_accumulates_duplicate_ids():
    rng = _rng()
    params = {"table": rng.normal(size=(6, 4))}
    ids = np.array([[0, 2, 2], [5, 0, 1]])
    w = rng.normal(size=(2, 3, 4))
    check_grads(lambda t: reduce_sum(take(t["table"], ids) * w), params)


def test_reduction_grads():
    rng = _rng()
    params = {"a": rng.normal(size=(3, 4))}
    check_grads(lambda t: reduce_sum(t["a"]), params)
    check_grads(lambda t: reduce_sum(reduce_sum(t["a"], axis=0, keepdims=True) ** 2.0), params)
    check_grads(lambda t: reduce_sum(reduce_mean(t["a"], axis=1) ** 2.0), params)
    check_grads(lambda t: reduce_mean(t["a"], axis=None), params)


def test_elementwise_nonlinearity_grads():
    rng = _rng()
    params = {"a": rng.normal(size=(3, 4)), "p": rng.uniform(0.5, 3.0, size=(3, 4))}
    from lexmt.autodiff import exp

    check_grads(lambda t: reduce_sum(exp(t["a"] * 0.5)), params)
    check_grads(lambda t: reduce_sum(log(t["p"])), params)
    check_grads(lambda t: reduce_sum(tanh(t["a"])), params)
    check_grads(lambda t: reduce_sum(sigmoid(t["a"])), params)
    check_grads(lambda t: reduce_sum(gelu(t["a"])), params)


def test_softmax_grads_and_normalization():
    rng = _rng()
    params = {"a": rng.normal(size=(4, 5)) * 2.0}
    w = rng.normal(size=(4, 5))
    check_grads(lambda t: reduce_sum(softmax(t["a"]) * w), params)
    out = softmax(Tensor(params["a"])).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
    check_grads(lambda t: reduce_sum(softmax(t["a"], axis=0) * w), params)


def test_layer_norm_grads_and_moments():
    rng = _rng()
    params = {
        "x": rng.normal(size=(3, 5)) * 2.0 + 1.0,
        "g": rng.uniform(0.5, 1.5, size=(5,)),
        "b": rng.normal(size=(5,)),
    }
    w = rng.normal(size=(3, 5))
    check_grads(lambda t: reduce_sum(layer_norm(t["x"], t["g"], t["b"]) * w), params)
    plain = layer_norm(Tensor(params["x"]), Tensor(np.ones(5)), Tensor(np.zeros(5))).data
    np.testing.assert_allclose(plain.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(plain.var(axis=-1), 1.0, atol=1e-4)


def test_cross_entropy_grads_with_ignored_positions():
    rng = _rng()
    params = {"logits": rng.normal(size=(6, 5))}
    targets = np.array([0, 3, -1, 2, -1, 4])
    check_grads(lambda t: cross_entropy(t["logits"], targets), params)


def test_cross_entropy_matches_log_softmax():
    logits = np.array([[2.0, 0.0, -1.0], [0.5, 0.5, 0.5]])
    targets = np.array([0, 2])
    got = cross_entropy(Tensor(logits), targets).item()
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    want = -(logp[0, 0] + logp[1, 2]) / 2.0
    assert got == pytest.approx(want, abs=1e-12)


def test_cross_entropy_all_ignored_is_zero_with_no_grad():
    x = Tensor.param(np.ones((2, 3)))
    loss = cross_entropy(x, np.array([-1, -1]))
    assert loss.item() == 0.0
    loss.backward()
    assert not x.grad_or_zero().any()


def test_dropout_grads_with_fixed_mask():
    rng = _rng()
    params = {"x": rng.normal(size=(8, 6))}
    check_grads(lambda t: reduce_sum(dropout(t["x"], 0.4, np.random.default_rng(42))), params)


def test_dropout_identity_and_scaling():
    x = Tensor.param(np.full((400,), 2.0))
    assert dropout(x, 0.0, np.random.default_rng(0)) is x
    assert dropout(x, 0.5, None) is x
    out = dropout(x, 0.25, np.random.default_rng(1)).data
    kept = out != 0.0
    np.testing.assert_allclose(out[kept], 2.0 / 0.75)
    assert 0.6 < kept.mean() < 0.9


def test_end_to_end_mlp_gradcheck():
    rng = _rng()
    params = {
        "w1": rng.normal(size=(4, 8)) * 0.5,
        "b1": rng.normal(size=(8,)) * 0.1,
        "g": np.ones(8),
        "beta": np.zeros(8),
        "w2": rng.normal(size=(8, 5)) * 0.5,
    }
    x = rng.normal(size=(7, 4))
    targets = np.array([0, 1, 2, 3, 4, -1, 2])

    def make_loss(t):
        h = gelu(matmul(Tensor(x), t["w1"]) + t["b1"])
        h = layer_norm(h, t["g"], t["beta"])
        return cross_entropy(matmul(h, t["w2"]), targets)

    check_grads(make_loss, params)


# ---------------------------------------------------------------------------
# graph mechanics
# ---------------------------------------------------------------------------


def test_backward_requires_scalar():
    x = Tensor.param(np.ones((2, 2)))
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_backward_twice_raises():
    x = Tensor.param(np.ones(3))
    loss = reduce_sum(x * x)
    loss.backward()
    with pytest.raises(RuntimeError):
        loss.backward()


def test_gradient_accumulates_across_shared_subexpressions():
    x = Tensor.param(np.array([1.0, -2.0, 3.0]))
    loss = reduce_sum(x * x + x)
    loss.backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 1.0, atol=1e-12)


def test_detach_blocks_gradient():
    x = Tensor.param(np.array([2.0, 3.0]))
    loss = reduce_sum(x.detach() * x)
    loss.backward()
    np.testing.assert_allclose(x.grad, x.data, atol=1e-12)  # only the live factor


def test_float32_graphs_stay_float32():
    x = Tensor.param(np.ones((3, 4), dtype=np.float32))
    y = layer_norm(
        gelu(x * 0.5 + 1.0),
        Tensor(np.ones(4, dtype=np.float32)),
        Tensor(np.zeros(4, dtype=np.float32)),
    )
    z = softmax(y)
    assert y.dtype == np.float32
    assert z.dtype == np.float32
    loss = cross_entropy(reshape(z, (3, 4)), np.array([0, 1, 2]))
    loss.backward()
    assert x.grad.dtype == np.float32


# ---------------------------------------------------------------------------
# optimizer and gradient utilities
# ---------------------------------------------------------------------------


def test_adam_matches_reference_formulas():
    p = Tensor.param(np.array([1.0, 2.0]))
    opt = Adam({"p": p}, lr=0.01)
    grads = [np.array([0.1, -0.2]), np.array([0.05, 0.05])]

    ref = p.data.copy()
    m = np.zeros(2)
    v = np.zeros(2)
    for t, g in enumerate(grads, start=1):
        p.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p.data, ref, atol=1e-14)


def test_adam_warmup_schedule():
    p = Tensor.param(np.zeros(1))
    opt = Adam({"p": p}, lr=0.1, warmup=4)
    seen = []
    for _ in range(6):
        seen.append(opt.current_lr())
        p.grad = np.ones(1)
        opt.step()
    np.testing.assert_allclose(seen, [0.025, 0.05, 0.075, 0.1, 0.1, 0.1], atol=1e-12)


def test_adam_skips_frozen_and_gradless_params():
    a = Tensor.param(np.ones(2))
    b = Tensor.param(np.ones(2))
    c = Tensor.param(np.ones(2))
    opt = Adam({"a": a, "b": b, "c": c}, lr=0.5, frozen={"b"})
    a.grad = np.ones(2)
    b.grad = np.ones(2)
    opt.step()
    assert not np.array_equal(a.data, np.ones(2))
    np.testing.assert_array_equal(b.data, np.ones(2))
    np.testing.assert_array_equal(c.data, np.ones(2))
    opt.zero_grad()
    assert a.grad is None and b.grad is None


def test_clip_grad_norm_scales_in_place():
    a = Tensor.param(np.zeros(2))
    b = Tensor.param(np.zeros(2))
    a.grad = np.array([3.0, 0.0])
    b.grad = np.array([0.0, 4.0])
    norm = clip_grad_norm({"a": a, "b": b}, max_norm=2.5)
    assert norm == pytest.approx(5.0, abs=1e-12)
    total = np.sqrt((a.grad**2).sum() + (b.grad**2).sum())
    assert total == pytest.approx(2.5, abs=1e-12)

    c = Tensor.param(np.zeros(2))
    c.grad = np.array([0.3, 0.4])
    assert clip_grad_norm({"c": c}, max_norm=2.5) == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(c.grad, [0.3, 0.4], atol=1e-15)
    zero_grads({"c": c})
    assert c.grad is None
