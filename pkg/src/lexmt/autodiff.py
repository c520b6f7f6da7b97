"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the transformer pipeline needs: elementwise arithmetic
with broadcasting, matmul (batched), reshape/transpose, row gather for
embedding lookups, reductions, and fused softmax / layer-norm / GELU /
cross-entropy primitives with hand-derived backward rules. Every primitive
is covered by finite-difference tests.

Gradients accumulate with +=, so a tensor used in several places (e.g. a
tied embedding table feeding both the input lookup and the output
projection) collects contributions from every use.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A numpy array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._released = False

    # -- construction helpers ------------------------------------------------

    @classmethod
    def param(cls, data) -> "Tensor":
        return cls(np.asarray(data), requires_grad=True)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def grad_or_zero(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- autodiff ------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from this scalar; the graph is then released."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar tensor")
        if self._released:
            raise RuntimeError("backward already called on this graph")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
            node._backward = None
            node._parents = ()
            node._released = True

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add(self, -other)
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __pow__(self, p):
        return power(self, p)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        a, b = b, a
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        # python scalars do not promote numpy dtypes
        data = a.data + b

        def backward_scalar(g):
            a._accumulate(g)

        return _make(data, (a,), backward_scalar)
    b = _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape).astype(a.dtype, copy=False))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape).astype(b.dtype, copy=False))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        a, b = b, a
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        data = a.data * b

        def backward_scalar(g):
            a._accumulate((g * b).astype(a.dtype, copy=False))

        return _make(data, (a,), backward_scalar)
    b = _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape).astype(a.dtype, copy=False))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape).astype(b.dtype, copy=False))

    return _make(data, (a, b), backward)


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    data = a.data**p

    def backward(g):
        if a.requires_grad:
            a._accumulate((g * p * a.data ** (p - 1)).astype(a.dtype, copy=False))

    return _make(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape).astype(a.dtype, copy=False))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.data.shape).astype(b.dtype, copy=False))

    return _make(data, (a, b), backward)


# -- shape ----------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(old))

    return _make(data, (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    a = _as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return _make(data, (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = _as_tensor(a)
    data = np.swapaxes(a.data, ax1, ax2)

    def backward(g):
        a._accumulate(np.swapaxes(g, ax1, ax2))

    return _make(data, (a,), backward)


def take(table: Tensor, ids) -> Tensor:
    """Row gather (embedding lookup); gradient scatters back with add.at."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g.astype(table.dtype, copy=False))
        table._accumulate(gt)

    return _make(data, (table,), backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        a._accumulate(np.broadcast_to(g, a.data.shape).astype(a.dtype, copy=False))

    return _make(data, (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    denom = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(reduce_sum(a, axis, keepdims), 1.0 / float(denom))


# -- pointwise nonlinearities ----------------------------------------------------


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - data * data))

    return _make(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), backward)


# python float: a numpy float64 scalar here would promote float32 graphs
_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        a._accumulate((g * (0.5 * (1.0 + t) + 0.5 * x * dt)).astype(a.dtype, copy=False))

    return _make(data, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gy = g * data
        a._accumulate((gy - data * gy.sum(axis=axis, keepdims=True)).astype(a.dtype, copy=False))

    return _make(data, (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        if x.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((inv * (dxhat - m1 - xhat * m2)).astype(x.dtype, copy=False))
        reduce_axes = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=reduce_axes).astype(gain.dtype, copy=False))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=reduce_axes).astype(bias.dtype, copy=False))

    return _make(data, (x, gain, bias), backward)


def cross_entropy(logits: Tensor, targets, ignore_index: int = -1) -> Tensor:
    """Mean softmax cross-entropy over positions whose target != ignore_index.

    logits: (N, V); targets: (N,) integer ids. With no valid positions the
    loss is exactly 0 with zero gradient.
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    valid = targets != ignore_index
    count = int(valid.sum())
    if count == 0:
        return _make(np.zeros((), dtype=logits.dtype), (logits,), lambda g: None)
    lmax = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - lmax
    lse = np.log(np.exp(shifted).sum(axis=-1)) + lmax[:, 0]
    safe_targets = np.where(valid, targets, 0)
    picked = np.take_along_axis(logits.data, safe_targets[:, None], axis=-1)[:, 0]
    losses = np.where(valid, lse - picked, 0.0)
    data = np.asarray(losses.sum() / count, dtype=logits.dtype)

    def backward(g):
        probs = np.exp(shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True)))
        grad = probs
        grad[np.arange(len(targets)), safe_targets] -= 1.0
        grad *= (valid / count)[:, None]
        logits._accumulate((float(g) * grad).astype(logits.dtype, copy=False))

    return _make(data, (logits,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. rate 0 or rng=None (eval mode) is the identity."""
    if rate == 0.0 or rng is None:
        return x
    x = _as_tensor(x)
    keep = (rng.random(x.data.shape) >= rate).astype(x.dtype)
    scale = 1.0 / (1.0 - rate)
    data = x.data * keep * scale

    def backward(g):
        x._accumulate((g * keep * scale).astype(x.dtype, copy=False))

    return _make(data, (x,), backward)


# -- optimizer --------------------------------------------------------------------


class Adam:
    """Adam with optional linear learning-rate warmup and a frozen-name set."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        warmup: int = 0,
        frozen: set[str] | None = None,
    ):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.warmup = warmup
        self.frozen = set(frozen or ())
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def current_lr(self) -> float:
        if self.warmup > 0 and self.t < self.warmup:
            return self.lr * (self.t + 1) / self.warmup
        return self.lr

    def step(self) -> None:
        lr = self.current_lr()
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            if name in self.frozen or p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            p.data -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm
