"""Reverse-mode automatic differentiation over numpy arrays.

A small define-by-run tape: every operation returns a ``Tensor`` holding its
value, its parents, and a closure that routes the incoming gradient to the
parents.  ``backward()`` topologically sorts the recorded graph and runs the
closures in reverse.  Only the operations the sequence models need are
provided; everything is batched 2-D/3-D, no general broadcasting engine.

All values are required to stay finite; a NaN or Inf after any op is a hard
error rather than a silent poisoned run.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (forward-only inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {what}")


class Tensor:
    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        bwd: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.bwd = bwd
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``grad``."""
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.bwd is not None and node.grad is not None:
                node.bwd(node.grad)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad += g


class Parameter(Tensor):
    """A named leaf tensor that the optimizer updates."""

    __slots__ = ("name",)

    def __init__(self, name: str, data: np.ndarray):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name

    def grad_array(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)


def _make(data, parents, bwd, what: str) -> Tensor:
    _check_finite(data, what)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, parents=parents, bwd=bwd)
    return Tensor(data)


def constant(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise and linear algebra -----------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bwd, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def bwd(g):
        a.accumulate(_unbroadcast(g / b.data, a.data.shape))
        b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out, (a, b), bwd, "div")


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * s

    def bwd(g):
        a.accumulate(g * s)

    return _make(out, (a,), bwd, "scale")


def add_const(a: Tensor, c) -> Tensor:
    out = a.data + c

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.data.shape))

    return _make(out, (a,), bwd, "add_const")


def mul_const(a: Tensor, c) -> Tensor:
    carr = np.asarray(c)
    out = a.data * carr

    def bwd(g):
        a.accumulate(_unbroadcast(g * carr, a.data.shape))

    return _make(out, (a,), bwd, "mul_const")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bwd(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    return _make(out, (a, b), bwd, "matmul")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        a.accumulate(g * out * (1.0 - out))

    return _make(out, (a,), bwd, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        a.accumulate(g * (1.0 - out * out))

    return _make(out, (a,), bwd, "tanh")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bwd(g):
        a.accumulate(g * (a.data > 0))

    return _make(out, (a,), bwd, "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(g):
        a.accumulate(g * out)

    return _make(out, (a,), bwd, "exp")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bwd(g):
        a.accumulate(g * 0.5 / out)

    return _make(out, (a,), bwd, "sqrt")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only through the un-clamped region."""
    out = np.clip(a.data, lo, hi)

    def bwd(g):
        a.accumulate(g * ((a.data >= lo) & (a.data <= hi)))

    return _make(out, (a,), bwd, "clip")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def bwd(g):
        a.accumulate(g.reshape(a.data.shape))

    return _make(out, (a,), bwd, "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            t.accumulate(g[tuple(idx)])

    return _make(out, tuple(tensors), bwd, "concat")


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    out = a.data[..., lo:hi]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[..., lo:hi] = g
        a.accumulate(full)

    return _make(out, (a,), bwd, "slice_cols")


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())

    def bwd(g):
        a.accumulate(np.full_like(a.data, float(g)))

    return _make(out, (a,), bwd, "sum_all")


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _make(out, (a,), bwd, "sum_axis")


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


# -- softmax family ----------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        a.accumulate(out * (g - dot))

    return _make(out, (a,), bwd, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bwd(g):
        a.accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bwd, "log_softmax")


def nll_from_logits(logits: Tensor, ids: np.ndarray) -> Tensor:
    """Per-row negative log-likelihood of ``ids`` under row softmaxes.

    logits: (B, V); ids: (B,) int array.  Returns (B,).
    """
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= logits.data.shape[-1]:
        raise ValueError("target id out of range")
    x = logits.data
    shifted = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    rows = np.arange(x.shape[0])
    out = -logp[rows, ids]
    soft = np.exp(logp)

    def bwd(g):
        d = soft * g[:, None]
        d[rows, ids] -= g
        logits.accumulate(d)

    return _make(out, (logits,), bwd, "nll_from_logits")


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy from logits, numerically stable."""
    x = logits.data
    y = np.asarray(targets, dtype=x.dtype)
    out = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                   np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))

    def bwd(g):
        logits.accumulate(g * (sig - y))

    return _make(out, (logits,), bwd, "bce_with_logits")


# -- gathers and sequence helpers -------------------------------------------

def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of ``table`` at ``ids``; gradient scatter-adds back."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def bwd(g):
        d = np.zeros_like(table.data)
        np.add.at(d, ids, g)
        table.accumulate(d)

    return _make(out, (table,), bwd, "embedding_lookup")


def stack_time(steps: Sequence[Tensor]) -> Tensor:
    """Stack T tensors of shape (B, H) into (B, T, H)."""
    out = np.stack([t.data for t in steps], axis=1)

    def bwd(g):
        for j, t in enumerate(steps):
            t.accumulate(g[:, j])

    return _make(out, tuple(steps), bwd, "stack_time")


def time_slice(seq: Tensor, t: int) -> Tensor:
    """Column t of a (B, T, H) sequence as (B, H)."""
    out = seq.data[:, t]

    def bwd(g):
        d = np.zeros_like(seq.data)
        d[:, t] = g
        seq.accumulate(d)

    return _make(out, (seq,), bwd, "time_slice")


def gather_time(seq: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one (B, H) slice per row from (B, T, H) at per-row times."""
    idx = np.asarray(idx)
    rows = np.arange(seq.data.shape[0])
    out = seq.data[rows, idx]

    def bwd(g):
        d = np.zeros_like(seq.data)
        d[rows, idx] = g
        seq.accumulate(d)

    return _make(out, (seq,), bwd, "gather_time")


def attn_scores(query: Tensor, annotations: Tensor) -> Tensor:
    """Batched dot products: (B, H) x (B, T, H) -> (B, T)."""
    out = np.einsum("bh,bth->bt", query.data, annotations.data)

    def bwd(g):
        query.accumulate(np.einsum("bt,bth->bh", g, annotations.data))
        annotations.accumulate(g[:, :, None] * query.data[:, None, :])

    return _make(out, (query, annotations), bwd, "attn_scores")


def attn_context(weights: Tensor, annotations: Tensor) -> Tensor:
    """Convex combination of annotations: (B, T) x (B, T, H) -> (B, H)."""
    out = np.einsum("bt,bth->bh", weights.data, annotations.data)

    def bwd(g):
        weights.accumulate(np.einsum("bh,bth->bt", g, annotations.data))
        annotations.accumulate(weights.data[:, :, None] * g[:, None, :])

    return _make(out, (weights, annotations), bwd, "attn_context")


def row_norm(a: Tensor, eps: float = 0.0) -> Tensor:
    """Euclidean norm per row: (B, H) -> (B, 1)."""
    sq = (a.data * a.data).sum(axis=-1, keepdims=True)
    out = np.sqrt(sq + eps)

    def bwd(g):
        a.accumulate(g * a.data / out)

    return _make(out, (a,), bwd, "row_norm")


def minimum_const(a: Tensor, cap: float) -> Tensor:
    """min(a, cap); gradient flows only where a < cap."""
    out = np.minimum(a.data, cap)

    def bwd(g):
        a.accumulate(g * (a.data < cap))

    return _make(out, (a,), bwd, "minimum_const")


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """Inverted-dropout multiplier, ready for ``mul_const``."""
    if rate <= 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / (1.0 - rate)


# -- optimizer and gradient utilities ----------------------------------------

class Adam:
    """Adam with optional global-norm gradient clipping."""

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float | None = 5.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        gnorm = global_grad_norm(self.params)
        scale_g = 1.0
        if self.clip_norm is not None and gnorm > self.clip_norm:
            scale_g = self.clip_norm / (gnorm + 1e-12)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p in self.params:
            g = p.grad_array() * scale_g
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data -= self.lr * update
        return gnorm

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"__t__": np.array([self.t], dtype=np.int64)}
        for name in self.m:
            out[f"m:{name}"] = self.m[name]
            out[f"v:{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["__t__"][0])
        for name in self.m:
            self.m[name] = arrays[f"m:{name}"].astype(self.m[name].dtype)
            self.v[name] = arrays[f"v:{name}"].astype(self.v[name].dtype)


def global_grad_norm(params: Iterable[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return math.sqrt(total)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-5,
    floor: float = 1e-8,
) -> float:
    """Max relative error of reverse-mode gradients vs central differences.

    ``f`` must be deterministic given the parameter values (freeze any RNG
    before calling).  Every coordinate of every parameter is probed, so keep
    the instance small.  Works properly only in float64.

    ``floor`` bounds the denominator: central differences carry an absolute
    noise of roughly ``|f| * 1e-15 / eps``, so coordinates whose gradient
    sits below that level can only be compared absolutely.  Raise the floor
    accordingly when ``|f|`` is large.
    """
    for p in params:
        p.grad = None
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite objective in grad_check")
    out.backward()
    analytic = {p.name: p.grad_array().copy() for p in params}

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        an = analytic[p.name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            with no_grad():
                fp = float(f().data)
            flat[k] = orig - eps
            with no_grad():
                fm = float(f().data)
            flat[k] = orig
            numeric = (fp - fm) / (2 * eps)
            denom = max(abs(numeric), abs(an[k]), floor)
            worst = max(worst, abs(numeric - an[k]) / denom)
    return worst
