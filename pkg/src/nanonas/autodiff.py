"""Minimal deterministic reverse-mode autodiff over dense float64 tensors.

Everything is 64-bit. A Graph is an explicit tape: primitives applied while a
Graph is active are recorded in order, and backward replays the tape in exact
reverse recording order, so gradients are bitwise reproducible given a seed.
Every primitive fail-fasts on non-finite outputs, naming itself.

Broadcasting is deliberately restricted: bias-add and the two explicit
channel/scalar scaling ops are the only shape-mixing primitives.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, ShapeError

_ACTIVE = threading.local()

# Toggled via check_finite(); kept module-global because the cost is one
# isfinite scan per primitive and the failure mode it guards is silent.
_FINITE_CHECKS = True


def check_finite(enabled: bool) -> None:
    global _FINITE_CHECKS
    _FINITE_CHECKS = enabled


def _graph_stack():
    stack = getattr(_ACTIVE, "stack", None)
    if stack is None:
        stack = []
        _ACTIVE.stack = stack
    return stack


def active_graph():
    """The innermost Graph on this thread, or None."""
    stack = _graph_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 value, optionally participating in a gradient graph."""

    __slots__ = ("data", "requires_grad", "grad", "_grad_borrowed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._grad_borrowed = False

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, severed from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None
        self._grad_borrowed = False

    def _accum(self, g: np.ndarray) -> None:
        # First arrival keeps a reference (backward closures never mutate the
        # arrays they pass down); later arrivals trigger copy-on-write.
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
            self._grad_borrowed = True
        elif self._grad_borrowed:
            self.grad = self.grad + g
            self._grad_borrowed = False
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Scalar-friendly operators so threshold/runtime algebra reads naturally.
    # They also accept plain numbers, which keeps the latency composition
    # polymorphic between relaxed (Tensor) and hard (float) indicators.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else cadd(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else cadd(self, -other)

    def __rsub__(self, other):
        return cadd(cmul(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if other.data.shape == () and self.data.shape != ():
                return scale(self, other)
            if self.data.shape == () and other.data.shape != ():
                return scale(other, self)
            return mul(self, other)
        return cmul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return cmul(self, -1.0)


class _Node:
    __slots__ = ("name", "out", "backward")

    def __init__(self, name, out, backward):
        self.name = name
        self.out = out
        self.backward = backward


class Graph:
    """Tape of recorded primitives plus the RNG used for stochastic masks."""

    def __init__(self, seed=None):
        self.nodes = []
        self.rng = np.random.default_rng(seed)

    def __enter__(self):
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _graph_stack().pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and sweep the tape in reverse order."""
        if loss.data.shape != ():
            raise ShapeError(f"backward root must be scalar, got shape {loss.data.shape}")
        loss._accum(np.ones((), dtype=np.float64))
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            node.backward(g)


def _record(name, out: Tensor, inputs, backward) -> Tensor:
    # One-pass guard: the sum of a finite array is finite, and any NaN/Inf
    # poisons it. (Two opposite infinities also yield NaN.)
    if _FINITE_CHECKS and not math.isfinite(float(out.data.sum())):
        raise NumericError(f"non-finite value produced by primitive '{name}'")
    graph = active_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        graph.nodes.append(_Node(name, out, backward))
    return out


def _same_shape(name, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{name}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# elementwise / scalar algebra


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    out = Tensor(a.data + b.data)

    def backward(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(g)

    return _record("add", out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    out = Tensor(a.data - b.data)

    def backward(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(-g)

    return _record("sub", out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    out = Tensor(a.data * b.data)

    def backward(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return _record("mul", out, (a, b), backward)


def cadd(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + float(c))

    def backward(g):
        if a.requires_grad:
            a._accum(g)

    return _record("cadd", out, (a,), backward)


def cmul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def backward(g):
        if a.requires_grad:
            a._accum(g * c)

    return _record("cmul", out, (a,), backward)


def scale(t: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a 0-d scalar tensor (explicit, not broadcasting)."""
    if s.data.shape != ():
        raise ShapeError(f"scale: scalar operand must be 0-d, got {s.data.shape}")
    out = Tensor(t.data * s.data)

    def backward(g):
        if t.requires_grad:
            t._accum(g * s.data)
        if s.requires_grad:
            s._accum(np.sum(g * t.data))

    return _record("scale", out, (t, s), backward)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """(N, K) + (K,) bias broadcast — the only sanctioned broadcast."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ShapeError(f"add_bias: got x {x.data.shape}, bias {b.data.shape}")
    out = Tensor(x.data + b.data[None, :])

    def backward(g):
        if x.requires_grad:
            x._accum(g)
        if b.requires_grad:
            b._accum(g.sum(axis=0))

    return _record("add_bias", out, (x, b), backward)


def relu6(x: Tensor) -> Tensor:
    out = Tensor(np.clip(x.data, 0.0, 6.0))
    mask = (x.data > 0.0) & (x.data < 6.0)

    def backward(g):
        if x.requires_grad:
            x._accum(g * mask)

    return _record("relu6", out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # Stable two-branch form; never exponentiates a positive argument.
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(y)

    def backward(g):
        if x.requires_grad:
            x._accum(g * y * (1.0 - y))

    return _record("sigmoid", out, (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise NumericError("log: non-positive argument")
    out = Tensor(np.log(x.data))

    def backward(g):
        if x.requires_grad:
            x._accum(g / x.data)

    return _record("log", out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    orig = x.data.shape

    def backward(g):
        if x.requires_grad:
            x._accum(g.reshape(orig))

    return _record("reshape", out, (x,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _record("matmul", out, (a, b), backward)


# ---------------------------------------------------------------------------
# reductions / norms


def masked_sq_norm(x: Tensor, mask: np.ndarray) -> Tensor:
    """Group-lasso squared norm of the masked subset, as a 0-d tensor."""
    if mask.shape != x.data.shape:
        raise ShapeError(f"masked_sq_norm: mask {mask.shape} vs tensor {x.data.shape}")
    masked = x.data * mask
    out = Tensor(np.sum(masked * masked))

    def backward(g):
        if x.requires_grad:
            x._accum(2.0 * g * masked)

    return _record("masked_sq_norm", out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NCHW, got {x.data.shape}")
    n, c, h, w = x.data.shape
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))

    def backward(g):
        if x.requires_grad:
            x._accum(np.broadcast_to(g / (h * w), x.data.shape))

    return _record("global_avg_pool", out, (x,), backward)


def scale_channels(x: Tensor, gate: Tensor) -> Tensor:
    """(N,C,H,W) scaled per channel by an (N,C,1,1) gate."""
    n, c = x.data.shape[:2]
    if gate.data.shape != (n, c, 1, 1):
        raise ShapeError(f"scale_channels: gate {gate.data.shape} vs x {x.data.shape}")
    out = Tensor(x.data * gate.data)

    def backward(g):
        if x.requires_grad:
            x._accum(g * gate.data)
        if gate.requires_grad:
            gate._accum((g * x.data).sum(axis=(2, 3), keepdims=True))

    return _record("scale_channels", out, (x, gate), backward)


def softmax_probs(logits: Tensor) -> Tensor:
    """Softmax over a 1-D logit vector (one decision group)."""
    if logits.data.ndim != 1:
        raise ShapeError(f"softmax_probs: expected 1-D logits, got {logits.data.shape}")
    z = logits.data - logits.data.max()
    e = np.exp(z)
    p = e / e.sum()
    out = Tensor(p)

    def backward(g):
        if logits.requires_grad:
            logits._accum(p * (g - np.dot(g, p)))

    return _record("softmax_probs", out, (logits,), backward)


def pick(x: Tensor, i: int) -> Tensor:
    """Select element i of a 1-D tensor as a 0-d scalar."""
    out = Tensor(x.data[i])

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[i] = g
            x._accum(gx)

    return _record("pick", out, (x,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under softmax of (N, K) logits."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: expected (N, K) logits, got {logits.data.shape}")
    n = logits.data.shape[0]
    labels = np.asarray(labels)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    out = Tensor(-logp[np.arange(n), labels].mean())

    def backward(g):
        if logits.requires_grad:
            grad = np.exp(logp)
            grad[np.arange(n), labels] -= 1.0
            logits._accum(g * grad / n)

    return _record("cross_entropy", out, (logits,), backward)


# ---------------------------------------------------------------------------
# convolutions


def _pad_amounts(size, k, stride, padding):
    if padding == "valid":
        return 0, 0, (size - k) // stride + 1
    if padding != "same":
        raise ShapeError(f"unknown padding mode '{padding}'")
    out = -(-size // stride)  # ceil
    total = max((out - 1) * stride + k - size, 0)
    # symmetric, extra pixel on the bottom/right when odd
    return total // 2, total - total // 2, out


def _pad4(x, pt, pb, pl, pr):
    """Zero-pad the two trailing axes; only the border bands get filled."""
    n, c, h, w = x.shape
    out = np.empty((n, c, h + pt + pb, w + pl + pr))
    if pt:
        out[:, :, :pt, :] = 0.0
    if pb:
        out[:, :, pt + h:, :] = 0.0
    if pl:
        out[:, :, pt:pt + h, :pl] = 0.0
    if pr:
        out[:, :, pt:pt + h, pl + w:] = 0.0
    out[:, :, pt:pt + h, pl:pl + w] = x
    return out


def _conv_prepare(x, kh, kw, stride, padding):
    n, c, h, w = x.shape
    pt, pb, ho = _pad_amounts(h, kh, stride, padding)
    pl, pr, wo = _pad_amounts(w, kw, stride, padding)
    xp = _pad4(x, pt, pb, pl, pr) if (pt | pb | pl | pr) else x
    return xp, (pt, pb, pl, pr), ho, wo


def _im2col(xp, kh, kw, stride, ho, wo):
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]
    n, c = xp.shape[:2]
    # (N, Ho, Wo, C, kh, kw) -> rows of receptive fields
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def _dilate(g, stride):
    if stride == 1:
        return g
    n, c, h, w = g.shape
    out = np.zeros((n, c, (h - 1) * stride + 1, (w - 1) * stride + 1))
    out[:, :, ::stride, ::stride] = g
    return out


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Cross-correlation of NCHW input with OIHW kernel."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input/kernel, got {x.data.shape}, {w.data.shape}")
    if stride not in (1, 2):
        raise ShapeError(f"conv2d: stride must be 1 or 2, got {stride}")
    n, c, h, wd = x.data.shape
    o, ci, kh, kw = w.data.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {ci}")

    if kh == 1 and kw == 1 and stride == 1:
        # pointwise fast path: one batched GEMM, no window bookkeeping
        x3 = x.data.reshape(n, c, h * wd)
        out = Tensor(np.matmul(w.data.reshape(o, c), x3).reshape(n, o, h, wd))

        def backward(g):
            g3 = g.reshape(n, o, h * wd)
            if w.requires_grad:
                gw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0)
                w._accum(gw.reshape(o, c, 1, 1))
            if x.requires_grad:
                gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, -1)
                gx = (w.data.reshape(o, c).T @ gt).reshape(c, n, h, wd)
                x._accum(np.ascontiguousarray(gx.transpose(1, 0, 2, 3)))

        return _record("conv2d", out, (x, w), backward)

    xp, pads, ho, wo = _conv_prepare(x.data, kh, kw, stride, padding)
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    w2 = w.data.reshape(o, c * kh * kw)
    out_rows = cols @ w2.T
    out = Tensor(np.ascontiguousarray(
        out_rows.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)))

    def backward(g):
        g_rows = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, o)
        if w.requires_grad:
            w._accum((g_rows.T @ cols).reshape(o, c, kh, kw))
        if x.requires_grad:
            gx_rows = (g_rows @ w2).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        gx_rows[:, :, :, :, i, j]
            pt, pb, pl, pr = pads
            x._accum(gxp[:, :, pt:pt + h, pl:pl + wd])

    return _record("conv2d", out, (x, w), backward)


def depthwise_conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Per-channel cross-correlation; kernel is (C, 1, kh, kw)."""
    from ._kernels import depthwise_forward, depthwise_grad_w
    if x.data.ndim != 4 or w.data.ndim != 4 or w.data.shape[1] != 1:
        raise ShapeError(
            f"depthwise_conv2d: expected NCHW input and (C,1,kh,kw) kernel, "
            f"got {x.data.shape}, {w.data.shape}")
    if stride not in (1, 2):
        raise ShapeError(f"depthwise_conv2d: stride must be 1 or 2, got {stride}")
    n, c, h, wd = x.data.shape
    if w.data.shape[0] != c:
        raise ShapeError(f"depthwise_conv2d: input has {c} channels but kernel has {w.data.shape[0]}")
    kh, kw = w.data.shape[2:]
    xp, pads, ho, wo = _conv_prepare(x.data, kh, kw, stride, padding)
    w3 = np.ascontiguousarray(w.data[:, 0])
    out_arr = np.empty((n, c, ho, wo))
    depthwise_forward(xp, w3, stride, out_arr)
    out = Tensor(out_arr)

    def backward(g):
        g = np.ascontiguousarray(g)
        if w.requires_grad:
            gw = np.empty((c, kh, kw))
            depthwise_grad_w(g, xp, stride, gw)
            w._accum(gw[:, None])
        if x.requires_grad:
            # input gradient = full correlation of the (dilated) upstream
            # gradient with the flipped kernel, realized by the same kernel
            pt, pb, pl, pr = pads
            gd = _dilate(g, stride)
            gpad = _pad4(gd, kh - 1 - pt, kh - 1 - pb, kw - 1 - pl, kw - 1 - pr)
            wf = np.ascontiguousarray(w3[:, ::-1, ::-1])
            rows = gpad.shape[2] - kh + 1
            cols_ = gpad.shape[3] - kw + 1
            block = np.empty((n, c, rows, cols_))
            depthwise_forward(gpad, wf, 1, block)
            if rows == h and cols_ == wd:
                x._accum(block)
            else:
                gx = np.zeros((n, c, h, wd))
                gx[:, :, :rows, :cols_] = block
                x._accum(gx)

    return _record("depthwise_conv2d", out, (x, w), backward)


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Per-channel running statistics, kept outside the gradient graph."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.mean = np.zeros(channels, dtype=np.float64)
        self.var = np.ones(channels, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps

    def copy(self):
        dup = BatchNormState(len(self.mean), self.momentum, self.eps)
        dup.mean = self.mean.copy()
        dup.var = self.var.copy()
        return dup


def batchnorm(x: Tensor, gamma: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Channel normalization with trainable scale and no shift.

    The missing shift is load-bearing: a channel that is identically zero
    (a masked subset) must stay exactly zero through normalization.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm: expected NCHW, got {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,):
        raise ShapeError(f"batchnorm: gamma {gamma.data.shape} vs {c} channels")
    from ._kernels import bn_backward_train, bn_forward
    eps = state.eps
    n, _, hh, ww = x.data.shape
    count = n * hh * ww
    if training:
        mu = np.einsum("nchw->c", x.data, optimize=True) / count
        var = np.einsum("nchw,nchw->c", x.data, x.data, optimize=True) / count - mu * mu
        var = np.maximum(var, 0.0)
        m = state.momentum
        state.mean = (1 - m) * state.mean + m * mu
        state.var = (1 - m) * state.var + m * var
    else:
        mu, var = state.mean, state.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = np.empty_like(x.data)
    out_arr = np.empty_like(x.data)
    bn_forward(x.data, gamma.data, mu, inv_std, xhat, out_arr)
    out = Tensor(out_arr)

    def backward(g):
        if gamma.requires_grad:
            gamma._accum(np.einsum("nchw,nchw->c", g, xhat, optimize=True))
        if x.requires_grad:
            if training:
                mean_g = np.einsum("nchw->c", g, optimize=True) * (gamma.data / count)
                mean_gx = np.einsum("nchw,nchw->c", g, xhat, optimize=True) * (gamma.data / count)
                gx = np.empty_like(g)
                bn_backward_train(g, xhat, gamma.data, mean_g, mean_gx, inv_std, gx)
            else:
                gx = g * (gamma.data * inv_std)[None, :, None, None]
            x._accum(gx)

    return _record("batchnorm", out, (x, gamma), backward)


# ---------------------------------------------------------------------------
# indicator gates


def hard_gate(norm_sq: Tensor, t: Tensor) -> Tensor:
    """Strict 0/1 comparison; constant almost everywhere, so zero gradient."""
    out = Tensor(1.0 if norm_sq.data > t.data else 0.0)

    def backward(g):
        pass

    return _record("hard_gate", out, (norm_sq, t), backward)


def ste_gate(norm_sq: Tensor, t: Tensor) -> Tensor:
    """Hard forward; backward treats the gate as the surrogate (norm_sq - t)."""
    out = Tensor(1.0 if norm_sq.data > t.data else 0.0)

    def backward(g):
        if norm_sq.requires_grad:
            norm_sq._accum(g)
        if t.requires_grad:
            t._accum(-g)

    return _record("ste_gate", out, (norm_sq, t), backward)
