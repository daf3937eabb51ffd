"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and records the operations that produced it.
``backward`` on a scalar loss walks the tape in reverse topological order
and accumulates gradients into every tensor that requires them. Ops cover
exactly what the models here need: broadcasting arithmetic, matmul,
reductions, shape moves, gather/concat, fused activations, layer
normalization, softmax, weighted cross-entropy, a depthwise 1-d
convolution, and the diagonal state-space scan (backed by the compiled
kernels when available).

Float dtype is per-tensor: float32 for training speed, float64 for
gradient checking. Integer inputs (labels, gather indices) stay plain
ndarrays; only real-valued data lives in Tensors.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import _kernels
from .errors import NumericFault

grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference mode)."""
    global grad_enabled
    saved = grad_enabled
    grad_enabled = False
    try:
        yield
    finally:
        grad_enabled = saved


def _unbroadcast(grad, shape):
    # reduce a broadcast gradient back to the operand's shape
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("Tensor(data) expects array-like, not Tensor")
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = ()
        self._backward = None

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self):
        """Backpropagate from this scalar through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar tensor")
        if self._backward is None and not self._prev:
            raise ValueError("backward called without a recorded forward tape")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node is not self and not node.requires_grad:
                node.grad = None  # intermediate buffers are not kept
            node._backward = None
            node._prev = ()

    # -- op plumbing ------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        out = _node(self.data + other.data, (self, other))
        if out._prev:

            def backward(g):
                if _wants(self):
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if _wants(other):
                    other._accumulate(_unbroadcast(g, other.data.shape))

            out._backward = backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = self._coerce(other)
        out = _node(self.data * other.data, (self, other))
        if out._prev:
            a, b = self, other

            def backward(g):
                if _wants(a):
                    a._accumulate(_unbroadcast(g * b.data, a.data.shape))
                if _wants(b):
                    b._accumulate(_unbroadcast(g * a.data, b.data.shape))

            out._backward = backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __truediv__(self, other):
        other = self._coerce(other)
        out = _node(self.data / other.data, (self, other))
        if out._prev:
            a, b = self, other

            def backward(g):
                if _wants(a):
                    a._accumulate(_unbroadcast(g / b.data, a.data.shape))
                if _wants(b):
                    b._accumulate(
                        _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
                    )

            out._backward = backward
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = _node(self.data**exponent, (self,))
        if out._prev:

            def backward(g):
                self._accumulate(g * exponent * self.data ** (exponent - 1))

            out._backward = backward
        return out

    def __matmul__(self, other):
        other = self._coerce(other)
        out = _node(self.data @ other.data, (self, other))
        if out._prev:
            a, b = self, other

            def backward(g):
                if _wants(a):
                    ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else (
                        np.expand_dims(g, -1) * b.data
                    )
                    a._accumulate(_unbroadcast(ga, a.data.shape))
                if _wants(b):
                    if a.data.ndim > 1:
                        gb = np.swapaxes(a.data, -1, -2) @ g
                    else:
                        gb = np.expand_dims(a.data, -1) * np.expand_dims(g, -2)
                    b._accumulate(_unbroadcast(gb, b.data.shape))

            out._backward = backward
        return out

    # -- reductions and shape moves --------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._prev:
            shape = self.data.shape

            def backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, shape).copy())

            out._backward = backward
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out._prev:
            orig = self.data.shape

            def backward(g):
                self._accumulate(g.reshape(orig))

            out._backward = backward
        return out

    def transpose(self, axes):
        out = _node(np.transpose(self.data, axes), (self,))
        if out._prev:
            inverse = np.argsort(axes)

            def backward(g):
                self._accumulate(np.transpose(g, inverse))

            out._backward = backward
        return out

    def __getitem__(self, key):
        out = _node(self.data[key], (self,))
        if out._prev:
            shape = self.data.shape

            def backward(g):
                full = np.zeros(shape, dtype=g.dtype)
                full[key] = g
                self._accumulate(full)

            out._backward = backward
        return out

    # -- activations ------------------------------------------------------

    def exp(self):
        out = _node(np.exp(self.data), (self,))
        if out._prev:
            val = out.data

            def backward(g):
                self._accumulate(g * val)

            out._backward = backward
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out._prev:

            def backward(g):
                self._accumulate(g / self.data)

            out._backward = backward
        return out

    def tanh(self):
        out = _node(np.tanh(self.data), (self,))
        if out._prev:
            val = out.data

            def backward(g):
                self._accumulate(g * (1.0 - val * val))

            out._backward = backward
        return out

    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))
        if out._prev:
            mask = (self.data > 0.0).astype(self.data.dtype)

            def backward(g):
                self._accumulate(g * mask)

            out._backward = backward
        return out

    def sigmoid(self):
        out = _node(_sigmoid(self.data), (self,))
        if out._prev:
            val = out.data

            def backward(g):
                self._accumulate(g * val * (1.0 - val))

            out._backward = backward
        return out

    def silu(self):
        s = _sigmoid(self.data)
        out = _node(self.data * s, (self,))
        if out._prev:
            x = self.data

            def backward(g):
                self._accumulate(g * (s * (1.0 + x * (1.0 - s))))

            out._backward = backward
        return out

    def softplus(self):
        x = self.data
        out = _node(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))), (self,))
        if out._prev:
            s = _sigmoid(x)

            def backward(g):
                self._accumulate(g * s)

            out._backward = backward
        return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _wants(t):
    return t.requires_grad or t._prev or t._backward is not None


def _node(data, prev):
    out = Tensor(data)
    if grad_enabled:
        tracked = tuple(p for p in prev if _wants(p))
        out._prev = tracked
    return out


def parameter(data, dtype=None):
    """Leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True, dtype=dtype)


# -- fused ops ------------------------------------------------------------


def concat(tensors, axis=0):
    datas = [t.data for t in tensors]
    out = _node(np.concatenate(datas, axis=axis), tuple(tensors))
    if out._prev:
        sizes = [d.shape[axis] for d in datas]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if _wants(t):
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    t._accumulate(g[tuple(sl)])

        out._backward = backward
    return out


def gather_rows(table, index):
    """Select rows of a 2-d tensor by integer index (embedding lookup)."""
    index = np.asarray(index, dtype=np.int64)
    out = _node(table.data[index], (table,))
    if out._prev:
        shape = table.data.shape

        def backward(g):
            full = np.zeros(shape, dtype=g.dtype)
            np.add.at(full, index, g)
            table._accumulate(full)

        out._backward = backward
    return out


def softmax(t, axis=-1):
    z = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = _node(p, (t,))
    if out._prev:

        def backward(g):
            inner = (g * p).sum(axis=axis, keepdims=True)
            t._accumulate(p * (g - inner))

        out._backward = backward
    return out


def layer_norm(t, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x = t.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _node(xhat * gamma.data + beta.data, (t, gamma, beta))
    if out._prev:
        n = x.shape[-1]

        def backward(g):
            if _wants(gamma):
                gamma._accumulate(
                    (g * xhat).sum(axis=tuple(range(g.ndim - 1)))
                )
            if _wants(beta):
                beta._accumulate(g.sum(axis=tuple(range(g.ndim - 1))))
            if _wants(t):
                gx = g * gamma.data
                term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (
                    gx * xhat
                ).mean(axis=-1, keepdims=True)
                t._accumulate(term * inv)

        out._backward = backward
    return out


def cross_entropy(logits, labels, sample_weights=None):
    """Weighted mean softmax cross-entropy.

    ``logits`` (n, C) tensor, ``labels`` (n,) int array; optional
    ``sample_weights`` (n,) array. Loss = sum_i w_i * ce_i / sum_i w_i,
    which reduces to the plain mean when all weights are equal.
    """
    labels = np.asarray(labels, dtype=np.int64)
    x = logits.data
    n = x.shape[0]
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    per = lse - x[np.arange(n), labels]
    if sample_weights is None:
        w = np.ones(n, dtype=x.dtype)
    else:
        w = np.asarray(sample_weights, dtype=x.dtype)
    wsum = w.sum()
    out = _node(np.asarray((per * w).sum() / wsum, dtype=x.dtype), (logits,))
    if out._prev:

        def backward(g):
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(n), labels] -= 1.0
            p *= (w / wsum)[:, None]
            logits._accumulate(g * p)

        out._backward = backward
    return out


def dropout(t, rate, rng, train):
    """Inverted dropout: zero a fraction ``rate``, rescale survivors."""
    if not train or rate <= 0.0:
        return t
    mask = (rng.random(t.data.shape) >= rate).astype(t.data.dtype)
    mask /= 1.0 - rate
    return t * Tensor(mask)


def conv1d_depthwise(x, weight, bias):
    """Per-channel 1-d convolution over the token axis, same padding.

    ``x`` (batch, T, d), ``weight`` (d, K), ``bias`` (d,). Output position t
    sees input positions t - K//2 .. t + (K-1)//2 of its own channel only.
    """
    xd = x.data
    wd = weight.data
    b, T, d = xd.shape
    K = wd.shape[1]
    left = (K - 1) // 2
    pad = np.zeros((b, T + K - 1, d), dtype=xd.dtype)
    pad[:, left : left + T] = xd
    y = np.zeros((b, T, d), dtype=xd.dtype)
    for k in range(K):
        y += pad[:, k : k + T] * wd[:, k]
    y += bias.data
    out = _node(y, (x, weight, bias))
    if out._prev:

        def backward(g):
            if _wants(bias):
                bias._accumulate(g.sum(axis=(0, 1)))
            if _wants(weight):
                gw = np.empty_like(wd)
                for k in range(K):
                    gw[:, k] = (g * pad[:, k : k + T]).sum(axis=(0, 1))
                weight._accumulate(gw)
            if _wants(x):
                gpad = np.zeros_like(pad)
                for k in range(K):
                    gpad[:, k : k + T] += g * wd[:, k]
                x._accumulate(gpad[:, left : left + T])

        out._backward = backward
    return out


def ssm_scan(dA, dBx, C, D, x):
    """Diagonal linear recurrence h_t = dA_t*h_{t-1} + dBx_t, y_t = C_t.h_t + D*x_t.

    Shapes: dA, dBx (batch, T, d, n); C (batch, T, n); D (d,); x (batch, T, d).
    The recurrence itself runs in the compiled kernel; the gradients with
    respect to all five inputs come from the matching backward kernel.
    """
    dtype = x.data.dtype
    args = [np.ascontiguousarray(t.data, dtype=np.float64) for t in (dA, dBx, C, D, x)]
    y64, h64 = _kernels.ssm_scan_forward(*args)
    out = _node(y64.astype(dtype, copy=False), (dA, dBx, C, D, x))
    if out._prev:

        def backward(g):
            grads = _kernels.ssm_scan_backward(
                np.ascontiguousarray(g, dtype=np.float64), h64, args[0], args[2],
                args[3], args[4]
            )
            for t, gt in zip((dA, dBx, C, D, x), grads):
                if _wants(t):
                    t._accumulate(gt.astype(dtype, copy=False))

        out._backward = backward
    return out


def selective_scan(dt, A, B, C, D, x):
    """Fused selective state-space step: one tape node for the whole scan.

    h_t = exp(dt_t A) h_{t-1} + dt_t B_t x_t and y_t = C_t . h_t + D x_t,
    per channel, h_0 = 0. Shapes: dt, x (batch, T, d); A (d, n); B, C
    (batch, T, n); D (d,). The decay exp(dt A) is computed vectorized
    here and differentiated analytically in the backward kernel, which
    never materializes per-step 4-d gradient arrays.
    """
    dA = np.exp(dt.data[:, :, :, None] * A.data)
    inputs = (dt, A, B, C, D, x)
    raw = tuple(np.ascontiguousarray(t.data) for t in inputs)
    y, h = _kernels.selective_scan_forward(dA, raw[0], raw[2], raw[3], raw[4], raw[5])
    out = _node(y, inputs)
    if out._prev:

        def backward(g):
            grads = _kernels.selective_scan_backward(
                np.ascontiguousarray(g), h, dA, raw[0], raw[1], raw[2], raw[3],
                raw[4], raw[5]
            )
            for t, gt in zip(inputs, grads):
                if _wants(t):
                    t._accumulate(gt)

        out._backward = backward
    return out


def check_finite(t, where):
    """Raise NumericFault when the tensor holds NaN or Inf."""
    if not np.isfinite(t.data).all():
        raise NumericFault(f"non-finite values in {where}")
    return t


def gradcheck(build, params, rng, n_checks=30, h=1e-4, dtype=np.float64):
    """Compare analytic gradients against central finite differences.

    ``build()`` must rerun the forward pass and return the scalar loss
    tensor; ``params`` are the leaf tensors. Samples ``n_checks`` parameter
    entries and returns the maximum relative error
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    for p in params:
        p.zero_grad()
    loss = build()
    loss.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        for p in params
    ]
    sizes = np.array([p.data.size for p in params])
    total = sizes.sum()
    picks = rng.choice(total, size=min(n_checks, total), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for flat in sorted(int(i) for i in picks):
        pi = int(np.searchsorted(bounds, flat, side="right"))
        offset = flat - (0 if pi == 0 else bounds[pi - 1])
        idx = np.unravel_index(offset, params[pi].data.shape)
        keep = params[pi].data[idx]
        params[pi].data[idx] = keep + h
        hi = build().item()
        params[pi].data[idx] = keep - h
        lo = build().item()
        params[pi].data[idx] = keep
        numeric = (hi - lo) / (2.0 * h)
        ana = float(analytic[pi][idx])
        err = abs(ana - numeric) / max(1.0, abs(ana), abs(numeric))
        worst = max(worst, err)
    return worst
