"""Differentiable building blocks for the sequence classifiers.

Every layer is a small container of parameter Tensors with a ``forward``
method and a ``named_parameters`` listing in a stable order (checkpoint
and optimizer state rely on that order).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    def named_parameters(self):
        """(name, tensor) pairs in a stable, documented order."""
        raise NotImplementedError

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype):
        self.weight = _uniform(rng, (n_in, n_out), n_in, dtype)
        self.bias = _uniform(rng, (n_out,), n_in, dtype)

    def forward(self, x):
        return x @ self.weight + self.bias

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


class FeatureTokenizer(Module):
    """One token per input feature: token_f = x_f * vec_f + bias_f."""

    def __init__(self, n_features, width, rng, dtype):
        self.n_features = n_features
        self.width = width
        self.vectors = _uniform(rng, (n_features, width), 1, dtype)
        self.biases = _uniform(rng, (n_features, width), 1, dtype)

    def forward(self, x):
        if x.shape[-1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {x.shape[-1]}"
            )
        b = x.shape[0]
        return x.reshape(b, self.n_features, 1) * self.vectors + self.biases

    def named_parameters(self):
        return [("vectors", self.vectors), ("biases", self.biases)]


class DepthwiseConv1d(Module):
    """Per-channel convolution over the token axis, same padding."""

    def __init__(self, channels, kernel, rng, dtype):
        self.weight = _uniform(rng, (channels, kernel), kernel, dtype)
        self.bias = _uniform(rng, (channels,), kernel, dtype)

    def forward(self, x):
        return ad.conv1d_depthwise(x, self.weight, self.bias)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


# softplus(bias) ~ 0.1 so initial step sizes start in a stable range
_DT_BIAS_INIT = float(np.log(np.expm1(0.1)))


class SSMBlock(Module):
    """Selective diagonal state-space layer over the token axis.

    Per channel i with state size n: h_t = exp(dt_t * A_i) h_{t-1} +
    dt_t B_t x_t and y_t = C_t . h_t + D_i x_t, where dt (via softplus),
    B and C are per-token projections of the input. A is kept negative by
    the A = -exp(log_A) parameterization, so exp(dt*A) lies in (0, 1).
    """

    def __init__(self, channels, n_state, rng, dtype):
        self.channels = channels
        self.n_state = n_state
        # decay spread over the state axis, identical for every channel
        init = np.log(np.arange(1, n_state + 1, dtype=np.float64))
        self.log_A = ad.parameter(np.broadcast_to(init, (channels, n_state)).copy(),
                                  dtype=dtype)
        self.dt_proj = Linear(channels, channels, rng, dtype)
        self.dt_proj.bias.data[:] = _DT_BIAS_INIT
        self.B_proj = Linear(channels, n_state, rng, dtype)
        self.C_proj = Linear(channels, n_state, rng, dtype)
        self.D = ad.parameter(np.ones(channels), dtype=dtype)

    def forward(self, x):
        A = -self.log_A.exp()
        dt = self.dt_proj.forward(x).softplus()
        Bt = self.B_proj.forward(x)
        Ct = self.C_proj.forward(x)
        return ad.selective_scan(dt, A, Bt, Ct, self.D, x)

    def named_parameters(self):
        out = [("log_A", self.log_A)]
        out += [(f"dt_proj.{n}", t) for n, t in self.dt_proj.named_parameters()]
        out += [(f"B_proj.{n}", t) for n, t in self.B_proj.named_parameters()]
        out += [(f"C_proj.{n}", t) for n, t in self.C_proj.named_parameters()]
        out.append(("D", self.D))
        return out


class SelfAttention(Module):
    """Multi-head scaled dot-product attention over tokens, plus residual."""

    def __init__(self, width, n_heads, rng, dtype):
        if width % n_heads != 0:
            raise ValueError("head count must divide token width")
        self.width = width
        self.n_heads = n_heads
        self.q_proj = Linear(width, width, rng, dtype)
        self.k_proj = Linear(width, width, rng, dtype)
        self.v_proj = Linear(width, width, rng, dtype)

    def forward(self, x, residual=True):
        b, T, d = x.shape
        H = self.n_heads
        dh = d // H

        def heads(t):
            return t.reshape(b, T, H, dh).transpose((0, 2, 1, 3))

        q = heads(self.q_proj.forward(x))
        k = heads(self.k_proj.forward(x))
        v = heads(self.v_proj.forward(x))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        attn = ad.softmax(scores, axis=-1)
        out = (attn @ v).transpose((0, 2, 1, 3)).reshape(b, T, d)
        return out + x if residual else out

    def named_parameters(self):
        out = [(f"q_proj.{n}", t) for n, t in self.q_proj.named_parameters()]
        out += [(f"k_proj.{n}", t) for n, t in self.k_proj.named_parameters()]
        out += [(f"v_proj.{n}", t) for n, t in self.v_proj.named_parameters()]
        return out


class MLPHead(Module):
    """Hidden ReLU layers with inverted dropout, then a linear class layer."""

    def __init__(self, n_in, hidden_dims, n_out, dropout, rng, dtype):
        self.dropout = dropout
        self.hidden = []
        prev = n_in
        for width in hidden_dims:
            self.hidden.append(Linear(prev, width, rng, dtype))
            prev = width
        self.out = Linear(prev, n_out, rng, dtype)

    def forward(self, x, train, rng):
        for layer in self.hidden:
            x = layer.forward(x).relu()
            x = ad.dropout(x, self.dropout, rng, train)
        return self.out.forward(x)

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.hidden):
            out += [(f"hidden{i}.{n}", t) for n, t in layer.named_parameters()]
        out += [(f"out.{n}", t) for n, t in self.out.named_parameters()]
        return out


class LayerNorm(Module):
    def __init__(self, width, dtype):
        self.gamma = ad.parameter(np.ones(width), dtype=dtype)
        self.beta = ad.parameter(np.zeros(width), dtype=dtype)

    def forward(self, x):
        return ad.layer_norm(x, self.gamma, self.beta)

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]
