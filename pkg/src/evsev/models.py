"""The two sequence classifiers over selected tabular features.

Both models read a row of selected features as a token sequence (one
token per feature, in the fused-importance order fixed upstream):

- MambaNet: tokens -> depthwise conv (SiLU) -> selective SSM -> mean pool
  -> ReLU MLP [128, 64] with dropout -> 3 logits.
- MambaAttention: tokens -> self-attention (residual) -> selective SSM ->
  mean pool -> ReLU MLP [256, 128] with dropout -> 3 logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .arrayio import load_arrays, save_arrays
from .autodiff import Tensor
from .errors import ConfigError, EnvelopeError

HEAD_DIMS = {"mambanet": (128, 64), "mamba_attention": (256, 128)}


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    n_features: int
    embed_width: int = 32
    n_state: int = 16
    conv_kernel: int = 3
    n_heads: int = 4
    hidden_dims: tuple = ()
    dropout: float = 0.3
    n_classes: int = 3

    def __post_init__(self):
        if self.variant not in HEAD_DIMS:
            raise ConfigError(f"unknown model variant: {self.variant!r}")
        if not self.hidden_dims:
            object.__setattr__(self, "hidden_dims", HEAD_DIMS[self.variant])
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.n_features < 1:
            raise ConfigError("need at least one input feature")

    def to_dict(self):
        return {
            "variant": self.variant,
            "n_features": self.n_features,
            "embed_width": self.embed_width,
            "n_state": self.n_state,
            "conv_kernel": self.conv_kernel,
            "n_heads": self.n_heads,
            "hidden_dims": list(self.hidden_dims),
            "dropout": self.dropout,
            "n_classes": self.n_classes,
        }

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["hidden_dims"] = tuple(d.get("hidden_dims", ()))
        return ModelSpec(**d)


class SequenceClassifier(layers.Module):
    def __init__(self, spec: ModelSpec, rng, dtype=np.float32):
        self.spec = spec
        w = spec.embed_width
        self.tokenizer = layers.FeatureTokenizer(spec.n_features, w, rng, dtype)
        if spec.variant == "mambanet":
            self.mixer = layers.DepthwiseConv1d(w, spec.conv_kernel, rng, dtype)
        else:
            self.mixer = layers.SelfAttention(w, spec.n_heads, rng, dtype)
        self.ssm = layers.SSMBlock(w, spec.n_state, rng, dtype)
        self.head = layers.MLPHead(w, spec.hidden_dims, spec.n_classes,
                                   spec.dropout, rng, dtype)

    def forward(self, x, train=False, rng=None):
        """Class logits for a batch of feature rows (n, n_features)."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        tokens = self.tokenizer.forward(x)
        if self.spec.variant == "mambanet":
            mixed = self.mixer.forward(tokens).silu()
        else:
            mixed = self.mixer.forward(tokens)
        seq = self.ssm.forward(mixed)
        pooled = seq.mean(axis=1)
        logits = self.head.forward(pooled, train, rng)
        return ad.check_finite(logits, f"{self.spec.variant} logits")

    @property
    def dtype(self):
        return self.tokenizer.vectors.data.dtype

    def predict(self, X, batch=1024):
        """Argmax class per row, computed off the tape."""
        return np.argmax(self.predict_proba(X, batch=batch), axis=1)

    def predict_proba(self, X, batch=1024):
        X = np.asarray(X, dtype=self.dtype)
        parts = []
        with ad.no_grad():
            for lo in range(0, X.shape[0], batch):
                logits = self.forward(Tensor(X[lo : lo + batch]))
                parts.append(ad.softmax(logits, axis=1).data)
        return np.concatenate(parts, axis=0)

    def named_parameters(self):
        groups = [("tokenizer", self.tokenizer), ("mixer", self.mixer),
                  ("ssm", self.ssm), ("head", self.head)]
        out = []
        for prefix, mod in groups:
            out += [(f"{prefix}.{n}", t) for n, t in mod.named_parameters()]
        return out


def build_model(spec: ModelSpec, rng, dtype=np.float32) -> SequenceClassifier:
    return SequenceClassifier(spec, rng, dtype=dtype)


def save_model(path, model: SequenceClassifier, extra_meta: dict | None = None):
    """Checkpoint weights plus the spec needed to rebuild the model."""
    arrays = {name: p.data for name, p in model.named_parameters()}
    meta = {"kind": "classifier", "spec": model.spec.to_dict()}
    meta.update(extra_meta or {})
    save_arrays(path, arrays, meta)


def load_model(path) -> tuple[SequenceClassifier, dict]:
    """Rebuild a checkpointed classifier; returns (model, metadata)."""
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "classifier":
        raise EnvelopeError(f"{path} is not a classifier checkpoint")
    model = build_model(ModelSpec.from_dict(meta["spec"]), np.random.default_rng(0))
    for name, p in model.named_parameters():
        if name not in arrays or arrays[name].shape != p.data.shape:
            raise EnvelopeError(f"{path}: checkpoint misses parameter {name}")
        p.data = arrays[name].astype(p.data.dtype)
    return model, meta
