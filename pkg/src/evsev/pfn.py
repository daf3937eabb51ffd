"""Desk-scale prior-fitted network for one-shot tabular classification.

A transformer encoder treats each data row as one token: a linear
feature embedding plus a label embedding for context rows or a learned
mask embedding for query rows. There is no positional encoding, and
attention is masked so every token attends to context tokens only, which
makes predictions permutation invariant over the context and independent
across queries. Pretraining minimizes cross-entropy of query labels over
tasks drawn from a synthetic prior (random shallow-tree or random-net
latents with label noise); afterward the model is frozen and predicts
new tasks in a single forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import EnvelopeError, NumericFault
from .layers import Linear, LayerNorm, Module, _uniform
from .train import AdamOptimizer
from .arrayio import load_arrays, save_arrays

# Prior sampling laws (checked by histogram tests).
_D_RANGE = (2, 20)          # d uniform on {2..20}
_CLASS_CHOICES = (2, 3)     # equal probability
_CTX_RANGE = (16, 128)      # context rows uniform
_QUERY_RANGE = (8, 32)      # query rows uniform
_NOISE_MAX = 0.1
_TREE_DEPTH_MAX = 3
_NET_HIDDEN_RANGE = (4, 16)


@dataclass
class PriorTask:
    X: np.ndarray        # (n, d) float64
    y: np.ndarray        # (n,) int64
    n_ctx: int
    n_classes: int

    def context(self):
        return self.X[: self.n_ctx], self.y[: self.n_ctx]

    def queries(self):
        return self.X[self.n_ctx :], self.y[self.n_ctx :]


def _latent_tree(rng, X, n_classes):
    n, d = X.shape
    depth = int(rng.integers(1, _TREE_DEPTH_MAX + 1))
    leaves = 2 ** depth
    features = rng.integers(0, d, size=leaves - 1)
    thresholds = rng.normal(size=leaves - 1)
    leaf_labels = rng.integers(0, n_classes, size=leaves)
    node = np.zeros(n, dtype=np.int64)
    for _ in range(depth):
        go_right = X[np.arange(n), features[node]] > thresholds[node]
        node = 2 * node + 1 + go_right
    return leaf_labels[node - (leaves - 1)]


def _latent_net(rng, X, n_classes):
    d = X.shape[1]
    hidden = int(rng.integers(_NET_HIDDEN_RANGE[0], _NET_HIDDEN_RANGE[1] + 1))
    W1 = rng.normal(size=(d, hidden)) / np.sqrt(d)
    b1 = rng.normal(size=hidden)
    W2 = rng.normal(size=(hidden, n_classes))
    b2 = rng.normal(size=n_classes)
    return np.argmax(np.tanh(X @ W1 + b1) @ W2 + b2, axis=1)


def sample_prior_task(rng, shape=None) -> PriorTask:
    """Draw one synthetic task; ``shape`` pins (d, n_classes, n_ctx, n_q)."""
    if shape is None:
        shape = sample_task_shape(rng)
    d, n_classes, n_ctx, n_query = shape
    n = n_ctx + n_query
    X = rng.normal(size=(n, d))
    if rng.random() < 0.5:
        y = _latent_tree(rng, X, n_classes)
    else:
        y = _latent_net(rng, X, n_classes)
    eps = rng.uniform(0.0, _NOISE_MAX)
    flip = rng.random(n) < eps
    y = np.where(flip, rng.integers(0, n_classes, size=n), y).astype(np.int64)
    return PriorTask(X=X, y=y, n_ctx=n_ctx, n_classes=n_classes)


def sample_task_shape(rng, spec=None):
    """Task dimensions from the prior, clamped to a spec's envelope."""
    d_hi = _D_RANGE[1] if spec is None else min(_D_RANGE[1], spec.d_max)
    c_hi = _CTX_RANGE[1] if spec is None else min(_CTX_RANGE[1],
                                                  spec.max_context)
    d = int(rng.integers(min(_D_RANGE[0], d_hi), d_hi + 1))
    n_classes = int(rng.choice(_CLASS_CHOICES))
    n_ctx = int(rng.integers(min(_CTX_RANGE[0], c_hi), c_hi + 1))
    n_query = int(rng.integers(_QUERY_RANGE[0], _QUERY_RANGE[1] + 1))
    return d, n_classes, n_ctx, n_query


@dataclass(frozen=True)
class PFNSpec:
    d_max: int = 20
    max_context: int = 256
    n_classes: int = 3
    width: int = 64
    n_layers: int = 3
    n_heads: int = 4
    ffn_mult: int = 2

    def __post_init__(self):
        if self.width % self.n_heads != 0:
            raise ValueError("width must divide evenly into heads")

    def to_dict(self):
        return {
            "d_max": self.d_max, "max_context": self.max_context,
            "n_classes": self.n_classes, "width": self.width,
            "n_layers": self.n_layers, "n_heads": self.n_heads,
            "ffn_mult": self.ffn_mult,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class _EncoderBlock(Module):
    def __init__(self, spec: PFNSpec, rng, dtype):
        w = spec.width
        self.ln1 = LayerNorm(w, dtype)
        self.qkv = Linear(w, 3 * w, rng, dtype)
        self.proj = Linear(w, w, rng, dtype)
        self.ln2 = LayerNorm(w, dtype)
        self.fc1 = Linear(w, spec.ffn_mult * w, rng, dtype)
        self.fc2 = Linear(spec.ffn_mult * w, w, rng, dtype)
        self.n_heads = spec.n_heads
        # residual-branch outputs shrink with depth so the stream's scale
        # stays O(1) at init regardless of n_layers
        scale = (2.0 * spec.n_layers) ** -0.5
        self.proj.weight.data *= scale
        self.fc2.weight.data *= scale

    def forward(self, x, key_bias):
        B, T, W = x.shape
        h = self.n_heads
        dh = W // h
        qkv = self.qkv.forward(self.ln1.forward(x))
        q = qkv[:, :, :W].reshape(B, T, h, dh).transpose((0, 2, 1, 3))
        k = qkv[:, :, W : 2 * W].reshape(B, T, h, dh).transpose((0, 2, 1, 3))
        v = qkv[:, :, 2 * W :].reshape(B, T, h, dh).transpose((0, 2, 1, 3))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(dh)) + key_bias
        att = ad.softmax(scores)
        mixed = (att @ v).transpose((0, 2, 1, 3)).reshape(B, T, W)
        x = x + self.proj.forward(mixed)
        return x + self.fc2.forward(self.fc1.forward(self.ln2.forward(x)).relu())

    def named_parameters(self):
        for sub in ("ln1", "qkv", "proj", "ln2", "fc1", "fc2"):
            for name, p in getattr(self, sub).named_parameters():
                yield f"{sub}.{name}", p


class PFNModel(Module):
    def __init__(self, spec: PFNSpec, rng, dtype=np.float32):
        self.spec = spec
        w = spec.width
        self.feat = Linear(spec.d_max, w, rng, dtype)
        self.label_emb = _uniform(rng, (spec.n_classes, w), w, dtype)
        self.mask_emb = _uniform(rng, (w,), w, dtype)
        self.blocks = [_EncoderBlock(spec, rng, dtype) for _ in range(spec.n_layers)]
        self.ln_f = LayerNorm(w, dtype)
        self.head = Linear(w, spec.n_classes, rng, dtype)
        self.frozen = False

    @property
    def dtype(self):
        return self.label_emb.dtype

    def forward(self, X_pad, labels, n_ctx):
        """Query logits for padded features (B,T,d_max) and context labels.

        ``labels`` is (B, T) int with query entries ignored; rows at
        positions >= n_ctx are queries.
        """
        B, T, _ = X_pad.shape
        w = self.spec.width
        x = self.feat.forward(ad.Tensor(X_pad, dtype=self.dtype))
        clipped = np.clip(np.asarray(labels), 0, self.spec.n_classes - 1)
        emb = ad.gather_rows(self.label_emb, clipped.reshape(-1)).reshape(B, T, w)
        is_ctx = np.zeros((B, T, 1), dtype=self.dtype)
        is_ctx[:, :n_ctx, :] = 1.0
        ctx_mask = ad.Tensor(is_ctx)
        x = x + emb * ctx_mask + self.mask_emb.reshape(1, 1, w) * (1.0 - ctx_mask)
        bias = np.zeros((1, 1, 1, T), dtype=self.dtype)
        bias[..., n_ctx:] = -1e30  # keys restricted to context rows
        key_bias = ad.Tensor(bias)
        for block in self.blocks:
            x = block.forward(x, key_bias)
        return self.head.forward(self.ln_f.forward(x[:, n_ctx:, :]))

    def named_parameters(self):
        yield "feat.weight", self.feat.weight
        yield "feat.bias", self.feat.bias
        yield "label_emb", self.label_emb
        yield "mask_emb", self.mask_emb
        for i, block in enumerate(self.blocks):
            for name, p in block.named_parameters():
                yield f"block{i}.{name}", p
        for name, p in self.ln_f.named_parameters():
            yield f"ln_f.{name}", p
        yield "head.weight", self.head.weight
        yield "head.bias", self.head.bias


@dataclass(frozen=True)
class PretrainConfig:
    n_tasks: int = 200_000
    batch: int = 32
    lr: float = 6e-4
    lr_floor_frac: float = 0.05  # decay from lr to lr * this after warmup
    warmup_frac: float = 0.03  # fraction of steps ramping 0 -> lr
    clip_norm: float = 1.0  # global grad-norm ceiling, 0 disables
    seed: int = 0
    spec: PFNSpec = field(default_factory=PFNSpec)


def _normalize_by_context(X, n_ctx):
    """Per-column z-score using context statistics only."""
    mu = X[:n_ctx].mean(axis=0)
    sd = X[:n_ctx].std(axis=0)
    sd = np.where(sd < 1e-6, 1.0, sd)
    return (X - mu) / sd


def _pad_features(X, d_max):
    n, d = X.shape
    out = np.zeros((n, d_max), dtype=np.float64)
    out[:, :d] = X
    return out


def _schedule(cfg: PretrainConfig, step: int, steps: int) -> float:
    """Linear warmup to cfg.lr, then cosine decay to lr * lr_floor_frac."""
    warm = int(round(cfg.warmup_frac * steps))
    if step < warm:
        return cfg.lr * (step + 1) / warm
    span = max(1, steps - 1 - warm)
    frac = (step - warm) / span
    floor = cfg.lr * cfg.lr_floor_frac
    return floor + 0.5 * (cfg.lr - floor) * (1.0 + math.cos(math.pi * frac))


def pretrain_pfn(cfg: PretrainConfig):
    """Train on prior tasks, freeze, and return (model, per-step losses)."""
    seq = np.random.SeedSequence(entropy=cfg.seed)
    init_rng, task_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    model = PFNModel(cfg.spec, init_rng)
    params = [p for _, p in model.named_parameters()]
    opt = AdamOptimizer(params)
    steps = max(1, cfg.n_tasks // cfg.batch)
    losses = []
    for step in range(steps):
        shape = sample_task_shape(task_rng, cfg.spec)
        d, n_classes, n_ctx, n_query = shape
        Xb = np.empty((cfg.batch, n_ctx + n_query, cfg.spec.d_max))
        yb = np.empty((cfg.batch, n_ctx + n_query), dtype=np.int64)
        for i in range(cfg.batch):
            task = sample_prior_task(task_rng, shape)
            Xb[i] = _pad_features(_normalize_by_context(task.X, n_ctx), cfg.spec.d_max)
            yb[i] = task.y
        logits = model.forward(Xb, yb, n_ctx)
        flat = logits.reshape(cfg.batch * n_query, cfg.spec.n_classes)
        loss = ad.cross_entropy(flat, yb[:, n_ctx:].reshape(-1))
        if not np.isfinite(loss.data):
            raise NumericFault(f"pretraining loss diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        if cfg.clip_norm > 0.0:
            norm = math.sqrt(sum(float((p.grad ** 2).sum()) for p in params))
            if norm > cfg.clip_norm:
                scale = cfg.clip_norm / norm
                for p in params:
                    p.grad *= scale
        opt.step(_schedule(cfg, step, steps))
        losses.append(float(loss.data))
    model.frozen = True
    return model, losses


def _stratified_subsample(y, limit, seed):
    """Per-class proportional pick (largest remainder), order preserved."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    classes = np.unique(y)
    quotas = np.array([limit * (y == c).sum() / y.size for c in classes])
    take = np.floor(quotas).astype(int)
    rem = limit - take.sum()
    order = np.argsort(-(quotas - take), kind="stable")
    for j in order[:rem]:
        take[j] += 1
    keep = []
    for c, t in zip(classes, take):
        idx = np.flatnonzero(y == c)
        keep.append(rng.choice(idx, size=min(t, idx.size), replace=False))
    return np.sort(np.concatenate(keep))


def pfn_predict(model: PFNModel, ctx_X, ctx_y, query_X,
                subsample=False, seed=0, query_batch=512):
    """One-shot class probabilities for queries given a labeled context.

    The frozen model runs a single forward pass per query batch; no
    parameters change. Contexts larger than the envelope are rejected
    unless ``subsample`` requests a stratified cut to the limit.
    """
    if not model.frozen:
        raise EnvelopeError("pfn_predict requires a frozen, pretrained model")
    spec = model.spec
    ctx_X = np.asarray(ctx_X, dtype=np.float64)
    ctx_y = np.asarray(ctx_y, dtype=np.int64)
    query_X = np.asarray(query_X, dtype=np.float64)
    if ctx_X.ndim != 2 or query_X.ndim != 2 or ctx_X.shape[1] != query_X.shape[1]:
        raise EnvelopeError("context and queries must share one feature width")
    if ctx_X.shape[1] > spec.d_max:
        raise EnvelopeError(f"{ctx_X.shape[1]} features exceed envelope d<={spec.d_max}")
    if ctx_X.shape[0] == 0 or query_X.shape[0] == 0:
        raise EnvelopeError("context and query sets must be nonempty")
    if ctx_y.shape != (ctx_X.shape[0],):
        raise EnvelopeError("context labels must match context rows")
    if ctx_y.min() < 0 or ctx_y.max() >= spec.n_classes:
        raise EnvelopeError(
            f"context labels outside the {spec.n_classes}-class envelope"
        )
    if ctx_X.shape[0] > spec.max_context:
        if not subsample:
            raise EnvelopeError(
                f"context of {ctx_X.shape[0]} rows exceeds envelope "
                f"{spec.max_context}; pass subsample=True to cut it"
            )
        keep = _stratified_subsample(ctx_y, spec.max_context, seed)
        ctx_X, ctx_y = ctx_X[keep], ctx_y[keep]

    n_ctx = ctx_X.shape[0]
    stacked = np.vstack([ctx_X, query_X])
    stacked = _normalize_by_context(stacked, n_ctx)
    Xp = _pad_features(stacked, spec.d_max)
    probs = []
    with ad.no_grad():
        for lo in range(0, query_X.shape[0], query_batch):
            hi = min(lo + query_batch, query_X.shape[0])
            rows = np.vstack([Xp[:n_ctx], Xp[n_ctx + lo : n_ctx + hi]])
            labels = np.concatenate([ctx_y, np.full(hi - lo, -1, dtype=np.int64)])
            logits = model.forward(rows[None, :, :], labels[None, :], n_ctx)
            z = logits.data[0].astype(np.float64)
            z -= z.max(axis=1, keepdims=True)
            e = np.exp(z)
            probs.append(e / e.sum(axis=1, keepdims=True))
    return np.vstack(probs)


def context_majority_accuracy(task: PriorTask) -> float:
    """Accuracy of always predicting the most frequent context label."""
    _, cy = task.context()
    counts = np.bincount(cy, minlength=task.n_classes)
    guess = int(np.argmax(counts))  # ties go to the smallest label
    _, qy = task.queries()
    return float((qy == guess).mean())


def heldout_accuracy(model: PFNModel, n_tasks: int, seed: int):
    """(model, context-majority) accuracy pooled over held-out tasks."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    hits = chance_hits = total = 0
    for _ in range(n_tasks):
        task = sample_prior_task(rng, sample_task_shape(rng, model.spec))
        cx, cy = task.context()
        qx, qy = task.queries()
        probs = pfn_predict(model, cx, cy, qx)
        hits += int((probs.argmax(axis=1) == qy).sum())
        counts = np.bincount(cy, minlength=task.n_classes)
        chance_hits += int((qy == int(np.argmax(counts))).sum())
        total += qy.size
    return hits / total, chance_hits / total


def save_pfn(path, model: PFNModel, extra_meta: dict | None = None):
    arrays = {name: p.data for name, p in model.named_parameters()}
    meta = {"kind": "pfn", "spec": model.spec.to_dict(), "frozen": model.frozen}
    meta.update(extra_meta or {})
    save_arrays(path, arrays, meta)


def load_pfn(path) -> PFNModel:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "pfn":
        raise EnvelopeError(f"{path} is not a PFN checkpoint")
    spec = PFNSpec.from_dict(meta["spec"])
    model = PFNModel(spec, np.random.default_rng(0))
    for name, p in model.named_parameters():
        if name not in arrays or arrays[name].shape != p.data.shape:
            raise EnvelopeError(f"{path}: checkpoint misses parameter {name}")
        p.data = arrays[name].astype(p.data.dtype)
    model.frozen = bool(meta.get("frozen", True))
    return model
