"""Training harness: splitting, optimizers, schedules, early stopping.

The learning-rate schedules are pure replay functions of the epoch index
and the validation-loss history, so a logged lr trace can always be
recomputed offline and compared exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dataset import Dataset, N_CLASSES
from .errors import DataError, LineageError, NumericFault


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 50
    batch: int = 64
    optimizer: str = "adamw"  # adamw | adam
    schedule: str = "plateau"  # plateau | step
    step_size: int = 10
    gamma: float = 0.5
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    plateau_min_delta: float = 1e-4
    plateau_floor: float = 1e-6
    early_stop_patience: int = 10
    early_stop_min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.epochs < 1:
            raise ValueError("lr must be positive, batch and epochs >= 1")
        if self.optimizer not in ("adam", "adamw"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")
        if self.schedule not in ("plateau", "step"):
            raise ValueError(f"unknown schedule: {self.schedule!r}")


@dataclass
class TrainingCurves:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1

    def log(self, epoch, tl, vl, ta, va, lr):
        self.epochs.append(epoch)
        self.train_loss.append(tl)
        self.val_loss.append(vl)
        self.train_acc.append(ta)
        self.val_acc.append(va)
        self.lr.append(lr)


def stratified_indices(y, fractions=(0.6, 0.2, 0.2), seed=0):
    """Sorted (train, validation, test) row indices, stratified by label.

    Within each class, rows are shuffled by a seed-derived stream and
    apportioned by the largest-remainder rule, so every per-class count
    differs from the exact proportion by at most 1.
    """
    y = np.asarray(y, dtype=np.int64)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("fractions must be three nonnegative values summing to 1")
    counts = np.bincount(y, minlength=1)
    present = np.flatnonzero(counts)
    if (counts[present] < 3).any():
        raise DataError("every present class needs at least 3 samples to split")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    parts = [[], [], []]
    for c in present:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        quotas = np.array([f * idx.size for f in fractions])
        base = np.floor(quotas).astype(int)
        rem = idx.size - base.sum()
        # distribute leftovers by largest fractional part, ties favoring
        # the earlier split (train, then validation, then test)
        order = np.argsort(-(quotas - base), kind="stable")
        for j in order[:rem]:
            base[j] += 1
        stops = np.cumsum(base)
        parts[0].append(idx[: stops[0]])
        parts[1].append(idx[stops[0] : stops[1]])
        parts[2].append(idx[stops[1] : stops[2]])
    return tuple(
        np.sort(np.concatenate(p)) if p else np.array([], dtype=np.int64)
        for p in parts
    )


def split_dataset(ds: Dataset, fractions=(0.6, 0.2, 0.2), seed=0):
    """Stratified (train, validation, test) split of a Dataset."""
    idx = stratified_indices(ds.y, fractions, seed)
    roles = ("train", "validation", "test")
    return tuple(ds.subset(sel, role=role) for sel, role in zip(idx, roles))


class AdamOptimizer:
    """Adam with bias correction; optional decoupled weight decay (AdamW).

    Update: m = b1 m + (1-b1) g, v = b2 v + (1-b2) g^2, then
    p -= lr * m_hat / (sqrt(v_hat) + eps). AdamW first applies
    p -= lr * wd * p; plain Adam ignores the decay entirely.
    """

    def __init__(self, params, weight_decay=0.0, decoupled=False,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.decoupled = decoupled
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            if self.decoupled and self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer == "adamw":
        return AdamOptimizer(params, weight_decay=cfg.weight_decay, decoupled=True)
    return AdamOptimizer(params, weight_decay=0.0, decoupled=False)


def schedule_lr(cfg: TrainConfig, epoch: int, val_history) -> float:
    """Learning rate for ``epoch`` given the validation losses before it.

    step: lr0 * gamma^(epoch // step_size), ignoring the history.
    plateau: replay the history; each run of ``plateau_patience``
    consecutive epochs without an improvement of at least
    ``plateau_min_delta`` halves the rate (factor, floored).
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if cfg.schedule == "step":
        return cfg.lr * cfg.gamma ** (epoch // cfg.step_size)
    lr = cfg.lr
    best = np.inf
    bad = 0
    for v in list(val_history)[:epoch]:
        if v < best - cfg.plateau_min_delta:
            best = v
            bad = 0
        else:
            bad += 1
            if bad >= cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.plateau_floor)
                bad = 0
    return lr


def evaluate_loss(model, ds: Dataset, class_weights=None, batch=1024):
    """(weighted mean loss, accuracy) in eval mode, off the tape."""
    total_w = 0.0
    total_loss = 0.0
    correct = 0
    with ad.no_grad():
        for lo in range(0, ds.n_rows, batch):
            X = ds.X[lo : lo + batch].astype(model.dtype)
            y = ds.y[lo : lo + batch]
            logits = model.forward(ad.Tensor(X))
            w = None if class_weights is None else class_weights[y]
            loss = ad.cross_entropy(logits, y, w)
            wsum = float(y.size if w is None else w.sum())
            total_loss += loss.item() * wsum
            total_w += wsum
            correct += int((np.argmax(logits.data, axis=1) == y).sum())
    return total_loss / total_w, correct / ds.n_rows


def train_model(model, train_ds: Dataset, val_ds: Dataset, class_weights,
                cfg: TrainConfig):
    """Minimize class-weighted cross-entropy with early stopping.

    Shuffled mini-batches; per-epoch logging of losses, accuracies, and
    the scheduled learning rate; keeps the best-validation-loss epoch's
    parameters and restores them before returning the curves.
    """
    if train_ds.role in ("validation", "test"):
        raise LineageError(f"refusing to fit on {train_ds.role!r} data")
    if list(train_ds.feature_names) != list(val_ds.feature_names):
        raise DataError("train and validation feature names differ")
    cw = None if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    params = model.parameters()
    opt = make_optimizer(params, cfg)
    seq = np.random.SeedSequence(entropy=cfg.seed)
    shuffle_rng, dropout_rng = [np.random.default_rng(s) for s in seq.spawn(2)]
    curves = TrainingCurves()
    best_loss = np.inf
    best_epoch = -1
    best_params = None
    n = train_ds.n_rows
    for epoch in range(cfg.epochs):
        lr = schedule_lr(cfg, epoch, curves.val_loss)
        perm = shuffle_rng.permutation(n)
        run_loss = 0.0
        run_w = 0.0
        run_correct = 0
        for lo in range(0, n, cfg.batch):
            idx = perm[lo : lo + cfg.batch]
            X = train_ds.X[idx].astype(model.dtype)
            y = train_ds.y[idx]
            opt.zero_grad()
            logits = model.forward(ad.Tensor(X), train=True, rng=dropout_rng)
            w = None if cw is None else cw[y]
            loss = ad.cross_entropy(logits, y, w)
            if not np.isfinite(loss.item()):
                raise NumericFault(
                    f"non-finite training loss at epoch {epoch}, row offset {lo}"
                )
            loss.backward()
            opt.step(lr)
            wsum = float(y.size if w is None else w.sum())
            run_loss += loss.item() * wsum
            run_w += wsum
            run_correct += int((np.argmax(logits.data, axis=1) == y).sum())
        val_loss, val_acc = evaluate_loss(model, val_ds, cw, batch=max(cfg.batch, 512))
        if not np.isfinite(val_loss):
            raise NumericFault(f"non-finite validation loss at epoch {epoch}")
        curves.log(epoch, run_loss / run_w, val_loss, run_correct / n, val_acc, lr)
        if val_loss < best_loss - cfg.early_stop_min_delta:
            best_loss = val_loss
            best_epoch = epoch
            best_params = [p.data.copy() for p in params]
        if epoch - best_epoch >= cfg.early_stop_patience:
            break
    if best_params is not None:
        for p, saved in zip(params, best_params):
            p.data[...] = saved
    curves.best_epoch = best_epoch
    return curves
