import numpy as np
import pytest

from evsev import autodiff as ad
from evsev.dataset import Dataset
from evsev.errors import DataError, LineageError
from evsev.models import ModelSpec, build_model
from evsev.train import (AdamOptimizer, TrainConfig, schedule_lr,
                         split_dataset, stratified_indices, train_model)


def _ds(n, d=5, seed=0, role="train"):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0.5).astype(int)
    return Dataset(X, y, [f"f{j}" for j in range(d)], role=role)


def test_stratified_split_fractions_and_disjointness():
    y = np.repeat([0, 1, 2], [50, 130, 320])
    tr, va, te = stratified_indices(y, (0.6, 0.2, 0.2), seed=0)
    all_idx = np.concatenate([tr, va, te])
    assert np.array_equal(np.sort(all_idx), np.arange(500))
    for c, n_c in [(0, 50), (1, 130), (2, 320)]:
        got = [(y[part] == c).sum() for part in (tr, va, te)]
        assert sum(got) == n_c
        # largest-remainder quotas: each within 1 of the exact share
        for g, f in zip(got, (0.6, 0.2, 0.2)):
            assert abs(g - f * n_c) <= 1


def test_stratified_split_deterministic_and_seed_sensitive():
    y = np.repeat([0, 1, 2], [30, 40, 50])
    a = stratified_indices(y, (0.6, 0.2, 0.2), seed=1)
    b = stratified_indices(y, (0.6, 0.2, 0.2), seed=1)
    c = stratified_indices(y, (0.6, 0.2, 0.2), seed=2)
    assert all(np.array_equal(x, z) for x, z in zip(a, b))
    assert any(not np.array_equal(x, z) for x, z in zip(a, c))


def test_stratified_split_needs_three_per_class():
    with pytest.raises(DataError):
        stratified_indices(np.array([0, 0, 1, 1, 2, 2]), (0.6, 0.2, 0.2), 0)


def test_split_dataset_assigns_roles():
    D = _ds(120)
    tr, va, te = split_dataset(D, (0.6, 0.2, 0.2), seed=0)
    assert (tr.role, va.role, te.role) == ("train", "validation", "test")
    assert tr.n_rows + va.n_rows + te.n_rows == 120


def test_step_schedule_halves_every_step_size_epochs():
    cfg = TrainConfig(lr=1e-3, schedule="step", step_size=10, gamma=0.5)
    assert schedule_lr(cfg, 9, []) == 1e-3
    assert schedule_lr(cfg, 10, []) == 5e-4
    assert schedule_lr(cfg, 25, []) == 2.5e-4


def test_plateau_schedule_reacts_to_stalls():
    cfg = TrainConfig(lr=1e-2, schedule="plateau", plateau_patience=2,
                      plateau_factor=0.5, plateau_min_delta=1e-4)
    falling = [1.0, 0.9, 0.8, 0.7]
    assert schedule_lr(cfg, 4, falling) == 1e-2
    stalled = [1.0, 1.0, 1.0, 1.0, 1.0]
    assert schedule_lr(cfg, 5, stalled) == 1e-2 * 0.25


def _quadratic_params(seed):
    rng = np.random.default_rng(seed)
    return [ad.parameter(rng.normal(size=(4, 3))),
            ad.parameter(rng.normal(size=(3,)))]


def test_adam_and_adamw_agree_when_decay_is_zero():
    pa = _quadratic_params(0)
    pw = _quadratic_params(0)
    opt_a = AdamOptimizer(pa, weight_decay=0.0, decoupled=False)
    opt_w = AdamOptimizer(pw, weight_decay=0.0, decoupled=True)
    for _ in range(50):
        for params, opt in ((pa, opt_a), (pw, opt_w)):
            opt.zero_grad()
            loss = (params[0] * params[0]).sum() + (params[1] * params[1]).sum()
            loss.backward()
            opt.step(1e-2)
    for a, w in zip(pa, pw):
        assert np.max(np.abs(a.data - w.data)) < 1e-14


def test_decoupled_decay_differs_from_coupled_l2():
    pa = _quadratic_params(1)
    pw = _quadratic_params(1)
    opt_a = AdamOptimizer(pa, weight_decay=0.1, decoupled=False)
    opt_w = AdamOptimizer(pw, weight_decay=0.1, decoupled=True)
    for _ in range(20):
        for params, opt in ((pa, opt_a), (pw, opt_w)):
            opt.zero_grad()
            loss = (params[0].tanh() * params[0]).sum() + params[1].sum()
            loss.backward()
            opt.step(1e-2)
    assert np.max(np.abs(pa[0].data - pw[0].data)) > 1e-6


def test_adam_minimizes_quadratic():
    params = _quadratic_params(2)
    opt = AdamOptimizer(params, weight_decay=0.0, decoupled=False)
    for _ in range(400):
        opt.zero_grad()
        loss = (params[0] * params[0]).sum() + (params[1] * params[1]).sum()
        loss.backward()
        opt.step(5e-2)
    assert all(np.max(np.abs(p.data)) < 1e-3 for p in params)


def test_training_learns_separable_data_and_restores_best():
    train = _ds(300, seed=0)
    val = _ds(100, seed=1, role="validation")
    model = build_model(ModelSpec("mambanet", n_features=5),
                        np.random.default_rng(0))
    cfg = TrainConfig(epochs=12, batch=64, lr=3e-3, schedule="step",
                      step_size=10, early_stop_patience=12, seed=0)
    curves = train_model(model, train, val, None, cfg)
    assert len(curves.epochs) <= 12
    best_pos = curves.epochs.index(curves.best_epoch)
    assert curves.val_loss[best_pos] == min(curves.val_loss)
    acc = (model.predict(val.X) == val.y).mean()
    assert acc > 0.75
    assert curves.lr[0] == 3e-3


def test_training_curves_are_seed_deterministic():
    train = _ds(120, seed=3)
    val = _ds(60, seed=4, role="validation")
    cfg = TrainConfig(epochs=2, batch=32, lr=1e-3, seed=7)
    losses = []
    for _ in range(2):
        model = build_model(ModelSpec("mambanet", n_features=5),
                            np.random.default_rng(5))
        curves = train_model(model, train, val, None, cfg)
        losses.append(curves.train_loss)
    assert losses[0] == losses[1]


def test_class_weights_shift_minority_recall():
    rng = np.random.default_rng(0)
    n0, n1 = 40, 360
    X = np.concatenate([rng.normal(-0.6, 1.0, size=(n0, 3)),
                        rng.normal(0.6, 1.0, size=(n1, 3))])
    y = np.array([0] * n0 + [1] * n1)
    names = ["a", "b", "c"]
    train = Dataset(X, y, names, role="train")
    val = Dataset(X, y, names, role="validation")
    cfg = TrainConfig(epochs=6, batch=64, lr=3e-3, seed=0)

    def minority_recall(weights):
        model = build_model(ModelSpec("mambanet", n_features=3),
                            np.random.default_rng(1))
        train_model(model, train, val, weights, cfg)
        pred = model.predict(X)
        return (pred[y == 0] == 0).mean()

    plain = minority_recall(None)
    weighted = minority_recall(np.array([400 / 120, 400 / 1080, 1.0]))
    assert weighted >= plain


def test_train_refuses_heldout_training_data():
    bad = _ds(60, seed=5, role="test")
    val = _ds(30, seed=6, role="validation")
    model = build_model(ModelSpec("mambanet", n_features=5),
                        np.random.default_rng(0))
    with pytest.raises(LineageError):
        train_model(model, bad, val, None, TrainConfig(epochs=1))
