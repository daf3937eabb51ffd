"""End-to-end orchestration: data through reports in ordered stages.

Stage order: data -> prep -> select -> resample -> train -> pfn ->
evaluate. A run may stop after any stage; whatever was produced so far
is hashed into the manifest. Any stage failure leaves partial
artifacts plus a FAILED marker naming the stage and cause.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import reports, schema, synthgen, trees
from .arrayio import save_arrays
from .config import PipelineConfig
from .dataset import CLASS_NAMES, Dataset
from .errors import ConfigError, EvsevError
from .metrics import compute_metrics, confusion_matrix
from .models import ModelSpec, build_model, save_model
from .pfn import PretrainConfig, load_pfn, pfn_predict, pretrain_pfn, save_pfn
from .preprocess import apply_preprocess, fit_preprocess, save_state, state_hash
from .resample import class_weights, smoteenn
from .train import TrainConfig, stratified_indices, train_model

STAGES = ("data", "prep", "select", "resample", "train", "pfn", "evaluate")


@dataclass
class PipelineState:
    """Intermediate products and artifact bookkeeping between stages."""

    schema: object = None
    table: object = None
    bayes_accuracy: float | None = None
    splits: dict = field(default_factory=dict)     # role -> Dataset (full width)
    selected: list = field(default_factory=list)   # fused top-k column names
    train_sel: Dataset = None                      # selected, pre-resample
    fit_train: Dataset = None                      # what models train on
    resample_report: object = None
    weights: object = None
    results: list = field(default_factory=list)    # reports.ModelResult
    artifacts: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _model_rng(cfg, variant):
    tag = sum(ord(c) for c in variant)
    return np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                        spawn_key=(tag,)))


def _stage_data(cfg: PipelineConfig, st: PipelineState):
    st.schema = (schema.load_schema(cfg.schema_file) if cfg.schema_file
                 else schema.default_schema())
    if cfg.source == "synth":
        strength = cfg.synth_signal_strength
        if strength is None:
            strength = synthgen.calibrate_signal_strength(
                cfg.synth_priors, cfg.synth_bayes_target)
        gen = synthgen.generate_ev_crashes(synthgen.GenConfig(
            n_rows=cfg.synth_rows, class_priors=cfg.synth_priors,
            signal_strength=strength, seed=cfg.seed))
        st.table = gen.table
        st.bayes_accuracy = gen.bayes_accuracy
        st.notes.append(f"synthetic source: analytic best accuracy "
                        f"{gen.bayes_accuracy:.4f} at strength {strength:.6f}")
    else:
        st.table = schema.parse_crash_csv(cfg.input_csv, st.schema)
    n_before = st.table.n_rows
    st.table = schema.apply_filters(st.table, st.schema)
    st.notes.append(f"filters kept {st.table.n_rows} of {n_before} rows")

    schema_path = os.path.join(cfg.out_dir, "schema.txt")
    schema.save_schema(schema_path, st.schema)
    st.artifacts.append(schema_path)
    data_path = os.path.join(cfg.out_dir, "data.csv")
    schema.serialize_crash_csv(st.table, data_path)
    st.artifacts.append(data_path)


def _stage_prep(cfg: PipelineConfig, st: PipelineState):
    y = schema.severity_labels(st.table, st.schema)
    parts = stratified_indices(y, cfg.split_fractions, cfg.seed)
    roles = ("train", "validation", "test")
    tables = {r: st.table.subset_rows(idx) for r, idx in zip(roles, parts)}
    labels = {r: y[idx] for r, idx in zip(roles, parts)}

    X_train, names, state = fit_preprocess(tables["train"], st.schema)
    st.splits["train"] = Dataset(X_train, labels["train"], names, role="train")
    for role in ("validation", "test"):
        X, _ = apply_preprocess(tables[role], st.schema, state)
        st.splits[role] = Dataset(X, labels[role], names, role=role)

    state_path = os.path.join(cfg.out_dir, "preprocess_state.txt")
    save_state(state, state_path)
    st.artifacts.append(state_path)
    arrays = {}
    for role in roles:
        ds = st.splits[role]
        arrays[f"X_{role}"] = ds.X
        arrays[f"y_{role}"] = ds.y
    feat_path = os.path.join(cfg.out_dir, "features.bin")
    save_arrays(feat_path, arrays, {
        "feature_names": names, "state_hash": state_hash(state),
        "split_fractions": list(cfg.split_fractions), "seed": cfg.seed,
    })
    st.artifacts.append(feat_path)
    st.notes.append("split sizes " + ", ".join(
        f"{r}={st.splits[r].X.shape[0]}" for r in roles))


def _stage_select(cfg: PipelineConfig, st: PipelineState):
    train_ds = st.splits["train"]
    k = min(cfg.select_k, len(train_ds.feature_names))
    forest = trees.fit_random_forest(train_ds, n_trees=cfg.rf_trees,
                                     max_depth=cfg.rf_max_depth, seed=cfg.seed)
    boost = trees.fit_gbt(train_ds, n_rounds=cfg.gbt_rounds,
                          max_depth=cfg.gbt_max_depth)
    mdi = trees.mdi_importance(forest)
    gain = trees.gain_importance(boost)
    st.selected = trees.combined_rank(mdi, gain, k)

    mdi_scores = dict(zip(mdi.feature_names, mdi.scores))
    gain_scores = dict(zip(gain.feature_names, gain.scores))
    rank_path = os.path.join(cfg.out_dir, "feature_ranks.csv")
    rows = [[name, repr(mdi_scores[name]), repr(gain_scores[name]),
             int(name in st.selected)]
            for name in sorted(train_ds.feature_names)]
    reports._write_rows(rank_path, ["feature", "mdi", "gain", "selected"], rows)
    st.artifacts.append(rank_path)
    sel_path = os.path.join(cfg.out_dir, "selected_features.txt")
    with reports._open_out(sel_path) as fh:
        fh.write("\n".join(st.selected) + "\n")
    st.artifacts.append(sel_path)

    for role in ("train", "validation", "test"):
        st.splits[role] = st.splits[role].select_features(st.selected)
    st.train_sel = st.splits["train"]


def _stage_resample(cfg: PipelineConfig, st: PipelineState):
    if cfg.resample:
        st.fit_train, st.resample_report = smoteenn(
            st.train_sel, smote_k=cfg.smote_k, enn_k=cfg.enn_k, seed=cfg.seed)
        rep_path = os.path.join(cfg.out_dir, "resample_report.csv")
        reports.write_resample_csv(rep_path, st.resample_report)
        st.artifacts.append(rep_path)
        before = st.train_sel.class_counts()
        after = st.fit_train.class_counts()
        st.notes.append(f"resample counts {before.tolist()} -> {after.tolist()}")
    else:
        st.fit_train = st.train_sel
        st.notes.append("resampling disabled by config")
    if cfg.class_weights:
        st.weights = class_weights(st.fit_train.y)


def _stage_train(cfg: PipelineConfig, st: PipelineState):
    test_ds = st.splits["test"]
    for variant in cfg.models:
        if variant == "pfn":
            continue
        spec = ModelSpec(variant, n_features=len(st.selected))
        model = build_model(spec, _model_rng(cfg, variant))
        tcfg = TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch=cfg.batch_size,
                           schedule="step", step_size=cfg.lr_step,
                           gamma=cfg.lr_gamma,
                           early_stop_patience=cfg.patience, seed=cfg.seed)
        curves = train_model(model, st.fit_train, st.splits["validation"],
                             st.weights, tcfg)
        pred = model.predict(test_ds.X)
        cm = confusion_matrix(test_ds.y, pred)
        st.results.append(reports.ModelResult(variant, compute_metrics(cm),
                                              cm, curves))
        ckpt = os.path.join(cfg.out_dir, f"model_{variant}.bin")
        save_model(ckpt, model, {
            "features": list(st.selected), "seed": cfg.seed,
            "best_epoch": curves.best_epoch,
        })
        st.artifacts.append(ckpt)


def _stage_pfn(cfg: PipelineConfig, st: PipelineState):
    if "pfn" not in cfg.models:
        return
    if cfg.pfn_checkpoint:
        model = load_pfn(cfg.pfn_checkpoint)
        st.notes.append(f"in-context model loaded from {cfg.pfn_checkpoint}")
    else:
        model, _ = pretrain_pfn(PretrainConfig(
            n_tasks=cfg.pfn_tasks, batch=cfg.pfn_batch, seed=cfg.seed))
    ckpt = os.path.join(cfg.out_dir, "model_pfn.bin")
    save_pfn(ckpt, model, {"seed": cfg.seed})
    st.artifacts.append(ckpt)

    test_ds = st.splits["test"]
    probs = pfn_predict(model, st.fit_train.X, st.fit_train.y, test_ds.X,
                        subsample=True, seed=cfg.seed)
    pred = np.argmax(probs, axis=1)
    cm = confusion_matrix(test_ds.y, pred)
    st.results.append(reports.ModelResult("pfn", compute_metrics(cm), cm, None))


def _stage_evaluate(cfg: PipelineConfig, st: PipelineState):
    dists = []
    if st.resample_report is not None:
        dists = reports.feature_distributions(st.train_sel, st.fit_train)
    if st.bayes_accuracy is not None:
        for r in st.results:
            st.notes.append(
                f"{r.name} test accuracy {r.metrics.overall_accuracy:.4f} "
                f"(analytic best {st.bayes_accuracy:.4f})")
    reports.emit_reports(cfg.out_dir, st.results, st.resample_report, dists,
                         extra_paths=st.artifacts, notes=st.notes)


_STAGE_FNS = {
    "data": _stage_data,
    "prep": _stage_prep,
    "select": _stage_select,
    "resample": _stage_resample,
    "train": _stage_train,
    "pfn": _stage_pfn,
    "evaluate": _stage_evaluate,
}


def run_pipeline(cfg: PipelineConfig, stop_after: str | None = None) -> str:
    """Execute stages in order; returns the manifest path."""
    if stop_after is not None and stop_after not in STAGES:
        raise ConfigError(f"unknown stage {stop_after!r}; one of {STAGES}")
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create out_dir {cfg.out_dir}: {exc}") from exc
    marker = os.path.join(cfg.out_dir, "FAILED")
    if os.path.exists(marker):
        os.remove(marker)

    st = PipelineState()
    for stage in STAGES:
        try:
            _STAGE_FNS[stage](cfg, st)
        except EvsevError as exc:
            reports.mark_failed(cfg.out_dir, stage, str(exc))
            raise type(exc)(f"stage {stage}: {exc}") from exc
        except Exception as exc:
            reports.mark_failed(cfg.out_dir, stage, f"{type(exc).__name__}: {exc}")
            raise
        if stage == stop_after and stage != "evaluate":
            return reports.write_manifest(cfg.out_dir, st.artifacts, st.notes)
    return os.path.join(cfg.out_dir, "manifest.txt")
