"""Report bundle emission: CSV tables, SVG plots, hashed manifest.

Every writer is deterministic for identical inputs (fixed column
orders, repr-precision floats, lineterminator "\\n"), so re-running a
pipeline reproduces byte-identical artifacts and manifest hashes.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import plotting
from .dataset import CLASS_NAMES, Dataset
from .errors import ArtifactIOError
from .metrics import ConfusionMatrix, MetricsReport
from .resample import ResampleReport


@dataclass
class ModelResult:
    name: str
    metrics: MetricsReport
    cm: ConfusionMatrix
    curves: object = None  # TrainingCurves, or None for one-shot models


def _open_out(path):
    try:
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write artifact {path}: {exc}") from exc


def _write_rows(path, header, rows):
    with _open_out(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_metrics_csv(path, results):
    rows = []
    for r in results:
        for m in r.metrics.per_class:
            rows.append([r.name, m.name, repr(m.precision), repr(m.recall),
                         repr(m.f1), repr(m.ovr_accuracy), int(m.degenerate)])
        rows.append([r.name, "macro", repr(r.metrics.macro_precision),
                     repr(r.metrics.macro_recall), repr(r.metrics.macro_f1),
                     "", ""])
        rows.append([r.name, "overall", "", "", "",
                     repr(r.metrics.overall_accuracy), ""])
    _write_rows(path, ["model", "class", "precision", "recall", "f1",
                       "accuracy", "degenerate"], rows)


def write_confusion_csv(path, results):
    rows = []
    for r in results:
        for c, name in enumerate(CLASS_NAMES):
            rows.append([r.name, name] + [int(v) for v in r.cm.counts[c]])
    _write_rows(path, ["model", "true_class"] + [f"pred_{n}" for n in CLASS_NAMES],
                rows)


def write_curves_csv(path, results):
    """Writes per-epoch curves; returns False when no model has curves."""
    rows = []
    for r in results:
        if r.curves is None:
            continue
        c = r.curves
        for i, e in enumerate(c.epochs):
            rows.append([r.name, e, repr(c.train_loss[i]), repr(c.val_loss[i]),
                         repr(c.train_acc[i]), repr(c.val_acc[i]), repr(c.lr[i])])
    if not rows:
        return False
    _write_rows(path, ["model", "epoch", "train_loss", "val_loss",
                       "train_acc", "val_acc", "lr"], rows)
    return True


def write_resample_csv(path, report: ResampleReport):
    rows = [[r["class"], r["original"], r["synthesized"], r["post_smote"],
             r["removed"], r["post_enn"]] for r in report.rows()]
    _write_rows(path, ["class", "original", "synthesized", "post_smote",
                       "removed", "post_enn"], rows)


def write_human_report(path, results):
    """Integer-percentage summary tables, one block per model."""
    lines = ["Severity classification results", "=" * 34, ""]
    for r in results:
        lines.append(f"Model: {r.name}")
        lines.append(f"  overall accuracy: {round(100 * r.metrics.overall_accuracy)}%")
        lines.append("  class  precision  recall  f1  accuracy")
        for m in r.metrics.per_class:
            flag = " (degenerate)" if m.degenerate else ""
            lines.append(
                f"  {m.name:<5}  {round(100 * m.precision):>9}  "
                f"{round(100 * m.recall):>6}  {round(100 * m.f1):>2}  "
                f"{round(100 * m.ovr_accuracy):>8}{flag}"
            )
        lines.append("")
    with _open_out(path) as fh:
        fh.write("\n".join(lines))


def feature_distributions(before: Dataset, after: Dataset, bins=10):
    """Per-feature histograms (labels, before counts, after counts)."""
    out = []
    for j, name in enumerate(before.feature_names):
        b = before.X[:, j]
        a = after.X[:, j]
        distinct = np.unique(np.concatenate([b, a]))
        if distinct.size <= 12:
            labels = [f"{v:g}" for v in distinct]
            bc = [int((b == v).sum()) for v in distinct]
            ac = [int((a == v).sum()) for v in distinct]
        else:
            lo = min(b.min(), a.min())
            hi = max(b.max(), a.max())
            edges = np.linspace(lo, hi, bins + 1)
            bc = np.histogram(b, bins=edges)[0].tolist()
            ac = np.histogram(a, bins=edges)[0].tolist()
            labels = [f"{edges[i]:.2g}..{edges[i + 1]:.2g}" for i in range(bins)]
        out.append((name, labels, bc, ac))
    return out


def write_plots(plot_dir, results, distributions):
    """Curve, confusion, and distribution SVGs; returns written paths."""
    written = []

    def put(name, svg):
        path = os.path.join(plot_dir, name)
        with _open_out(path) as fh:
            fh.write(svg)
        written.append(path)

    loss_series = []
    acc_series = []
    for r in results:
        if r.curves is None:
            continue
        loss_series.append((f"{r.name} train", r.curves.epochs, r.curves.train_loss))
        loss_series.append((f"{r.name} val", r.curves.epochs, r.curves.val_loss))
        acc_series.append((f"{r.name} train", r.curves.epochs, r.curves.train_acc))
        acc_series.append((f"{r.name} val", r.curves.epochs, r.curves.val_acc))
    if loss_series:
        put("loss_curves.svg",
            plotting.line_chart(loss_series, "Loss by epoch", "epoch", "loss"))
        put("accuracy_curves.svg",
            plotting.line_chart(acc_series, "Accuracy by epoch", "epoch", "accuracy"))
    for r in results:
        series = [
            (f"pred {name}", [int(r.cm.counts[t, p]) for t in range(len(CLASS_NAMES))])
            for p, name in enumerate(CLASS_NAMES)
        ]
        put(f"confusion_{r.name}.svg",
            plotting.grouped_bars([f"true {n}" for n in CLASS_NAMES], series,
                                  f"Confusion counts: {r.name}", "count"))
    for i, (name, labels, bc, ac) in enumerate(distributions):
        put(f"distribution_{i:02d}.svg",
            plotting.grouped_bars(labels, [("before", bc), ("after", ac)],
                                  f"Distribution: {name}", "count"))
    return written


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, paths, notes=()):
    """Hash the named artifacts into manifest.txt (sorted by path)."""
    rel = sorted(os.path.relpath(p, out_dir) for p in paths)
    lines = [f"{_sha256(os.path.join(out_dir, r))}  {r}" for r in rel]
    lines += [f"# note: {n}" for n in notes]
    path = os.path.join(out_dir, "manifest.txt")
    with _open_out(path) as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def mark_failed(out_dir, stage, message):
    """Leave a FAILED marker beside whatever partial artifacts exist."""
    try:
        with _open_out(os.path.join(out_dir, "FAILED")) as fh:
            fh.write(f"stage: {stage}\n{message}\n")
    except ArtifactIOError:
        pass


def emit_reports(out_dir, results, resample_report=None, distributions=(),
                 extra_paths=(), notes=()):
    """Write the full bundle and manifest; returns the manifest path."""
    paths = list(extra_paths)
    notes = list(notes)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), results)
    paths.append(os.path.join(out_dir, "metrics.csv"))
    write_confusion_csv(os.path.join(out_dir, "confusion.csv"), results)
    paths.append(os.path.join(out_dir, "confusion.csv"))
    if write_curves_csv(os.path.join(out_dir, "curves.csv"), results):
        paths.append(os.path.join(out_dir, "curves.csv"))
    else:
        notes.append("curves.csv omitted (one-shot models have no training curves)")
    if resample_report is not None:
        write_resample_csv(os.path.join(out_dir, "resample_report.csv"),
                           resample_report)
        paths.append(os.path.join(out_dir, "resample_report.csv"))
    write_human_report(os.path.join(out_dir, "report.txt"), results)
    paths.append(os.path.join(out_dir, "report.txt"))
    paths.extend(write_plots(os.path.join(out_dir, "plots"), results, distributions))
    return write_manifest(out_dir, paths, notes)
