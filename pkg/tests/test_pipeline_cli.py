import os

import numpy as np
import pytest

from evsev.arrayio import save_arrays
from evsev.cli import main

CFG = """\
config_version = 1
seed = 11
out_dir = {out}
synth_rows = 600
select_k = 8
rf_trees = 8
rf_max_depth = 6
gbt_rounds = 6
models = mambanet
epochs = 2
batch_size = 64
"""


def _write_cfg(tmp, out, extra=""):
    p = os.path.join(tmp, "run.cfg")
    with open(p, "w") as fh:
        fh.write(CFG.format(out=out) + extra)
    return p


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            full = os.path.join(dirpath, f)
            out[os.path.relpath(full, root)] = open(full, "rb").read()
    return out


@pytest.fixture(scope="module")
def twin_runs(tmp_path_factory):
    tmp = str(tmp_path_factory.mktemp("cli"))
    outs = [os.path.join(tmp, f"out{i}") for i in (1, 2)]
    for out in outs:
        cfg = _write_cfg(tmp, out)
        assert main(["run", "-c", cfg]) == 0
    return outs


def test_run_emits_expected_artifacts(twin_runs):
    files = _tree(twin_runs[0])
    for name in ("schema.txt", "data.csv", "preprocess_state.txt",
                 "features.bin", "feature_ranks.csv", "selected_features.txt",
                 "resample_report.csv", "model_mambanet.bin", "metrics.csv",
                 "confusion.csv", "curves.csv", "report.txt", "manifest.txt"):
        assert name in files, name
    assert "FAILED" not in files


def test_repeat_run_is_byte_identical(twin_runs):
    assert _tree(twin_runs[0]) == _tree(twin_runs[1])


def test_stage_flag_stops_early(tmp_path):
    out = str(tmp_path / "out")
    cfg = _write_cfg(str(tmp_path), out)
    assert main(["run", "-c", cfg, "--stage", "resample"]) == 0
    files = _tree(out)
    assert "resample_report.csv" in files and "manifest.txt" in files
    assert "model_mambanet.bin" not in files and "metrics.csv" not in files


def test_synth_subcommand_writes_data_only(tmp_path):
    out = str(tmp_path / "out")
    cfg = _write_cfg(str(tmp_path), out)
    assert main(["synth", "-c", cfg]) == 0
    files = _tree(out)
    assert "data.csv" in files and "schema.txt" in files
    assert "features.bin" not in files


def test_seed_override_changes_data(tmp_path):
    outs = [str(tmp_path / f"o{i}") for i in (1, 2)]
    cfg1 = _write_cfg(str(tmp_path), outs[0])
    assert main(["synth", "-c", cfg1, "--set", "seed=12"]) == 0
    cfg2 = _write_cfg(str(tmp_path), outs[1])
    assert main(["synth", "-c", cfg2]) == 0
    a = open(os.path.join(outs[0], "data.csv"), "rb").read()
    b = open(os.path.join(outs[1], "data.csv"), "rb").read()
    assert a != b


def test_unknown_config_key_exits_2(tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = _write_cfg(str(tmp_path), out, extra="bogus_key = 1\n")
    assert main(["run", "-c", cfg]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["run", "-c", str(tmp_path / "nope.cfg")]) == 2


def test_malformed_input_csv_exits_3_with_marker(tmp_path, capsys):
    bad = tmp_path / "crash.csv"
    bad.write_text("just,three,cols\n1,2,3\n")
    out = str(tmp_path / "out")
    cfg = os.path.join(str(tmp_path), "run.cfg")
    with open(cfg, "w") as fh:
        fh.write(f"config_version = 1\nseed = 1\nout_dir = {out}\n"
                 f"input_csv = {bad}\n")
    assert main(["run", "-c", cfg]) == 3
    assert "stage data" in capsys.readouterr().err
    marker = open(os.path.join(out, "FAILED")).read()
    assert "stage: data" in marker


def test_pfn_predict_missing_features_exits_5(tmp_path, capsys):
    assert main(["pfn-predict", "--checkpoint", str(tmp_path / "no.bin"),
                 "--features", str(tmp_path / "no.bin"),
                 "--out", str(tmp_path / "p.csv")]) == 5
    assert "error:" in capsys.readouterr().err


def test_pfn_pretrain_then_predict_round_trip(tmp_path, capsys):
    ckpt = str(tmp_path / "pfn.bin")
    assert main(["pfn-pretrain", "--tasks", "300", "--batch", "8",
                 "--seed", "3", "--out", ckpt]) == 0
    rng = np.random.default_rng(0)
    feats = str(tmp_path / "features.bin")
    save_arrays(feats, {
        "X_train": rng.normal(size=(40, 8)),
        "y_train": rng.integers(0, 3, 40),
        "X_test": rng.normal(size=(15, 8)),
    }, {})
    preds = str(tmp_path / "preds.csv")
    assert main(["pfn-predict", "--checkpoint", ckpt, "--features", feats,
                 "--out", preds, "--seed", "3"]) == 0
    lines = open(preds).read().splitlines()
    assert lines[0] == "row,predicted,p_KA,p_BC,p_O"
    assert len(lines) == 16
    for line in lines[1:]:
        parts = line.split(",")
        assert parts[1] in ("KA", "BC", "O")
        assert sum(float(v) for v in parts[2:]) == pytest.approx(1.0)
