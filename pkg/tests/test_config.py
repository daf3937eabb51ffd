import pytest

from evsev.config import load_config, parse_config
from evsev.errors import ConfigError

BASE = """\
config_version = 1
seed = 7
out_dir = /tmp/run
synth_rows = 500
"""


def test_minimal_config_parses_with_defaults():
    cfg = parse_config(BASE, "mem")
    assert cfg.seed == 7
    assert cfg.out_dir == "/tmp/run"
    assert cfg.synth_rows == 500
    assert cfg.source == "synth"
    assert cfg.select_k == 12
    assert cfg.epochs == 50
    assert cfg.lr == pytest.approx(1e-3)
    assert cfg.lr_step == 10 and cfg.lr_gamma == pytest.approx(0.5)
    assert cfg.resample is True and cfg.class_weights is True
    assert cfg.models == ("mambanet", "mamba_attention", "pfn")
    assert cfg.synth_priors == (0.05, 0.25, 0.70)


@pytest.mark.parametrize("missing", ["config_version", "seed", "out_dir"])
def test_required_keys_enforced(missing):
    text = "\n".join(l for l in BASE.splitlines()
                     if not l.startswith(missing))
    with pytest.raises(ConfigError):
        parse_config(text, "mem")


def test_input_and_synth_are_mutually_exclusive():
    with pytest.raises(ConfigError):
        parse_config(BASE + "input_csv = crash.csv\n", "mem")
    # neither given is also an error
    text = "\n".join(l for l in BASE.splitlines()
                     if not l.startswith("synth_rows"))
    with pytest.raises(ConfigError):
        parse_config(text, "mem")


def test_file_source_selected_by_input_csv():
    text = BASE.replace("synth_rows = 500", "input_csv = crash.csv")
    cfg = parse_config(text, "mem")
    assert cfg.source == "file" and cfg.input_csv == "crash.csv"


def test_unknown_key_rejected_with_name():
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_config(BASE + "learning_rate = 0.1\n", "mem")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="seed"):
        parse_config(BASE + "seed = 9\n", "mem")


def test_comments_and_blank_lines_ignored():
    text = "# run settings\n\n" + BASE + "# trailing\n"
    assert parse_config(text, "mem").seed == 7


def test_env_overrides_limited_to_out_dir_and_seed():
    env = {"EVSEV_OUT_DIR": "/tmp/env", "EVSEV_SEED": "99",
           "EVSEV_EPOCHS": "1"}
    cfg = parse_config(BASE, "mem", env=env)
    assert cfg.out_dir == "/tmp/env" and cfg.seed == 99
    assert cfg.epochs == 50  # unrelated env vars never apply


def test_cli_overrides_beat_env_and_file():
    env = {"EVSEV_SEED": "99"}
    cfg = parse_config(BASE, "mem", env=env,
                       overrides={"seed": "123", "epochs": "3"})
    assert cfg.seed == 123 and cfg.epochs == 3


def test_override_with_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config(BASE, "mem", overrides={"nope": "1"})


@pytest.mark.parametrize("line", [
    "seed = abc",
    "split_fractions = 0.5,0.5",        # must sum to 1 with 3 parts
    "synth_priors = 0.2,0.2",           # three classes required
    "models = mambanet,unknown_model",
    "epochs = 0",
    "lr = -1",
])
def test_invalid_values_rejected(line):
    key = line.split(" = ")[0]
    text = "\n".join(l for l in BASE.splitlines()
                     if not l.startswith(key)) + "\n" + line + "\n"
    with pytest.raises(ConfigError):
        parse_config(text, "mem")


def test_load_config_reads_file_and_reports_path(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(BASE)
    assert load_config(str(p)).seed == 7
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(str(tmp_path / "missing.cfg"))


def test_split_fractions_parse():
    text = BASE + "split_fractions = 0.7,0.2,0.1\n"
    assert parse_config(text, "mem").split_fractions == (0.7, 0.2, 0.1)
