"""Flat key/value pipeline configuration.

Config files are line-oriented `key = value` text with `#` comments.
`config_version`, `seed`, and `out_dir` are required; exactly one data
source must be given (`input_csv` xor `synth_rows`). The only
environment overrides honored are EVSEV_OUT_DIR and EVSEV_SEED.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import ConfigError

CONFIG_VERSION = 1

_DEFAULTS = {
    "schema_file": "",
    "synth_priors": "0.05,0.25,0.70",
    "synth_signal_strength": "",
    "synth_bayes_target": "0.90",
    "split_fractions": "0.6,0.2,0.2",
    "select_k": "12",
    "rf_trees": "100",
    "rf_max_depth": "12",
    "gbt_rounds": "60",
    "gbt_max_depth": "3",
    "smote_k": "5",
    "enn_k": "3",
    "resample": "true",
    "class_weights": "true",
    "models": "mambanet,mamba_attention,pfn",
    "epochs": "50",
    "batch_size": "128",
    "lr": "0.001",
    "lr_step": "10",
    "lr_gamma": "0.5",
    "patience": "10",
    "pfn_tasks": "200000",
    "pfn_batch": "32",
    "pfn_checkpoint": "",
}

_KNOWN = frozenset(_DEFAULTS) | {
    "config_version", "seed", "out_dir", "input_csv", "synth_rows",
}

_TRUE = {"true", "1", "yes"}
_FALSE = {"false", "0", "no"}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    out_dir: str
    input_csv: str = ""
    synth_rows: int = 0
    schema_file: str = ""
    synth_priors: tuple = (0.05, 0.25, 0.70)
    synth_signal_strength: float | None = None
    synth_bayes_target: float = 0.90
    split_fractions: tuple = (0.6, 0.2, 0.2)
    select_k: int = 12
    rf_trees: int = 100
    rf_max_depth: int = 12
    gbt_rounds: int = 60
    gbt_max_depth: int = 3
    smote_k: int = 5
    enn_k: int = 3
    resample: bool = True
    class_weights: bool = True
    models: tuple = ("mambanet", "mamba_attention", "pfn")
    epochs: int = 50
    batch_size: int = 128
    lr: float = 1e-3
    lr_step: int = 10
    lr_gamma: float = 0.5
    patience: int = 10
    pfn_tasks: int = 200_000
    pfn_batch: int = 32
    pfn_checkpoint: str = ""

    @property
    def source(self) -> str:
        return "file" if self.input_csv else "synth"


def _parse_lines(text, origin):
    pairs = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{ln}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{origin}:{ln}: empty key")
        if key in pairs:
            raise ConfigError(f"{origin}:{ln}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _to_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"config key {key!r}: {value!r} is not an integer") from None


def _to_float(key, value):
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"config key {key!r}: {value!r} is not a number") from None
    return out


def _to_bool(key, value):
    token = value.lower()
    if token in _TRUE:
        return True
    if token in _FALSE:
        return False
    raise ConfigError(f"config key {key!r}: {value!r} is not true/false")


def _to_floats(key, value, n):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != n:
        raise ConfigError(f"config key {key!r}: expected {n} comma-separated values")
    return tuple(_to_float(key, p) for p in parts)


def parse_config(text, origin="<config>", env=None, overrides=None) -> PipelineConfig:
    env = os.environ if env is None else env
    pairs = _parse_lines(text, origin)
    # precedence: command-line override > environment > file
    if "EVSEV_OUT_DIR" in env:
        pairs["out_dir"] = env["EVSEV_OUT_DIR"]
    if "EVSEV_SEED" in env:
        pairs["seed"] = env["EVSEV_SEED"]
    if overrides:
        for key, value in overrides.items():
            pairs[key.strip()] = str(value).strip()
    unknown = sorted(set(pairs) - _KNOWN)
    if unknown:
        raise ConfigError(f"{origin}: unknown config keys: {', '.join(unknown)}")
    for key in ("config_version", "seed", "out_dir"):
        if key not in pairs:
            raise ConfigError(f"{origin}: missing required key {key!r}")
    if _to_int("config_version", pairs["config_version"]) != CONFIG_VERSION:
        raise ConfigError(
            f"{origin}: unsupported config_version {pairs['config_version']}"
        )

    has_file = bool(pairs.get("input_csv", "").strip())
    has_synth = bool(pairs.get("synth_rows", "").strip())
    if has_file == has_synth:
        raise ConfigError(
            f"{origin}: exactly one data source required (input_csv xor synth_rows)"
        )

    merged = dict(_DEFAULTS)
    merged.update(pairs)

    models = tuple(m.strip() for m in merged["models"].split(",") if m.strip())
    allowed = {"mambanet", "mamba_attention", "pfn"}
    bad = sorted(set(models) - allowed)
    if bad or not models:
        raise ConfigError(f"config key 'models': unknown model(s) {bad}")

    strength = merged["synth_signal_strength"].strip()
    cfg = PipelineConfig(
        seed=_to_int("seed", merged["seed"]),
        out_dir=merged["out_dir"].strip(),
        input_csv=merged.get("input_csv", "").strip(),
        synth_rows=_to_int("synth_rows", merged["synth_rows"]) if has_synth else 0,
        schema_file=merged["schema_file"].strip(),
        synth_priors=_to_floats("synth_priors", merged["synth_priors"], 3),
        synth_signal_strength=_to_float("synth_signal_strength", strength)
        if strength else None,
        synth_bayes_target=_to_float("synth_bayes_target",
                                     merged["synth_bayes_target"]),
        split_fractions=_to_floats("split_fractions", merged["split_fractions"], 3),
        select_k=_to_int("select_k", merged["select_k"]),
        rf_trees=_to_int("rf_trees", merged["rf_trees"]),
        rf_max_depth=_to_int("rf_max_depth", merged["rf_max_depth"]),
        gbt_rounds=_to_int("gbt_rounds", merged["gbt_rounds"]),
        gbt_max_depth=_to_int("gbt_max_depth", merged["gbt_max_depth"]),
        smote_k=_to_int("smote_k", merged["smote_k"]),
        enn_k=_to_int("enn_k", merged["enn_k"]),
        resample=_to_bool("resample", merged["resample"]),
        class_weights=_to_bool("class_weights", merged["class_weights"]),
        models=models,
        epochs=_to_int("epochs", merged["epochs"]),
        batch_size=_to_int("batch_size", merged["batch_size"]),
        lr=_to_float("lr", merged["lr"]),
        lr_step=_to_int("lr_step", merged["lr_step"]),
        lr_gamma=_to_float("lr_gamma", merged["lr_gamma"]),
        patience=_to_int("patience", merged["patience"]),
        pfn_tasks=_to_int("pfn_tasks", merged["pfn_tasks"]),
        pfn_batch=_to_int("pfn_batch", merged["pfn_batch"]),
        pfn_checkpoint=merged["pfn_checkpoint"].strip(),
    )
    _validate(cfg, origin)
    return cfg


def _validate(cfg: PipelineConfig, origin):
    if not cfg.out_dir:
        raise ConfigError(f"{origin}: out_dir must be nonempty")
    if cfg.source == "synth" and cfg.synth_rows <= 0:
        raise ConfigError(f"{origin}: synth_rows must be positive")
    if abs(sum(cfg.synth_priors) - 1.0) > 1e-9 or min(cfg.synth_priors) <= 0:
        raise ConfigError(f"{origin}: synth_priors must be positive and sum to 1")
    if abs(sum(cfg.split_fractions) - 1.0) > 1e-9 or min(cfg.split_fractions) <= 0:
        raise ConfigError(f"{origin}: split_fractions must be positive and sum to 1")
    for key in ("select_k", "rf_trees", "rf_max_depth", "gbt_rounds",
                "gbt_max_depth", "smote_k", "enn_k", "epochs", "batch_size",
                "lr_step", "patience", "pfn_tasks", "pfn_batch"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{origin}: {key} must be positive")
    if cfg.lr <= 0 or cfg.lr_gamma <= 0:
        raise ConfigError(f"{origin}: lr and lr_gamma must be positive")
    if cfg.synth_signal_strength is not None and not (
        0.0 <= cfg.synth_signal_strength < 1.0
    ):
        raise ConfigError(f"{origin}: synth_signal_strength must be in [0, 1)")
    if not (0.0 < cfg.synth_bayes_target < 1.0):
        raise ConfigError(f"{origin}: synth_bayes_target must be in (0, 1)")


def load_config(path, env=None, overrides=None) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, origin=path, env=env, overrides=overrides)
