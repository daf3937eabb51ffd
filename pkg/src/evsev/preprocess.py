"""Tabular preprocessing: imputation, binning, one-hot, standardization.

All statistics (imputation values, vocabularies, column means and
standard deviations) are fitted on the training partition only and
carried in a PreprocessState that applies unchanged to held-out rows
and serializes to a versioned text file for inference-time reuse.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ArtifactIOError, DataError, UnfittedStateError, UnimputableColumnError
from .schema import Column, CrashTable

STATE_VERSION = 1

# Right-closed numeric bin edges and their labels, last label open-ended.
NUMERIC_BINS = {
    "Prsn_Age": ([30.0, 60.0], ["<=30", "31-60", ">60"]),
    "Crash_Speed_Limit": ([30.0, 50.0, 65.0], ["<=30", "35-50", "55-65", ">=70"]),
}

# Case-insensitive prefix match against listed bins, else the fallback.
PREFIX_BINS = {
    "Wthr_Cond_ID": (["clear", "cloudy", "rain", "snow", "fog"], "other"),
    "Light_Cond_ID": (["daylight", "dark", "dusk"], "other"),
    "Surf_Cond_ID": (["dry", "wet", "gravel", "snow"], "other"),
}


@dataclass
class PreprocessState:
    """Train-fitted transform parameters; apply is pure given this."""

    impute_values: dict = field(default_factory=dict)
    vocab: dict = field(default_factory=dict)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    zero_variance: dict = field(default_factory=dict)

    @property
    def imputation_fitted(self) -> bool:
        return bool(self.impute_values)

    @property
    def encoding_fitted(self) -> bool:
        return bool(self.vocab) or bool(self.mean)


def _mode(tokens):
    # most frequent token; ties broken by the lexicographically smallest
    counts = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    return min(counts, key=lambda t: (-counts[t], t))


def impute(table: CrashTable, state: PreprocessState | None = None):
    """Fill missing cells: categorical mode, numeric median.

    With no state, fits the fill values on the given rows (the training
    partition); with a fitted state, applies the stored values unchanged.
    """
    fit = state is None or not state.imputation_fitted
    if state is None:
        state = PreprocessState()
    cols = []
    for c in table.columns:
        if fit:
            observed_idx = np.flatnonzero(~c.missing)
            if observed_idx.size == 0:
                raise UnimputableColumnError(f"column {c.name!r} has no observed values")
            observed = [c.values[i] for i in observed_idx]
            if c.kind == "categorical":
                fill = _mode(observed)
            else:
                fill = float(np.median(np.array(observed, dtype=np.float64)))
            state.impute_values[c.name] = fill
        else:
            if c.name not in state.impute_values:
                raise UnfittedStateError(f"no imputation value fitted for {c.name!r}")
            fill = state.impute_values[c.name]
        values = [fill if c.missing[i] else c.values[i] for i in range(c.n_rows)]
        cols.append(Column(c.name, c.kind, values, np.zeros(c.n_rows, dtype=bool)))
    return CrashTable(cols), state


def _bin_numeric(v: float, edges, labels) -> str:
    for e, lab in zip(edges, labels):
        if v <= e:
            return lab
    return labels[-1]


def _bin_prefix(token: str, bins, fallback) -> str:
    low = token.lower()
    for b in bins:
        if low.startswith(b):
            return b
    return fallback


def bin_features(table: CrashTable) -> CrashTable:
    """Consolidate configured columns into coarse categorical bins.

    Total map: every raw value lands in exactly one bin; raw tokens
    outside a column's bin list map to its fallback bin. Unconfigured
    columns pass through unchanged.
    """
    cols = []
    for c in table.columns:
        if c.name in NUMERIC_BINS and c.kind == "numeric":
            edges, labels = NUMERIC_BINS[c.name]
            values = [
                "" if c.missing[i] else _bin_numeric(c.values[i], edges, labels)
                for i in range(c.n_rows)
            ]
            cols.append(Column(c.name, "categorical", values, c.missing.copy()))
        elif c.name in PREFIX_BINS and c.kind == "categorical":
            bins, fallback = PREFIX_BINS[c.name]
            values = [
                "" if c.missing[i] else _bin_prefix(c.values[i], bins, fallback)
                for i in range(c.n_rows)
            ]
            cols.append(Column(c.name, "categorical", values, c.missing.copy()))
        else:
            cols.append(c)
    return CrashTable(cols)


def _vocab_order(name: str, observed: set):
    # configured bin columns keep bin order; everything else sorts tokens
    if name in NUMERIC_BINS:
        canon = NUMERIC_BINS[name][1]
    elif name in PREFIX_BINS:
        canon = PREFIX_BINS[name][0] + [PREFIX_BINS[name][1]]
    else:
        return sorted(observed)
    extra = sorted(observed - set(canon))
    return [t for t in canon if t in observed] + extra


def fit_encoding(table: CrashTable, state: PreprocessState, feature_names):
    """Fit one-hot vocabularies and z-score statistics on training rows."""
    for name in feature_names:
        c = table.column(name)
        if c.missing.any():
            raise DataError(f"column {name!r} still has missing cells; impute first")
        if c.kind == "categorical":
            state.vocab[name] = _vocab_order(name, set(c.values))
        else:
            x = np.array(c.values, dtype=np.float64)
            mu = float(x.mean())
            sigma = float(x.std())  # population std: deterministic at n=1
            state.mean[name] = mu
            state.std[name] = sigma
            state.zero_variance[name] = sigma == 0.0
    return state


def one_hot_encode(table: CrashTable, state: PreprocessState, name: str):
    """Indicator block for one categorical column; unseen tokens -> all zeros."""
    if name not in state.vocab:
        raise UnfittedStateError(f"no vocabulary fitted for {name!r}")
    vocab = state.vocab[name]
    lookup = {t: j for j, t in enumerate(vocab)}
    c = table.column(name)
    block = np.zeros((c.n_rows, len(vocab)), dtype=np.float64)
    for i, v in enumerate(c.values):
        j = lookup.get(v)
        if j is not None:
            block[i, j] = 1.0
    return block, [f"{name}={t}" for t in vocab]


def standardize(table: CrashTable, state: PreprocessState, name: str):
    """z = (x - mean) / std for one numeric column; zero-variance -> 0."""
    if name not in state.mean:
        raise UnfittedStateError(f"no scale statistics fitted for {name!r}")
    c = table.column(name)
    x = np.array(c.values, dtype=np.float64)
    if state.zero_variance[name]:
        return np.zeros_like(x), [name]
    return (x - state.mean[name]) / state.std[name], [name]


def _assemble(table: CrashTable, state: PreprocessState, feature_names):
    blocks = []
    names = []
    for name in feature_names:
        c = table.column(name)
        if c.kind == "categorical":
            block, cols = one_hot_encode(table, state, name)
        else:
            block, cols = standardize(table, state, name)
            block = block[:, None]
        blocks.append(block)
        names.extend(cols)
    X = np.hstack(blocks) if blocks else np.zeros((table.n_rows, 0))
    return X, names


def fit_preprocess(train_table: CrashTable, schema):
    """Impute, bin, and encode the training partition; returns (X, names, state)."""
    feature_names = [s.name for s in schema if s.role == "feature"]
    filled, state = impute(train_table, None)
    binned = bin_features(filled)
    fit_encoding(binned, state, feature_names)
    X, names = _assemble(binned, state, feature_names)
    return X, names, state


def apply_preprocess(table: CrashTable, schema, state: PreprocessState):
    """Transform held-out rows with train-fitted state only."""
    if not (state.imputation_fitted and state.encoding_fitted):
        raise UnfittedStateError("preprocess state not fitted")
    feature_names = [s.name for s in schema if s.role == "feature"]
    filled, _ = impute(table, state)
    binned = bin_features(filled)
    return _assemble(binned, state, feature_names)


def _esc(token: str) -> str:
    return token.replace("%", "%25").replace("\t", "%09").replace("\n", "%0A")


def _unesc(token: str) -> str:
    return token.replace("%0A", "\n").replace("%09", "\t").replace("%25", "%")


def state_text(state: PreprocessState) -> str:
    """Canonical serialized form (tab-separated, sorted by column name)."""
    lines = [f"preprocess_version\t{STATE_VERSION}"]
    for name in sorted(state.impute_values):
        v = state.impute_values[name]
        if isinstance(v, str):
            lines.append(f"impute\t{_esc(name)}\tmode\t{_esc(v)}")
        else:
            lines.append(f"impute\t{_esc(name)}\tmedian\t{v!r}")
    for name in sorted(state.vocab):
        toks = "\t".join(_esc(t) for t in state.vocab[name])
        lines.append(f"vocab\t{_esc(name)}\t{toks}")
    for name in sorted(state.mean):
        flag = "1" if state.zero_variance[name] else "0"
        lines.append(
            f"scale\t{_esc(name)}\t{state.mean[name]!r}\t{state.std[name]!r}\t{flag}"
        )
    return "\n".join(lines) + "\n"


def state_hash(state: PreprocessState) -> str:
    return hashlib.sha256(state_text(state).encode("utf-8")).hexdigest()


def save_state(state: PreprocessState, path):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(state_text(state))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write preprocess state {path}: {exc}") from exc


def load_state(path) -> PreprocessState:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise ArtifactIOError(f"preprocess state not found: {path}") from exc
    lines = [ln for ln in raw.splitlines() if ln]
    if not lines or not lines[0].startswith("preprocess_version\t"):
        raise DataError(f"{path}: missing preprocess_version header")
    if lines[0].split("\t")[1] != str(STATE_VERSION):
        raise DataError(f"{path}: unsupported preprocess state version")
    state = PreprocessState()
    for ln in lines[1:]:
        parts = ln.split("\t")
        tag = parts[0]
        if tag == "impute" and len(parts) == 4:
            name = _unesc(parts[1])
            state.impute_values[name] = (
                _unesc(parts[3]) if parts[2] == "mode" else float(parts[3])
            )
        elif tag == "vocab" and len(parts) >= 2:
            state.vocab[_unesc(parts[1])] = [_unesc(t) for t in parts[2:]]
        elif tag == "scale" and len(parts) == 5:
            name = _unesc(parts[1])
            state.mean[name] = float(parts[2])
            state.std[name] = float(parts[3])
            state.zero_variance[name] = parts[4] == "1"
        else:
            raise DataError(f"{path}: malformed state line {ln!r}")
    return state
