import numpy as np
import pytest

from evsev.errors import DataError, UnfittedStateError
from evsev.preprocess import (PreprocessState, apply_preprocess, bin_features,
                              fit_preprocess, impute, load_state,
                              one_hot_encode, save_state, state_hash,
                              state_text)
from evsev.schema import Column, ColumnSpec, CrashTable


def _cat(name, tokens, missing=None):
    vals = np.array(tokens, dtype=object)
    miss = np.zeros(len(tokens), bool) if missing is None else np.array(missing)
    vals = np.where(miss, "", vals).astype(object)
    return Column(name, "categorical", vals, miss)


def _num(name, values, missing=None):
    vals = np.array(values, dtype=float)
    miss = np.zeros(len(values), bool) if missing is None else np.array(missing)
    vals = np.where(miss, np.nan, vals)
    return Column(name, "numeric", vals, miss)


def _schema(*specs):
    return list(specs)


def test_impute_mode_and_median():
    table = CrashTable([
        _cat("c", ["a", "b", "b", "x"], [False, False, False, True]),
        _num("n", [1.0, 5.0, 2.0, 0.0], [False, False, False, True]),
    ])
    filled, state = impute(table)
    assert list(filled.column("c").values) == ["a", "b", "b", "b"]
    assert filled.column("n").values[3] == 2.0  # median of 1, 5, 2
    assert state.impute_values["c"] == "b"


def test_impute_mode_tie_breaks_to_smallest_token():
    table = CrashTable([_cat("c", ["b", "a", "a", "b", ""],
                             [False, False, False, False, True])])
    filled, _ = impute(table)
    assert filled.column("c").values[4] == "a"


def test_impute_apply_uses_fitted_values_only():
    fit_table = CrashTable([_cat("c", ["a", "a", "b"])])
    _, state = impute(fit_table)
    apply_table = CrashTable([_cat("c", ["b", "b", ""], [False, False, True])])
    filled, _ = impute(apply_table, state)
    assert filled.column("c").values[2] == "a"  # train mode, not apply mode


def test_age_and_speed_bins_right_closed_edges():
    table = CrashTable([
        _num("Prsn_Age", [16.0, 30.0, 31.0, 60.0, 61.0]),
        _num("Crash_Speed_Limit", [30.0, 35.0, 50.0, 55.0, 70.0]),
    ])
    binned = bin_features(table)
    assert list(binned.column("Prsn_Age").values) == \
        ["<=30", "<=30", "31-60", "31-60", ">60"]
    assert list(binned.column("Crash_Speed_Limit").values) == \
        ["<=30", "35-50", "35-50", "55-65", ">=70"]


def test_weather_prefix_consolidation():
    table = CrashTable([_cat("Wthr_Cond_ID",
                             ["CLEAR", "Cloudy", "RAINING", "SLEET/HAIL",
                              "SNOW", "FOGGY"])])
    binned = bin_features(table)
    assert list(binned.column("Wthr_Cond_ID").values) == \
        ["clear", "cloudy", "rain", "other", "snow", "fog"]


def test_one_hot_unseen_token_encodes_to_zeros():
    fit_table = CrashTable([_cat("c", ["a", "b", "a"])])
    state = PreprocessState()
    from evsev.preprocess import fit_encoding
    fit_encoding(fit_table, state, ["c"])
    block, names = one_hot_encode(CrashTable([_cat("c", ["b", "zzz"])]),
                                  state, "c")
    assert names == ["c=a", "c=b"]
    assert block.tolist() == [[0.0, 1.0], [0.0, 0.0]]


def test_bin_columns_use_canonical_vocab_order():
    from evsev.preprocess import fit_encoding
    table = CrashTable([_cat("Prsn_Age", ["31-60", "<=30", ">60"])])
    state = PreprocessState()
    fit_encoding(table, state, ["Prsn_Age"])
    assert state.vocab["Prsn_Age"] == ["<=30", "31-60", ">60"]


def test_standardize_population_std_and_zero_variance():
    from evsev.preprocess import fit_encoding, standardize
    table = CrashTable([_num("n", [1.0, 2.0, 3.0]), _num("z", [4.0, 4.0, 4.0])])
    state = PreprocessState()
    fit_encoding(table, state, ["n", "z"])
    zs, _ = standardize(table, state, "n")
    assert np.allclose(zs, (np.array([1, 2, 3]) - 2.0) / np.std([1, 2, 3]))
    zz, _ = standardize(table, state, "z")
    assert state.zero_variance["z"] and np.all(zz == 0)


def _full_schema_table():
    schema = _schema(
        ColumnSpec("sev", "categorical", "target"),
        ColumnSpec("Prsn_Age", "numeric"),
        ColumnSpec("c", "categorical"),
        ColumnSpec("Veh_Mod_Year", "numeric"),
    )
    table = CrashTable([
        _cat("sev", ["K", "B", "O", "O"]),
        _num("Prsn_Age", [20.0, 40.0, 70.0, 35.0]),
        _cat("c", ["a", "b", "a", "b"]),
        _num("Veh_Mod_Year", [2018.0, 2020.0, 2019.0, 2021.0]),
    ])
    return schema, table


def test_fit_apply_widths_and_order_match():
    schema, table = _full_schema_table()
    X, names, state = fit_preprocess(table, schema)
    X2, names2 = apply_preprocess(table, schema, state)
    assert names == names2
    assert np.allclose(X, X2)
    # age is binned then one-hot: 3 bins seen -> 3 columns; c -> 2; year -> 1
    assert X.shape == (4, 6)
    assert names[:3] == ["Prsn_Age=<=30", "Prsn_Age=31-60", "Prsn_Age=>60"]


def test_apply_requires_fitted_state():
    schema, table = _full_schema_table()
    with pytest.raises(UnfittedStateError):
        apply_preprocess(table, schema, PreprocessState())


def test_state_round_trip_and_hash_stability(tmp_path):
    schema, table = _full_schema_table()
    _, _, state = fit_preprocess(table, schema)
    path = str(tmp_path / "state.txt")
    save_state(state, path)
    loaded = load_state(path)
    assert state_text(loaded) == state_text(state)
    assert state_hash(loaded) == state_hash(state)
    X1, _ = apply_preprocess(table, schema, state)
    X2, _ = apply_preprocess(table, schema, loaded)
    assert np.array_equal(X1, X2)


def test_state_text_escapes_control_characters():
    state = PreprocessState()
    state.impute_values["c"] = "a\tb%c\nd"
    text = state_text(state)
    assert "\t".join(text.splitlines()[1].split("\t")).count("%09") == 1
    loaded_line = text.splitlines()[1]
    assert "%0A" in loaded_line and "%25" in loaded_line


def test_unseen_rows_do_not_change_fitted_state():
    schema, table = _full_schema_table()
    _, _, state = fit_preprocess(table, schema)
    before = state_hash(state)
    other = CrashTable([
        _cat("sev", ["K"]), _num("Prsn_Age", [99.0]),
        _cat("c", ["qqq"]), _num("Veh_Mod_Year", [1990.0]),
    ])
    apply_preprocess(other, schema, state)
    assert state_hash(state) == before
