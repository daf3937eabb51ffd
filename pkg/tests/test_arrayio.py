import numpy as np
import pytest

from evsev.arrayio import load_arrays, save_arrays
from evsev.errors import ArtifactIOError


def test_round_trip_preserves_dtypes_shapes_values(tmp_path):
    path = str(tmp_path / "a.bin")
    arrays = {
        "f4": np.arange(6, dtype=np.float32).reshape(2, 3),
        "f8": np.linspace(0, 1, 5),
        "i8": np.array([[1], [2]], dtype=np.int64),
        "scalar": np.float64(3.5),
        "empty": np.zeros((0, 4)),
    }
    save_arrays(path, arrays, {"note": "x", "n": 3})
    loaded, meta = load_arrays(path)
    assert meta == {"note": "x", "n": 3}
    assert set(loaded) == set(arrays)
    for name, arr in arrays.items():
        got = loaded[name]
        want = np.asarray(arr)
        assert got.dtype == want.dtype
        assert got.shape == want.shape
        assert np.array_equal(got, want)


def test_noncontiguous_input_round_trips(tmp_path):
    path = str(tmp_path / "b.bin")
    base = np.arange(24, dtype=np.float64).reshape(4, 6)
    view = base[:, ::2]
    save_arrays(path, {"v": view})
    loaded, _ = load_arrays(path)
    assert np.array_equal(loaded["v"], view)


def test_bytes_are_deterministic(tmp_path):
    a = str(tmp_path / "c1.bin")
    b = str(tmp_path / "c2.bin")
    arrays = {"x": np.ones((3, 3)), "y": np.arange(4, dtype=np.int64)}
    save_arrays(a, arrays, {"k": 1})
    save_arrays(b, arrays, {"k": 1})
    assert open(a, "rb").read() == open(b, "rb").read()


def test_corruption_and_missing_file_errors(tmp_path):
    path = str(tmp_path / "d.bin")
    save_arrays(path, {"x": np.ones(4)})
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-3])  # truncate
    with pytest.raises(ArtifactIOError):
        load_arrays(path)
    open(path, "wb").write(blob + b"zz")  # trailing junk
    with pytest.raises(ArtifactIOError):
        load_arrays(path)
    open(path, "wb").write(b"NOTMAGIC" + blob)
    with pytest.raises(ArtifactIOError):
        load_arrays(path)
    with pytest.raises(ArtifactIOError):
        load_arrays(str(tmp_path / "absent.bin"))


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(ArtifactIOError):
        save_arrays(str(tmp_path / "e.bin"),
                    {"c": np.ones(2, dtype=np.complex128)})
