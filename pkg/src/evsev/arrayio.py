"""Deterministic binary container for named arrays plus JSON metadata.

Layout (all integers little-endian): magic "EVSA", format version u32,
metadata as u32 length + UTF-8 JSON (keys sorted), entry count u32,
then per entry: u16 name length + name, u8 dtype code, u8 ndim, u32
dims, raw C-order bytes. Identical inputs produce identical bytes, so
the files hash stably into artifact manifests.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ArtifactIOError

_MAGIC = b"EVSA"
_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {v: k for k, v in _DTYPES.items()}


def save_arrays(path, arrays: dict, metadata: dict | None = None):
    chunks = [_MAGIC, struct.pack("<I", _VERSION)]
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":"))
    raw_meta = meta.encode("utf-8")
    chunks.append(struct.pack("<I", len(raw_meta)))
    chunks.append(raw_meta)
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _CODES:
            raise ArtifactIOError(f"unsupported dtype {arr.dtype} for array {name!r}")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<BB", _CODES[dt], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(dt, copy=False).tobytes(order="C"))
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write array file {path}: {exc}") from exc


def load_arrays(path):
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except FileNotFoundError as exc:
        raise ArtifactIOError(f"array file not found: {path}") from exc
    try:
        if buf[:4] != _MAGIC:
            raise ArtifactIOError(f"{path}: not an array container")
        (version,) = struct.unpack_from("<I", buf, 4)
        if version != _VERSION:
            raise ArtifactIOError(f"{path}: unsupported container version {version}")
        off = 8
        (meta_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        metadata = json.loads(buf[off : off + meta_len].decode("utf-8"))
        off += meta_len
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", buf, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            dt = _DTYPES[code]
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            arr = np.frombuffer(buf[off : off + n_bytes], dtype=dt).reshape(shape)
            off += n_bytes
            arrays[name] = arr.copy()
        if off != len(buf):
            raise ArtifactIOError(f"{path}: trailing bytes after last array")
    except (struct.error, IndexError, ValueError, KeyError) as exc:
        raise ArtifactIOError(f"{path}: corrupt array container: {exc}") from exc
    return arrays, metadata
