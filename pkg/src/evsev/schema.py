"""Crash-record data model: column specs, CSV parsing, severity mapping.

A CrashTable is an ordered collection of named columns, each categorical
(string tokens) or numeric (finite reals), with a per-cell missing flag.
Missing is represented as an empty CSV field; unparseable numeric cells
are flagged missing rather than rejected. Raw KABCO severity codes
collapse to the three-class target: K,A -> KA; B,C -> BC; O -> O.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import CLASS_NAMES
from .errors import (
    ArtifactIOError,
    DataError,
    DuplicateColumnError,
    InvalidSeverityError,
    SchemaMismatchError,
)

KINDS = ("categorical", "numeric")
ROLES = ("feature", "target", "filter")

KABCO_TO_SEVERITY = {"K": "KA", "A": "KA", "B": "BC", "C": "BC", "O": "O"}

SCHEMA_VERSION = 1

# Truthy tokens for filter-role columns (case-insensitive).
_TRUE_TOKENS = frozenset({"true", "t", "1", "y", "yes"})


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    role: str = "feature"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatchError(f"unknown column kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaMismatchError(f"unknown column role {self.role!r}")


@dataclass
class Column:
    name: str
    kind: str
    values: list
    missing: np.ndarray

    def __post_init__(self):
        self.missing = np.asarray(self.missing, dtype=bool)
        if len(self.values) != self.missing.size:
            raise DataError(f"column {self.name!r}: values/missing length mismatch")
        for i, v in enumerate(self.values):
            if self.missing[i]:
                continue
            if self.kind == "categorical":
                if not isinstance(v, str) or v == "":
                    raise DataError(
                        f"column {self.name!r} row {i}: categorical cell must be a nonempty token"
                    )
            else:
                if not isinstance(v, float) or not math.isfinite(v):
                    raise DataError(
                        f"column {self.name!r} row {i}: numeric cell must be a finite real"
                    )

    @property
    def n_rows(self) -> int:
        return len(self.values)


@dataclass
class CrashTable:
    columns: list = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise DuplicateColumnError(f"duplicate column names: {sorted(dup)}")
        lengths = {c.n_rows for c in self.columns}
        if len(lengths) > 1:
            raise DataError(f"columns differ in length: {sorted(lengths)}")
        self._index = {c.name: c for c in self.columns}

    @property
    def n_rows(self) -> int:
        return self.columns[0].n_rows if self.columns else 0

    @property
    def names(self):
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        if name not in self._index:
            raise SchemaMismatchError(f"no column named {name!r}")
        return self._index[name]

    def subset_rows(self, keep) -> "CrashTable":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        cols = [
            Column(
                c.name,
                c.kind,
                [c.values[i] for i in keep],
                c.missing[keep],
            )
            for c in self.columns
        ]
        return CrashTable(cols)

    def equals(self, other: "CrashTable") -> bool:
        if self.names != other.names or self.n_rows != other.n_rows:
            return False
        for a, b in zip(self.columns, other.columns):
            if a.kind != b.kind or not np.array_equal(a.missing, b.missing):
                return False
            for i in range(a.n_rows):
                if a.missing[i]:
                    continue
                if a.values[i] != b.values[i]:
                    return False
        return True


def map_kabco(code: str) -> str:
    """K,A -> KA; B,C -> BC; O -> O. Anything else is invalid."""
    if code not in KABCO_TO_SEVERITY:
        raise InvalidSeverityError(f"unknown KABCO code {code!r}")
    return KABCO_TO_SEVERITY[code]


def severity_labels(table: CrashTable, schema) -> np.ndarray:
    """Integer labels (0=KA, 1=BC, 2=O) from the schema's target column."""
    target = [s for s in schema if s.role == "target"]
    if len(target) != 1:
        raise SchemaMismatchError("schema must name exactly one target column")
    col = table.column(target[0].name)
    labels = np.empty(col.n_rows, dtype=np.int64)
    for i, v in enumerate(col.values):
        if col.missing[i]:
            raise InvalidSeverityError(f"missing severity code at row {i}")
        labels[i] = CLASS_NAMES.index(map_kabco(v))
    return labels


def default_schema():
    """Reference 20-column schema for EV crash records."""
    c, n = "categorical", "numeric"
    return [
        ColumnSpec("Prsn_Age", n),
        ColumnSpec("Prsn_Gndr_ID", c),
        ColumnSpec("Prsn_Rest_ID", c),
        ColumnSpec("Veh_Make_ID", c),
        ColumnSpec("Veh_Body_Styl_ID", c),
        ColumnSpec("Veh_Mod_Year", n),
        ColumnSpec("Wthr_Cond_ID", c),
        ColumnSpec("Light_Cond_ID", c),
        ColumnSpec("Surf_Cond_ID", c),
        ColumnSpec("Road_Algn_ID", c),
        ColumnSpec("Intrsct_Relat_ID", c),
        ColumnSpec("FHE_Collsn_ID", c),
        ColumnSpec("Harm_Evnt_ID", c),
        ColumnSpec("Day_of_Week", c),
        ColumnSpec("Crash_Speed_Limit", n),
        ColumnSpec("Crash_Year", n),
        ColumnSpec("HasAutomaticBrakingSystem", c),
        ColumnSpec("HasAutomaticEmergencyBrakingSystem", c),
        ColumnSpec("IsElectric", c, role="filter"),
        ColumnSpec("Prsn_Injry_Sev_ID", c, role="target"),
    ]


def save_schema(path, schema):
    lines = [f"schema_version {SCHEMA_VERSION}"]
    lines += [f"{s.name} {s.kind} {s.role}" for s in schema]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write schema file {path}: {exc}") from exc


def load_schema(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise ArtifactIOError(f"schema file not found: {path}") from exc
    lines = [ln.strip() for ln in raw.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("schema_version"):
        raise SchemaMismatchError(f"{path}: first line must declare schema_version")
    version = lines[0].split()[1:]
    if version != [str(SCHEMA_VERSION)]:
        raise SchemaMismatchError(f"{path}: unsupported schema_version {version}")
    specs = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise SchemaMismatchError(f"{path}: expected 'name kind role', got {ln!r}")
        specs.append(ColumnSpec(*parts))
    if sum(1 for s in specs if s.role == "target") != 1:
        raise SchemaMismatchError(f"{path}: schema must name exactly one target column")
    return specs


def parse_crash_csv(path, schema) -> CrashTable:
    """Parse a UTF-8 comma-delimited CSV against the declared schema.

    The header must contain every schema column (extras are ignored);
    rows must be rectangular. Empty cells are missing; numeric cells
    that fail to parse to a finite real are missing, not errors.
    """
    if sum(1 for s in schema if s.role == "target") != 1:
        raise SchemaMismatchError("schema must name exactly one target column")
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except FileNotFoundError as exc:
        raise ArtifactIOError(f"input CSV not found: {path}") from exc
    if not rows:
        raise DataError(f"{path}: empty file, header row required")
    header = rows[0]
    dup = {h for h in header if header.count(h) > 1}
    if dup:
        raise DuplicateColumnError(f"{path}: duplicated header columns {sorted(dup)}")
    positions = {}
    absent = []
    for s in schema:
        if s.name in header:
            positions[s.name] = header.index(s.name)
        else:
            absent.append(s.name)
    if absent:
        raise SchemaMismatchError(f"{path}: header lacks schema columns {absent}")
    n = len(rows) - 1
    data = {s.name: ([None] * n, np.zeros(n, dtype=bool)) for s in schema}
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {r + 1} has {len(row)} cells, expected {len(header)}"
            )
        for s in schema:
            cell = row[positions[s.name]]
            values, missing = data[s.name]
            if s.kind == "numeric":
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if math.isfinite(v):
                    values[r] = v
                else:
                    values[r], missing[r] = math.nan, True
            else:
                if cell == "":
                    values[r], missing[r] = "", True
                else:
                    values[r] = cell
    cols = [Column(s.name, s.kind, *data[s.name]) for s in schema]
    return CrashTable(cols)


def serialize_crash_csv(table: CrashTable, path):
    """Write the table back to CSV; missing cells become empty fields."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(table.names)
            for r in range(table.n_rows):
                row = []
                for c in table.columns:
                    if c.missing[r]:
                        row.append("")
                    elif c.kind == "numeric":
                        row.append(repr(c.values[r]))
                    else:
                        row.append(c.values[r])
                writer.writerow(row)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write CSV {path}: {exc}") from exc


def apply_filters(table: CrashTable, schema) -> CrashTable:
    """Keep rows where every filter-role column holds a truthy token."""
    keep = np.ones(table.n_rows, dtype=bool)
    for s in schema:
        if s.role != "filter":
            continue
        col = table.column(s.name)
        truthy = np.array(
            [
                (not col.missing[i]) and col.values[i].lower() in _TRUE_TOKENS
                for i in range(col.n_rows)
            ]
        )
        keep &= truthy
    return table.subset_rows(keep)
