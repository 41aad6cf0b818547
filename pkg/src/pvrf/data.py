"""Right-censored survival data with typed covariate columns.

Covariates are kept as a float matrix of *codes*: continuous columns hold
their values, binary and categorical columns hold the integer index of the
level in ``ColumnSchema.levels``.  Every model in the package consumes that
matrix together with the schema.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    InvalidStatusError,
    MissingColumnError,
    MissingValueError,
    NonNumericTimeError,
    NonPositiveTimeError,
    SchemaMismatchError,
    UnknownLevelError,
)

KINDS = ("continuous", "binary", "categorical")
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "continuous":
            if self.levels:
                raise DataError(f"continuous column {self.name!r} cannot declare levels")
        elif not self.levels:
            raise DataError(f"column {self.name!r}: categorical levels must be nonempty")
        elif self.kind == "binary" and len(self.levels) != 2:
            raise DataError(f"binary column {self.name!r} needs exactly two levels")
        if len(set(self.levels)) != len(self.levels):
            raise DataError(f"column {self.name!r}: duplicate levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind != "continuous"

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def code(self, level) -> int:
        try:
            return self.levels.index(str(level))
        except ValueError:
            raise UnknownLevelError(f"column {self.name!r}: unknown level {level!r}") from None

    def to_json(self):
        return {"name": self.name, "kind": self.kind, "levels": list(self.levels)}

    @classmethod
    def from_json(cls, d):
        return cls(d["name"], d["kind"], tuple(d.get("levels", ())))


@dataclass(frozen=True)
class CovariateColumn:
    name: str
    kind: str
    values: np.ndarray
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        ColumnSchema(self.name, self.kind, self.levels)
        if self.kind == "continuous":
            values = _frozen(self.values, float)
            if not np.all(np.isfinite(values)):
                raise MissingValueError(f"column {self.name!r}: non-finite value")
        else:
            values = _frozen(self.values, np.int64)
            if values.size and (values.min() < 0 or values.max() >= len(self.levels)):
                raise UnknownLevelError(f"column {self.name!r}: code outside level set")
        if values.ndim != 1:
            raise DataError(f"column {self.name!r}: values must be one-dimensional")
        object.__setattr__(self, "values", values)

    @property
    def schema(self) -> ColumnSchema:
        return ColumnSchema(self.name, self.kind, self.levels)

    @classmethod
    def continuous(cls, name, values):
        return cls(name, "continuous", values)

    @classmethod
    def from_labels(cls, name, labels, levels=None, kind="categorical"):
        """Encode raw labels; levels default to first-appearance order."""
        labels = [str(v) for v in labels]
        if levels is None:
            levels = tuple(dict.fromkeys(labels))
        levels = tuple(str(v) for v in levels)
        index = {lev: i for i, lev in enumerate(levels)}
        codes = []
        for row, v in enumerate(labels):
            if v not in index:
                raise UnknownLevelError(f"column {name!r}, row {row}: unknown level {v!r}")
            codes.append(index[v])
        return cls(name, kind, codes, levels)

    def labels(self):
        if self.kind == "continuous":
            return list(self.values)
        return [self.levels[c] for c in self.values]


Schema = tuple  # tuple[ColumnSchema, ...]


@dataclass(frozen=True)
class SurvivalDataset:
    """Observed times, event indicators (1 = event) and covariates.

    Immutable after construction; the arrays are flagged read-only.
    """

    time: np.ndarray
    status: np.ndarray
    columns: tuple[CovariateColumn, ...]
    treatment: str | None = None
    ids: tuple[str, ...] | None = None
    _X: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        status_raw = np.asarray(self.status)
        if time.ndim != 1:
            raise DataError("observed times must be one-dimensional")
        n = time.size
        if n < 2:
            raise DataError(f"need at least two individuals, got {n}")
        if status_raw.shape != (n,):
            raise DataError("status length differs from number of observed times")
        if not np.all(np.isfinite(time)):
            raise NonPositiveTimeError("observed times must be finite")
        bad = np.flatnonzero(time <= 0)
        if bad.size:
            raise NonPositiveTimeError(f"non-positive observed time in row {bad[0]}")
        if not np.all(np.isin(status_raw, (0, 1))):
            row = int(np.flatnonzero(~np.isin(status_raw, (0, 1)))[0])
            raise InvalidStatusError(f"status not in {{0,1}} (row {row})")
        columns = tuple(self.columns)
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        for c in columns:
            if c.values.shape != (n,):
                raise DataError(f"column {c.name!r} has length {c.values.size}, expected {n}")
        if self.treatment is not None and self.treatment not in names:
            raise MissingColumnError(f"treatment column {self.treatment!r} not among covariates")
        ids = None if self.ids is None else tuple(str(i) for i in self.ids)
        if ids is not None and len(ids) != n:
            raise DataError("ids length differs from number of rows")
        object.__setattr__(self, "time", _frozen(time, float))
        object.__setattr__(self, "status", _frozen(status_raw, np.int64))
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "ids", ids)
        X = np.column_stack([c.values.astype(float) for c in columns]) if columns else np.empty((n, 0))
        X.flags.writeable = False
        object.__setattr__(self, "_X", X)

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def X(self) -> np.ndarray:
        return self._X

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def schema(self) -> Schema:
        return tuple(c.schema for c in self.columns)

    @property
    def treatment_index(self) -> int | None:
        return None if self.treatment is None else self.names.index(self.treatment)

    def column(self, name) -> CovariateColumn:
        for c in self.columns:
            if c.name == name:
                return c
        raise MissingColumnError(f"no column named {name!r}")

    def subset(self, idx) -> SurvivalDataset:
        idx = np.asarray(idx)
        cols = tuple(CovariateColumn(c.name, c.kind, c.values[idx], c.levels) for c in self.columns)
        ids = None if self.ids is None else tuple(np.asarray(self.ids, dtype=object)[idx])
        return SurvivalDataset(self.time[idx], self.status[idx], cols, self.treatment, ids)

    def with_X(self, X) -> SurvivalDataset:
        """Same outcomes, covariate codes replaced (schema unchanged)."""
        X = np.asarray(X, dtype=float)
        check_X(self.schema, X)
        cols = tuple(CovariateColumn(c.name, c.kind, X[:, j], c.levels) for j, c in enumerate(self.columns))
        return SurvivalDataset(self.time, self.status, cols, self.treatment, self.ids)


def check_X(schema, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(schema):
        raise SchemaMismatchError(f"expected {len(schema)} covariate columns, got shape {X.shape}")
    return X


def from_arrays(time, status, X=None, names=None, kinds=None, levels=None, treatment=None, ids=None):
    """Build a dataset from numeric arrays (codes for categorical columns)."""
    time = np.asarray(time, dtype=float)
    if X is None:
        X = np.empty((time.size, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[1]
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    kinds = list(kinds) if kinds is not None else ["continuous"] * p
    levels = dict(levels or {})
    cols = []
    for j, (name, kind) in enumerate(zip(names, kinds)):
        if kind == "continuous":
            cols.append(CovariateColumn(name, kind, X[:, j]))
        else:
            codes = X[:, j].astype(np.int64)
            if not np.array_equal(codes, X[:, j]):
                raise DataError(f"column {name!r}: categorical codes must be integers")
            levs = levels.get(name)
            if levs is None:
                k = 2 if kind == "binary" else int(codes.max()) + 1
                levs = tuple(str(i) for i in range(k))
            cols.append(CovariateColumn(name, kind, codes, tuple(levs)))
    return SurvivalDataset(time, status, tuple(cols), treatment, ids)


# ---------------------------------------------------------------- CSV I/O


@dataclass(frozen=True)
class CsvSchema:
    """Column-kind declarations for ``load_csv``.

    ``columns`` maps covariate name to a kind string or to
    ``{"kind": ..., "levels": [...]}`` for declared level sets.
    """

    time: str
    status: str
    columns: dict
    treatment: str | None = None
    id: str | None = None

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text(encoding="utf-8"))
        for key in ("time", "status"):
            if key not in obj:
                raise DataError(f"schema must name the {key!r} column")
        unknown = sorted(set(obj) - {"time", "status", "columns", "treatment", "id"})
        if unknown:
            raise DataError(f"unknown schema key(s): {', '.join(unknown)}")
        return cls(obj["time"], obj["status"], dict(obj.get("columns", {})), obj.get("treatment"), obj.get("id"))

    def to_json(self):
        d = {"time": self.time, "status": self.status, "columns": self.columns}
        if self.treatment is not None:
            d["treatment"] = self.treatment
        if self.id is not None:
            d["id"] = self.id
        return d


def _parse_kind(name, decl):
    if isinstance(decl, str):
        return decl, None
    if isinstance(decl, dict):
        levels = decl.get("levels")
        return decl.get("kind", "categorical"), None if levels is None else tuple(str(v) for v in levels)
    raise DataError(f"column {name!r}: cannot parse kind declaration {decl!r}")


def _is_missing(v):
    return v.strip().lower() in MISSING_TOKENS


def load_csv(path, schema, drop_incomplete=False) -> SurvivalDataset:
    """Read a comma-separated file with a header row into a dataset.

    Rows with a missing covariate raise ``MissingValueError`` unless
    ``drop_incomplete`` is set, in which case they are excluded.
    """
    if not isinstance(schema, CsvSchema):
        schema = CsvSchema.from_json(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    needed = [schema.time, schema.status, *schema.columns]
    if schema.id:
        needed.append(schema.id)
    for name in needed:
        if name not in header:
            raise MissingColumnError(f"column {name!r} not found in {path}")
    if schema.treatment is not None and schema.treatment not in schema.columns:
        raise MissingColumnError(f"treatment column {schema.treatment!r} is not a declared covariate")

    keep = []
    for i, row in enumerate(rows):
        missing = [c for c in schema.columns if row[c] is None or _is_missing(row[c])]
        if missing:
            if drop_incomplete:
                continue
            raise MissingValueError(f"row {i}: missing value in column {missing[0]!r}")
        keep.append(row)

    time, status = [], []
    for i, row in enumerate(keep):
        try:
            t = float(row[schema.time])
        except (TypeError, ValueError):
            raise NonNumericTimeError(f"row {i}: non-numeric time {row[schema.time]!r}") from None
        if not t > 0 or not math.isfinite(t):
            raise NonPositiveTimeError(f"row {i}: non-positive observed time {t}")
        raw = row[schema.status].strip()
        try:
            s = float(raw)
        except ValueError:
            raise InvalidStatusError(f"row {i}: status not in {{0,1}}: {raw!r}") from None
        if s not in (0.0, 1.0):
            raise InvalidStatusError(f"row {i}: status not in {{0,1}}: {raw!r}")
        time.append(t)
        status.append(int(s))

    cols = []
    for name, decl in schema.columns.items():
        kind, levels = _parse_kind(name, decl)
        raw = [row[name].strip() for row in keep]
        if kind == "continuous":
            try:
                cols.append(CovariateColumn.continuous(name, [float(v) for v in raw]))
            except ValueError:
                raise DataError(f"column {name!r}: non-numeric value") from None
        else:
            if levels is None and kind == "binary":
                found = tuple(dict.fromkeys(raw))
                if set(found) <= {"0", "1"}:
                    found = ("0", "1")
                levels = found
            cols.append(CovariateColumn.from_labels(name, raw, levels, kind))
    ids = [row[schema.id] for row in keep] if schema.id else None
    return SurvivalDataset(np.array(time), np.array(status), tuple(cols), schema.treatment, ids)


def write_csv(dataset: SurvivalDataset, path, time_col="time", status_col="status", id_col=None):
    """Inverse of ``load_csv``; floats are written with ``repr`` so they round-trip."""
    names = [time_col, status_col, *dataset.names]
    if id_col:
        names.insert(0, id_col)
    labels = [c.labels() for c in dataset.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(dataset.n):
            row = [repr(float(dataset.time[i])), int(dataset.status[i])]
            row += [repr(float(col[i])) if c.kind == "continuous" else col[i] for c, col in zip(dataset.columns, labels)]
            if id_col:
                row.insert(0, dataset.ids[i] if dataset.ids else i)
            w.writerow(row)


def csv_schema_for(dataset: SurvivalDataset, time_col="time", status_col="status") -> CsvSchema:
    cols = {}
    for c in dataset.columns:
        cols[c.name] = c.kind if c.kind == "continuous" else {"kind": c.kind, "levels": list(c.levels)}
    return CsvSchema(time_col, status_col, cols, dataset.treatment)


# ---------------------------------------------------------------- episodes


@dataclass(frozen=True)
class EpisodeDataset:
    """Counting-process rows ``(start, stop]`` with a stratum label per row."""

    start: np.ndarray
    stop: np.ndarray
    status: np.ndarray
    X: np.ndarray
    stratum: tuple[str, ...]
    subject: np.ndarray
    schema: Schema = ()

    def __post_init__(self):
        if not np.all(self.start < self.stop):
            raise DataError("every episode needs start < stop")
        if np.any(self.start < 0):
            raise DataError("episode start times must be non-negative")

    @property
    def n_rows(self) -> int:
        return self.stop.size


def split_episodes(dataset: SurvivalDataset, cut: float, strat_column: str) -> EpisodeDataset:
    """Split follow-up at ``cut`` into before/after episodes.

    The stratum label is ``"<level>|pre"`` or ``"<level>|post"`` where the
    level comes from ``strat_column``.
    """
    if not cut > 0:
        raise DataError(f"cut point must be positive, got {cut}")
    col = dataset.column(strat_column)
    labels = [str(v) for v in col.labels()]
    start, stop, status, rows, strata, subj = [], [], [], [], [], []
    for i in range(dataset.n):
        t, d = float(dataset.time[i]), int(dataset.status[i])
        if t > cut:
            start += [0.0, cut]
            stop += [cut, t]
            status += [0, d]
            rows += [i, i]
            strata += [f"{labels[i]}|pre", f"{labels[i]}|post"]
            subj += [i, i]
        else:
            start.append(0.0)
            stop.append(t)
            status.append(d)
            rows.append(i)
            strata.append(f"{labels[i]}|pre")
            subj.append(i)
    return EpisodeDataset(
        np.array(start), np.array(stop), np.array(status, dtype=np.int64),
        dataset.X[np.array(rows)], tuple(strata), np.array(subj), dataset.schema,
    )


def design_matrix(schema, X, intercept=False, columns=None) -> np.ndarray:
    """Numeric design: continuous as is, binary as 0/1, categorical one-hot without the first level."""
    X = check_X(schema, X)
    parts = [np.ones((X.shape[0], 1))] if intercept else []
    for j, col in enumerate(schema):
        if columns is not None and col.name not in columns:
            continue
        x = X[:, j]
        if col.kind == "categorical" and col.n_levels > 2:
            parts.append(np.column_stack([(x == k).astype(float) for k in range(1, col.n_levels)]))
        else:
            parts.append(x[:, None])
    return np.hstack(parts) if parts else np.empty((X.shape[0], 0))


def design_names(schema, intercept=False, columns=None) -> list[str]:
    names = ["(intercept)"] if intercept else []
    for col in schema:
        if columns is not None and col.name not in columns:
            continue
        if col.kind == "categorical" and col.n_levels > 2:
            names += [f"{col.name}[{lev}]" for lev in col.levels[1:]]
        else:
            names.append(col.name)
    return names
