"""Observation table, CSV ingestion and CSV output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateColumn,
    IoFailure,
    MissingColumn,
    MissingValue,
    NonBinaryExposure,
    NonBinaryOutcome,
)

MISSING_TOKENS = frozenset({"", "NA", "NaN"})
ROLES = ("exposure", "outcome", "covariate", "ignore")
OUTCOME_KINDS = ("binary", "continuous")

# smallest/largest singular value ratio of the scaled [1, L] matrix
COLLINEARITY_TOL = 1e-10


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    outcome_kind: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.outcome_kind is not None and self.outcome_kind not in OUTCOME_KINDS:
            raise ValueError(f"unknown outcome kind {self.outcome_kind!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Exposure, outcome and ``J`` named covariate columns for ``n`` individuals.

    The intercept is never stored. Arrays are made read-only on construction.
    """

    exposure: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    names: tuple[str, ...]
    outcome_kind: str = "continuous"
    n_dropped: int = 0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.array(self.exposure, dtype=float).ravel()
        y = np.array(self.outcome, dtype=float).ravel()
        x = np.array(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        names = tuple(str(s) for s in self.names)
        n = a.shape[0]
        if y.shape[0] != n or x.shape[0] != n:
            raise DataError("exposure, outcome and covariates must share a row count")
        if x.shape[1] != len(names):
            raise DataError("one name per covariate column is required")
        if len(names) < 1:
            raise DataError("at least one covariate is required")
        if len(set(names)) != len(names):
            raise DataError("covariate names must be unique")
        if self.outcome_kind not in OUTCOME_KINDS:
            raise DataError(f"unknown outcome kind {self.outcome_kind!r}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise MissingValue("dataset contains missing or non-finite values")
        if not np.all((a == 0) | (a == 1)):
            raise NonBinaryExposure("exposure must take values in {0, 1}")
        if a.min() == a.max():
            raise NonBinaryExposure("exposure must contain both 0 and 1")
        if self.outcome_kind == "binary" and not np.all((y == 0) | (y == 1)):
            raise NonBinaryOutcome("binary outcome must take values in {0, 1}")
        for arr in (a, y, x):
            arr.setflags(write=False)
        object.__setattr__(self, "exposure", a)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(names)})

    @property
    def n(self) -> int:
        return self.exposure.shape[0]

    @property
    def J(self) -> int:
        return len(self.names)

    def column_indices(self, subset: Iterable[str]) -> tuple[int, ...]:
        try:
            return tuple(self._index[s] for s in subset)
        except KeyError as exc:
            raise MissingColumn(f"unknown covariate {exc.args[0]!r}") from None

    def select(self, covariates: Sequence[str]) -> "Dataset":
        """Copy restricted to the named covariates, in the given order."""
        idx = list(self.column_indices(covariates))
        return Dataset(self.exposure, self.outcome, self.covariates[:, idx],
                       tuple(covariates), self.outcome_kind, self.n_dropped)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.exposure[rows], self.outcome[rows], self.covariates[rows],
                       self.names, self.outcome_kind, 0)

    def equals(self, other: "Dataset") -> bool:
        return (self.names == other.names and self.outcome_kind == other.outcome_kind
                and np.array_equal(self.exposure, other.exposure)
                and np.array_equal(self.outcome, other.outcome)
                and np.array_equal(self.covariates, other.covariates))


def check_collinearity(covariates: np.ndarray, names: Sequence[str]) -> None:
    """Raise DegenerateColumn for a constant or exactly collinear covariate.

    The matrix ``[1, L]`` has its columns scaled to unit norm; it is rank
    deficient when the smallest-to-largest singular value ratio falls below
    ``COLLINEARITY_TOL``. The first column whose addition drops the rank is
    reported.
    """
    x = np.asarray(covariates, dtype=float)
    n = x.shape[0]
    for j, name in enumerate(names):
        col = x[:, j]
        if np.all(col == col[0]):
            raise DegenerateColumn(f"covariate {name!r} is constant", column=name)

    def full_rank(m):
        m = m / np.linalg.norm(m, axis=0)
        s = np.linalg.svd(m, compute_uv=False)
        return s[-1] / s[0] > COLLINEARITY_TOL

    design = np.column_stack([np.ones(n), x])
    if full_rank(design):
        return
    for j in range(x.shape[1]):
        if not full_rank(design[:, : j + 2]):
            raise DegenerateColumn(
                f"covariate {names[j]!r} is collinear with the intercept and earlier covariates",
                column=names[j],
            )
    raise DegenerateColumn("covariate matrix is rank deficient")


def _parse(cell: str) -> float:
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        return math.nan


def load_csv(path, specs: Sequence[ColumnSpec], drop_incomplete: bool = True) -> Dataset:
    """Read a CSV file into a Dataset.

    Columns not named in ``specs`` are ignored. Rows with an empty, ``NA``,
    ``NaN`` or unparseable cell in a retained column are dropped when
    ``drop_incomplete`` is set; otherwise they raise MissingValue.
    """
    specs = list(specs)
    exposure = [s for s in specs if s.role == "exposure"]
    outcome = [s for s in specs if s.role == "outcome"]
    if len(exposure) != 1 or len(outcome) != 1:
        raise DataError("exactly one exposure and one outcome column are required")
    covariates = [s.name for s in specs if s.role == "covariate"]

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = [r for r in reader if r]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    header = [h.strip() for h in header]
    wanted = [exposure[0].name, outcome[0].name] + covariates
    absent = [w for w in wanted if w not in header]
    if absent:
        raise MissingColumn(f"columns not in header: {absent}")
    pos = [header.index(w) for w in wanted]

    values = np.array(
        [[_parse(r[p]) if p < len(r) else math.nan for p in pos] for r in rows],
        dtype=float,
    ).reshape(len(rows), len(pos))
    ok = np.all(np.isfinite(values), axis=1)
    if not drop_incomplete and not ok.all():
        first = int(np.flatnonzero(~ok)[0]) + 2
        raise MissingValue(f"{path}: incomplete row at line {first}")
    values = values[ok]
    n_dropped = int((~ok).sum())

    a, y, x = values[:, 0], values[:, 1], values[:, 2:]
    if not np.all((a == 0) | (a == 1)):
        bad = sorted(set(a[(a != 0) & (a != 1)].tolist()))[:5]
        raise NonBinaryExposure(f"exposure {exposure[0].name!r} has values {bad}")
    kind = outcome[0].outcome_kind
    if kind is None:
        kind = "binary" if np.all((y == 0) | (y == 1)) else "continuous"
    if covariates:
        check_collinearity(x, covariates)
    return Dataset(a, y, x, tuple(covariates), kind, n_dropped)


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(rows: Sequence[Mapping], path, columns: Sequence[str] | None = None) -> None:
    """Write records as CSV with shortest round-trip float formatting.

    Column order follows ``columns`` or else the first record's keys. An
    empty record list yields a header-only file.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    columns = list(columns)
    for r in rows:
        if set(r.keys()) != set(columns):
            raise DataError("records do not share a schema")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_render(r[c]) for c in columns])
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_table(path) -> list[dict[str, float]]:
    """Inverse of ``write_table`` for numeric tables; empty cells become NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse(v) for k, v in r.items()} for r in reader]
