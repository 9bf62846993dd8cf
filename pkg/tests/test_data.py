import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extrapsens.data import ColumnSpec, Dataset, load_csv, read_table, write_table
from extrapsens.errors import (
    DataError,
    DegenerateColumn,
    MissingColumn,
    MissingValue,
    NonBinaryExposure,
    NonBinaryOutcome,
)

SPECS = [ColumnSpec("a", "exposure"), ColumnSpec("y", "outcome"), ColumnSpec("x", "covariate")]


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_four_rows(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0,1.5\n0,1,2.0\n1,1,0.5\n1,1,3.25\n")
    d = load_csv(p, SPECS)
    assert d.n == 4 and d.J == 1
    assert d.outcome_kind == "binary"
    np.testing.assert_array_equal(d.covariates[:, 0], [1.5, 2.0, 0.5, 3.25])


def test_drop_incomplete_row(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0,1.5\n0,1,NA\n1,1,0.5\n1,0,3\n1,1,\n0,1,2\n")
    d = load_csv(p, SPECS, drop_incomplete=True)
    assert d.n == 4
    assert d.n_dropped == 2


def test_incomplete_without_drop_raises(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0,1.5\n0,1,NaN\n1,1,0.5\n")
    with pytest.raises(MissingValue):
        load_csv(p, SPECS, drop_incomplete=False)


def test_ignored_columns_do_not_drop_rows(tmp_path):
    p = write(tmp_path, "a,y,x,notes\n0,0,1.5,\n0,1,2,x\n1,1,0.5,\n1,0,3,\n")
    d = load_csv(p, SPECS + [ColumnSpec("notes", "ignore")])
    assert d.n == 4 and d.n_dropped == 0


def test_non_binary_exposure(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0,1\n2,1,2\n1,1,3\n")
    with pytest.raises(NonBinaryExposure):
        load_csv(p, SPECS)


def test_missing_column(tmp_path):
    p = write(tmp_path, "a,y,z\n0,0,1\n1,1,2\n")
    with pytest.raises(MissingColumn):
        load_csv(p, SPECS)


def test_constant_covariate_is_degenerate(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0,1\n0,1,1\n1,1,1\n1,0,1\n")
    with pytest.raises(DegenerateColumn) as err:
        load_csv(p, SPECS)
    assert err.value.column == "x"


def test_collinear_covariate_named(tmp_path):
    rows = ["a,y,x,w"] + [f"{i % 2},{(i // 2) % 2},{i},{2 * i + 1}" for i in range(8)]
    p = write(tmp_path, "\n".join(rows) + "\n")
    specs = SPECS + [ColumnSpec("w", "covariate")]
    with pytest.raises(DegenerateColumn) as err:
        load_csv(p, specs)
    assert err.value.column == "w"


def test_binary_outcome_declared_but_continuous(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0.5,1\n1,1,2\n0,1,3\n")
    specs = [ColumnSpec("a", "exposure"), ColumnSpec("y", "outcome", "binary"),
             ColumnSpec("x", "covariate")]
    with pytest.raises(NonBinaryOutcome):
        load_csv(p, specs)


def test_spec_requires_one_exposure_and_outcome(tmp_path):
    p = write(tmp_path, "a,y,x\n0,0,1\n1,1,2\n")
    with pytest.raises(DataError):
        load_csv(p, [ColumnSpec("a", "exposure"), ColumnSpec("x", "covariate")])


def test_dataset_invariants():
    with pytest.raises(NonBinaryExposure):
        Dataset([1, 1, 1], [0, 1, 0], [[1], [2], [3]], ("x",))
    with pytest.raises(DataError):
        Dataset([0, 1], [0, 1], [[1, 2], [3, 4]], ("x", "x"))
    d = Dataset([0, 1, 0], [0.1, 1, 0], [[1], [2], [3]], ("x",))
    assert not d.covariates.flags.writeable


def test_write_table_empty_and_single(tmp_path):
    p = tmp_path / "e.csv"
    write_table([], p, columns=["a", "b"])
    assert p.read_text() == "a,b\n"
    write_table([{"a": 0.5}], p)
    assert p.read_text() == "a\n0.5\n"


def test_write_table_schema_mismatch(tmp_path):
    with pytest.raises(DataError):
        write_table([{"a": 1.0}, {"b": 2.0}], tmp_path / "x.csv")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=20))
def test_write_read_round_trip_bit_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    write_table([{"v": v, "w": -v} for v in values], p)
    back = read_table(p)
    assert [r["v"] for r in back] == values
    assert [r["w"] for r in back] == [-v for v in values]


def _write_dataset(d, path):
    rows = [{"a": a, "y": y, **dict(zip(d.names, x))}
            for a, y, x in zip(d.exposure, d.outcome, d.covariates)]
    write_table(rows, path)


def test_load_reserialize_value_preserving(tmp_path):
    rng = np.random.default_rng(3)
    d = Dataset(rng.integers(0, 2, 30) | np.r_[0, 1, np.zeros(28, int)], rng.normal(size=30),
                rng.normal(size=(30, 3)), ("p", "q", "r"))
    _write_dataset(d, tmp_path / "one.csv")
    specs = [ColumnSpec("a", "exposure"), ColumnSpec("y", "outcome")] + \
        [ColumnSpec(c, "covariate") for c in d.names]
    d1 = load_csv(tmp_path / "one.csv", specs)
    _write_dataset(d1, tmp_path / "two.csv")
    d2 = load_csv(tmp_path / "two.csv", specs)
    assert d.equals(d1) and d1.equals(d2)
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()


def test_row_permutation_gives_equal_dataset(tmp_path):
    rng = np.random.default_rng(4)
    lines = [f"{i % 2},{rng.normal()!r},{rng.normal()!r}" for i in range(25)]
    p1 = write(tmp_path, "a,y,x\n" + "\n".join(lines) + "\n", "p1.csv")
    perm = rng.permutation(25)
    p2 = write(tmp_path, "a,y,x\n" + "\n".join(lines[i] for i in perm) + "\n", "p2.csv")
    d1, d2 = load_csv(p1, SPECS), load_csv(p2, SPECS)
    assert d1.take(perm).equals(d2)
