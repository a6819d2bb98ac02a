"""Dataset container: construction rules, CSV round trips, canonical order."""

import numpy as np
import pytest

from causalsfa.data import Dataset, design_matrix
from causalsfa.errors import SchemaError


def _toy():
    return Dataset(
        {
            "y": np.array([1.5, -0.25, 3.0]),
            "d": np.array([0.0, 1.0, 1.0]),
            "x1": np.array([0.1, 0.2, 0.3]),
        }
    )


def test_columns_are_read_only_copies():
    src = np.array([1.0, 2.0])
    data = Dataset({"y": src})
    src[0] = 99.0
    assert data.col("y")[0] == 1.0
    with pytest.raises(ValueError):
        data.col("y")[0] = 5.0


def test_length_mismatch_rejected():
    with pytest.raises(SchemaError, match="length"):
        Dataset({"y": np.zeros(3), "d": np.zeros(2)})


def test_non_finite_rejected_except_cohort_inf():
    with pytest.raises(SchemaError, match="non-finite"):
        Dataset({"y": np.array([1.0, np.nan])})
    with pytest.raises(SchemaError, match="non-finite"):
        Dataset({"y": np.array([1.0, np.inf])})
    data = Dataset({"y": np.array([1.0, 2.0]), "cohort": np.array([2.0, np.inf])})
    assert np.isposinf(data.col("cohort")[1])
    with pytest.raises(SchemaError):
        Dataset({"cohort": np.array([-np.inf, 2.0]), "y": np.zeros(2)})


def test_missing_column_and_require():
    data = _toy()
    with pytest.raises(SchemaError, match="'t'"):
        data.col("t")
    with pytest.raises(SchemaError, match="t, unit"):
        data.require("y", "t", "unit")
    data.require("y", "d")  # no raise


def test_input_and_instrument_cols_are_index_ordered():
    data = Dataset(
        {
            "x10": np.zeros(2),
            "x2": np.zeros(2),
            "x1": np.zeros(2),
            "w2": np.zeros(2),
            "w1": np.zeros(2),
            "y": np.zeros(2),
        }
    )
    assert data.input_cols() == ("x1", "x2", "x10")
    assert data.instrument_cols() == ("w1", "w2")
    assert _toy().instrument_cols() == ()


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    data = Dataset(
        {
            "y": rng.standard_normal(50) * 1e-7,
            "x1": rng.standard_normal(50) * 1e9,
            "cohort": np.where(rng.random(50) < 0.3, np.inf, 4.0),
        }
    )
    path = tmp_path / "round.csv"
    data.to_csv(path)
    back = Dataset.from_csv(path)
    assert back.names == data.names
    for name in data.names:
        assert np.array_equal(back.col(name), data.col(name))


def test_csv_write_is_byte_deterministic(tmp_path):
    data = _toy()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    data.to_csv(p1)
    data.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_empty_cohort_cell_means_never_treated(tmp_path):
    path = tmp_path / "cohort.csv"
    path.write_text("y,cohort\n1.0,2\n2.0,\n3.0,inf\n")
    data = Dataset.from_csv(path)
    assert np.isposinf(data.col("cohort")[1])
    assert np.isposinf(data.col("cohort")[2])
    assert data.col("cohort")[0] == 2.0


def test_csv_schema_errors_carry_line_numbers(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaError, match="header"):
        Dataset.from_csv(empty)

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("y,d\n1.0,0\n2.0\n")
    with pytest.raises(SchemaError, match="row 3"):
        Dataset.from_csv(ragged)

    bad_cell = tmp_path / "bad.csv"
    bad_cell.write_text("y,d\n1.0,zero\n")
    with pytest.raises(SchemaError, match="'zero'"):
        Dataset.from_csv(bad_cell)

    blank = tmp_path / "blank.csv"
    blank.write_text("y,d\n1.0,\n")
    with pytest.raises(SchemaError, match="empty cell"):
        Dataset.from_csv(blank)

    dup = tmp_path / "dup.csv"
    dup.write_text("y,y\n1.0,2.0\n")
    with pytest.raises(SchemaError, match="duplicate"):
        Dataset.from_csv(dup)


def test_subset_and_with_columns():
    data = _toy()
    kept = data.subset(np.array([True, False, True]))
    assert kept.n == 2
    assert np.array_equal(kept.col("y"), [1.5, 3.0])
    wider = data.with_columns({"t": np.array([0.0, 0.0, 1.0])})
    assert wider.has("t")
    assert data.names == ("y", "d", "x1")  # original untouched
    with pytest.raises(SchemaError):
        data.subset(np.array([True, False]))


def test_canonical_order_sorts_rows_lexicographically():
    data = Dataset(
        {
            "b": np.array([2.0, 1.0, 1.0, 1.0]),
            "a": np.array([0.0, 1.0, 0.0, 0.0]),
            "c": np.array([5.0, 6.0, 8.0, 7.0]),
        }
    )
    ordered = data.canonical_order()
    rows = list(zip(ordered.col("a"), ordered.col("b"), ordered.col("c")))
    assert rows == sorted(rows)


def test_canonical_order_is_permutation_invariant():
    rng = np.random.default_rng(11)
    cols = {"y": rng.standard_normal(40), "d": rng.integers(0, 2, 40).astype(float)}
    data = Dataset(cols)
    perm = rng.permutation(40)
    shuffled = Dataset({k: v[perm] for k, v in cols.items()})
    a, b = data.canonical_order(), shuffled.canonical_order()
    for name in cols:
        assert np.array_equal(a.col(name), b.col(name))


def test_design_matrix_stacks_intercept_and_columns():
    data = _toy()
    x = design_matrix(data, ["d", "x1"])
    assert x.shape == (3, 3)
    assert np.array_equal(x[:, 0], np.ones(3))
    assert np.array_equal(x[:, 1], data.col("d"))
    bare = design_matrix(data, ["x1"], intercept=False)
    assert bare.shape == (3, 1)
    none = design_matrix(data, [], intercept=False)
    assert none.shape == (3, 0)
