"""Tests for CSV loading and seeded splitting."""
import numpy as np
import pandas as pd
import pytest

from data import Dataset, DatasetError, load_csv, make_synthetic, split, split_arrays, to_frame


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def dataset_of(n, d=2):
    X = np.arange(n * d, dtype=float).reshape(n, d)
    return Dataset(X=X, y=np.arange(n, dtype=float))


def test_last_column_is_target(tmp_path):
    dataset = load_csv(write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n"))
    assert dataset.n_features == 2
    assert dataset.feature_names == ["a", "b"]
    np.testing.assert_array_equal(dataset.y, [3, 6])
    np.testing.assert_array_equal(dataset.X, [[1, 2], [4, 5]])
    assert dataset.name == "data"


def test_named_target(tmp_path):
    dataset = load_csv(write(tmp_path, "a,y,b\n1,2,3\n"), target_column="y")
    assert dataset.feature_names == ["a", "b"]
    np.testing.assert_array_equal(dataset.y, [2])


def test_missing_target(tmp_path):
    with pytest.raises(DatasetError, match="'z'"):
        load_csv(write(tmp_path, "a,y\n1,2\n"), target_column="z")


def test_non_numeric_column(tmp_path):
    with pytest.raises(DatasetError, match="non-numeric"):
        load_csv(write(tmp_path, "a,y\n1,2\nhello,3\n"))


def test_empty_and_missing_files(tmp_path):
    with pytest.raises(DatasetError):
        load_csv(write(tmp_path, ""))
    with pytest.raises(DatasetError):
        load_csv(write(tmp_path, "a,y\n", name="header_only.csv"))
    with pytest.raises(DatasetError, match="not found"):
        load_csv(tmp_path / "absent.csv")


def test_non_finite_rows_rejected(tmp_path, caplog):
    path = write(tmp_path, "a,y\n1,2\ninf,3\n4,nan\n5,6\n")
    dataset = load_csv(path)
    assert dataset.n_samples == 2
    assert "rejected 2 rows" in caplog.text


@pytest.mark.parametrize("n,sizes", [(100, (50, 25, 25)), (308, (154, 77, 77)), (7, (3, 1, 3))])
def test_split_proportions(n, sizes):
    splits = split(dataset_of(n), seed=0)
    assert (len(splits.train), len(splits.validation), len(splits.test)) == sizes


def test_split_is_a_partition():
    n = 101
    splits = split(dataset_of(n), seed=5)
    joined = np.concatenate([splits.train, splits.validation, splits.test])
    assert sorted(joined.tolist()) == list(range(n))


def test_split_deterministic_per_seed():
    dataset = dataset_of(50)
    a, b, c = split(dataset, 1), split(dataset, 1), split(dataset, 2)
    np.testing.assert_array_equal(a.train, b.train)
    assert not np.array_equal(a.train, c.train)


def test_split_needs_four_samples():
    with pytest.raises(DatasetError):
        split(dataset_of(3), seed=0)


def test_yacht_shaped_file(tmp_path):
    rng = np.random.default_rng(0)
    frame = pd.DataFrame(rng.normal(size=(308, 7)), columns=[f"c{i}" for i in range(7)])
    path = tmp_path / "yacht.csv"
    frame.to_csv(path, index=False)
    dataset = load_csv(path)
    assert (dataset.n_samples, dataset.n_features) == (308, 6)
    arrays = split_arrays(dataset, split(dataset, 0))
    assert arrays.X_train.shape == (154, 6)
    assert arrays.X_val.shape == (77, 6)
    assert arrays.y_test.shape == (77,)


def test_synthetic_target():
    dataset = make_synthetic(n=50, seed=2)
    X = dataset.X
    np.testing.assert_allclose(dataset.y, X[:, 1] * X[:, 2] + np.sin(X[:, 3]))
    assert np.all(np.abs(X) <= 1.0)
    frame = to_frame(dataset)
    assert list(frame.columns) == ["x_0", "x_1", "x_2", "x_3", "y"]
