import numpy as np
import pytest
from hypothesis import given, strategies as st

from qs3orao.data import (OrdinalDataset, ParseError, SemiSupervisedSplit, ValidationError,
                          discretize_equal_frequency, load_dataset, load_features,
                          make_ordinal_blobs, make_semi_split, min_max_scale, normalize_min_max,
                          subproblem_view, subproblem_views, write_csv)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_parse(tmp_path):
    ds = load_dataset(write(tmp_path, "a.csv", "0.1,0.2,3\n0.4,0.5,1\n"))
    assert (ds.n, ds.d, ds.k) == (2, 2, 3)
    assert ds.labels.tolist() == [3, 1]
    np.testing.assert_array_equal(ds.features, [[0.1, 0.2], [0.4, 0.5]])


def test_csv_crlf_and_missing_class_allowed(tmp_path):
    ds = load_dataset(write(tmp_path, "a.csv", "1,3\r\n2,3\r\n"))
    assert ds.k == 3
    assert ds.missing_classes() == [1, 2]
    np.testing.assert_array_equal(ds.priors, [0, 0, 1])


def test_libsvm_sparse_fill(tmp_path):
    ds = load_dataset(write(tmp_path, "a.svm", "2 1:0.5 3:1.0\n1 2:7\n"), "libsvm")
    np.testing.assert_array_equal(ds.features[0], [0.5, 0.0, 1.0])
    np.testing.assert_array_equal(ds.features[1], [0.0, 7.0, 0.0])
    assert ds.labels.tolist() == [2, 1]


@pytest.mark.parametrize("label", ["0", "-1"])
def test_nonpositive_label_is_validation_error(tmp_path, label):
    with pytest.raises(ValidationError):
        load_dataset(write(tmp_path, "a.csv", f"0.1,1\n0.2,{label}\n"))


def test_parse_error_names_line(tmp_path):
    with pytest.raises(ParseError) as err:
        load_dataset(write(tmp_path, "a.csv", "0.1,1\n0.2,abc,1\n"))
    assert err.value.line_no == 2
    with pytest.raises(ParseError) as err:
        load_dataset(write(tmp_path, "a.svm", "1 1:0.5\n2 x:1\n"), "libsvm")
    assert err.value.line_no == 2


def test_write_csv_round_trip(tmp_path, rng):
    X = rng.normal(size=(7, 3))
    y = rng.integers(1, 4, size=7)
    write_csv(tmp_path / "o.csv", X, y)
    ds = load_dataset(tmp_path / "o.csv")
    np.testing.assert_array_equal(ds.features, X)
    np.testing.assert_array_equal(ds.labels, y)
    np.testing.assert_array_equal(load_features(tmp_path / "o.csv", drop_last=True), X)


def test_min_max_examples():
    X = np.array([[2.0, 5.0, 0.0], [4.0, 5.0, 0.3], [6.0, 5.0, 1.0]])
    out = min_max_scale(X)
    np.testing.assert_array_equal(out[:, 0], [0, 0.5, 1])
    np.testing.assert_array_equal(out[:, 1], [0, 0, 0])
    np.testing.assert_allclose(out[:, 2], X[:, 2], atol=1e-15)


@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=30))
def test_normalized_features_in_unit_interval(rows):
    ds = OrdinalDataset(np.array(rows), np.ones(len(rows), dtype=int), 1)
    out = normalize_min_max(ds).features
    assert np.all((out >= 0) & (out <= 1))


def test_discretize_examples():
    assert discretize_equal_frequency(np.arange(1, 11), 5).tolist() == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    assert discretize_equal_frequency(np.arange(10, 0, -1), 5).tolist() == [5, 5, 4, 4, 3, 3, 2, 2, 1, 1]
    assert discretize_equal_frequency(np.ones(5), 2).tolist() == [1, 1, 1, 2, 2]
    with pytest.raises(ValueError):
        discretize_equal_frequency(np.arange(3), 4)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=60), st.integers(2, 7))
def test_discretize_bins_balanced(targets, k):
    if k > len(targets):
        return
    labels = discretize_equal_frequency(targets, k)
    counts = np.bincount(labels, minlength=k + 1)[1:]
    assert counts.min() >= 1 and counts.max() - counts.min() <= 1
    order = np.argsort(targets, kind="stable")
    assert np.all(np.diff(labels[order]) >= 0)


def test_priors_exact():
    ds = OrdinalDataset(np.zeros((6, 1)), np.array([1, 1, 2, 3, 3, 3]), 3)
    assert ds.priors.tolist() == [2 / 6, 1 / 6, 3 / 6]
    assert abs(ds.priors.sum() - 1) <= np.spacing(1.0)


def test_semi_split_determinism_and_disjointness():
    ds = make_ordinal_blobs([300, 400, 300], seed=0)
    a = make_semi_split(ds, 500, 7)
    b = make_semi_split(ds, 500, 7)
    np.testing.assert_array_equal(a.labeled_rows, b.labeled_rows)
    assert a.labeled.features.tobytes() == b.labeled.features.tobytes()
    assert a.unlabeled_features.tobytes() == b.unlabeled_features.tobytes()
    assert not set(a.labeled_rows) & set(a.unlabeled_rows)
    assert len(a.labeled_rows) + len(a.unlabeled_rows) == ds.n
    assert a.labeled.missing_classes() == []


def test_semi_split_boundaries():
    ds = make_ordinal_blobs(5, seed=0)
    full = make_semi_split(ds, ds.n, 1)
    assert full.n_unlabeled == 0 and full.unlabeled_features.shape == (0, 1)
    with pytest.raises(ValidationError):
        make_semi_split(ds, ds.k - 1, 1)
    with pytest.raises(ValidationError):
        make_semi_split(ds, ds.n + 1, 1)


def test_subproblem_view_examples():
    ds = OrdinalDataset(np.zeros((3, 1)), np.array([1, 2, 3]), 3)
    v1 = subproblem_view(ds, 1)
    assert v1.negative_rows.tolist() == [0] and v1.positive_rows.tolist() == [1, 2]
    assert v1.pi_hat == pytest.approx(2 / 3)
    v2 = subproblem_view(ds, 2)
    assert v2.negative_rows.tolist() == [0, 1] and v2.positive_rows.tolist() == [2]
    assert v2.pi_hat == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        subproblem_view(ds, 3)


@given(st.lists(st.integers(1, 5), min_size=5, max_size=40))
def test_views_partition_and_nest(labels):
    labels = np.array(labels)
    ds = OrdinalDataset(np.zeros((labels.size, 1)), labels, 5)
    views = subproblem_views(SemiSupervisedSplit(ds, np.zeros((0, 1)), 0))
    for v in views:
        rows = np.concatenate([v.positive_rows, v.negative_rows])
        assert sorted(rows.tolist()) == list(range(labels.size))
    for a, b in zip(views, views[1:]):
        assert set(b.positive_rows) <= set(a.positive_rows)
