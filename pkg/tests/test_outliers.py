import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragprune.numerics import GmmConfig, detect_outliers, emit_scatter_data, gmm_fit, percentile_threshold

IDS20 = [f"d{i}" for i in range(1, 21)]


def test_percentile_fifteen_of_twenty():
    assert percentile_threshold(np.arange(1.0, 21.0), 15) == pytest.approx(3.85, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 7.5, 15.0, 33.3, 50.0, 92.0, 100.0])
def test_percentile_agrees_with_numpy_linear(rng, p):
    values = rng.normal(size=37)
    assert percentile_threshold(values, p) == pytest.approx(np.percentile(values, p, method="linear"), abs=1e-12)


def test_percentile_boundaries_and_constants(rng):
    v = rng.normal(size=11)
    assert percentile_threshold(v, 0) == v.min()
    assert percentile_threshold(v, 100) == v.max()
    assert percentile_threshold([4.2] * 9, 37) == 4.2
    with pytest.raises(ValueError):
        percentile_threshold([], 10)


def test_detect_fifteen_of_twenty():
    d = detect_outliers(np.arange(1.0, 21.0), IDS20, 15)
    assert d.outlier_ids == {"d1", "d2", "d3"}
    assert d.threshold == pytest.approx(3.85)


def test_detect_all_equal():
    assert detect_outliers([1.0] * 8, list("abcdefgh"), 15).outlier_ids == frozenset()


def test_detect_single_extreme():
    # h = 0.1 * 9 = 0.9, threshold = -100 + 0.9 * 100 = -10
    d = detect_outliers([-100.0] + [0.0] * 9, list("abcdefghij"), 10)
    assert d.threshold == pytest.approx(-10.0)
    assert d.outlier_ids == {"a"}


def test_detect_length_mismatch():
    with pytest.raises(ValueError):
        detect_outliers([1.0, 2.0], ["a"], 10)


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60, unique=True),
    st.floats(0.5, 99.5),
)
def test_detect_properties(values, p):
    ids = [str(i) for i in range(len(values))]
    d = detect_outliers(values, ids, p)
    h = p / 100 * (len(values) - 1)
    assert d.outlier_ids == {i for i, v in zip(ids, values) if v < d.threshold}
    if h != math.floor(h):
        assert len(d.outlier_ids) == math.ceil(h)
    ties = sum(v == d.threshold for v in values)
    assert len(d.outlier_ids) <= math.ceil(p / 100 * len(values)) + ties


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=60),
    st.sampled_from([5.0, 10.0, 15.0, 25.0, 50.0]),
    st.integers(-10**6, 10**6),
)
def test_shift_moves_threshold_only(values, p, shift):
    # integer data keeps every sum exact
    ids = [str(i) for i in range(len(values))]
    d = detect_outliers(np.array(values, dtype=float), ids, p)
    s = detect_outliers(np.array(values, dtype=float) + shift, ids, p)
    assert s.outlier_ids == d.outlier_ids
    assert s.threshold == pytest.approx(d.threshold + shift, abs=1e-6)


def test_scatter_csv(tmp_path, rng):
    x = rng.normal(size=(5, 2))
    model = gmm_fit(x, GmmConfig(k=2, seed=0))
    d = detect_outliers(np.arange(5.0), list("abcde"), 30)
    emit_scatter_data(x, model, d, tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 5
    assert list(rows[0]) == ["doc_id", "pc1", "pc2", "cluster", "is_outlier"]
    flagged = {r["doc_id"] for r in rows if r["is_outlier"] == "true"}
    assert flagged == set(d.outlier_ids) == {"a", "b"}
    assert all(0 <= int(r["cluster"]) < 2 for r in rows)


def test_scatter_requires_two_columns(tmp_path, rng):
    x = rng.normal(size=(5, 3))
    model = gmm_fit(x, GmmConfig(k=1))
    with pytest.raises(ValueError):
        emit_scatter_data(x, model, detect_outliers(np.arange(5.0), list("abcde"), 30), tmp_path / "s.csv")
