import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoreforest.dataset import (
    Dataset, DatasetError, SplitSpec, friedman1_response, friedman2_response, friedman3_response,
    gen_friedman1, gen_friedman2, gen_friedman3, holdout, load_csv, split, write_csv)


def test_three_row_csv(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    ds = load_csv(f, "y")
    assert (ds.n, ds.p) == (3, 2)
    assert ds.feature_names == ("a", "b")
    np.testing.assert_array_equal(ds.target, [3, 6, 9])
    np.testing.assert_array_equal(ds.features[:, 1], [2, 5, 8])


def test_target_by_index_and_headerless(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2,3\n4,5,6\n")
    ds = load_csv(f, 0, has_header=False)
    assert ds.feature_names == ("x1", "x2")
    np.testing.assert_array_equal(ds.target, [1, 4])


def test_empty_cell_reports_row_and_column(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("a,b,y\n1,2,3\n4,,6\n")
    with pytest.raises(DatasetError, match=r"row 2.*'b'"):
        load_csv(f, "y")


def test_categorical_and_missing_inputs_rejected(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("a,y\nred,1\n")
    with pytest.raises(DatasetError, match="cannot parse"):
        load_csv(f, "y")
    with pytest.raises(DatasetError, match="unknown target"):
        load_csv(tmp_path / "a.csv", "price")
    with pytest.raises(DatasetError, match="no such file"):
        load_csv(tmp_path / "nope.csv", "y")


def test_boston_shaped_csv(tmp_path):
    rng = np.random.default_rng(0)
    names = [f"v{j}" for j in range(17)] + ["price"]
    f = tmp_path / "boston.csv"
    with open(f, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in rng.normal(size=(506, 18)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    ds = load_csv(f, "price")
    assert (ds.n, ds.p) == (506, 17)


def test_split_boston_sizes():
    ds = Dataset(np.zeros((506, 2)), np.zeros(506))
    tr, val, te = split(ds, SplitSpec(400 / 506, 0.0, seed=3))
    assert (tr.n, te.n) == (400, 106)
    assert val is None


def test_split_rounding_small():
    ds = Dataset(np.arange(4.0)[:, None], np.arange(4.0))
    tr, val, te = split(ds, SplitSpec(0.5, 0.5, seed=1))
    assert (tr.n, val.n, te.n) == (1, 1, 2)


def test_split_deterministic():
    ds = Dataset(np.arange(10.0)[:, None], np.arange(10.0))
    a = split(ds, SplitSpec(0.5, seed=11))
    b = split(ds, SplitSpec(0.5, seed=11))
    np.testing.assert_array_equal(a[0].target, b[0].target)
    np.testing.assert_array_equal(a[2].target, b[2].target)


def test_split_errors():
    ds = Dataset(np.zeros((3, 1)), np.zeros(3))
    for spec in (SplitSpec(0.0), SplitSpec(1.0), SplitSpec(0.2), SplitSpec(0.5, 1.0)):
        with pytest.raises(DatasetError):
            split(ds, spec)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(4, 200), tf=st.floats(0.3, 0.9), vf=st.floats(0.0, 0.5),
       seed=st.integers(0, 2 ** 32 - 1))
def test_split_is_exact_cover(n, tf, vf, seed):
    ds = Dataset(np.arange(n, dtype=float)[:, None], np.arange(n, dtype=float))
    try:
        parts = split(ds, SplitSpec(tf, vf, seed))
    except DatasetError:
        return
    ids = np.concatenate([p.target for p in parts if p is not None])
    np.testing.assert_array_equal(np.sort(ids), np.arange(n))
    assert parts[0].n == math.floor(n * tf + 1e-9) - (0 if parts[1] is None else parts[1].n)
    for p in parts:
        if p is not None:
            assert np.all(np.diff(p.target) > 0)


def test_holdout_sizes():
    ds = Dataset(np.arange(10.0)[:, None], np.arange(10.0))
    fit, val = holdout(ds, 0.2, seed=0)
    assert (fit.n, val.n) == (8, 2)
    assert set(fit.target) | set(val.target) == set(range(10))


def test_csv_round_trip_bit_identical(tmp_path):
    ds = gen_friedman1(50, seed=4)
    f = tmp_path / "d.csv"
    write_csv(ds, f)
    back = load_csv(f, "y")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.target, ds.target)
    g = tmp_path / "e.csv"
    write_csv(back, g)
    assert f.read_text() == g.read_text()


def test_dataset_validation():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 2)), np.zeros(3))
    with pytest.raises(DatasetError):
        Dataset(np.array([[np.nan]]), np.zeros(1))
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 2)), np.zeros(2), ("a", "a"))
    ds = Dataset(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_friedman1_noiseless_value():
    X = np.full((1, 5), 0.5)
    assert round(float(friedman1_response(X)[0]), 4) == 14.5711
    ds = gen_friedman1(20, noise_sd=0.0, seed=0)
    np.testing.assert_allclose(ds.target, friedman1_response(ds.features), rtol=0, atol=0)


def test_friedman1_irrelevant_inputs_unused():
    ds = gen_friedman1(30, p_total=10, noise_sd=0.0, seed=1)
    assert ds.p == 10
    X = ds.features.copy()
    X[:, 5:] = np.random.default_rng(2).uniform(size=(30, 5))
    np.testing.assert_array_equal(friedman1_response(X), ds.target)


def test_friedman1_mixed_layout():
    ds = gen_friedman1(4000, p_total=50, irrelevant_mix="mixed", seed=3)
    X = ds.features
    assert ds.p == 50
    assert X[:, :10].min() >= 0 and X[:, :10].max() <= 1
    assert X[:, 10:30].min() < 0
    assert X[:, 30:].min() > 0
    assert abs(np.log(X[:, 30:]).mean()) < 0.05
    with pytest.raises(DatasetError):
        gen_friedman1(10, p_total=20, irrelevant_mix="mixed")


def test_friedman3_noiseless_value():
    X = np.array([[1.0, 200.0, 0.5, 2.0]])
    assert round(float(friedman3_response(X)[0]), 5) == 1.56080


def test_friedman2_forms():
    X = np.array([[3.0, 200.0, 0.5, 2.0]])
    assert friedman2_response(X)[0] == pytest.approx(math.sqrt(9 + (100 - 1 / 400) ** 2))
    assert friedman2_response(X, literal=True)[0] == pytest.approx(9 + math.sqrt(100 - 1 / 400 ** 2))
    X0 = np.array([[1.0, 200.0, 0.0, 2.0]])
    assert friedman2_response(X0, literal=True)[0] == 1.0


def test_friedman23_shape_and_determinism():
    for gen in (gen_friedman2, gen_friedman3):
        a = gen(25, noise_sd=0.0, seed=8)
        b = gen(25, noise_sd=0.0, seed=8)
        assert a.p == 9
        np.testing.assert_array_equal(a.target, b.target)


def test_generators_reject_empty():
    for gen in (gen_friedman1, gen_friedman2, gen_friedman3):
        with pytest.raises(DatasetError):
            gen(0)


def test_feature_means_converge():
    n = 10_000
    X = gen_friedman1(n, seed=5).features
    assert abs(X[:, 0].mean() - 0.5) < 3 * math.sqrt(1 / 12 / n)
    Z = gen_friedman3(n, seed=6).features
    assert abs(Z[:, 1].mean() - 300 * math.pi) < 3 * (520 * math.pi) / math.sqrt(12 * n)
    assert abs(Z[:, 3].mean() - 6.0) < 3 * 10 / math.sqrt(12 * n)
    assert abs(Z[:, 5].mean()) < 3 / math.sqrt(n)


def test_noise_sd_scales_residual():
    ds = gen_friedman3(20_000, noise_sd=0.1, seed=9)
    resid = ds.target - friedman3_response(ds.features)
    assert resid.std() == pytest.approx(0.1, rel=0.03)
