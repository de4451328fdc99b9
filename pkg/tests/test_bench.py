import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoreforest import bench
from scoreforest.bench import (
    ExperimentSpec, MethodSpec, RunningStats, SpecError, error_decomposition, parse_spec,
    run_experiment, score_case)


def test_decomposition_hand_example():
    # three learners, constant over the 2-point grid, two repeats
    preds = np.array([[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]],
                      [[3.0, 3.0], [2.0, 2.0], [1.0, 1.0]]])
    d = error_decomposition(preds, np.array([2.0, 0.0]))
    assert d["bias_sq"] == pytest.approx(2.0, abs=1e-15)
    assert d["avg_var"] == pytest.approx(2 / 9, abs=1e-15)
    assert d["avg_cov"] == pytest.approx(-2 / 9, abs=1e-15)
    assert d["ensemble_mse"] == pytest.approx(2.0, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(R=st.integers(2, 8), M=st.integers(1, 6), G=st.integers(1, 5), seed=st.integers(0, 10 ** 6))
def test_decomposition_identity(R, M, G, seed):
    rng = np.random.default_rng(seed)
    preds = rng.normal(size=(R, M, G)) * rng.uniform(0.1, 10) + rng.normal(size=(1, M, G))
    y = rng.normal(size=G)
    d = error_decomposition(preds, y)
    total = d["bias_sq"] + d["avg_var"] + d["avg_cov"]
    assert total == pytest.approx(d["ensemble_mse"], rel=1e-10, abs=1e-300)
    if M == 1:
        assert d["avg_cov"] == 0.0


def test_decomposition_identical_learners():
    rng = np.random.default_rng(1)
    one = rng.normal(size=(6, 1, 4))
    d = error_decomposition(np.concatenate([one, one], axis=1), rng.normal(size=4))
    assert d["avg_cov"] == pytest.approx(d["avg_var"], rel=1e-12)


def test_decomposition_errors():
    with pytest.raises(ValueError):
        error_decomposition(np.zeros((1, 2, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        error_decomposition(np.zeros((2, 2)), np.zeros(2))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
def test_running_stats_match_two_pass(xs):
    rs = RunningStats()
    for x in xs:
        rs.push(x)
    mean = sum(xs) / len(xs)
    sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)) if len(xs) > 1 else 0.0
    scale = max(1.0, max(abs(x) for x in xs))
    assert rs.mean == pytest.approx(mean, rel=1e-12, abs=1e-12 * scale)
    assert rs.sd == pytest.approx(sd, rel=1e-12, abs=1e-9 * scale)


def test_score_cases_table():
    assert score_case(1) == MethodSpec("score1", "score", 1, 500, 1 / 5, "global")
    assert score_case(4).x_option == "local" and score_case(4).layers == 2
    assert score_case(8).min_node_size == 1 / 4 and score_case(8).n_trees == 250
    assert score_case(9, vim=True).vim
    with pytest.raises(SpecError):
        score_case(10)


def write_spec(tmp_path, text):
    path = tmp_path / "spec.ini"
    path.write_text(text)
    return str(path)


def test_parse_spec(tmp_path):
    path = write_spec(tmp_path, """
[experiment]
source = friedman1
n = 200, 400
n_test = 300
p = 50
mix = mixed
repeats = 3
seed = 7

[method score8]
case = 8
vim = true

[method et]
kind = extratrees
trees = 500
min_node_ratio = 0.25

[method custom]
layers = 3
min_node_size = 5
x_option = local
gamma = 0.5
""")
    spec = parse_spec(path)
    assert spec.n_grid == (200, 400) and spec.p == 50 and spec.mix == "mixed"
    s8, et, custom = spec.methods
    assert s8 == score_case(8, "score8", vim=True)
    assert (et.kind, et.n_trees, et.min_node_size) == ("extratrees", 500, 0.25)
    assert (custom.layers, custom.min_node_size, custom.x_option, custom.gamma) == (3, 5, "local", 0.5)
    assert isinstance(custom.min_node_size, int)


def test_parse_spec_errors(tmp_path):
    with pytest.raises(SpecError, match="nope.ini"):
        parse_spec(str(tmp_path / "nope.ini"))
    with pytest.raises(SpecError, match="unknown keys"):
        parse_spec(write_spec(tmp_path, "[experiment]\n[method a]\ncolour = red\n"))
    with pytest.raises(SpecError, match="no methods"):
        parse_spec(write_spec(tmp_path, "[experiment]\nsource = friedman3\n"))
    with pytest.raises(SpecError, match="p=9"):
        parse_spec(write_spec(tmp_path, "[experiment]\nsource = friedman2\np = 12\n[method a]\n"))
    with pytest.raises(SpecError):
        parse_spec(write_spec(tmp_path, "[experiment]\nrepeats = many\n[method a]\n"))


def tiny_spec(repeats=2, **kw):
    methods = (MethodSpec("score", n_trees=15, min_node_size=0.25, vim=True),
               MethodSpec("et", kind="extratrees", n_trees=15, min_node_size=0.25))
    return ExperimentSpec(source="friedman1", n_grid=(120,), n_test=80, repeats=repeats, seed=3,
                          methods=methods, **kw)


def test_run_experiment_deterministic_and_complete():
    a = run_experiment(tiny_spec())
    b = run_experiment(tiny_spec())
    assert [r.method for r in a] == ["score", "et"]
    for ra, rb in zip(a, b):
        assert ra.mses == rb.mses and ra.mean_mse == rb.mean_mse and ra.sd_mse == rb.sd_mse
        assert ra.relevant_per_repeat == rb.relevant_per_repeat
        assert len(ra.mses) == 2 and ra.p == 10 and ra.flags == []
    assert a[0].relevant_per_repeat is not None and len(a[0].mean_normalized_vim) == 10
    assert a[1].relevant is None
    assert a[0].mean_mse == pytest.approx(np.mean(a[0].mses))


def test_single_repeat_flags_sd():
    rows = run_experiment(tiny_spec(repeats=1))
    assert all(r.sd_mse == 0.0 and "sd_undefined_single_repeat" in r.flags for r in rows)


def test_csv_source_and_reports(tmp_path):
    from scoreforest.dataset import gen_friedman3, write_csv
    write_csv(gen_friedman3(150, seed=1), tmp_path / "f3.csv")
    spec = ExperimentSpec(source="csv", csv_path=str(tmp_path / "f3.csv"), target="y",
                          n_grid=(100,), repeats=2, methods=(MethodSpec("et", kind="extratrees",
                                                                       n_trees=10),))
    rows = run_experiment(spec)
    assert rows[0].p == 9
    paths = bench.write_results(rows, tmp_path / "out")
    text = open(paths["csv"]).read().splitlines()
    assert text[0].startswith("method,n,p,repeats,mean_mse")
    assert text[1].startswith("et,100,9,2,")
    assert "| et | 100 | 9 |" in open(paths["markdown"]).read()
    bad = ExperimentSpec(source="csv", csv_path=str(tmp_path / "f3.csv"), target="y",
                         n_grid=(150,), repeats=1, methods=spec.methods)
    with pytest.raises(SpecError, match="no test rows"):
        run_experiment(bad)
