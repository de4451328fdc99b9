import csv
import subprocess
import sys

import numpy as np
import pytest

from scoreforest import cascade, vim
from scoreforest.cli import build_parser, main, train_config
from scoreforest.dataset import load_csv


def rows_of(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_generate_friedman1(tmp_path, capsys):
    out = tmp_path / "f1.csv"
    assert main(["generate", "--dataset", "friedman1", "--n", "100", "--p", "10", "--seed", "1",
                 "--out", str(out)]) == 0
    rows = rows_of(out)
    assert len(rows) == 101 and all(len(r) == 11 for r in rows)
    assert "n=100 p=10" in capsys.readouterr().out


def test_generate_mixed_has_51_columns(tmp_path):
    out = tmp_path / "f1m.csv"
    assert main(["generate", "--dataset", "friedman1", "--n", "50", "--p", "50", "--mix", "mixed",
                 "--seed", "2", "--out", str(out)]) == 0
    assert len(rows_of(out)[0]) == 51


def test_generate_prints_seed_when_omitted(tmp_path, capsys):
    assert main(["generate", "--dataset", "friedman3", "--n", "5", "--out", str(tmp_path / "a.csv")]) == 0
    assert capsys.readouterr().out.startswith("seed: ")


@pytest.mark.parametrize("argv", [
    ["generate", "--dataset", "friedman2", "--n", "10", "--p", "12", "--out", "x.csv"],
    ["generate", "--dataset", "friedman1", "--n", "0", "--out", "x.csv"],
    ["train", "--data", "d.csv", "--model-out", "m.json", "--gamma", "1.5"],
    ["train", "--data", "d.csv", "--model-out", "m.json", "--min-node-ratio", "0.2",
     "--min-node-size", "5"],
    ["train", "--data", "d.csv", "--model-out", "m.json", "--min-node-size", "1"],
])
def test_argument_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_train_config_matches_score_cases():
    p = build_parser()
    a = p.parse_args(["train", "--data", "d", "--model-out", "m", "--layers", "2",
                      "--trees-per-layer", "250", "--min-node-ratio", "0.25", "--x-option", "global",
                      "--seed", "1"])
    cfg = train_config(a)
    assert (cfg.max_layers, cfg.forest.n_trees, cfg.forest.min_node_size, cfg.x_option) == \
        (2, 250, 0.25, "global")
    a = p.parse_args(["train", "--data", "d", "--model-out", "m", "--layers", "1",
                      "--trees-per-layer", "500", "--min-node-ratio", "0.2", "--seed", "1"])
    cfg = train_config(a)
    assert (cfg.max_layers, cfg.forest.n_trees, cfg.forest.min_node_size) == (1, 500, 0.2)
    a = p.parse_args(["train", "--data", "d", "--model-out", "m", "--seed", "1"])
    cfg = train_config(a)
    assert (cfg.max_layers, cfg.forest.n_trees, cfg.forest.min_node_size, cfg.gamma, cfg.cv_rule) == \
        (8, 250, 5, 1.0, "one_se")


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = d / "train.csv"
    model = d / "model.json"
    assert main(["generate", "--dataset", "friedman1", "--n", "400", "--seed", "5",
                 "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--layers", "2", "--trees-per-layer", "30",
                 "--min-node-ratio", "0.25", "--seed", "3", "--model-out", str(model)]) == 0
    return d, data, model


def test_predict_matches_library(trained, capsys):
    d, data, model = trained
    out = d / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(data), "--target", "y",
                 "--out", str(out)]) == 0
    assert "MSE" in capsys.readouterr().out
    got = np.array([float(r[0]) for r in rows_of(out)[1:]])
    ds = load_csv(data, "y")
    np.testing.assert_array_equal(got, cascade.load(model).predict(ds.features))


def test_predict_reorders_columns_by_name(trained, tmp_path):
    d, data, model = trained
    rows = rows_of(data)
    perm = list(reversed(range(len(rows[0]))))
    shuffled = tmp_path / "shuffled.csv"
    with open(shuffled, "w", newline="") as fh:
        csv.writer(fh).writerows([[r[j] for j in perm] for r in rows])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["predict", "--model", str(model), "--data", str(data), "--target", "y", "--out", str(a)])
    main(["predict", "--model", str(model), "--data", str(shuffled), "--target", "y", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_predict_width_mismatch_exit_1(trained, tmp_path, capsys):
    d, data, model = trained
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["predict", "--model", str(model), "--data", str(bad), "--out",
                 str(tmp_path / "p.csv")]) == 1
    assert "2 feature columns" in capsys.readouterr().err


def test_vim_top_k(trained, tmp_path, capsys):
    d, data, model = trained
    out = tmp_path / "vim.csv"
    assert main(["vim", "--model", str(model), "--top-k", "5", "--out", str(out)]) == 0
    text = capsys.readouterr().out.splitlines()
    table = text[1:6]
    rep = vim.compute_vim(cascade.load(model))
    expected = [r["feature"] for r in vim.vim_table(rep, top_k=5)]
    assert [line.split()[1] for line in table] == expected
    assert text[6].startswith("relevant (normalized VIM > 1/p")
    assert len(rows_of(out)) == 11


def test_bench_missing_spec_exit_1(tmp_path, capsys):
    missing = tmp_path / "missing.ini"
    assert main(["bench", "--spec", str(missing), "--out", str(tmp_path / "o")]) == 1
    assert str(missing) in capsys.readouterr().err


def test_bench_runs_spec(tmp_path, capsys):
    spec = tmp_path / "s.ini"
    spec.write_text("[experiment]\nsource = friedman3\nn = 100\nn_test = 50\nrepeats = 2\n"
                    "[method et]\nkind = extratrees\ntrees = 10\n")
    assert main(["bench", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "results.csv").exists()
    assert "| et | 100 | 9 |" in capsys.readouterr().out


def test_help_lists_flags_with_defaults():
    out = subprocess.run([sys.executable, "-m", "scoreforest", "train", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for flag in ("--layers", "--trees-per-layer", "--min-node-ratio", "--min-node-size",
                 "--x-option", "--gamma", "--tau0", "--val-fraction", "--seed", "--cv-rule"):
        assert flag in out
    assert "default: 8" in out and "default: global" in out
    for cmd in ("generate", "predict", "vim", "bench"):
        r = subprocess.run([sys.executable, "-m", "scoreforest", cmd, "--help"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and "--" in r.stdout
