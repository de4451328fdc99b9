"""Experiment harness: repeated train/evaluate runs, the nine SCORE cases, reports.

Experiment specs are INI files::

    [experiment]
    source = friedman3        ; friedman1 | friedman2 | friedman3 | csv
    n = 5000                  ; comma-separated list for an n grid
    n_test = 5000
    repeats = 10
    seed = 1

    [method score8]
    kind = score              ; score | extratrees
    case = 8                  ; optional SCORE case 1..9; explicit keys override it

CSV sources use ``path``, ``target`` and ``train_size`` (the rest of the rows
form the test set of each repeat).
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .cascade import CascadeConfig, predict, train
from .dataset import Dataset, gen_friedman1, gen_friedman2, gen_friedman3, holdout, load_csv
from .extratrees import ForestConfig, build_forest, predict_forest
from .vim import compute_vim

# SCORE case -> (layers, trees per layer, min node size ratio, x option)
SCORE_CASES = {
    1: (1, 500, 1 / 5, "global"),
    2: (1, 500, 1 / 4, "global"),
    3: (1, 500, 1 / 3, "global"),
    4: (2, 250, 1 / 5, "local"),
    5: (2, 250, 1 / 4, "local"),
    6: (2, 250, 1 / 3, "local"),
    7: (2, 250, 1 / 5, "global"),
    8: (2, 250, 1 / 4, "global"),
    9: (2, 250, 1 / 3, "global"),
}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str = "score"
    layers: int = 2
    n_trees: int = 250
    min_node_size: float = 5
    x_option: str = "global"
    gamma: float = 1.0
    tau0: float = 0.0
    k_candidates: Optional[int] = None
    cv_rule: str = "one_se"
    vim: bool = False


def score_case(case: int, name: Optional[str] = None, **overrides) -> MethodSpec:
    if case not in SCORE_CASES:
        raise SpecError(f"unknown SCORE case {case}; expected 1..9")
    layers, trees, ratio, x_option = SCORE_CASES[case]
    base = MethodSpec(name or f"score{case}", "score", layers, trees, ratio, x_option)
    return replace(base, **overrides)


@dataclass(frozen=True)
class ExperimentSpec:
    source: str
    n_grid: tuple = (1000,)
    n_test: int = 5000
    p: Optional[int] = None
    mix: str = "uniform_only"
    noise_sd: Optional[float] = None
    literal: bool = False
    csv_path: Optional[str] = None
    target: Optional[str] = None
    repeats: int = 10
    seed: int = 0
    val_fraction: float = 0.2
    methods: tuple = ()
    n_jobs: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise SpecError("repeats must be >= 1")
        if self.source not in ("friedman1", "friedman2", "friedman3", "csv"):
            raise SpecError(f"unknown source {self.source!r}")
        if self.source == "csv" and not (self.csv_path and self.target):
            raise SpecError("csv source needs path and target")
        if self.source in ("friedman2", "friedman3") and self.p not in (None, 9):
            raise SpecError(f"{self.source} has p=9; got p={self.p}")
        if not self.methods:
            raise SpecError("experiment lists no methods")
        for m in self.methods:
            if m.kind not in ("score", "extratrees"):
                raise SpecError(f"method {m.name}: unknown kind {m.kind!r}")


@dataclass
class ResultRow:
    method: str
    n: int
    p: int
    repeats: int
    mean_mse: float
    sd_mse: float
    mean_seconds: float
    mses: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    relevant: Optional[List[str]] = None
    relevant_per_repeat: Optional[List[List[str]]] = None
    mean_normalized_vim: Optional[List[float]] = None
    flags: List[str] = field(default_factory=list)


# --- spec parsing ---------------------------------------------------------------

_METHOD_KEYS = frozenset({
    "kind", "layers", "trees_per_layer", "trees", "min_node_size", "min_node_ratio",
    "x_option", "gamma", "tau0", "k_candidates", "cv_rule", "vim", "case",
})


def _min_node(value: float):
    return int(value) if value >= 1 else float(value)


def parse_spec(path) -> ExperimentSpec:
    if not os.path.isfile(path):
        raise SpecError(f"spec file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(path)
    if "experiment" not in cp:
        raise SpecError(f"{path}: missing [experiment] section")
    e = cp["experiment"]
    try:
        n_grid = tuple(int(v) for v in e.get("n", "1000").split(","))
        kw = dict(
            source=e.get("source", "friedman1"), n_grid=n_grid,
            n_test=e.getint("n_test", 5000),
            p=e.getint("p") if "p" in e else None,
            mix=e.get("mix", "uniform_only"),
            noise_sd=e.getfloat("noise_sd") if "noise_sd" in e else None,
            literal=e.getboolean("literal_formula", False),
            csv_path=e.get("path"), target=e.get("target"),
            repeats=e.getint("repeats", 10), seed=e.getint("seed", 0),
            val_fraction=e.getfloat("val_fraction", 0.2), n_jobs=e.getint("n_jobs", 1),
        )
        if kw["source"] == "csv":
            kw["n_grid"] = (e.getint("train_size"),)
        methods = []
        for sec in cp.sections():
            if not sec.startswith("method"):
                continue
            name = sec.split(None, 1)[1].strip() if " " in sec else sec
            s = cp[sec]
            unknown = set(s) - set(_METHOD_KEYS)
            if unknown:
                raise SpecError(f"[{sec}]: unknown keys {sorted(unknown)}")
            m = score_case(s.getint("case"), name) if "case" in s else MethodSpec(name)
            upd = {}
            if "kind" in s:
                upd["kind"] = s["kind"]
            for key in ("layers", "k_candidates"):
                if key in s:
                    upd[key] = s.getint(key)
            for key in ("trees_per_layer", "trees"):
                if key in s:
                    upd["n_trees"] = s.getint(key)
            for key in ("min_node_size", "min_node_ratio"):
                if key in s:
                    upd["min_node_size"] = _min_node(s.getfloat(key))
            for key in ("gamma", "tau0"):
                if key in s:
                    upd[key] = s.getfloat(key)
            for key in ("x_option", "cv_rule"):
                if key in s:
                    upd[key] = s[key]
            if "vim" in s:
                upd["vim"] = s.getboolean("vim")
            methods.append(replace(m, **upd))
        kw["methods"] = tuple(methods)
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"{path}: {exc}") from None
    return ExperimentSpec(**kw)


# --- running --------------------------------------------------------------------

def _repeat_seeds(seed: int, n: int, r: int) -> Dict[str, int]:
    ss = np.random.SeedSequence([int(seed), int(n), int(r)])
    a = ss.generate_state(4, dtype=np.uint32)
    return {"train": int(a[0]), "test": int(a[1]), "split": int(a[2]), "model": int(a[3])}


def _generate(spec: ExperimentSpec, n: int, seed: int) -> Dataset:
    kw = {} if spec.noise_sd is None else {"noise_sd": spec.noise_sd}
    if spec.source == "friedman1":
        return gen_friedman1(n, p_total=spec.p or 10, irrelevant_mix=spec.mix, seed=seed, **kw)
    if spec.source == "friedman2":
        return gen_friedman2(n, seed=seed, literal=spec.literal, **kw)
    return gen_friedman3(n, seed=seed, **kw)


def make_repeat_data(spec: ExperimentSpec, n: int, r: int, full: Optional[Dataset] = None):
    seeds = _repeat_seeds(spec.seed, n, r)
    if spec.source == "csv":
        if n >= full.n:
            raise SpecError(f"train_size {n} leaves no test rows (dataset has {full.n})")
        perm = np.random.default_rng(seeds["train"]).permutation(full.n)
        return full.take(np.sort(perm[:n])), full.take(np.sort(perm[n:])), seeds
    return _generate(spec, n, seeds["train"]), _generate(spec, spec.n_test, seeds["test"]), seeds


def method_config(m: MethodSpec, seed: int) -> CascadeConfig:
    forest = ForestConfig(n_trees=m.n_trees, k_candidates=m.k_candidates,
                          min_node_size=_min_node(m.min_node_size), seed=seed)
    return CascadeConfig(forest=forest, x_option=m.x_option, gamma=m.gamma, tau0=m.tau0,
                         max_layers=m.layers, cv_rule=m.cv_rule)


def run_method(m: MethodSpec, train_ds: Dataset, test_ds: Dataset, seeds: Dict[str, int],
               val_fraction: float = 0.2):
    """Train and evaluate one method; returns ``(test MSE, seconds, vim report or None)``.

    Timing covers training and test prediction only.
    """
    if m.kind == "extratrees":
        forest = ForestConfig(n_trees=m.n_trees, k_candidates=m.k_candidates,
                              min_node_size=_min_node(m.min_node_size), seed=seeds["model"])
        t0 = time.perf_counter()
        trees = build_forest(train_ds.features, train_ds.target, forest)
        pred = predict_forest(trees, test_ds.features).mean(axis=1)
        secs = time.perf_counter() - t0
        report = None
    else:
        fit_ds, val_ds = holdout(train_ds, val_fraction, seed=seeds["split"])
        t0 = time.perf_counter()
        model = train(fit_ds, val_ds, method_config(m, seeds["model"]))
        pred = predict(model, test_ds.features)
        secs = time.perf_counter() - t0
        report = compute_vim(model) if m.vim else None
    r = test_ds.target - pred
    return float(r @ r / len(r)), secs, report


class RunningStats:
    """Welford accumulator for mean and sample standard deviation."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self._m2 += d * (x - self.mean)

    @property
    def sd(self) -> float:
        return math.sqrt(self._m2 / (self.count - 1)) if self.count > 1 else 0.0


def _one_repeat(args):
    spec, n, r, full = args
    train_ds, test_ds, seeds = make_repeat_data(spec, n, r, full)
    return [run_method(m, train_ds, test_ds, seeds, spec.val_fraction) for m in spec.methods], train_ds.p


def run_experiment(spec: ExperimentSpec, progress=None) -> List[ResultRow]:
    """Run every method on every repeat for each n in the grid and aggregate."""
    full = load_csv(spec.csv_path, spec.target) if spec.source == "csv" else None
    rows = []
    for n in spec.n_grid:
        jobs = [(spec, n, r, full) for r in range(spec.repeats)]
        if spec.n_jobs > 1:
            with ProcessPoolExecutor(spec.n_jobs) as pool:
                outcomes = list(pool.map(_one_repeat, jobs))
        else:
            outcomes = []
            for job in jobs:
                outcomes.append(_one_repeat(job))
                if progress:
                    progress(f"n={n} repeat {job[2] + 1}/{spec.repeats} done")
        p = outcomes[0][1]
        for i, m in enumerate(spec.methods):
            mse_stats, sec_stats = RunningStats(), RunningStats()
            mses, secs, reports = [], [], []
            for results, _ in outcomes:
                mse, sec, rep = results[i]
                mse_stats.push(mse)
                sec_stats.push(sec)
                mses.append(mse)
                secs.append(sec)
                reports.append(rep)
            row = ResultRow(m.name, n, p, spec.repeats, mse_stats.mean, mse_stats.sd,
                            sec_stats.mean, mses, secs)
            if spec.repeats == 1:
                row.flags.append("sd_undefined_single_repeat")
            if m.vim and reports and all(rp is not None for rp in reports):
                names = reports[0].feature_names
                row.relevant_per_repeat = [[names[j] for j in rp.relevant] for rp in reports]
                valid = [rp.normalized for rp in reports if rp.normalized is not None]
                if valid:
                    avg = np.mean(valid, axis=0)
                    row.mean_normalized_vim = [float(v) for v in avg]
                    row.relevant = [names[j] for j in np.argsort(-avg, kind="stable")
                                    if avg[j] > 1.0 / len(avg)]
            rows.append(row)
    return rows


# --- error decomposition ------------------------------------------------------------

def error_decomposition(preds, y) -> Dict[str, float]:
    """Bias/variance/covariance split of the ensemble-mean squared error.

    ``preds`` has shape ``(repeats, M, G)``: for each repeat, every learner's
    predictions on a fixed grid of ``G`` points with targets ``y``.
    Expectations are the across-repeat empirical means and each term is
    averaged over the grid, so ``bias_sq + avg_var + avg_cov == ensemble_mse``
    up to rounding.
    """
    F = np.asarray(preds, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if F.ndim != 3:
        raise ValueError("preds must have shape (repeats, learners, grid points)")
    R, M, G = F.shape
    if R < 2:
        raise ValueError("need at least 2 repeats to estimate variances")
    if y.shape != (G,):
        raise ValueError(f"y must have length {G}")
    mean = F.mean(axis=0)                      # (M, G)
    dev = F - mean                             # (R, M, G)
    bias_sq = (mean - y).sum(axis=0) ** 2 / M ** 2
    var = (dev ** 2).mean(axis=0).sum(axis=0) / M ** 2
    dsum = dev.sum(axis=1)                     # (R, G)
    # sum over i != j of cov_ij = var(sum_i f_i) - sum_i var_i
    cov = ((dsum ** 2).mean(axis=0) - (dev ** 2).mean(axis=0).sum(axis=0)) / M ** 2
    if M == 1:
        cov = np.zeros(G)
    ens = F.mean(axis=1)                       # (R, G)
    mse = ((ens - y) ** 2).mean(axis=0)
    return {"bias_sq": float(bias_sq.mean()), "avg_var": float(var.mean()),
            "avg_cov": float(cov.mean()), "ensemble_mse": float(mse.mean())}


# --- reporting ----------------------------------------------------------------------

def write_results(rows: Sequence[ResultRow], out_dir) -> Dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    md_path = os.path.join(out_dir, "results.md")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n", "p", "repeats", "mean_mse", "sd_mse", "mean_seconds",
                    "relevant", "flags"])
        for r in rows:
            w.writerow([r.method, r.n, r.p, r.repeats, format(r.mean_mse, ".17g"),
                        format(r.sd_mse, ".17g"), format(r.mean_seconds, ".6g"),
                        " ".join(r.relevant or []), " ".join(r.flags)])
    with open(md_path, "w") as fh:
        fh.write(markdown_table(rows) + "\n")
    return {"csv": csv_path, "markdown": md_path}


def markdown_table(rows: Sequence[ResultRow]) -> str:
    lines = ["| method | n | p | mean MSE (SD) | mean s | relevant |",
             "|---|---:|---:|---|---:|---|"]
    for r in rows:
        rel = ", ".join(r.relevant) if r.relevant is not None else ""
        lines.append(f"| {r.method} | {r.n} | {r.p} | {r.mean_mse:.4g} ({r.sd_mse:.3g}) "
                     f"| {r.mean_seconds:.2f} | {rel} |")
    return "\n".join(lines)
