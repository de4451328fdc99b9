"""Wall-clock of SCORE case 4 (local inputs) against case 7 (global inputs).

Each run trains and predicts both cases on the same data, alternating which goes
first. Prints per-phase timings so the cost of tree building and of lasso
selection can be told apart.

    python scripts/timing_cases.py --n 2000 --runs 5
"""

import argparse
import statistics
import time

import numpy as np

from scoreforest import cascade, lasso
from scoreforest.bench import ExperimentSpec, make_repeat_data, method_config, score_case
from scoreforest.dataset import holdout

_phase = {}


def _timed(name, fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            _phase[name] = _phase.get(name, 0.0) + time.perf_counter() - t0
    return wrapper


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    cascade.build_forest = _timed("forest", cascade.build_forest)
    cascade.lasso.cv_tune = _timed("lasso", lasso.cv_tune)
    spec = ExperimentSpec(source="friedman1", n_grid=(args.n,), n_test=1000, p=args.p,
                          repeats=args.runs, seed=args.seed, methods=(score_case(4), score_case(7)))
    totals = {4: [], 7: []}
    for r in range(args.runs):
        train_ds, test_ds, seeds = make_repeat_data(spec, args.n, r)
        fit_ds, val_ds = holdout(train_ds, 0.2, seed=seeds["split"])
        for case in ((4, 7) if r % 2 == 0 else (7, 4)):
            _phase.clear()
            t0 = time.perf_counter()
            model = cascade.train(fit_ds, val_ds, method_config(score_case(case), seeds["model"]))
            mse = float(np.mean((test_ds.target - model.predict(test_ds.features)) ** 2))
            secs = time.perf_counter() - t0
            totals[case].append(secs)
            widths = [layer.width for layer in model.layers]
            print(f"run {r} case {case}: {secs:6.2f}s  forest {_phase.get('forest', 0):5.2f}s  "
                  f"lasso {_phase.get('lasso', 0):5.2f}s  layers {model.n_layers} "
                  f"widths {widths} selected {model.metadata['selected_counts']}  MSE {mse:.3f}")
    m4, m7 = statistics.median(totals[4]), statistics.median(totals[7])
    print(f"\nmedian case 4 (local) {m4:.2f}s, case 7 (global) {m7:.2f}s")


if __name__ == "__main__":
    main()
