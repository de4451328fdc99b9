"""Bias / variance / covariance split of a forest's ensemble-mean error.

Trains R independent forests (fresh training sample each time) on Friedman 1
and evaluates every tree on one fixed grid. Compares all M trees with the
subset a lasso keeps, to show where the selected ensemble gains or loses.

    python scripts/error_decomposition.py --repeats 20 --trees 100
"""

import argparse

import numpy as np

from scoreforest import lasso
from scoreforest.bench import error_decomposition
from scoreforest.dataset import friedman1_response, gen_friedman1
from scoreforest.extratrees import ForestConfig, build_forest, predict_forest


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--grid", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = np.random.default_rng(args.seed).uniform(size=(args.grid, 10))
    truth = friedman1_response(grid)
    all_preds, sel_preds = [], []
    for r in range(args.repeats):
        ds = gen_friedman1(args.n, seed=[args.seed, r])
        trees = build_forest(ds.features, ds.target,
                             ForestConfig(n_trees=args.trees, min_node_size=0.25, seed=r))
        P = predict_forest(trees, grid)
        all_preds.append(P.T)
        cv = lasso.cv_tune(predict_forest(trees, ds.features), ds.target, seed=r)
        # the lasso combination b0 + sum_i b_i T_i written as the mean of M learners
        # b0 + M b_i T_i (unselected trees become the constant b0)
        M = args.trees
        sel_preds.append((cv.fit.intercept + M * cv.fit.coefficients * P).T)
        print(f"repeat {r}: {len(cv.fit.selected)} of {M} trees selected")
    for name, preds in (("all trees, plain mean", all_preds), ("selected, lasso weights", sel_preds)):
        d = error_decomposition(np.array(preds), truth)
        print(f"{name:>24}: bias^2 {d['bias_sq']:.3f}  var {d['avg_var']:.3f}  "
              f"cov {d['avg_cov']:.3f}  ensemble MSE {d['ensemble_mse']:.3f}")


if __name__ == "__main__":
    main()
