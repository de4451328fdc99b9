"""``scoreforest`` command line: generate, train, predict, vim, bench.

Exit status is 0 on success, 2 for argument errors and 1 for runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import secrets
import sys

import numpy as np

from . import bench, cascade, dataset, vim
from .extratrees import ForestConfig


class CliError(Exception):
    pass


def _gamma(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"gamma must lie in (0, 1], got {text}")
    return v


def _ratio(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"ratio must lie in (0, 1), got {text}")
    return v


def _fraction(text: str) -> float:
    return _ratio(text)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _non_negative(text: str) -> float:
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _node_size(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"min node size must be >= 2, got {text}")
    return v


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        print(f"seed: {args.seed}")
    return args.seed


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults, except for options whose help already explains a ``None`` default."""

    def _get_help_string(self, action):
        if action.default is None or action.required:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _Formatter
    parser = argparse.ArgumentParser(prog="scoreforest", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a Friedman benchmark dataset", formatter_class=fmt)
    g.add_argument("--dataset", required=True, choices=["friedman1", "friedman2", "friedman3"],
                   help="benchmark surface")
    g.add_argument("--n", type=_positive_int, required=True, help="number of rows")
    g.add_argument("--p", type=int, default=None,
                   help="total inputs (friedman1 only; default 10)")
    g.add_argument("--mix", choices=["uniform_only", "mixed"], default=None,
                   help="irrelevant-input distribution (friedman1 only; default uniform_only)")
    g.add_argument("--noise-sd", type=_non_negative, default=None,
                   help="noise standard deviation (default 1, 125, 0.1 for friedman1/2/3)")
    g.add_argument("--literal-formula", action="store_true",
                   help="friedman2 only: use the x1^2 + sqrt(x2*x3 - (x2*x4)^-2) surface")
    g.add_argument("--seed", type=int, default=None, help="random seed (default: fresh entropy)")
    g.add_argument("--out", required=True, help="output CSV path")

    t = sub.add_parser("train", help="train a SCORE cascade on a CSV file", formatter_class=fmt)
    t.add_argument("--data", required=True, help="training CSV with header")
    t.add_argument("--target", default="y", help="target column name")
    t.add_argument("--layers", type=_positive_int, default=8, help="maximum number of layers")
    t.add_argument("--trees-per-layer", type=_positive_int, default=250,
                   help="ExtraTrees forest size in every layer")
    node = t.add_mutually_exclusive_group()
    node.add_argument("--min-node-ratio", type=_ratio, default=None,
                      help="minimal node size as a fraction of the layer's training rows")
    node.add_argument("--min-node-size", type=_node_size, default=None,
                      help="absolute minimal node size (default 5 when no ratio is given)")
    t.add_argument("--k-candidates", type=_positive_int, default=None,
                   help="candidate features per split (default: all)")
    t.add_argument("--x-option", choices=["local", "global"], default="global",
                   help="inputs of layers after the first: previous layer only, or all so far")
    t.add_argument("--gamma", type=_gamma, default=1.0, help="learning rate in (0, 1]")
    t.add_argument("--tau0", type=_non_negative, default=0.0, help="stopping threshold")
    t.add_argument("--cv-rule", choices=["one_se", "min"], default="one_se",
                   help="lambda choice from the cross-validation curve")
    t.add_argument("--val-fraction", type=_fraction, default=0.2,
                   help="fraction of the rows held out for validation")
    t.add_argument("--seed", type=int, default=None, help="random seed (default: fresh entropy)")
    t.add_argument("--model-out", required=True, help="output model JSON path")

    pr = sub.add_parser("predict", help="predict with a saved model", formatter_class=fmt)
    pr.add_argument("--model", required=True, help="model JSON written by train")
    pr.add_argument("--data", required=True, help="CSV with header")
    pr.add_argument("--target", default=None,
                    help="target column to drop before predicting (MSE is reported)")
    pr.add_argument("--out", required=True, help="output CSV of predictions")

    v = sub.add_parser("vim", help="variable importance of a saved model", formatter_class=fmt)
    v.add_argument("--model", required=True, help="model JSON written by train")
    v.add_argument("--out", default=None, help="optional CSV report path")
    v.add_argument("--top-k", type=_positive_int, default=None, help="rows to print (default: all)")

    b = sub.add_parser("bench", help="run an experiment spec", formatter_class=fmt)
    b.add_argument("--spec", required=True, help="INI experiment spec")
    b.add_argument("--out", required=True, help="output directory")
    return parser


def cmd_generate(args, parser) -> int:
    if args.dataset != "friedman1" and (args.p is not None or args.mix is not None):
        parser.error(f"--p/--mix apply to friedman1 only, not {args.dataset}")
    if args.literal_formula and args.dataset != "friedman2":
        parser.error("--literal-formula applies to friedman2 only")
    seed = _seed(args)
    kw = {} if args.noise_sd is None else {"noise_sd": args.noise_sd}
    if args.dataset == "friedman1":
        ds = dataset.gen_friedman1(args.n, p_total=10 if args.p is None else args.p,
                                   irrelevant_mix=args.mix or "uniform_only", seed=seed, **kw)
    elif args.dataset == "friedman2":
        ds = dataset.gen_friedman2(args.n, seed=seed, literal=args.literal_formula, **kw)
    else:
        ds = dataset.gen_friedman3(args.n, seed=seed, **kw)
    dataset.write_csv(ds, args.out)
    y = ds.target
    print(f"wrote {args.out}: n={ds.n} p={ds.p} "
          f"y mean={y.mean():.6g} sd={y.std(ddof=1) if ds.n > 1 else 0.0:.6g} "
          f"min={y.min():.6g} max={y.max():.6g}")
    return 0


def train_config(args) -> cascade.CascadeConfig:
    if args.min_node_ratio is not None:
        node = float(args.min_node_ratio)
    else:
        node = 5 if args.min_node_size is None else args.min_node_size
    forest = ForestConfig(n_trees=args.trees_per_layer, k_candidates=args.k_candidates,
                          min_node_size=node, seed=args.seed)
    return cascade.CascadeConfig(forest=forest, x_option=args.x_option, gamma=args.gamma,
                                 tau0=args.tau0, max_layers=args.layers, cv_rule=args.cv_rule)


def cmd_train(args, parser) -> int:
    seed = _seed(args)
    ds = dataset.load_csv(args.data, args.target)
    fit_ds, val_ds = dataset.holdout(ds, args.val_fraction, seed=seed)
    model = cascade.train(fit_ds, val_ds, train_config(args))
    cascade.save(model, args.model_out)
    print(f"trained {model.n_layers} layer(s) on {fit_ds.n} rows, validated on {val_ds.n}")
    for k, (mse, cnt) in enumerate(zip(model.mse_trace, model.metadata["selected_counts"])):
        print(f"  layer {k + 1}: selected {cnt}/{args.trees_per_layer} trees, "
              f"validation MSE {mse:.6g}")
    if model.metadata.get("discarded"):
        d = model.metadata["discarded"]
        print(f"  layer {d['layer']} discarded: {d['reason']}")
    for w in model.metadata.get("warnings", []):
        print(f"  warning: {w}")
    print(f"model written to {args.model_out}")
    return 0


def _feature_matrix(model, path, target):
    ds_names, X, y = _read_table(path, target)
    if set(model.feature_names) <= set(ds_names):
        cols = [ds_names.index(name) for name in model.feature_names]
        X = X[:, cols]
    if X.shape[1] != model.p:
        raise CliError(f"data has {X.shape[1]} feature columns but the model expects {model.p}")
    return X, y


def _read_table(path, target):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise CliError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]])
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None
    y = None
    if target is not None:
        if target not in header:
            raise CliError(f"{path}: unknown target column {target!r}")
        t = header.index(target)
        y = data[:, t]
        data = np.delete(data, t, axis=1)
        header = header[:t] + header[t + 1:]
    return header, data, y


def cmd_predict(args, parser) -> int:
    model = cascade.load(args.model)
    X, y = _feature_matrix(model, args.data, args.target)
    pred = cascade.predict(model, X)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prediction"])
        for v in pred:
            w.writerow([format(v, ".17g")])
    msg = f"wrote {len(pred)} predictions to {args.out}"
    if y is not None:
        msg += f"; MSE {np.mean((y - pred) ** 2):.6g}"
    print(msg)
    return 0


def cmd_vim(args, parser) -> int:
    model = cascade.load(args.model)
    report = vim.compute_vim(model)
    if report.zero_denominator:
        print("model selected no trees: all importances are zero")
    print(vim.format_table(vim.vim_table(report, top_k=args.top_k)))
    names = [model.feature_names[j] for j in report.relevant]
    print(f"relevant (normalized VIM > 1/p = {1 / model.p:.4g}): {', '.join(names) or 'none'}")
    if args.out:
        vim.write_csv(report, args.out)
    return 0


def cmd_bench(args, parser) -> int:
    spec = bench.parse_spec(args.spec)
    rows = bench.run_experiment(spec, progress=print)
    paths = bench.write_results(rows, args.out)
    print(bench.markdown_table(rows))
    print(f"results written to {paths['csv']} and {paths['markdown']}")
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict,
            "vim": cmd_vim, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except (CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
