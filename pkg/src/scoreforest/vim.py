"""Variable importance for a trained cascade.

Every selected tree carries an attribution vector over the original features:
its own split counts on original features, plus, for each split on an earlier
layer's tree output, that tree's attribution vector. A layer's importance is
the |coefficient|-weighted sum of its selected trees' vectors. Coefficient
magnitudes are taken on the original tree-output scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cascade import CascadeModel, RepresentationFeature


@dataclass
class FrequencyMatrices:
    """Split counts of selected trees, split by where each input column comes from.

    ``cx[l]`` is ``p x M_l``: column ``i`` counts the splits that selected tree
    ``i`` of layer ``l`` makes on each original feature. ``ct[(k, l)]`` is
    ``M_k x M_l``: entry ``(j, i)`` counts splits of layer-``l`` tree ``i`` on
    the output of layer-``k`` selected tree ``j``. Layers are 0-based.
    """

    cx: List[np.ndarray]
    ct: Dict[Tuple[int, int], np.ndarray]
    selected: List[np.ndarray]
    abs_beta: List[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.cx)


@dataclass
class VimReport:
    raw: np.ndarray
    normalized: Optional[np.ndarray]
    direct: np.ndarray
    indirect: np.ndarray
    relevant: List[int]
    per_layer: List[np.ndarray]
    feature_names: Tuple[str, ...] = ()
    zero_denominator: bool = False

    @property
    def p(self) -> int:
        return len(self.raw)


def extract_frequencies(model: CascadeModel) -> FrequencyMatrices:
    p = model.p
    cx, ct, selected, abs_beta = [], {}, [], []
    for l, layer in enumerate(model.layers):
        sel = layer.selected
        selected.append(sel)
        abs_beta.append(np.abs(layer.coefficients[sel]))
        cx_l = np.zeros((p, len(sel)), dtype=np.int64)
        # position of each earlier tree among its layer's selected trees
        rank = {(k, int(t)): r for k in range(l) for r, t in enumerate(selected[k])}
        for k in range(l):
            ct[(k, l)] = np.zeros((len(selected[k]), len(sel)), dtype=np.int64)
        for i, t in enumerate(sel):
            counts = layer.trees[t].split_counts
            for col in np.flatnonzero(counts):
                src = layer.input_map[col]
                if isinstance(src, RepresentationFeature):
                    ct[(src.layer, l)][rank[(src.layer, src.tree)], i] += counts[col]
                else:
                    cx_l[src.index, i] += counts[col]
        cx.append(cx_l)
    return FrequencyMatrices(cx, ct, selected, abs_beta)


def _weighted_columns(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``A @ w`` accumulated column by column, so the summation order is fixed."""
    out = np.zeros(A.shape[0])
    for i, wi in enumerate(w):
        out += wi * A[:, i]
    return out


def vim_from_frequencies(freq: FrequencyMatrices, feature_names: Sequence[str] = ()) -> VimReport:
    """Attribution recursion over layers; see the module docstring."""
    p = freq.cx[0].shape[0] if freq.cx else len(feature_names)
    phi: List[np.ndarray] = []
    direct = np.zeros(p)
    indirect = np.zeros(p)
    per_layer = []
    for l in range(freq.n_layers):
        routed = np.zeros_like(freq.cx[l], dtype=np.float64)
        for k in range(l):
            routed += phi[k] @ freq.ct[(k, l)]
        phi.append(freq.cx[l] + routed)
        w = freq.abs_beta[l]
        d = _weighted_columns(freq.cx[l], w)
        r = _weighted_columns(routed, w)
        direct += d
        indirect += r
        per_layer.append(d + r)
    raw = direct + indirect
    total = raw.sum()
    names = tuple(feature_names) or tuple(f"x{j + 1}" for j in range(p))
    if total > 0:
        normalized = raw / total
        relevant = [j for j in range(p) if normalized[j] > 1.0 / p]
        zero = False
    else:
        normalized, relevant, zero = None, [], True
    return VimReport(raw, normalized, direct, indirect, relevant, per_layer, names, zero)


def compute_vim(model: CascadeModel) -> VimReport:
    return vim_from_frequencies(extract_frequencies(model), model.feature_names)


def vim_table(report: VimReport, names: Optional[Sequence[str]] = None,
              top_k: Optional[int] = None) -> List[dict]:
    """Features ranked by descending normalized importance, ties by index."""
    if top_k is not None and top_k < 1:
        raise ValueError("top_k must be >= 1")
    names = list(names) if names is not None else list(report.feature_names)
    score = report.normalized if report.normalized is not None else report.raw
    order = np.argsort(-score, kind="stable")
    if top_k is not None:
        order = order[:top_k]
    rows = []
    for rank, j in enumerate(order, start=1):
        rows.append({
            "rank": rank,
            "feature": names[j],
            "raw": float(report.raw[j]),
            "normalized": float(score[j]) if report.normalized is not None else float("nan"),
            "direct": float(report.direct[j]),
            "indirect": float(report.indirect[j]),
            "relevant": j in report.relevant,
        })
    return rows


def format_table(rows: List[dict]) -> str:
    lines = [f"{'rank':>4}  {'feature':<16} {'normalized':>10} {'raw':>12}  relevant"]
    for r in rows:
        lines.append(f"{r['rank']:>4}  {r['feature']:<16} {r['normalized']:>10.4f} "
                     f"{r['raw']:>12.4g}  {'*' if r['relevant'] else ''}")
    return "\n".join(lines)


def write_csv(report: VimReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "raw", "normalized", "direct", "indirect", "relevant"])
        for j, name in enumerate(report.feature_names):
            norm = "" if report.normalized is None else format(report.normalized[j], ".17g")
            w.writerow([name, format(report.raw[j], ".17g"), norm,
                        format(report.direct[j], ".17g"), format(report.indirect[j], ".17g"),
                        int(j in report.relevant)])
