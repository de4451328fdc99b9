"""Extremely randomized regression trees.

Trees are stored as flat node arrays (sklearn style). The builder is a numba
kernel that consumes one ``numpy.random.Generator`` per tree, so forests are
reproducible and trees can be built on separate threads.

Draw order at every split attempt, nodes visited depth-first with the left
child first: K draws of ``rng.random()`` for a partial Fisher-Yates shuffle of
the eligible feature list, then one ``rng.random()`` per candidate (in the
shuffled order) for its cut-point ``lo + u * (hi - lo)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Union

import numba
import numpy as np

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyper-parameters.

    ``min_node_size`` is an absolute count (int >= 2) or, when a float in
    (0, 1), a fraction of the training rows. Nodes holding at most that many
    rows become leaves. ``k_candidates=None`` means every eligible feature.
    """

    n_trees: int = 500
    k_candidates: Optional[int] = None
    min_node_size: Union[int, float] = 5
    seed: int = 0

    def __post_init__(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ValueError(f"n_trees must be a positive integer, got {self.n_trees}")
        if self.k_candidates is not None and self.k_candidates < 1:
            raise ValueError(f"k_candidates must be >= 1, got {self.k_candidates}")
        resolve_min_node_size(self.min_node_size, 2)

    def resolved_min_node_size(self, n: int) -> int:
        return resolve_min_node_size(self.min_node_size, n)

    def resolved_k(self, width: int) -> int:
        return width if self.k_candidates is None else min(int(self.k_candidates), width)


def resolve_min_node_size(value, n: int) -> int:
    if isinstance(value, (bool, np.bool_)):
        raise ValueError("min_node_size must be a number")
    if isinstance(value, float) and 0.0 < value < 1.0:
        return max(2, int(math.floor(value * n + 1e-9)))
    if float(value) != int(value) or int(value) < 2:
        raise ValueError(
            f"min_node_size must be an integer >= 2 or a ratio in (0, 1), got {value!r}")
    return int(value)


@numba.njit(cache=True, nogil=True)
def _build_kernel(X, y, min_node_size, k, rng):
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)

    idx = np.arange(n)
    buf = np.empty(n, np.int64)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    top = 1
    n_nodes = 1

    lo = np.empty(p)
    hi = np.empty(p)
    elig = np.empty(p, np.int64)
    cuts = np.empty(p)
    sl = np.empty(p)
    nl = np.empty(p, np.int64)

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        m = e - s
        total = 0.0
        for t in range(s, e):
            total += y[idx[t]]
        value[node] = total / m
        count[node] = m
        if m <= min_node_size:
            continue

        # row-major scans: one contiguous row read per sample
        for j in range(p):
            lo[j] = np.inf
            hi[j] = -np.inf
        for t in range(s, e):
            i = idx[t]
            for j in range(p):
                v = X[i, j]
                lo[j] = min(lo[j], v)
                hi[j] = max(hi[j], v)
        n_elig = 0
        for j in range(p):
            if hi[j] > lo[j]:
                elig[n_elig] = j
                n_elig += 1
        if n_elig == 0:
            continue

        kk = min(k, n_elig)
        for c in range(kk):
            r = c + int(rng.random() * (n_elig - c))
            tmp = elig[c]
            elig[c] = elig[r]
            elig[r] = tmp
        for c in range(kk):
            j = elig[c]
            u = rng.random()
            cut = lo[j] + u * (hi[j] - lo[j])
            if not (lo[j] < cut < hi[j]):
                cut = lo[j] + 0.5 * (hi[j] - lo[j])
            cuts[c] = cut
            sl[c] = 0.0
            nl[c] = 0

        for t in range(s, e):
            i = idx[t]
            yi = y[i]
            for c in range(kk):
                go_left = X[i, elig[c]] <= cuts[c]
                sl[c] += yi * go_left
                nl[c] += go_left

        best_score = -np.inf
        best_c = 0
        for c in range(kk):
            sr = total - sl[c]
            nr = m - nl[c]
            # maximising this is minimising the summed child SSE
            score = sl[c] * sl[c] / nl[c] + sr * sr / nr
            if score > best_score:
                best_score = score
                best_c = c
        best_f = elig[best_c]
        best_cut = cuts[best_c]

        # stable partition of idx[s:e]
        for t in range(m):
            buf[t] = idx[s + t]
        a_pos = s
        for t in range(m):
            if X[buf[t], best_f] <= best_cut:
                idx[a_pos] = buf[t]
                a_pos += 1
        b_pos = a_pos
        for t in range(m):
            if X[buf[t], best_f] > best_cut:
                idx[b_pos] = buf[t]
                b_pos += 1

        feature[node] = best_f
        threshold[node] = best_cut
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        st_node[top] = right[node]
        st_start[top] = a_pos
        st_end[top] = e
        top += 1
        st_node[top] = left[node]
        st_start[top] = s
        st_end[top] = a_pos
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _predict_kernel(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for r in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@dataclass(eq=False)
class ExtraTree:
    """A fitted tree. Node 0 is the root; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    n_features: int

    @property
    def split_counts(self) -> np.ndarray:
        """Number of internal nodes splitting on each input column."""
        internal = self.feature[self.feature != LEAF]
        return np.bincount(internal, minlength=self.n_features).astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_internal(self) -> int:
        return int(np.sum(self.feature != LEAF))

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] != LEAF:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"input has {X.shape[1]} columns, tree expects {self.n_features}")
        if X.shape[0] == 0:
            return np.empty(0)
        return _predict_kernel(self.feature, self.threshold, self.left, self.right,
                               self.value, np.ascontiguousarray(X))

    def to_dict(self, node: int = 0) -> dict:
        """Recursive node record: leaves ``{"value", "count"}``, splits add children."""
        rec = {"value": float(self.value[node]), "count": int(self.count[node])}
        if self.feature[node] != LEAF:
            rec["feature"] = int(self.feature[node])
            rec["cut"] = float(self.threshold[node])
            rec["left"] = self.to_dict(self.left[node])
            rec["right"] = self.to_dict(self.right[node])
        return rec

    @classmethod
    def from_dict(cls, rec: dict, n_features: int) -> "ExtraTree":
        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def visit(r):
            node = len(feature)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(r["value"]))
            count.append(int(r["count"]))
            if "feature" in r:
                f = int(r["feature"])
                if not 0 <= f < n_features:
                    raise ValueError(f"split feature {f} outside input width {n_features}")
                feature[node] = f
                threshold[node] = float(r["cut"])
                left[node] = visit(r["left"])
                right[node] = visit(r["right"])
            return node

        visit(rec)
        return cls(np.array(feature, np.int64), np.array(threshold, np.float64),
                   np.array(left, np.int64), np.array(right, np.int64),
                   np.array(value, np.float64), np.array(count, np.int64), int(n_features))


def _as_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError(f"bad training shapes X={X.shape}, y={y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    return X, y


def build_tree(X, y, cfg: ForestConfig, rng: np.random.Generator) -> ExtraTree:
    """Grow one tree on all rows of ``(X, y)`` drawing randomness from ``rng``."""
    X, y = _as_xy(X, y)
    return _build(np.ascontiguousarray(X), y, cfg, rng)


def _build(X, y, cfg, rng):
    n, p = X.shape
    arrays = _build_kernel(X, y, cfg.resolved_min_node_size(n), cfg.resolved_k(p), rng)
    return ExtraTree(*arrays, n_features=p)


def tree_rng(seed: int, layer: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(layer), int(index)]))


def build_forest(X, y, cfg: ForestConfig, layer: int = 0, n_jobs: int = 1) -> List[ExtraTree]:
    """Build ``cfg.n_trees`` trees on the full training set (no bootstrap).

    Tree ``i`` draws from a stream keyed by ``(cfg.seed, layer, i)``, so the
    result does not depend on ``n_jobs``.
    """
    X, y = _as_xy(X, y)
    X = np.ascontiguousarray(X)

    def one(i):
        return _build(X, y, cfg, tree_rng(cfg.seed, layer, i))

    if n_jobs == 1:
        return [one(i) for i in range(cfg.n_trees)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(one, range(cfg.n_trees)))


def predict_forest(trees: List[ExtraTree], X) -> np.ndarray:
    """Per-tree predictions as an ``n x M`` matrix (one column per tree)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    out = np.empty((X.shape[0], len(trees)))
    for i, t in enumerate(trees):
        out[:, i] = t.predict(X)
    return out
