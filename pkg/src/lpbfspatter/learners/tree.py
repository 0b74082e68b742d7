"""Array-backed CART trees for binary classification and squared-error regression."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np


@dataclass
class Tree:
    """Flat tree arrays; node 0 is the root, leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_out)
    n_samples: np.ndarray
    impurity: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def max_depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for n in range(self.n_nodes):
            if self.feature[n] >= 0:
                depth[self.left[n]] = depth[n] + 1
                depth[self.right[n]] = depth[n] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X):
        return self.value[self.apply(X)]

    def impurity_decrease(self, n_features):
        """Weighted impurity decrease per feature (unnormalized)."""
        out = np.zeros(n_features)
        total = self.n_samples[0]
        for n in np.flatnonzero(self.feature >= 0):
            l, r = self.left[n], self.right[n]
            out[self.feature[n]] += (
                self.n_samples[n] * self.impurity[n]
                - self.n_samples[l] * self.impurity[l]
                - self.n_samples[r] * self.impurity[r]) / total
        return out

    def to_dict(self, feature_names):
        def node(n):
            if self.feature[n] < 0:
                return {"leaf": [float(v) for v in self.value[n]],
                        "n_samples": int(self.n_samples[n]),
                        "impurity": float(self.impurity[n])}
            return {"feature": feature_names[self.feature[n]],
                    "threshold": float(self.threshold[n]),
                    "n_samples": int(self.n_samples[n]),
                    "impurity": float(self.impurity[n]),
                    "left": node(self.left[n]), "right": node(self.right[n])}
        return node(0)

    @classmethod
    def from_dict(cls, d, feature_names):
        feats, thr, lefts, rights, vals, ns, imps = [], [], [], [], [], [], []
        index = {f: n for n, f in enumerate(feature_names)}
        stack = [(d, None, None)]
        while stack:
            nd, parent, side = stack.pop()
            me = len(feats)
            if parent is not None:
                (lefts if side == "left" else rights)[parent] = me
            leaf = "leaf" in nd
            feats.append(-1 if leaf else index[nd["feature"]])
            thr.append(0.0 if leaf else float(nd["threshold"]))
            lefts.append(-1)
            rights.append(-1)
            vals.append(nd.get("leaf"))
            ns.append(int(nd.get("n_samples", 0)))
            imps.append(float(nd.get("impurity", 0.0)))
            if not leaf:
                stack.append((nd["right"], me, "right"))
                stack.append((nd["left"], me, "left"))
        n_out = max(len(v) for v in vals if v is not None)
        value = np.zeros((len(feats), n_out))
        for n, v in enumerate(vals):
            if v is not None:
                value[n] = v
        return cls(np.array(feats, dtype=np.int64), np.array(thr), np.array(lefts, dtype=np.int64),
                   np.array(rights, dtype=np.int64), value, np.array(ns, dtype=np.int64),
                   np.array(imps))


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        n = 0
        while feature[n] >= 0:
            if X[r, feature[n]] <= threshold[n]:
                n = left[n]
            else:
                n = right[n]
        out[r] = n
    return out


def _gini(p):
    return 2.0 * p * (1.0 - p)


def _entropy(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.nan_to_num(h, nan=0.0)


def resolve_max_features(max_features, n_features):
    if max_features in (None, "all"):
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(max_features, float):
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


class _Splitter:
    """Best (CART) or random (extra-trees) split search at one node."""

    def __init__(self, task, criterion, min_samples_leaf, random_thresholds):
        self.task = task
        self.min_leaf = min_samples_leaf
        self.random = random_thresholds
        if task == "classification":
            self.h = _entropy if criterion == "entropy" else _gini
        elif criterion not in ("squared_error", None):
            raise ValueError(f"regression trees use squared_error, got {criterion}")

    def node_impurity(self, t):
        if self.task == "classification":
            return float(self.h(np.array(t.mean())))
        return float(np.var(t))

    def child_cost(self, v_sorted_t, nl, n, cum, cum2, total, total2):
        """Summed child impurity (times sample counts) for left sizes ``nl``."""
        nr = n - nl
        if self.task == "classification":
            pl = cum / nl
            pr = (total - cum) / nr
            return nl * self.h(pl) + nr * self.h(pr)
        sse_l = cum2 - cum * cum / nl
        sse_r = (total2 - cum2) - (total - cum) ** 2 / nr
        return sse_l + sse_r

    def best(self, Xn, t, features, rng):
        n = t.size
        best = (np.inf, -1, 0.0)
        total = t.sum()
        total2 = (t * t).sum() if self.task == "regression" else 0.0
        for f in features:
            v = Xn[:, f]
            if self.random:
                lo, hi = v.min(), v.max()
                thr = rng.uniform(lo, hi)
                if thr >= hi:
                    thr = lo
                go_left = v <= thr
                nl = int(go_left.sum())
                if nl < self.min_leaf or n - nl < self.min_leaf:
                    continue
                cum = t[go_left].sum()
                cum2 = (t[go_left] ** 2).sum() if self.task == "regression" else 0.0
                cost = float(self.child_cost(None, np.array(nl, dtype=float), n, cum, cum2,
                                             total, total2))
                if cost < best[0]:
                    best = (cost, f, float(thr))
                continue
            order = np.argsort(v, kind="stable")
            vs = v[order]
            ts = t[order]
            cum = np.cumsum(ts)[:-1]
            cum2 = np.cumsum(ts * ts)[:-1] if self.task == "regression" else 0.0
            nl = np.arange(1, n, dtype=np.float64)
            ok = (vs[:-1] < vs[1:]) & (nl >= self.min_leaf) & (n - nl >= self.min_leaf)
            if not ok.any():
                continue
            cost = self.child_cost(vs, nl, n, cum, cum2, total, total2)
            cost = np.where(ok, cost, np.inf)
            i = int(np.argmin(cost))
            if cost[i] < best[0]:
                thr = 0.5 * (vs[i] + vs[i + 1])
                if thr >= vs[i + 1]:
                    thr = vs[i]
                best = (float(cost[i]), f, float(thr))
        return best


def grow_tree(X, target, *, task="classification", criterion="gini", max_depth=None,
              min_samples_split=2, min_samples_leaf=1, max_features=None,
              random_thresholds=False, rng=None):
    """Grow one tree depth-first (left child first).

    ``target`` is the 0/1 label for classification or the real-valued
    target for regression.  A node is split whenever it is impure and some
    admissible split exists, even if that split does not lower impurity.
    """
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    rng = np.random.default_rng(0) if rng is None else rng
    n_features = X.shape[1]
    k_feat = resolve_max_features(max_features, n_features)
    max_depth = np.inf if max_depth is None else max_depth
    splitter = _Splitter(task, criterion, min_samples_leaf, random_thresholds)

    feature, threshold, left, right, value, n_samples, impurity = [], [], [], [], [], [], []

    def leaf_value(t):
        if task == "classification":
            p = t.mean()
            return [1.0 - p, p]
        return [t.mean()]

    stack = [(np.arange(target.size), 0, None, None)]
    while stack:
        idx, depth, parent, side = stack.pop()
        me = len(feature)
        if parent is not None:
            (left if side == "left" else right)[parent] = me
        t = target[idx]
        imp = splitter.node_impurity(t)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(t))
        n_samples.append(idx.size)
        impurity.append(imp)
        if (depth >= max_depth or idx.size < min_samples_split
                or idx.size < 2 * min_samples_leaf or imp <= 1e-15):
            continue
        Xn = X[idx]
        perm = rng.permutation(n_features)
        chosen = []
        for f in perm:
            col = Xn[:, f]
            if col.max() > col.min():
                chosen.append(int(f))
                if len(chosen) == k_feat:
                    break
        if not chosen:
            continue
        cost, f, thr = splitter.best(Xn, t, chosen, rng)
        if f < 0:
            continue
        feature[me] = f
        threshold[me] = thr
        go_left = Xn[:, f] <= thr
        stack.append((idx[~go_left], depth + 1, me, "right"))
        stack.append((idx[go_left], depth + 1, me, "left"))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value, dtype=np.float64), np.array(n_samples, dtype=np.int64),
                np.array(impurity, dtype=np.float64))
