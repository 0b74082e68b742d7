"""Impurity-based and permutation feature importances."""

from __future__ import annotations

import numpy as np

from .metrics import SCORERS
from .models import ModelError, predict_proba


def feature_importance(model):
    """Total impurity decrease per feature, averaged over members, summing to 1."""
    if model.algorithm == "knn":
        raise ModelError("knn has no impurity importances; use permutation_importance")
    d = len(model.feature_names)
    total = np.zeros(d)
    for n, tree in enumerate(model.members):
        cols = (model.member_features[n] if model.member_features is not None
                else np.arange(d))
        imp = np.zeros(d)
        imp[cols] = tree.impurity_decrease(len(cols))
        s = imp.sum()
        if s > 0:
            total += imp / s
    s = total.sum()
    if s > 0:
        total /= s
    return dict(zip(model.feature_names, total.tolist()))


def permutation_importance(model, ds, n_repeats=5, seed=0, metric="accuracy"):
    """Mean and std drop in ``metric`` when one column is shuffled."""
    score = SCORERS[metric]
    base = score(ds.y, predict_proba(model, ds)[:, 1])
    rng = np.random.default_rng(seed)
    out = {}
    for j, name in enumerate(ds.feature_names):
        drops = []
        for _ in range(n_repeats):
            X = ds.X.copy()
            X[:, j] = X[rng.permutation(X.shape[0]), j]
            drops.append(base - score(ds.y, predict_proba(model, X, ds.feature_names)[:, 1]))
        out[name] = (float(np.mean(drops)), float(np.std(drops)))
    return out
