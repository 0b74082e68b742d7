"""Stratified k-fold cross-validation and exhaustive grid search."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .._io import write_csv
from .metrics import SCORERS
from .models import ENSEMBLES, ModelSpec, fit, predict_proba

logger = logging.getLogger(__name__)

# Hyperparameter ranges screened for each model family.
DEFAULT_GRIDS = {
    "forest": {"n_estimators": list(range(1, 100)), "max_depth": list(range(3, 12)),
               "max_features": ["sqrt"], "criterion": ["entropy"]},
    "gboost": {"n_estimators": list(range(50, 200, 50)), "learning_rate": [0.01, 0.1, 0.2],
               "max_depth": list(range(3, 6)), "min_samples_split": [2, 5, 10],
               "min_samples_leaf": [1, 3, 5]},
    "bagging": {"n_estimators": [10], "max_samples": [0.8], "bagging_max_features": [0.8],
                "bootstrap": [True]},
    "extratrees": {"n_estimators": list(range(10, 100, 10)), "max_depth": list(range(3, 10)),
                   "max_features": ["sqrt", "log2", "all"], "criterion": ["gini", "entropy"]},
    "knn": {"n_neighbors": list(range(1, 100)), "weights": ["uniform", "distance"],
            "minkowski_p": [1, 2]},
}


class SearchError(ValueError):
    pass


def enumerate_grid(grid):
    """Grid points in lexicographic order over sorted names, values as declared."""
    if not grid:
        raise SearchError("empty grid")
    names = sorted(grid)
    for name in names:
        if not list(grid[name]):
            raise SearchError(f"grid entry {name!r} has no values")
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


def stratified_folds(y, k=5, seed=0):
    """Fold id per record.

    Each class is shuffled under ``seed``; the classes are then laid end to
    end and dealt round-robin, so fold sizes differ by at most one.
    """
    y = np.asarray(y)
    if k < 2:
        raise SearchError("k must be >= 2")
    if y.size < k:
        raise SearchError(f"need at least k={k} records, got {y.size}")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in np.unique(y)])
    folds = np.empty(y.size, dtype=np.int64)
    folds[order] = np.arange(y.size) % k
    return folds


def _score(metric, y, s):
    val = SCORERS[metric](y, s)
    return float(val)


def grid_search(algorithm, grid, train, k=5, metric="roc_auc", seed=0, scaling="none",
                n_jobs=1, fixed=None):
    """Cross-validated exhaustive search; returns ``(best_spec, table)``.

    The fold partition is shared by every grid point.  For ensembles, points
    differing only in ``n_estimators`` are scored from one fit of the largest
    ensemble, truncated; member seeds do not depend on the ensemble size, so
    this equals fitting each size separately.
    """
    if metric not in SCORERS:
        raise SearchError(f"unknown metric {metric!r}")
    points = enumerate_grid(grid)
    fixed = dict(fixed or {})
    folds = stratified_folds(train.y, k, seed)
    specs = [ModelSpec(algorithm, {**fixed, **pt}, seed, scaling) for pt in points]

    groups = {}
    for n, pt in enumerate(points):
        if algorithm in ENSEMBLES and "n_estimators" in pt:
            key = tuple((kk, repr(v)) for kk, v in sorted(pt.items()) if kk != "n_estimators")
        else:
            key = ("point", n)
        groups.setdefault(key, []).append(n)

    def run_group(members):
        scores = np.full((len(members), k), np.nan)
        for f in range(k):
            tr = train.subset(np.flatnonzero(folds != f))
            va = train.subset(np.flatnonzero(folds == f))
            if len(np.unique(va.y)) < 2 and metric == "roc_auc":
                logger.warning("fold %d has a single class; its AUC is undefined", f)
                continue
            if len(members) > 1:
                big = max(members, key=lambda m: specs[m].params["n_estimators"])
                model = fit(specs[big], tr)
                for row, m in enumerate(members):
                    sub = model.truncated(specs[m].params["n_estimators"])
                    scores[row, f] = _score(metric, va.y, predict_proba(sub, va)[:, 1])
            else:
                model = fit(specs[members[0]], tr)
                scores[0, f] = _score(metric, va.y, predict_proba(model, va)[:, 1])
        return members, scores

    group_list = list(groups.values())
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run_group, group_list))
    else:
        results = [run_group(g) for g in group_list]

    all_scores = np.full((len(points), k), np.nan)
    for members, scores in results:
        all_scores[members] = scores
    table = []
    for n, pt in enumerate(points):
        valid = all_scores[n][~np.isnan(all_scores[n])]
        mean = float(valid.mean()) if valid.size else float("nan")
        std = float(valid.std()) if valid.size else float("nan")
        table.append({"params": pt, "mean": mean, "std": std, "n_valid_folds": int(valid.size),
                      "fold_scores": all_scores[n].tolist()})
    best = None
    for n, row in enumerate(table):
        if math.isnan(row["mean"]):
            continue
        if best is None or row["mean"] > table[best]["mean"]:
            best = n
    if best is None:
        raise SearchError("no grid point produced a valid score")
    return specs[best], table


def write_cv_table(table, path):
    names = sorted({k for row in table for k in row["params"]})
    rows = [[*(repr(row["params"].get(n)) if not isinstance(row["params"].get(n), (int, float))
               or isinstance(row["params"].get(n), bool) else row["params"].get(n)
               for n in names), row["mean"], row["std"], row["n_valid_folds"]]
            for row in table]
    rows = [[float(v) if isinstance(v, float) else v for v in r] for r in rows]
    write_csv(path, [*names, "mean", "std", "n_valid_folds"], rows)
