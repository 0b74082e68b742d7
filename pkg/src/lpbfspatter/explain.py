"""Exact Shapley attributions by coalition enumeration, and partial dependence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._io import write_csv
from .learners.models import predict_proba


class ExplainError(ValueError):
    pass


@dataclass(frozen=True)
class Attribution:
    phi: np.ndarray
    base_value: float
    prediction: float
    feature_names: tuple

    @property
    def efficiency_residual(self):
        return abs(float(self.phi.sum()) - (self.prediction - self.base_value))


@dataclass(frozen=True)
class PDPCurve:
    feature: str
    grid: np.ndarray
    mean_probability: np.ndarray


def _prob_fn(model, feature_names):
    """Spatter-probability function of an ``(n, d)`` array.

    ``model`` may be a trained model or any callable returning one
    probability per row.
    """
    if callable(model) and not hasattr(model, "spec"):
        return lambda X: np.asarray(model(X), dtype=np.float64)
    if tuple(model.feature_names) != tuple(feature_names):
        raise ExplainError(f"feature mismatch: model expects {model.feature_names}, "
                           f"got {tuple(feature_names)}")
    return lambda X: predict_proba(model, X)[:, 1]


def background_rows(background, max_rows=200, seed=0):
    X = background.X if hasattr(background, "X") else np.asarray(background, dtype=np.float64)
    if X.shape[0] == 0:
        raise ExplainError("background is empty")
    if X.shape[0] > max_rows:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(X.shape[0], size=max_rows, replace=False))]
    return X


def coalition_weights(d):
    """Shapley weight ``|S|! (d - |S| - 1)! / d!`` indexed by ``|S|``."""
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
                     for s in range(d)])


def coalition_values(f, x, bg):
    """Mean prediction over ``bg`` for every coalition bitmask ``0 .. 2^d - 1``.

    In coalition ``m`` feature ``j`` comes from ``x`` when bit ``j`` is set
    and from the background row otherwise.
    """
    d = x.size
    masks = np.arange(2 ** d)
    take = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)  # (2^d, d)
    hybrid = np.where(take[:, None, :], x[None, None, :], bg[None, :, :])
    p = f(hybrid.reshape(-1, d)).reshape(2 ** d, bg.shape[0])
    return p.mean(axis=1)


def shapley_values(model, x, background, feature_names=None, max_features=16,
                   max_background=200, seed=0):
    """Exact Shapley values of the spatter probability at record ``x``."""
    if feature_names is None:
        feature_names = getattr(background, "feature_names", None) or getattr(
            model, "feature_names", None)
    x = np.asarray(getattr(x, "X", x), dtype=np.float64).ravel()
    d = x.size
    if d > max_features:
        raise ExplainError(f"{d} features exceed max_features={max_features}; exact "
                           "enumeration needs 2^d coalitions, raise the limit or drop features")
    if feature_names is not None and len(feature_names) != d:
        raise ExplainError("record length does not match feature names")
    f = _prob_fn(model, feature_names)
    bg = background_rows(background, max_background, seed)
    if bg.shape[1] != d:
        raise ExplainError("background and record differ in feature count")
    values = coalition_values(f, x, bg)
    weights = coalition_weights(d)
    masks = np.arange(2 ** d)
    sizes = np.array([bin(m).count("1") for m in masks])
    phi = np.zeros(d)
    for i in range(d):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(weights[sizes[without]] * (values[without | (1 << i)] - values[without]))
    return Attribution(phi=phi, base_value=float(values[0]), prediction=float(values[-1]),
                       feature_names=tuple(feature_names or range(d)))


def shap_summary(model, ds, background, max_background=200, seed=0):
    """Attributions for every record of ``ds`` and the mean-|phi| ranking."""
    atts = [shapley_values(model, row, background, ds.feature_names,
                           max_background=max_background, seed=seed) for row in ds.X]
    phi = np.array([a.phi for a in atts]).reshape(len(atts), len(ds.feature_names))
    mean_abs = np.abs(phi).mean(axis=0)
    order = sorted(range(len(ds.feature_names)), key=lambda j: (-mean_abs[j], j))
    ranking = [(ds.feature_names[j], float(mean_abs[j])) for j in order]
    return {"ranking": ranking, "phi": phi, "values": ds.X.copy(),
            "feature_names": ds.feature_names, "attributions": atts}


def pdp(model, ds, feature, grid=50):
    """Mean spatter probability with ``feature`` overwritten by each grid value.

    ``grid`` is an explicit sequence of values or a count of evenly spaced
    quantiles of the observed feature.
    """
    if feature not in ds.feature_names:
        raise ExplainError(f"feature {feature!r} not in dataset")
    j = ds.feature_names.index(feature)
    if np.isscalar(grid):
        n = int(grid)
        if n < 1:
            raise ExplainError("quantile count must be >= 1")
        values = np.unique(np.quantile(ds.X[:, j], np.linspace(0, 1, n)))
    else:
        values = np.asarray(grid, dtype=np.float64)
        if values.size == 0:
            raise ExplainError("empty grid")
        if np.any(np.diff(values) <= 0):
            raise ExplainError("grid must be strictly increasing")
    f = _prob_fn(model, ds.feature_names)
    n = len(ds)
    X = np.repeat(ds.X[None, :, :], values.size, axis=0)
    X[:, :, j] = values[:, None]
    means = f(X.reshape(-1, ds.X.shape[1])).reshape(values.size, n).mean(axis=1)
    return PDPCurve(feature=feature, grid=values, mean_probability=means)


def write_shap(summary, out_dir):
    names = summary["feature_names"]
    rows = []
    for r, (phis, vals) in enumerate(zip(summary["phi"], summary["values"])):
        for name, v, p in zip(names, vals, phis):
            rows.append([r, name, float(v), float(p)])
    write_csv(f"{out_dir}/shap.csv", ["record", "feature", "value", "phi"], rows)
    write_csv(f"{out_dir}/shap_summary.csv", ["feature", "mean_abs_phi", "rank"],
              [[name, float(v), rank + 1] for rank, (name, v) in enumerate(summary["ranking"])])


def write_pdp(curve, out_dir):
    write_csv(f"{out_dir}/pdp_{curve.feature}.csv", ["value", "mean_probability"],
              [[float(v), float(m)] for v, m in zip(curve.grid, curve.mean_probability)])
