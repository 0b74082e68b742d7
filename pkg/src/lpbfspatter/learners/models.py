"""Model specifications, fitting, probability prediction and model.json I/O."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .._io import atomic_write_text
from .tree import Tree, grow_tree, resolve_max_features

ALGORITHMS = ("tree", "forest", "extratrees", "bagging", "gboost", "knn")

_TREE_KEYS = {"max_depth", "max_features", "criterion", "min_samples_split",
              "min_samples_leaf"}
VALID_KEYS = {
    "tree": _TREE_KEYS,
    "forest": _TREE_KEYS | {"n_estimators", "bootstrap"},
    "extratrees": _TREE_KEYS | {"n_estimators", "bootstrap"},
    "bagging": _TREE_KEYS | {"n_estimators", "max_samples", "bagging_max_features",
                             "bootstrap"},
    "gboost": {"n_estimators", "learning_rate", "max_depth", "min_samples_split",
               "min_samples_leaf", "subsample", "max_features"},
    "knn": {"n_neighbors", "weights", "minkowski_p"},
}

DEFAULTS = {
    "tree": {"max_depth": None, "max_features": "all", "criterion": "gini",
             "min_samples_split": 2, "min_samples_leaf": 1},
    "forest": {"n_estimators": 100, "max_depth": None, "max_features": "sqrt",
               "criterion": "gini", "min_samples_split": 2, "min_samples_leaf": 1,
               "bootstrap": True},
    "extratrees": {"n_estimators": 100, "max_depth": None, "max_features": "sqrt",
                   "criterion": "gini", "min_samples_split": 2, "min_samples_leaf": 1,
                   "bootstrap": False},
    # extra-tree base learners, 10 members, 80 % rows and 80 % features each
    "bagging": {"n_estimators": 10, "max_samples": 0.8, "bagging_max_features": 0.8,
                "bootstrap": True, "max_depth": None, "max_features": "sqrt",
                "criterion": "gini", "min_samples_split": 2, "min_samples_leaf": 1},
    "gboost": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3,
               "min_samples_split": 2, "min_samples_leaf": 1, "subsample": 1.0,
               "max_features": "all"},
    "knn": {"n_neighbors": 5, "weights": "uniform", "minkowski_p": 2},
}

ENSEMBLES = ("forest", "extratrees", "bagging", "gboost")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    scaling: str = "none"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ModelError(f"unknown algorithm {self.algorithm!r}")
        bad = set(self.hyperparameters) - VALID_KEYS[self.algorithm]
        if bad:
            raise ModelError(f"invalid hyperparameter(s) for {self.algorithm}: {sorted(bad)}")
        if self.scaling not in ("none", "standardize"):
            raise ModelError(f"scaling must be 'none' or 'standardize', got {self.scaling!r}")
        hp = self.params
        for key in ("n_estimators", "min_samples_split", "min_samples_leaf", "n_neighbors"):
            if key in hp and (int(hp[key]) != hp[key] or hp[key] < (0 if key == "n_estimators" else 1)):
                raise ModelError(f"{key} must be a positive integer, got {hp[key]!r}")
        if hp.get("max_depth") is not None and hp["max_depth"] < 0:
            raise ModelError("max_depth must be >= 0 or None")
        if "learning_rate" in hp and not hp["learning_rate"] > 0:
            raise ModelError("learning_rate must be > 0")
        if "criterion" in hp and hp["criterion"] not in ("gini", "entropy"):
            raise ModelError(f"criterion must be gini or entropy, got {hp['criterion']!r}")
        if "max_features" in hp and not (
                hp["max_features"] in ("sqrt", "log2", "all", None)
                or isinstance(hp["max_features"], (int, float)) and hp["max_features"] > 0):
            raise ModelError(f"invalid max_features {hp['max_features']!r}")
        if "weights" in hp and hp["weights"] not in ("uniform", "distance"):
            raise ModelError("weights must be 'uniform' or 'distance'")
        if "minkowski_p" in hp and not hp["minkowski_p"] >= 1:
            raise ModelError("minkowski_p must be >= 1")
        for key in ("subsample", "max_samples", "bagging_max_features"):
            if key in hp and not 0 < hp[key] <= 1:
                raise ModelError(f"{key} must lie in (0, 1]")

    @property
    def params(self):
        """Hyperparameters with defaults filled in."""
        out = dict(DEFAULTS[self.algorithm])
        out.update(self.hyperparameters)
        return out

    def to_dict(self):
        return {"algorithm": self.algorithm, "hyperparameters": dict(self.hyperparameters),
                "seed": self.seed, "scaling": self.scaling}

    @classmethod
    def from_dict(cls, d):
        return cls(d["algorithm"], dict(d.get("hyperparameters", {})), int(d.get("seed", 0)),
                   d.get("scaling", "none"))


@dataclass(eq=False)
class TrainedModel:
    spec: ModelSpec
    feature_names: tuple
    members: list  # Tree objects (or stages for gboost)
    member_features: list = None  # per-member feature subsets (bagging)
    init_score: float = 0.0  # gboost prior log-odds
    knn_X: np.ndarray = None
    knn_y: np.ndarray = None
    scaler: tuple = None  # (mean, scale)
    n_train: int = 0

    @property
    def algorithm(self):
        return self.spec.algorithm

    def n_members(self):
        return len(self.members)

    def truncated(self, n):
        """Copy keeping only the first ``n`` ensemble members."""
        if self.algorithm not in ENSEMBLES:
            raise ModelError("only ensembles can be truncated")
        spec = ModelSpec(self.spec.algorithm, {**self.spec.hyperparameters, "n_estimators": n},
                         self.spec.seed, self.spec.scaling)
        mf = None if self.member_features is None else self.member_features[:n]
        return TrainedModel(spec, self.feature_names, self.members[:n], mf, self.init_score,
                            self.knn_X, self.knn_y, self.scaler, self.n_train)


def _member_rng(seed, n):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(n,)))


def _map(fn, items, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _check_training(spec, ds):
    if len(ds) == 0:
        raise ModelError("empty training set")
    if spec.algorithm == "knn":
        if len(ds) < spec.params["n_neighbors"]:
            raise ModelError(f"knn needs at least n_neighbors={spec.params['n_neighbors']} records")
    elif spec.algorithm != "tree" and len(np.unique(ds.y)) < 2:
        raise ModelError("training set contains a single class")


def fit(spec, train, n_jobs=1):
    """Fit ``spec`` on a :class:`~lpbfspatter.dataset.Dataset`.

    Results depend only on the spec, its seed and the data; ``n_jobs``
    changes wall time, not the fitted model.
    """
    _check_training(spec, train)
    X = train.X
    scaler = None
    if spec.scaling == "standardize":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        scaler = (mean, scale)
        X = (X - mean) / scale
    y = train.y.astype(np.float64)
    hp = spec.params
    algo = spec.algorithm
    base = dict(task="classification", criterion=hp.get("criterion", "gini"),
                max_depth=hp.get("max_depth"),
                min_samples_split=hp.get("min_samples_split", 2),
                min_samples_leaf=hp.get("min_samples_leaf", 1),
                max_features=hp.get("max_features"))
    model = TrainedModel(spec, train.feature_names, [], scaler=scaler, n_train=len(train))
    n = X.shape[0]

    if algo == "tree":
        model.members = [grow_tree(X, y, rng=_member_rng(spec.seed, 0), **base)]
    elif algo in ("forest", "extratrees"):
        random_thr = algo == "extratrees"

        def one(m):
            rng = _member_rng(spec.seed, m)
            rows = rng.integers(0, n, size=n) if hp["bootstrap"] else np.arange(n)
            return grow_tree(X[rows], y[rows], rng=rng, random_thresholds=random_thr, **base)
        model.members = _map(one, range(hp["n_estimators"]), n_jobs)
    elif algo == "bagging":
        d = X.shape[1]
        n_rows = max(1, int(hp["max_samples"] * n))
        n_cols = max(1, int(hp["bagging_max_features"] * d))

        def one(m):
            rng = _member_rng(spec.seed, m)
            if hp["bootstrap"]:
                rows = rng.integers(0, n, size=n_rows)
            else:
                rows = rng.choice(n, size=n_rows, replace=False)
            cols = np.sort(rng.choice(d, size=n_cols, replace=False))
            return cols, grow_tree(X[rows][:, cols], y[rows], rng=rng, random_thresholds=True,
                                   **base)
        out = _map(one, range(hp["n_estimators"]), n_jobs)
        model.member_features = [c for c, _ in out]
        model.members = [t for _, t in out]
    elif algo == "gboost":
        _fit_gboost(model, X, y, hp, spec.seed)
    elif algo == "knn":
        model.knn_X = X.copy()
        model.knn_y = train.y.copy()
    return model


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _fit_gboost(model, X, y, hp, seed):
    """Stage-wise regression trees on the logistic-loss gradient with Newton leaves."""
    n = X.shape[0]
    p1 = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    model.init_score = math.log(p1 / (1 - p1))
    raw = np.full(n, model.init_score)
    lr = hp["learning_rate"]
    n_sub = max(1, int(round(hp["subsample"] * n)))
    for m in range(hp["n_estimators"]):
        rng = _member_rng(seed, m)
        rows = (np.sort(rng.choice(n, size=n_sub, replace=False))
                if n_sub < n else np.arange(n))
        prob = _sigmoid(raw)
        resid = y - prob
        tree = grow_tree(X[rows], resid[rows], task="regression", criterion="squared_error",
                         max_depth=hp["max_depth"], min_samples_split=hp["min_samples_split"],
                         min_samples_leaf=hp["min_samples_leaf"],
                         max_features=hp["max_features"], rng=rng)
        leaves = tree.apply(X[rows])
        num = np.bincount(leaves, weights=resid[rows], minlength=tree.n_nodes)
        den = np.bincount(leaves, weights=(prob * (1 - prob))[rows], minlength=tree.n_nodes)
        is_leaf = tree.feature < 0
        gamma = np.where(np.abs(den) > 1e-150, num / np.where(den == 0, 1, den), 0.0)
        tree.value = np.where(is_leaf, gamma, tree.value[:, 0])[:, None] * 1.0
        raw = raw + lr * tree.predict(X)[:, 0]
        model.members.append(tree)


def _transform(model, X):
    X = np.asarray(X, dtype=np.float64)
    if model.scaler is not None:
        X = (X - model.scaler[0]) / model.scaler[1]
    return X


def predict_proba(model, X, feature_names=None):
    """Probabilities ``(n, 2)`` for (meltpool, spatter).

    ``X`` is a 2-D array or a Dataset; when names are available they must
    match the training features exactly.
    """
    if hasattr(X, "feature_names"):
        feature_names = X.feature_names
        X = X.X
    if feature_names is not None and tuple(feature_names) != tuple(model.feature_names):
        raise ModelError(f"feature mismatch: model expects {model.feature_names}, "
                         f"got {tuple(feature_names)}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != len(model.feature_names):
        raise ModelError(f"expected {len(model.feature_names)} features, got {X.shape[1]}")
    X = _transform(model, X)
    algo = model.algorithm
    if algo in ("tree", "forest", "extratrees"):
        if not model.members:
            raise ModelError("ensemble has no members")
        p1 = np.zeros(X.shape[0])
        for t in model.members:
            p1 += t.predict(X)[:, 1]
        p1 /= len(model.members)
    elif algo == "bagging":
        p1 = np.zeros(X.shape[0])
        for cols, t in zip(model.member_features, model.members):
            p1 += t.predict(X[:, cols])[:, 1]
        p1 /= len(model.members)
    elif algo == "gboost":
        raw = np.full(X.shape[0], model.init_score)
        lr = model.spec.params["learning_rate"]
        for t in model.members:
            raw += lr * t.predict(X)[:, 0]
        p1 = _sigmoid(raw)
    else:
        p1 = _knn_proba(model, X)
    p1 = np.clip(p1, 0.0, 1.0)
    return np.column_stack([1.0 - p1, p1])


def _knn_proba(model, X):
    hp = model.spec.params
    k = hp["n_neighbors"]
    p = hp["minkowski_p"]
    out = np.empty(X.shape[0])
    train = model.knn_X
    lab = model.knn_y.astype(np.float64)
    for start in range(0, X.shape[0], 512):
        chunk = X[start:start + 512]
        diff = np.abs(chunk[:, None, :] - train[None, :, :])
        dist = (diff ** p).sum(axis=2) ** (1.0 / p)
        nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
        d = np.take_along_axis(dist, nn, axis=1)
        votes = lab[nn]
        if hp["weights"] == "distance":
            exact = d == 0
            with np.errstate(divide="ignore"):
                w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / d)
        else:
            w = np.ones_like(d)
        out[start:start + 512] = (w * votes).sum(axis=1) / w.sum(axis=1)
    return out


def predict(model, X, threshold=0.5):
    return (predict_proba(model, X)[:, 1] > threshold).astype(np.int64)


def model_to_dict(model):
    d = {"format": "lpbfspatter.model/1", **model.spec.to_dict(),
         "feature_names": list(model.feature_names), "n_train": model.n_train}
    if model.scaler is not None:
        d["scaler"] = {"mean": model.scaler[0].tolist(), "scale": model.scaler[1].tolist()}
    if model.algorithm == "knn":
        d["train_X"] = model.knn_X.tolist()
        d["train_y"] = model.knn_y.tolist()
        return d
    if model.algorithm == "bagging":
        names = model.feature_names
        d["trees"] = [{"features": [names[c] for c in cols],
                       "root": t.to_dict([names[c] for c in cols])}
                      for cols, t in zip(model.member_features, model.members)]
    else:
        d["trees"] = [t.to_dict(model.feature_names) for t in model.members]
    if model.algorithm == "gboost":
        d["init_score"] = model.init_score
    return d


def model_from_dict(d):
    spec = ModelSpec.from_dict(d)
    names = tuple(d["feature_names"])
    model = TrainedModel(spec, names, [], n_train=int(d.get("n_train", 0)))
    if "scaler" in d:
        model.scaler = (np.array(d["scaler"]["mean"]), np.array(d["scaler"]["scale"]))
    if spec.algorithm == "knn":
        model.knn_X = np.array(d["train_X"], dtype=np.float64).reshape(-1, len(names))
        model.knn_y = np.array(d["train_y"], dtype=np.int64)
    elif spec.algorithm == "bagging":
        model.member_features = []
        for entry in d["trees"]:
            cols = np.array([names.index(f) for f in entry["features"]], dtype=np.int64)
            model.member_features.append(cols)
            model.members.append(Tree.from_dict(entry["root"], entry["features"]))
    else:
        model.members = [Tree.from_dict(t, names) for t in d["trees"]]
        model.init_score = float(d.get("init_score", 0.0))
    return model


def save_model(model, path):
    atomic_write_text(path, json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


__all__ = ["ModelSpec", "TrainedModel", "ModelError", "fit", "predict_proba", "predict",
           "model_to_dict", "model_from_dict", "save_model", "load_model", "ALGORITHMS",
           "resolve_max_features"]
