"""Balanced spatter/melt-pool datasets: assembly, splitting, CSV and statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import gaussian_kde

from ._io import write_csv, write_json

SPATIAL = ("x", "y", "z")
NON_SPATIAL = ("vx", "vy", "vz", "vmag", "T", "rho", "p")
ALL_FEATURES = SPATIAL + NON_SPATIAL
LABELS = {0: "meltpool", 1: "spatter"}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float
    vmag: float
    T: float
    rho: float
    p: float
    label: str  # "spatter" | "meltpool"

    @classmethod
    def from_values(cls, position, velocity, T, rho, p, label):
        vx, vy, vz = (float(v) for v in velocity)
        x, y, z = (float(v) for v in position)
        return cls(x, y, z, vx, vy, vz, math.sqrt(vx * vx + vy * vy + vz * vz),
                   float(T), float(rho), float(p), label)


@dataclass(eq=False)
class Dataset:
    """Feature matrix ``X`` (rows = records), labels ``y`` (1 = spatter)."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ALL_FEATURES
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.feature_names))
        self.y = np.asarray(self.y, dtype=np.int64).ravel()
        self.feature_names = tuple(self.feature_names)
        if self.X.shape[0] != self.y.shape[0]:
            raise DatasetError("X and y differ in length")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError("non-finite feature value")
        if not np.isin(self.y, (0, 1)).all():
            raise DatasetError("labels must be 0 (meltpool) or 1 (spatter)")

    def __len__(self):
        return len(self.y)

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.feature_names == other.feature_names
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y))

    @property
    def class_counts(self):
        return {"meltpool": int((self.y == 0).sum()), "spatter": int((self.y == 1).sum())}

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.feature_names, dict(self.provenance))

    def column(self, name):
        return self.X[:, self.feature_names.index(name)]

    def records(self):
        if self.feature_names != ALL_FEATURES:
            raise DatasetError("records() needs all ten features")
        return [SampleRecord(*row.tolist(), label=LABELS[int(lab)])
                for row, lab in zip(self.X, self.y)]

    @classmethod
    def from_records(cls, records, provenance=None):
        X = [[getattr(r, f) for f in ALL_FEATURES] for r in records]
        y = [1 if r.label == "spatter" else 0 for r in records]
        return cls(np.array(X, dtype=np.float64).reshape(-1, 10), y, ALL_FEATURES,
                   dict(provenance or {}))


@dataclass(frozen=True)
class FrameSamples:
    """New spatter blobs of one frame and the melt-pool samples drawn for it."""

    run_id: str
    frame: int
    spatter: list  # segment.Blob
    meltpool: list  # mpsample.MeltPoolSample
    seed: int | None = None


def assemble(frames):
    """One spatter record per new blob plus one melt-pool record per sample.

    Every frame must carry as many melt-pool samples as new spatter blobs so
    the result is exactly balanced.
    """
    records = []
    runs = {}
    for fr in frames:
        if len(fr.meltpool) != len(fr.spatter):
            raise DatasetError(
                f"run {fr.run_id!r} frame {fr.frame}: {len(fr.spatter)} spatter blobs "
                f"but {len(fr.meltpool)} melt-pool samples")
        for b in fr.spatter:
            records.append(SampleRecord.from_values(b.centroid, b.mean_u, b.mean_T,
                                                    b.mean_rho, b.mean_p, "spatter"))
        for s in fr.meltpool:
            records.append(SampleRecord.from_values(s.position, s.mean_u, s.mean_T,
                                                    s.mean_rho, s.mean_p, "meltpool"))
        info = runs.setdefault(fr.run_id, {"spatter": 0, "meltpool": 0, "seeds": []})
        info["spatter"] += len(fr.spatter)
        info["meltpool"] += len(fr.meltpool)
        if fr.seed is not None:
            info["seeds"].append(fr.seed)
    return Dataset.from_records(records, provenance={"runs": runs})


def merge(datasets):
    if not datasets:
        raise DatasetError("nothing to merge")
    names = datasets[0].feature_names
    if any(d.feature_names != names for d in datasets):
        raise DatasetError("feature names differ between datasets")
    runs = {}
    for d in datasets:
        runs.update(d.provenance.get("runs", {}))
    return Dataset(np.vstack([d.X for d in datasets]), np.concatenate([d.y for d in datasets]),
                   names, {"runs": runs})


def split_sizes(counts, train_frac):
    """Per-class test counts: total ``ceil((1 - f) N)``, largest-remainder split."""
    if not 0 < train_frac < 1:
        raise DatasetError(f"train_frac must lie in (0, 1), got {train_frac}")
    n = sum(counts)
    # guard against (1 - 0.7) * 10 == 3.0000000000000004
    n_test = math.ceil(round((1 - train_frac) * n, 9))
    shares = [n_test * c / n for c in counts]
    base = [math.floor(s) for s in shares]
    left = n_test - sum(base)
    order = sorted(range(len(counts)), key=lambda c: (-(shares[c] - base[c]), c))
    for c in order[:left]:
        base[c] += 1
    return base


def split_indices(y, train_frac=0.7, seed=0):
    y = np.asarray(y)
    classes = [0, 1]
    members = [np.flatnonzero(y == c) for c in classes]
    for c, m in zip(classes, members):
        if m.size < 2:
            raise DatasetError(f"class {LABELS[c]!r} has {m.size} records, need >= 2")
    sizes = split_sizes([m.size for m in members], train_frac)
    rng = np.random.default_rng(seed)
    test = []
    for m, n_test in zip(members, sizes):
        test.append(rng.permutation(m)[:n_test])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(y.size), test)
    return train, test


def split(ds, train_frac=0.7, seed=0):
    """Stratified, seeded train/test split; returns ``(train, test)``."""
    train, test = split_indices(ds.y, train_frac, seed)
    return ds.subset(train), ds.subset(test)


def drop_spatial(ds):
    """Remove the x, y, z columns."""
    if not set(SPATIAL) <= set(ds.feature_names):
        raise DatasetError("dataset has no spatial columns to drop")
    keep = [n for n, f in enumerate(ds.feature_names) if f not in SPATIAL]
    return Dataset(ds.X[:, keep], ds.y.copy(), tuple(ds.feature_names[n] for n in keep),
                   dict(ds.provenance))


def to_csv(ds, path):
    rows = [[*(float(v) for v in row), int(lab)] for row, lab in zip(ds.X, ds.y)]
    write_csv(path, [*ds.feature_names, "label"], rows)


def from_csv(path):
    """Read a dataset CSV; columns must be a known feature order plus ``label``."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        if not header or header[-1] != "label":
            raise DatasetError(f"{path}: last column must be 'label'")
        names = tuple(header[:-1])
        unknown = [c for c in names if c not in ALL_FEATURES]
        if unknown:
            raise DatasetError(f"{path}: unknown column(s) {unknown}")
        if names not in (ALL_FEATURES, NON_SPATIAL):
            raise DatasetError(f"{path}: column order {names} is not canonical")
        X, y = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(f"{path}:{line_no}: expected {len(header)} fields")
            try:
                X.append([float(v) for v in row[:-1]])
                lab = int(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}:{line_no}: {exc}") from None
            if lab not in (0, 1):
                raise DatasetError(f"{path}:{line_no}: label must be 0 or 1")
            y.append(lab)
    X = np.array(X, dtype=np.float64).reshape(-1, len(names))
    if not np.all(np.isfinite(X)):
        raise DatasetError(f"{path}: non-finite value")
    return Dataset(X, y, names, {"source": str(path)})


def silverman_bandwidth(values):
    """Silverman's rule of thumb, ``0.9 min(sd, IQR/1.34) n^(-1/5)``."""
    v = np.asarray(values, dtype=np.float64)
    sd = v.std(ddof=1)
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * v.size ** -0.2


def feature_stats(ds, bins=20, kde_bandwidth="auto", grid_size=256, n_pairs=200, seed=0):
    """Per-feature, per-class histograms and Gaussian KDE curves.

    Histogram edges and the KDE grid span the feature's range over both
    classes, so the classes are directly comparable.  A class whose values
    are constant gets ``kde_degenerate = True`` and no curve.
    """
    if len(ds) == 0:
        raise DatasetError("feature_stats needs a non-empty dataset")
    stats = {}
    for n, name in enumerate(ds.feature_names):
        col = ds.X[:, n]
        lo, hi = float(col.min()), float(col.max())
        edges = np.histogram_bin_edges(col, bins=bins, range=(lo, hi) if hi > lo else None)
        grid = np.linspace(edges[0], edges[-1], grid_size)
        per_class = {}
        for lab, cname in LABELS.items():
            vals = col[ds.y == lab]
            if vals.size == 0:
                continue
            counts, _ = np.histogram(vals, bins=edges)
            entry = {"count": int(vals.size), "bin_edges": edges.tolist(),
                     "counts": counts.tolist(), "kde_degenerate": False}
            if vals.size < 2 or np.ptp(vals) == 0:
                entry["kde_degenerate"] = True
                entry["kde_grid"] = None
                entry["kde_values"] = None
            else:
                h = silverman_bandwidth(vals) if kde_bandwidth == "auto" else float(kde_bandwidth)
                if not h > 0:
                    h = vals.std(ddof=1) * vals.size ** -0.2
                kde = gaussian_kde(vals, bw_method=h / vals.std(ddof=1))
                entry["bandwidth"] = float(h)
                entry["kde_grid"] = grid.tolist()
                entry["kde_values"] = kde(grid).tolist()
            per_class[cname] = entry
        stats[name] = per_class
    rng = np.random.default_rng(seed)
    pairs = []
    for lab in LABELS:
        idx = np.flatnonzero(ds.y == lab)
        if idx.size > n_pairs:
            idx = np.sort(rng.choice(idx, size=n_pairs, replace=False))
        pairs.append(idx)
    return {"features": stats, "pairs": ds.subset(np.concatenate(pairs))}


def write_stats(stats, out_dir):
    out_dir = Path(out_dir)
    write_json(out_dir / "stats.json", stats["features"])
    to_csv(stats["pairs"], out_dir / "pairs.csv")


__all__ = [
    "SampleRecord", "Dataset", "FrameSamples", "DatasetError", "assemble", "merge",
    "split", "split_indices", "split_sizes", "drop_spatial", "to_csv", "from_csv",
    "feature_stats", "write_stats", "silverman_bandwidth", "SPATIAL", "NON_SPATIAL",
    "ALL_FEATURES",
]
