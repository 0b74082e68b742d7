"""Structured-grid field bundles and their on-disk directory format.

A bundle directory holds ``meta.json`` plus one raw little-endian float32
file per field (``<name>.f32``).  Cell ``(i, j, k)`` lives at flat index
``i + nx * (j + ny * k)``, i.e. x varies fastest.  Arrays are kept in memory
with shape ``(nz, ny, nx)`` so that ``arr.ravel()`` is exactly that order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes as _atomic_write_bytes

logger = logging.getLogger(__name__)

SCALAR_FIELDS = ("alpha_g", "alpha_s", "alpha_l", "T", "p", "rho")
VECTOR_FIELDS = ("ux", "uy", "uz")
FIELD_NAMES = SCALAR_FIELDS + VECTOR_FIELDS
FRACTION_FIELDS = ("alpha_g", "alpha_s", "alpha_l")

CLAMP_EPS = 1e-6
SUM_TOL = 1e-3
_DTYPE = np.dtype("<f4")


class BundleError(ValueError):
    """Raised when a bundle cannot be loaded or fails validation."""


@dataclass(frozen=True)
class GridMeta:
    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    origin: tuple = (0.0, 0.0, 0.0)
    time: float = 0.0
    params: tuple | None = None  # (power W, velocity m/s)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise BundleError(f"grid dims must be >= 1, got {self.dims}")
        if min(self.dx, self.dy, self.dz) <= 0:
            raise BundleError(f"grid spacing must be > 0, got {self.spacing}")

    @property
    def dims(self):
        return (self.nx, self.ny, self.nz)

    @property
    def spacing(self):
        return (self.dx, self.dy, self.dz)

    @property
    def shape(self):
        """Array shape used in memory, ``(nz, ny, nx)``."""
        return (self.nz, self.ny, self.nx)

    @property
    def n_cells(self):
        return self.nx * self.ny * self.nz

    @property
    def cell_volume(self):
        return self.dx * self.dy * self.dz

    def flatten(self, i, j, k):
        return i + self.nx * (j + self.ny * k)

    def unflatten(self, idx):
        i = idx % self.nx
        j = (idx // self.nx) % self.ny
        k = idx // (self.nx * self.ny)
        return i, j, k

    def cell_center(self, i, j, k):
        ox, oy, oz = self.origin
        return np.array([ox + (np.asarray(i) + 0.5) * self.dx,
                         oy + (np.asarray(j) + 0.5) * self.dy,
                         oz + (np.asarray(k) + 0.5) * self.dz])

    def axis_centers(self):
        """Cell-center coordinates along x, y, z (µm)."""
        ox, oy, oz = self.origin
        return (ox + (np.arange(self.nx) + 0.5) * self.dx,
                oy + (np.arange(self.ny) + 0.5) * self.dy,
                oz + (np.arange(self.nz) + 0.5) * self.dz)

    def to_json(self):
        d = {
            "dims": [self.nx, self.ny, self.nz],
            "spacing_um": [self.dx, self.dy, self.dz],
            "origin_um": list(self.origin),
            "time_us": self.time,
            "fields": list(FIELD_NAMES),
        }
        if self.params is not None:
            d["params"] = {"power_W": self.params[0], "velocity_m_s": self.params[1]}
        return d

    @classmethod
    def from_json(cls, d):
        params = d.get("params")
        if params is not None:
            params = (float(params["power_W"]), float(params["velocity_m_s"]))
        nx, ny, nz = (int(v) for v in d["dims"])
        dx, dy, dz = (float(v) for v in d["spacing_um"])
        return cls(nx, ny, nz, dx, dy, dz,
                   origin=tuple(float(v) for v in d.get("origin_um", (0, 0, 0))),
                   time=float(d.get("time_us", 0.0)), params=params)


@dataclass(frozen=True, eq=False)
class FieldBundle:
    """One timestep of per-cell fields on a uniform grid.

    All arrays have shape ``meta.shape`` == ``(nz, ny, nx)`` and are treated
    as read-only after construction.
    """

    meta: GridMeta
    alpha_g: np.ndarray
    alpha_s: np.ndarray
    alpha_l: np.ndarray
    T: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    uz: np.ndarray
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for name in FIELD_NAMES:
            arr = np.asarray(getattr(self, name))
            if arr.size != self.meta.n_cells:
                raise BundleError(
                    f"field {name!r} has {arr.size} values, grid has {self.meta.n_cells}")
            arr = arr.reshape(self.meta.shape)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def u(self):
        """Velocity as an array of shape ``(nz, ny, nx, 3)`` (m/s)."""
        return np.stack([self.ux, self.uy, self.uz], axis=-1)

    def fields(self):
        return {name: getattr(self, name) for name in FIELD_NAMES}

    def replace(self, **changes):
        kw = {name: getattr(self, name) for name in FIELD_NAMES}
        kw["meta"] = self.meta
        kw.update(changes)
        return FieldBundle(**kw)


def make_bundle(meta, **arrays):
    """Build a bundle from arrays in any float dtype, casting to float32."""
    kw = {name: np.asarray(arrays[name], dtype=_DTYPE).reshape(meta.shape)
          for name in FIELD_NAMES}
    return FieldBundle(meta=meta, **kw)


def validate(bundle):
    """Return the list of invariant violations; empty when the bundle is valid.

    Each violation is a dict with ``field``, ``index`` (flat cell index or
    None) and ``message``.  Volume fractions within ``CLAMP_EPS`` of [0, 1]
    are not violations (they are clamped on load).
    """
    out = []
    for name in FIELD_NAMES:
        arr = getattr(bundle, name).ravel()
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            out.append(_violation(name, bad, "non-finite value"))
    for name in FRACTION_FIELDS:
        arr = getattr(bundle, name).ravel().astype(np.float64)
        bad = np.flatnonzero((arr < -CLAMP_EPS) | (arr > 1 + CLAMP_EPS))
        if bad.size:
            out.append(_violation(name, bad, "volume fraction outside [0, 1]"))
    total = (bundle.alpha_g.ravel().astype(np.float64)
             + bundle.alpha_s.ravel() + bundle.alpha_l.ravel())
    bad = np.flatnonzero(~(np.abs(total - 1.0) <= SUM_TOL))
    if bad.size:
        out.append(_violation("alpha_sum", bad, "alpha_g + alpha_s + alpha_l != 1"))
    for name in ("T", "rho"):
        arr = getattr(bundle, name).ravel()
        bad = np.flatnonzero(~(arr > 0))
        if bad.size:
            out.append(_violation(name, bad, "must be > 0"))
    return out


def _violation(name, bad, message):
    return {"field": name, "index": int(bad[0]), "count": int(bad.size),
            "message": f"{message} at cell {int(bad[0])} ({bad.size} cells)"}


def clamp_fractions(bundle):
    """Clamp volume fractions that are within ``CLAMP_EPS`` of [0, 1].

    Returns ``(bundle, warnings)``; out-of-tolerance values are left as-is
    so that :func:`validate` still reports them.
    """
    changes = {}
    warnings = []
    for name in FRACTION_FIELDS:
        arr = getattr(bundle, name)
        near = ((arr < 0) & (arr >= -CLAMP_EPS)) | ((arr > 1) & (arr <= 1 + CLAMP_EPS))
        if near.any():
            fixed = np.where(near, np.clip(arr, 0, 1), arr).astype(_DTYPE)
            changes[name] = fixed
            warnings.append(f"{name}: clamped {int(near.sum())} cells into [0, 1]")
            logger.warning("%s: clamped %d cells into [0, 1]", name, int(near.sum()))
    if not changes:
        return bundle, []
    out = bundle.replace(**changes)
    object.__setattr__(out, "warnings", tuple(warnings))
    return out, warnings


def save_bundle(bundle, path):
    """Write ``bundle`` as a bundle directory at ``path`` (created if needed)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name in FIELD_NAMES:
        arr = np.ascontiguousarray(getattr(bundle, name), dtype=_DTYPE)
        _atomic_write_bytes(path / f"{name}.f32", arr.tobytes(order="C"))
    text = json.dumps(bundle.meta.to_json(), indent=2, sort_keys=True) + "\n"
    _atomic_write_bytes(path / "meta.json", text.encode("utf-8"))


def load_bundle(path, check=True):
    """Load and validate a bundle directory.

    Raises
    ------
    BundleError
        On a missing file, a size mismatch, non-finite data or (when
        ``check``) any invariant violation.  The message names the field.
    """
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise BundleError(f"missing meta.json in {path}")
    with open(meta_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    meta = GridMeta.from_json(raw)
    declared = raw.get("fields", list(FIELD_NAMES))
    missing = [name for name in FIELD_NAMES if name not in declared]
    if missing:
        raise BundleError(f"meta.json does not declare fields {missing}")
    arrays = {}
    for name in FIELD_NAMES:
        fpath = path / f"{name}.f32"
        if not fpath.is_file():
            raise BundleError(f"field {name!r}: missing file {fpath}")
        data = np.fromfile(fpath, dtype=_DTYPE)
        if data.size != meta.n_cells:
            raise BundleError(
                f"field {name!r}: {data.size} values, meta declares {meta.n_cells}")
        if not np.all(np.isfinite(data)):
            bad = int(np.flatnonzero(~np.isfinite(data))[0])
            raise BundleError(f"field {name!r}: non-finite value at cell {bad}")
        arrays[name] = data.reshape(meta.shape)
    bundle = FieldBundle(meta=meta, **arrays)
    bundle, _ = clamp_fractions(bundle)
    if check:
        problems = validate(bundle)
        if problems:
            msgs = "; ".join(f"{v['field']}: {v['message']}" for v in problems)
            raise BundleError(f"invalid bundle {path}: {msgs}")
    return bundle


def cell_at(bundle, i, j, k):
    """All field values at cell ``(i, j, k)`` as a plain dict."""
    m = bundle.meta
    for name, idx, n in (("i", i, m.nx), ("j", j, m.ny), ("k", k, m.nz)):
        if not 0 <= idx < n:
            raise IndexError(f"{name}={idx} out of range [0, {n})")
    rec = {name: float(getattr(bundle, name)[k, j, i]) for name in SCALAR_FIELDS}
    rec["u"] = (float(bundle.ux[k, j, i]), float(bundle.uy[k, j, i]),
                float(bundle.uz[k, j, i]))
    return rec


CSV_COLUMNS = ("x_um", "y_um", "z_um", "alpha_g", "alpha_s", "alpha_l",
               "T_K", "p_Pa", "rho", "ux", "uy", "uz")


def import_points_csv(path, meta, fill=None):
    """Scatter CSV point data onto the grid declared by ``meta``.

    Each point is assigned to the cell containing it; a cell hit by several
    points receives their mean.  Cells without any point take ``fill`` values
    (default: pure gas at 300 K, 101325 Pa, 1.16 kg/m³, at rest).
    """
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=np.float64)
    data = np.atleast_1d(data)
    names = data.dtype.names or ()
    unknown = set(names) - set(CSV_COLUMNS)
    missing = set(CSV_COLUMNS) - set(names)
    if unknown or missing:
        raise BundleError(f"CSV columns mismatch: unknown={sorted(unknown)} "
                          f"missing={sorted(missing)}")
    fill = dict(fill or {"alpha_g": 1.0, "alpha_s": 0.0, "alpha_l": 0.0, "T": 300.0,
                         "p": 101325.0, "rho": 1.16, "ux": 0.0, "uy": 0.0, "uz": 0.0})
    ox, oy, oz = meta.origin
    i = np.floor((data["x_um"] - ox) / meta.dx).astype(np.int64)
    j = np.floor((data["y_um"] - oy) / meta.dy).astype(np.int64)
    k = np.floor((data["z_um"] - oz) / meta.dz).astype(np.int64)
    inside = ((i >= 0) & (i < meta.nx) & (j >= 0) & (j < meta.ny)
              & (k >= 0) & (k < meta.nz))
    if not inside.all():
        logger.warning("dropping %d points outside the grid", int((~inside).sum()))
    flat = meta.flatten(i[inside], j[inside], k[inside])
    counts = np.bincount(flat, minlength=meta.n_cells)
    src = {"alpha_g": "alpha_g", "alpha_s": "alpha_s", "alpha_l": "alpha_l",
           "T": "T_K", "p": "p_Pa", "rho": "rho", "ux": "ux", "uy": "uy", "uz": "uz"}
    arrays = {}
    for name, col in src.items():
        sums = np.bincount(flat, weights=data[col][inside], minlength=meta.n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(counts > 0, sums / np.maximum(counts, 1), fill[name])
        arrays[name] = vals
    return make_bundle(meta, **arrays)

