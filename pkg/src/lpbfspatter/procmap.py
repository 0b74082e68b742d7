"""Voxel-wise spatter screening over a power/velocity grid, and process-map output."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mpsample, segment
from ._io import write_csv, write_json
from .dataset import NON_SPATIAL
from .learners.models import predict_proba
from .synthgen import MaterialParams, ProcessParams, SurrogateConfig, iter_surrogate

log = logging.getLogger(__name__)


class ProcessMapError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessMapCell:
    power: float  # W
    scan_speed: float  # m/s
    spatter_volume: float  # µm³ summed over frames
    flagged_fraction: float
    frames_used: int

    @property
    def energy_density(self):
        """Linear energy density P/v in J/m."""
        return self.power / self.scan_speed


@dataclass(frozen=True)
class BoundaryOverlay:
    """Named polylines in (velocity m/s, power W) space, supplied as data."""

    lines: dict

    def __post_init__(self):
        for name, pts in self.lines.items():
            arr = np.asarray(pts, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
                raise ProcessMapError(f"overlay {name!r}: need >= 2 (velocity, power) points")
            if not np.all(np.isfinite(arr)):
                raise ProcessMapError(f"overlay {name!r}: non-finite point")

    def to_json(self):
        return {name: [[float(v), float(p)] for v, p in pts] for name, pts in self.lines.items()}


def cell_features(bundle, mask):
    """``(n, 7)`` non-spatial feature rows for the cells selected by ``mask``."""
    ux, uy, uz = (a[mask].astype(np.float64) for a in (bundle.ux, bundle.uy, bundle.uz))
    vmag = np.sqrt(ux * ux + uy * uy + uz * uz)
    cols = [ux, uy, uz, vmag] + [getattr(bundle, n)[mask].astype(np.float64)
                                 for n in ("T", "rho", "p")]
    return np.column_stack(cols)


def flag_spatter_cells(model, bundle, threshold=0.5, surface_only=False, mp=None):
    """Melt-pool cells whose spatter probability exceeds ``threshold``.

    Returns ``(flagged, n_meltpool)`` with ``flagged`` a boolean
    ``(nz, ny, nx)`` mask.  ``model`` must use exactly the non-spatial
    features; any callable mapping ``(n, 7)`` rows to probabilities works too.
    """
    names = tuple(getattr(model, "feature_names", NON_SPATIAL))
    if names != NON_SPATIAL:
        raise ProcessMapError(f"model expects features {names}; screening needs a model "
                              f"trained on {NON_SPATIAL} (spatial columns removed)")
    if mp is None:
        metal = (bundle.alpha_g <= 0.5) & (bundle.alpha_l > 0.5)
        mp = metal if not metal.any() else mpsample.meltpool_mask(bundle)
    if surface_only and mp.any():
        surf = np.zeros_like(mp)
        for sc in mpsample.surface_cells(mp, bundle):
            i, j, k = sc.index
            surf[k, j, i] = True
        mp = surf
    flagged = np.zeros(mp.shape, dtype=bool)
    if not mp.any():
        return flagged, 0
    X = cell_features(bundle, mp)
    if hasattr(model, "spec"):
        prob = predict_proba(model, X)[:, 1]
    else:
        prob = np.asarray(model(X), dtype=np.float64)
    flagged[mp] = prob > threshold
    return flagged, int(mp.sum())


def screen_point(params, model, mat=None, cfg=None, threshold=0.5, surface_only=False):
    """Generate one run and sum flagged volume over its frames."""
    mat = mat or MaterialParams()
    cfg = cfg or SurrogateConfig()
    volume, n_flag, n_mp, frames = 0.0, 0, 0, 0
    try:
        for b in iter_surrogate(params, mat, cfg):
            res, _ = segment.segment(b, min_cells=1)
            mp = ((b.alpha_g <= 0.5) & (b.alpha_l > 0.5))
            comp = np.zeros(b.meta.n_cells, dtype=bool)
            comp[res.composite.cells] = True
            mp &= comp.reshape(b.meta.shape)
            flagged, n = flag_spatter_cells(model, b, threshold, surface_only, mp=mp)
            k = int(flagged.sum())
            n_flag += k
            n_mp += n
            volume += k * b.meta.cell_volume
            frames += 1
    except Exception as exc:
        raise ProcessMapError(f"grid point P={params.power} W, v={params.scan_speed} m/s: "
                              f"{exc}") from exc
    return ProcessMapCell(params.power, params.scan_speed, volume,
                          n_flag / n_mp if n_mp else 0.0, frames)


def screen(grid, model, mat=None, cfg=None, threshold=0.5, surface_only=False, n_jobs=1):
    """Screen every grid point; output order follows ``grid``."""
    grid = list(grid)
    if not grid:
        raise ProcessMapError("empty process grid")
    cfg = cfg or SurrogateConfig()
    if cfg.frames < 1:
        raise ProcessMapError("no frames configured")

    def one(p):
        return screen_point(p, model, mat, cfg, threshold, surface_only)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            return list(ex.map(one, grid))
    return [one(p) for p in grid]


def make_grid(powers, speeds, **kw):
    """Full factorial grid, power-major."""
    return [ProcessParams(float(p), float(v), **kw) for p in powers for v in speeds]


def _slices(cells, key, other):
    groups = {}
    for c in cells:
        groups.setdefault(getattr(c, key), []).append(c)
    return {k: sorted(g, key=lambda c: getattr(c, other)) for k, g in sorted(groups.items())}


def trend_curves(cells):
    """Spatter volume along power (fixed speed), speed (fixed power) and P/v."""
    if not cells:
        raise ProcessMapError("no cells")
    return {
        "vs_power": {v: [(c.power, c.spatter_volume) for c in g]
                     for v, g in _slices(cells, "scan_speed", "power").items()},
        "vs_velocity": {p: [(c.scan_speed, c.spatter_volume) for c in g]
                        for p, g in _slices(cells, "power", "scan_speed").items()},
        "vs_energy_density": [(c.energy_density, c.spatter_volume)
                              for c in sorted(cells, key=lambda c: (c.energy_density, c.power))],
    }


def quadrant_means(cells):
    """Mean spatter volume per quadrant, split at the median power and speed.

    Grid values equal to a median (odd number of levels) belong to neither
    side.  Keys: ``HP_LV``, ``HP_HV``, ``LP_LV``, ``LP_HV``.
    """
    P = np.median(np.unique([c.power for c in cells]))
    V = np.median(np.unique([c.scan_speed for c in cells]))
    out = {}
    for pk, pside in (("HP", 1), ("LP", -1)):
        for vk, vside in (("LV", -1), ("HV", 1)):
            vals = [c.spatter_volume for c in cells
                    if np.sign(c.power - P) == pside and np.sign(c.scan_speed - V) == vside]
            out[f"{pk}_{vk}"] = float(np.mean(vals)) if vals else math.nan
    return out


def _tag(x):
    return format(float(x), "g")


def emit_map(cells, overlay, path):
    """Write map.csv, overlay.json and trends/*.csv under ``path``."""
    if not cells:
        raise ProcessMapError("no cells to emit")
    path = Path(path)
    write_csv(path / "map.csv",
              ["power_W", "velocity_m_s", "spatter_volume_um3", "flagged_fraction",
               "frames_used"],
              [[c.power, c.scan_speed, c.spatter_volume, c.flagged_fraction, c.frames_used]
               for c in cells])
    write_json(path / "overlay.json", overlay.to_json() if overlay is not None else {})
    trends = trend_curves(cells)
    for v, pts in trends["vs_power"].items():
        write_csv(path / "trends" / f"power_at_v{_tag(v)}.csv",
                  ["power_W", "spatter_volume_um3"], pts)
    for p, pts in trends["vs_velocity"].items():
        write_csv(path / "trends" / f"velocity_at_P{_tag(p)}.csv",
                  ["velocity_m_s", "spatter_volume_um3"], pts)
    write_csv(path / "trends" / "energy_density.csv",
              ["energy_density_J_m", "spatter_volume_um3"], trends["vs_energy_density"])
    return trends
