"""Melt-pool identification, surface extraction and region-averaged sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import segment as seg


class MeltPoolError(ValueError):
    pass


@dataclass(frozen=True)
class SurfaceCell:
    index: tuple  # (i, j, k)
    position: np.ndarray  # µm
    alpha_g: float


@dataclass(frozen=True)
class MeltPoolSample:
    position: np.ndarray
    mean_u: np.ndarray
    speed: float
    mean_T: float
    mean_rho: float
    mean_p: float
    n_cells_used: int


def meltpool_mask(bundle, composite=None, threshold=0.5, connectivity=6):
    """Boolean ``(nz, ny, nx)`` mask of melt-pool cells.

    A melt-pool cell is metal (``alpha_g <= threshold``), mostly liquid
    (``alpha_l > 0.5``) and part of the composite melt-pool/bed blob.  The
    composite is found by segmentation unless given.
    """
    if composite is None:
        result, _ = seg.segment(bundle, threshold=threshold, connectivity=connectivity,
                                min_cells=1)
        composite = result.composite
    in_comp = np.zeros(bundle.meta.n_cells, dtype=bool)
    in_comp[composite.cells] = True
    mask = ((bundle.alpha_g <= threshold) & (bundle.alpha_l > 0.5)
            & in_comp.reshape(bundle.meta.shape))
    if not mask.any():
        raise MeltPoolError("no melt-pool cells (alpha_l > 0.5) in the composite")
    return mask


def surface_cells(mp, bundle):
    """One surface cell per (i, j) column: the melt-pool cell with the
    highest ``alpha_g``; ties go to the highest ``k``.
    """
    ag = np.where(mp, bundle.alpha_g.astype(np.float64), -np.inf)
    has = mp.any(axis=0)  # (ny, nx)
    nz = ag.shape[0]
    # argmax over reversed k returns the first maximum, i.e. the highest k
    k_top = nz - 1 - np.argmax(ag[::-1], axis=0)
    jj, ii = np.nonzero(has)
    kk = k_top[jj, ii]
    pos = bundle.meta.cell_center(ii, jj, kk).T
    return [SurfaceCell(index=(int(i), int(j), int(k)), position=pos[n],
                        alpha_g=float(bundle.alpha_g[k, j, i]))
            for n, (i, j, k) in enumerate(zip(ii, jj, kk))]


def cube_mean(bundle, mp, index, n_r):
    """Field means over melt-pool cells of the ``n_r``-cube centred on ``index``."""
    i, j, k = index
    h = n_r // 2
    nz, ny, nx = bundle.meta.shape
    sl = (slice(max(k - h, 0), min(k + h + 1, nz)),
          slice(max(j - h, 0), min(j + h + 1, ny)),
          slice(max(i - h, 0), min(i + h + 1, nx)))
    sel = mp[sl]
    n = int(sel.sum())
    if n == 0:
        raise MeltPoolError(f"no melt-pool cells in the cube around {index}")
    out = {name: float(np.mean(getattr(bundle, name)[sl][sel], dtype=np.float64))
           for name in ("ux", "uy", "uz", "T", "rho", "p")}
    out["n"] = n
    return out


def sample_surface(bundle, surface, n_r=3, n_samples=1, seed=0, mp=None):
    """Draw ``n_samples`` surface cells and average fields around each.

    Cells are drawn uniformly without replacement, or with replacement when
    more samples than surface cells are requested.  The sample position is
    the chosen cell's centre.
    """
    if n_r < 1 or n_r % 2 == 0:
        raise ValueError(f"n_r must be an odd integer >= 1, got {n_r}")
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    if not surface:
        raise MeltPoolError("empty surface")
    if n_samples == 0:
        return []
    if mp is None:
        mp = meltpool_mask(bundle)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(surface), size=n_samples, replace=n_samples > len(surface))
    out = []
    for n in picks:
        sc = surface[int(n)]
        m = cube_mean(bundle, mp, sc.index, n_r)
        u = np.array([m["ux"], m["uy"], m["uz"]])
        out.append(MeltPoolSample(position=np.asarray(sc.position, dtype=np.float64),
                                  mean_u=u, speed=float(np.linalg.norm(u)),
                                  mean_T=m["T"], mean_rho=m["rho"], mean_p=m["p"],
                                  n_cells_used=m["n"]))
    return out
