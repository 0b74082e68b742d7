"""Metal-mask construction, union-find component labeling and blob splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .fieldstore import GridMeta


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PhaseMask:
    meta: GridMeta
    bits: np.ndarray  # bool, shape (nz, ny, nx)


@dataclass(frozen=True, eq=False)
class Blob:
    """A connected set of metal cells and its aggregate field values.

    ``cells`` holds flat cell indices in ascending order; positions are µm,
    velocities m/s.
    """

    id: int
    cells: np.ndarray
    n_cells: int
    volume: float
    centroid: np.ndarray
    mean_u: np.ndarray
    speed: float
    mean_T: float
    mean_rho: float
    mean_p: float
    meta: GridMeta | None = None

    @property
    def ijk(self):
        """Member cells as an ``(n, 3)`` integer array of ``(i, j, k)``."""
        i, j, k = self.meta.unflatten(self.cells)
        return np.stack([i, j, k], axis=1)

    def bbox(self):
        """Axis-aligned bounding box of member cells as ``(lo, hi)`` in µm."""
        ijk = self.ijk
        lo = self.meta.cell_center(*ijk.min(axis=0)) - 0.5 * np.array(self.meta.spacing)
        hi = self.meta.cell_center(*ijk.max(axis=0)) + 0.5 * np.array(self.meta.spacing)
        return lo, hi


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    composite: Blob
    spatter: list
    dropped_small: int


def binarize(bundle, threshold=0.5):
    """Metal mask: 1 where ``alpha_g <= threshold`` (solid or liquid)."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return PhaseMask(bundle.meta, np.asarray(bundle.alpha_g <= threshold))


def neighbor_offsets(connectivity):
    """Half-neighborhood offsets ``(di, dj, dk)`` already visited in a raster scan."""
    if connectivity not in (6, 18, 26):
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    out = []
    for dk in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                n_nonzero = abs(di) + abs(dj) + abs(dk)
                if n_nonzero == 0:
                    continue
                if connectivity == 6 and n_nonzero > 1:
                    continue
                if connectivity == 18 and n_nonzero > 2:
                    continue
                # keep offsets pointing to earlier flat indices
                if (dk, dj, di) < (0, 0, 0):
                    out.append((di, dj, dk))
    return np.array(out, dtype=np.int64)


@numba.njit(cache=True)
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@numba.njit(cache=True)
def _union_find_scan(bits, offsets):
    nz, ny, nx = bits.shape
    n = nx * ny * nz
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    flat = bits.ravel()
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                a = i + nx * (j + ny * k)
                if not flat[a]:
                    continue
                for o in range(offsets.shape[0]):
                    ii = i + offsets[o, 0]
                    jj = j + offsets[o, 1]
                    kk = k + offsets[o, 2]
                    if ii < 0 or jj < 0 or kk < 0 or ii >= nx or jj >= ny or kk >= nz:
                        continue
                    b = ii + nx * (jj + ny * kk)
                    if not flat[b]:
                        continue
                    ra = _find(parent, a)
                    rb = _find(parent, b)
                    if ra == rb:
                        continue
                    if size[ra] < size[rb] or (size[ra] == size[rb] and rb < ra):
                        ra, rb = rb, ra
                    parent[rb] = ra
                    size[ra] += size[rb]
    roots = np.empty(n, dtype=np.int64)
    for a in range(n):
        roots[a] = _find(parent, a) if flat[a] else -1
    return roots


def label_components(mask, connectivity=6):
    """Label connected metal cells with a union-find over a raster scan.

    Returns
    -------
    labels : ndarray of uint32, shape ``(nz, ny, nx)``
        0 for gas, otherwise 1..n; label 1 is the largest component and ties
        go to the component seen first in scan order.
    components : list of ndarray
        Flat cell indices (ascending) of each component, ``components[l - 1]``
        for label ``l``.
    """
    bits = np.ascontiguousarray(mask.bits, dtype=np.bool_)
    roots = _union_find_scan(bits, neighbor_offsets(connectivity))
    metal = np.flatnonzero(roots >= 0)
    labels = np.zeros(bits.size, dtype=np.uint32)
    if metal.size == 0:
        return labels.reshape(bits.shape), []
    uniq, first, inverse, counts = np.unique(
        roots[metal], return_index=True, return_inverse=True, return_counts=True)
    # metal indices are ascending, so first[] is each component's earliest cell
    order = np.lexsort((metal[first], -counts))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    cell_labels = rank[inverse] + 1
    labels[metal] = cell_labels
    sorter = np.argsort(cell_labels, kind="stable")
    bounds = np.cumsum(counts[order])[:-1]
    components = np.split(metal[sorter], bounds)
    return labels.reshape(bits.shape), components


def blob_properties(bundle, cells, blob_id=0):
    """Aggregate fields over ``cells`` (flat indices) into a :class:`Blob`."""
    cells = np.sort(np.asarray(cells, dtype=np.int64).ravel())
    if cells.size == 0:
        raise SegmentationError("blob_properties needs at least one cell")
    meta = bundle.meta
    i, j, k = meta.unflatten(cells)
    centroid = meta.cell_center(i, j, k).mean(axis=1)

    def mean(name):
        return float(np.mean(getattr(bundle, name).ravel()[cells], dtype=np.float64))

    mean_u = np.array([mean("ux"), mean("uy"), mean("uz")])
    return Blob(id=int(blob_id), cells=cells, n_cells=int(cells.size),
                volume=float(cells.size * meta.cell_volume), centroid=centroid,
                mean_u=mean_u, speed=float(np.linalg.norm(mean_u)),
                mean_T=mean("T"), mean_rho=mean("rho"), mean_p=mean("p"), meta=meta)


def classify_blobs(components, bundle, min_cells=8):
    """Split components into the melt-pool/bed composite and spatter blobs.

    The largest component is the composite (ties: the one whose first cell
    comes first in scan order).  Remaining components with at least
    ``min_cells`` cells are spatter, largest first; smaller ones are only
    counted.
    """
    comps = [np.asarray(c, dtype=np.int64) for c in components if len(c)]
    if not comps:
        raise SegmentationError("no metal cells in domain")
    key = sorted(range(len(comps)), key=lambda n: (-comps[n].size, int(comps[n].min())))
    composite = blob_properties(bundle, comps[key[0]], blob_id=0)
    spatter = []
    dropped = 0
    for n in key[1:]:
        if comps[n].size < min_cells:
            dropped += 1
            continue
        spatter.append(blob_properties(bundle, comps[n], blob_id=len(spatter) + 1))
    return SegmentationResult(composite=composite, spatter=spatter, dropped_small=dropped)


def segment(bundle, threshold=0.5, connectivity=6, min_cells=8):
    """binarize -> label_components -> classify_blobs in one call.

    Returns ``(result, labels)``.
    """
    mask = binarize(bundle, threshold)
    labels, comps = label_components(mask, connectivity)
    return classify_blobs(comps, bundle, min_cells), labels
