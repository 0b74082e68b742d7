"""Calibrated surrogate field generator and synthetic labeled datasets.

This is NOT a CFD solver.  It produces plausible single-track fields so that
segmentation, tracking, sampling, learning and screening can be exercised
end to end:

* an asymmetric half-ellipsoid melt pool travelling with the beam, whose
  width and depth at 1 m/s interpolate the calibration table and scale with
  ``1/sqrt(v)`` at other speeds;
* a temperature field shaped by the Gaussian beam profile;
* recoil pressure from the Clausius-Clapeyron expression on hot liquid;
* a backward surface flow, plus an ejection zone on the rear rim where the
  recoil drives fluid up and back at ``sqrt(2 p_recoil / rho)``;
* spatter droplets released from that zone as Poisson events and moving
  ballistically, with their identities recorded as ground truth.

Positions are µm, times µs, velocities m/s (1 m/s == 1 µm/µs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import ALL_FEATURES, Dataset
from .fieldstore import GridMeta, make_bundle


class SurrogateError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessParams:
    power: float  # W
    scan_speed: float  # m/s
    beam_radius: float = 50.0  # µm, D4sigma = 100 µm
    absorptivity: float = 0.55

    def __post_init__(self):
        if not (self.power > 0 and self.scan_speed > 0 and self.beam_radius > 0):
            raise SurrogateError("power, scan_speed and beam_radius must be positive")
        if not 0 < self.absorptivity <= 1:
            raise SurrogateError("absorptivity must lie in (0, 1]")


@dataclass(frozen=True)
class MaterialParams:
    """SS316L constants; vapour temperature, molar mass and gas density are
    not tabulated alongside the others and use common literature values."""

    T_liquidus: float = 1723.0
    T_solidus: float = 1658.0
    T_vapor: float = 3090.0
    P0: float = 101325.0
    L_v: float = 7.45e6  # J/kg
    molar_mass: float = 0.05585  # kg/mol
    gas_constant: float = 8.314462618
    rho_metal: float = 7618.0  # kg/m3 at 298 K
    rho_liquid: float = 6468.0  # kg/m3 at 1923 K
    rho_gas: float = 1.16  # nitrogen
    surface_tension: float = 1.882  # N/m
    T_ambient: float = 300.0
    # (power W, melt-pool width µm, depth µm) at 1 m/s
    calibration: tuple = ((150.0, 100.0, 38.0), (300.0, 140.0, 73.0), (450.0, 176.0, 152.0))

    def __post_init__(self):
        if not self.T_solidus < self.T_liquidus < self.T_vapor:
            raise SurrogateError("need T_solidus < T_liquidus < T_vapor")
        cal = np.array(self.calibration, dtype=np.float64)
        if cal.ndim != 2 or cal.shape[1] != 3 or cal.shape[0] < 2:
            raise SurrogateError("calibration must be rows of (power, width, depth)")
        if np.any(cal[:, 1:] <= 0):
            raise SurrogateError("calibration widths and depths must be positive")
        if np.any(np.diff(cal[:, 0]) <= 0) or np.any(np.diff(cal[:, 1:], axis=0) < 0):
            raise SurrogateError("calibration must be increasing in power")

    def density(self, T):
        """Metal density (kg/m3), linear through the 298 K and 1923 K values."""
        slope = (self.rho_liquid - self.rho_metal) / (1923.0 - 298.0)
        rho = self.rho_metal + slope * (np.asarray(T, dtype=np.float64) - 298.0)
        return np.maximum(rho, 0.5 * self.rho_liquid)


@dataclass(frozen=True)
class SurrogateConfig:
    nx: int = 200
    ny: int = 80
    nz: int = 80
    dx: float = 5.0  # µm, uniform spacing
    surface_height: float | None = None  # µm; default 0.6 of the domain height
    frames: int = 10
    dt: float = 5.0  # µs
    rate_coefficient: float = 10.0  # events per frame per unit (recoil / P0)
    eject_speed: tuple = (2.5, 20.0)  # m/s
    particle_radius: tuple = (8.0, 12.0)  # µm; >= 1.6 cells keeps droplets >= 8 cells
    min_separation: float = 60.0  # µm between live droplets at all times
    x_start: float | None = None  # beam x at t = 0, µm
    peak_temperature_scale: float = 250.0  # K per e-fold of absorbed line power
    reference_power: float = 40.0  # W/sqrt(m/s) that puts the peak at T_vapor
    droplet_cooling: float = 2.0  # K/µs
    seed: int = 0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 4 or not self.dx > 0:
            raise SurrogateError("domain needs at least 4 cells per axis and dx > 0")
        if self.frames < 1 or not self.dt > 0:
            raise SurrogateError("need frames >= 1 and dt > 0")
        lo, hi = self.eject_speed
        if not 0 < lo <= hi:
            raise SurrogateError("eject_speed must satisfy 0 < min <= max")
        if self.rate_coefficient < 0:
            raise SurrogateError("rate_coefficient must be >= 0")

    @property
    def extent(self):
        return (self.nx * self.dx, self.ny * self.dx, self.nz * self.dx)

    @property
    def surface_z(self):
        zs = self.surface_height if self.surface_height is not None else 0.6 * self.nz * self.dx
        return round(zs / self.dx) * self.dx  # on a cell face


def beam_intensity(offset, params):
    """Gaussian beam intensity (W/m²) at in-plane distance(s) ``offset`` (µm).

    ``offset`` may be a distance or an array whose last axis holds (dx, dy).
    """
    off = np.asarray(offset, dtype=np.float64)
    d2 = off * off if off.ndim == 0 else (off ** 2).sum(axis=-1) if off.shape[-1] == 2 else off ** 2
    r = params.beam_radius * 1e-6
    peak = 2.0 * params.absorptivity * params.power / (math.pi * r * r)
    return peak * np.exp(-2.0 * d2 * 1e-12 / (r * r))


def recoil_pressure(T, mat):
    """Recoil-pressure magnitude (Pa): ``0.54 P0 exp[L_v M (T - T_v) / (R T T_v)]``."""
    T = np.asarray(T, dtype=np.float64)
    if np.any(T <= 0):
        raise SurrogateError("temperature must be > 0")
    expo = mat.L_v * mat.molar_mass * (T - mat.T_vapor) / (mat.gas_constant * T * mat.T_vapor)
    out = 0.54 * mat.P0 * np.exp(expo)
    return float(out) if out.ndim == 0 else out


def meltpool_size(power, scan_speed, mat):
    """Calibrated (width, depth) in µm.

    Piecewise-linear in power through the calibration rows (linear
    extrapolation beyond them, floored at 10 % of the first row), scaled by
    ``1/sqrt(v)`` relative to the 1 m/s calibration line.
    """
    cal = np.array(mat.calibration, dtype=np.float64)
    P = cal[:, 0]

    def interp(col):
        vals = cal[:, col]
        if power <= P[0]:
            slope = (vals[1] - vals[0]) / (P[1] - P[0])
            v = vals[0] + slope * (power - P[0])
        elif power >= P[-1]:
            slope = (vals[-1] - vals[-2]) / (P[-1] - P[-2])
            v = vals[-1] + slope * (power - P[-1])
        else:
            v = float(np.interp(power, P, vals))
        return max(v, 0.1 * vals[0])

    scale = 1.0 / math.sqrt(scan_speed)
    return interp(1) * scale, interp(2) * scale


def peak_temperature(params, mat, cfg):
    """Peak surface temperature (K), logarithmic in absorbed power / sqrt(v)."""
    q = params.absorptivity * params.power / math.sqrt(params.scan_speed)
    T = mat.T_vapor + cfg.peak_temperature_scale * math.log(q / cfg.reference_power)
    return max(T, mat.T_liquidus + 100.0)


@dataclass(frozen=True)
class PoolGeometry:
    width: float
    depth: float
    half_width: float  # corrected so the top-layer width equals ``width``
    front: float
    rear: float
    yc: float
    zs: float


def pool_geometry(params, mat, cfg):
    width, depth = meltpool_size(params.power, params.scan_speed, mat)
    half_top = 0.5 * cfg.dx / depth
    if half_top >= 1:
        raise SurrogateError(f"melt pool depth {depth:.1f} µm is below one cell ({cfg.dx} µm)")
    b = 0.5 * width
    yc = (cfg.ny // 2 + 0.5) * cfg.dx
    return PoolGeometry(width=width, depth=depth, half_width=b / math.sqrt(1 - half_top ** 2),
                        front=b, rear=b * (1.0 + params.scan_speed), yc=yc, zs=cfg.surface_z)


def beam_track(params, mat, cfg):
    """Beam x-position (µm) for every frame; raises if the pool leaves the domain."""
    g = pool_geometry(params, mat, cfg)
    Lx, Ly, Lz = cfg.extent
    travel = params.scan_speed * cfg.dt * (cfg.frames - 1)
    margin = 2 * cfg.dx
    if cfg.x_start is None:
        free = Lx - g.rear - g.front - travel - 2 * margin
        x0 = margin + g.rear + max(free, 0.0) / 2
    else:
        x0 = cfg.x_start
    xs = x0 + params.scan_speed * cfg.dt * np.arange(cfg.frames)
    problems = []
    if xs[0] - g.rear < margin or xs[-1] + g.front > Lx - margin:
        problems.append(f"length {g.rear + g.front + travel:.0f} µm vs domain {Lx:.0f} µm")
    if g.yc - g.half_width < margin or g.yc + g.half_width > Ly - margin:
        problems.append(f"width {g.width:.0f} µm vs domain {Ly:.0f} µm")
    if g.zs - g.depth < margin:
        problems.append(f"depth {g.depth:.0f} µm vs substrate {g.zs:.0f} µm")
    if Lz - g.zs < 6 * cfg.dx:
        problems.append("no room for gas above the surface")
    if problems:
        raise SurrogateError("domain too small for the calibrated melt pool: " + "; ".join(problems))
    return xs


@dataclass
class Droplet:
    id: int
    birth_frame: int
    birth_time: float
    position: np.ndarray  # µm at birth
    velocity: np.ndarray  # m/s
    radius: float  # µm
    T0: float
    cells: dict = field(default_factory=dict)  # frame -> flat cell indices

    def center(self, t):
        return self.position + self.velocity * (t - self.birth_time)

    def to_json(self):
        first = min(self.cells) if self.cells else None
        return {"id": self.id, "birth_frame": self.birth_frame, "birth_time_us": self.birth_time,
                "position_um": self.position.tolist(), "velocity_m_s": self.velocity.tolist(),
                "radius_um": self.radius, "T0_K": self.T0,
                "initial_cells": [] if first is None else self.cells[first].tolist(),
                "frames": sorted(self.cells)}


@dataclass
class SurrogateRun:
    bundles: list
    droplets: list
    lam: list  # Poisson rate per frame
    params: ProcessParams
    beam_x: np.ndarray
    rejected: int = 0

    def ground_truth(self):
        return {"params": {"power_W": self.params.power, "velocity_m_s": self.params.scan_speed},
                "rate_per_frame": list(self.lam), "rejected_events": self.rejected,
                "spatter": [d.to_json() for d in self.droplets]}

    def labels_at(self, frame):
        """Map flat cell index -> droplet id for frame ``frame``."""
        out = {}
        for d in self.droplets:
            for c in d.cells.get(frame, ()):
                out[int(c)] = d.id
        return out


class _Frame:
    """Per-frame intermediate fields (float64) before droplets are stamped in."""

    def __init__(self, params, mat, cfg, geom, xb):
        self.cfg = cfg
        x, y, z = _axes(cfg)
        Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
        zs = geom.zs
        metal = Z < zs
        depth = zs - Z
        a = np.where(X >= xb, geom.front, geom.rear)
        qx = (X - xb) / a
        qy = (Y - geom.yc) / geom.half_width
        qz = depth / geom.depth
        r = np.sqrt(qx ** 2 + qy ** 2 + qz ** 2)
        grad = np.sqrt((qx / a) ** 2 + (qy / geom.half_width) ** 2 + (qz / geom.depth) ** 2)
        grad = np.where(r > 0, grad / np.where(r > 0, r, 1), 1.0 / min(geom.depth, geom.front))
        sd = (r - 1.0) / grad  # approximate signed distance to the pool boundary, µm
        h = cfg.dx
        liquid_ramp = np.clip(0.5 - sd / (2 * h), 0.0, 1.0)
        alpha_l = np.where(metal, liquid_ramp, 0.0)
        alpha_g = np.where(metal, 0.0, 1.0)

        # temperature
        T_peak = peak_temperature(params, mat, cfg)
        off2 = (X - xb) ** 2 + (Y - geom.yc) ** 2
        footprint = np.exp(-2.0 * off2 / params.beam_radius ** 2)
        inside = np.clip(1.0 - r, 0.0, 1.0)
        T_in = mat.T_liquidus + (T_peak - mat.T_liquidus) * inside * (0.3 + 0.7 * footprint)
        decay = 0.5 * geom.half_width
        T_out = mat.T_ambient + (mat.T_solidus - mat.T_ambient) * np.exp(-np.maximum(sd, 0) / decay)
        T_metal = np.where(liquid_ramp >= 0.5, np.maximum(T_in, mat.T_liquidus), T_out)
        T = np.where(metal, T_metal, mat.T_ambient)

        # vapour depression in fully liquid surface cells under the beam
        k_top = int(round(zs / cfg.dx)) - 1
        top = np.zeros_like(metal)
        top[k_top] = True
        full_liquid = (liquid_ramp >= 1.0) & metal
        alpha_g = np.where(top & full_liquid, 0.3 * footprint, alpha_g)
        alpha_l = np.where(metal, np.minimum(alpha_l, 1.0 - alpha_g), alpha_l)
        alpha_s = np.where(metal, 1.0 - alpha_g - alpha_l, 0.0)

        # surface recoil drives pressure and flow
        T_surf = T[k_top]  # (ny, nx)
        p_rec_surf = np.where(alpha_l[k_top] > 0.5, recoil_pressure(T_surf, mat), 0.0)
        in_pool = (alpha_l > 0.5) & metal
        L_p = 0.25 * geom.depth
        p = np.where(in_pool, mat.P0 + p_rec_surf[None] * np.exp(-depth / L_p), mat.P0)
        rho_m = mat.density(T)
        rho = alpha_g * mat.rho_gas + (1 - alpha_g) * rho_m

        u_rec = np.sqrt(2.0 * p_rec_surf / mat.density(T_surf))  # m/s, per column
        u_peak = float(u_rec.max()) if u_rec.size else 0.0
        surf_decay = np.exp(-depth / (0.3 * geom.depth))
        ux = np.where(in_pool, -0.3 * u_peak * surf_decay * (0.3 + 0.7 * footprint) * inside, 0.0)
        uy = np.where(in_pool, 0.2 * u_peak * surf_decay * qy * inside, 0.0)
        uz = np.where(in_pool, -0.15 * u_peak * footprint * np.exp(-depth / geom.depth) * inside,
                      0.0)

        # ejection zone: top two pool layers behind the beam, fast enough to eject
        lo = cfg.eject_speed[0]
        zone = in_pool & (Z > zs - 2 * cfg.dx) & (X <= xb) & (u_rec[None] >= lo)
        direction = np.array([-0.6, 0.0, 0.8])
        u_zone = np.broadcast_to(u_rec[None], zone.shape)
        ux = np.where(zone, direction[0] * u_zone, ux)
        uz = np.where(zone, direction[2] * u_zone, uz)
        # rim ligaments about to pinch off carry the Laplace pressure of a droplet
        r_lig = 0.5 * (cfg.particle_radius[0] + cfg.particle_radius[1]) * 1e-6
        p = np.where(zone, mat.P0 + 2.0 * mat.surface_tension / r_lig, p)

        self.arrays = {"alpha_g": alpha_g, "alpha_s": alpha_s, "alpha_l": alpha_l, "T": T,
                       "p": p, "rho": rho, "ux": ux, "uy": uy, "uz": uz}
        self.zone = zone
        self.u_rec = u_rec
        self.footprint_recoil = float(np.mean(p_rec_surf[footprint[k_top] >= math.exp(-2.0)]))
        self.k_top = k_top


def _axes(cfg):
    c = lambda n: (np.arange(n) + 0.5) * cfg.dx  # noqa: E731
    return c(cfg.nx), c(cfg.ny), c(cfg.nz)


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _sphere_cells(cfg, center, radius):
    x, y, z = _axes(cfg)
    lo = np.maximum(np.floor((center - radius) / cfg.dx).astype(int), 0)
    hi = np.minimum(np.ceil((center + radius) / cfg.dx).astype(int) + 1,
                    [cfg.nx, cfg.ny, cfg.nz])
    ii, jj, kk = np.meshgrid(np.arange(lo[0], hi[0]), np.arange(lo[1], hi[1]),
                             np.arange(lo[2], hi[2]), indexing="ij")
    d2 = (x[ii] - center[0]) ** 2 + (y[jj] - center[1]) ** 2 + (z[kk] - center[2]) ** 2
    sel = d2 <= radius ** 2
    flat = ii[sel] + cfg.nx * (jj[sel] + cfg.ny * kk[sel])
    return np.sort(flat)


def _inside_domain(cfg, center, radius, zs):
    Lx, Ly, Lz = cfg.extent
    return (center[0] - radius >= 0 and center[0] + radius <= Lx
            and center[1] - radius >= 0 and center[1] + radius <= Ly
            and center[2] + radius <= Lz and center[2] - radius >= zs + cfg.dx)


def _min_gap(a, b, t_from, times):
    """Smallest centre distance between droplets ``a`` and ``b`` at ``times >= t_from``."""
    ts = times[times >= t_from]
    if ts.size == 0:
        return np.inf
    pa = a.position[None] + a.velocity[None] * (ts[:, None] - a.birth_time)
    pb = b.position[None] + b.velocity[None] * (ts[:, None] - b.birth_time)
    return float(np.min(np.linalg.norm(pa - pb, axis=1)))


def iter_surrogate(params, mat=None, cfg=None, ledger=None):
    """Yield the run's bundles one frame at a time.

    Only the current frame is held in memory.  ``ledger`` (a
    :class:`SurrogateRun` with an empty bundle list) collects droplets,
    rates and rejections as frames are produced.
    """
    mat = mat or MaterialParams()
    cfg = cfg or SurrogateConfig()
    geom = pool_geometry(params, mat, cfg)
    xs = beam_track(params, mat, cfg)
    times = cfg.dt * np.arange(cfg.frames)
    if ledger is None:
        ledger = SurrogateRun(bundles=[], droplets=[], lam=[], params=params, beam_x=xs)
    ledger.beam_x = xs
    droplets = ledger.droplets

    for f, xb in enumerate(xs):
        fr = _Frame(params, mat, cfg, geom, xb)
        lam = cfg.rate_coefficient * fr.footprint_recoil / mat.P0
        ledger.lam.append(lam)
        rng = _rng(cfg.seed, 1, f)
        n_events = int(rng.poisson(lam)) if lam > 0 else 0
        zone_idx = np.flatnonzero(fr.zone)
        if zone_idx.size == 0:
            n_events = 0
        if n_events:
            _, zj, zi = np.unravel_index(zone_idx, fr.zone.shape)
            weights = fr.u_rec[zj, zi]
        for _ in range(n_events):
            site = int(rng.choice(zone_idx.size, p=weights / weights.sum()))
            si, sj = zi[site], zj[site]
            radius = rng.uniform(*cfg.particle_radius)
            elev = math.radians(rng.uniform(30.0, 80.0))
            azim = math.radians(rng.normal(0.0, 25.0))
            direction = np.array([-math.cos(elev) * math.cos(azim),
                                  math.cos(elev) * math.sin(azim), math.sin(elev)])
            speed = float(np.clip(fr.u_rec[sj, si] * rng.uniform(0.8, 1.2), *cfg.eject_speed))
            center = np.array([(si + 0.5) * cfg.dx, (sj + 0.5) * cfg.dx,
                               geom.zs + radius + 1.5 * cfg.dx])
            # release happened at a random moment during the preceding interval
            center = center + speed * direction * rng.uniform(0.0, cfg.dt)
            T0 = float(fr.arrays["T"][fr.k_top, sj, si]) - rng.uniform(0.0, 50.0)
            cand = Droplet(id=len(droplets), birth_frame=f, birth_time=float(times[f]),
                           position=center, velocity=speed * direction, radius=radius, T0=T0)
            live = [d for d in droplets if d.birth_frame == f or (f - 1) in d.cells]
            if any(_min_gap(cand, d, times[f], times) < cfg.min_separation for d in live):
                ledger.rejected += 1
                continue
            droplets.append(cand)

        # stamp droplets that are alive and still fully inside the gas region
        for d in droplets:
            if not (d.birth_frame == f or (f - 1) in d.cells):
                continue
            c = d.center(times[f])
            if not _inside_domain(cfg, c, d.radius, geom.zs):
                continue
            cells = _sphere_cells(cfg, c, d.radius)
            d.cells[f] = cells
            T = d.T0 - cfg.droplet_cooling * (times[f] - d.birth_time)
            arr = fr.arrays
            for name, val in (("alpha_g", 0.0), ("alpha_s", 0.0), ("alpha_l", 1.0), ("T", T),
                              ("p", mat.P0 + 2.0 * mat.surface_tension / (d.radius * 1e-6)),
                              ("rho", float(mat.density(T))), ("ux", d.velocity[0]),
                              ("uy", d.velocity[1]), ("uz", d.velocity[2])):
                arr[name].reshape(-1)[cells] = val
        meta = GridMeta(cfg.nx, cfg.ny, cfg.nz, cfg.dx, cfg.dx, cfg.dx, (0.0, 0.0, 0.0),
                        float(times[f]), (params.power, params.scan_speed))
        yield make_bundle(meta, **fr.arrays)
    # droplets born outside the domain never appeared
    droplets[:] = [d for d in droplets if d.cells]


def surrogate_run(params, mat=None, cfg=None):
    """Generate ``cfg.frames`` bundles plus the droplet ground truth."""
    ledger = SurrogateRun(bundles=[], droplets=[], lam=[], params=params, beam_x=None)
    ledger.bundles = list(iter_surrogate(params, mat, cfg, ledger))
    return ledger


def spatter_rate(params, mat=None, cfg=None):
    """Poisson rate per frame at t = 0 (used to check monotonicity)."""
    mat = mat or MaterialParams()
    cfg = replace(cfg or SurrogateConfig(), frames=1)
    geom = pool_geometry(params, mat, cfg)
    xb = beam_track(params, mat, cfg)[0]
    fr = _Frame(params, mat, cfg, geom, xb)
    return cfg.rate_coefficient * fr.footprint_recoil / mat.P0


def meltpool_dimensions(bundle):
    """Measured (width, depth) in µm of the ``alpha_l = 0.5`` region.

    Width is the largest y-extent in the top metal layer and depth the
    largest distance below the surface plane, both located by linear
    interpolation between cell centres.
    """
    m = bundle.meta
    ag = bundle.alpha_g.astype(np.float64)
    al = bundle.alpha_l.astype(np.float64)
    metal_layers = np.flatnonzero((ag <= 0.5).any(axis=(1, 2)))
    k_top = int(metal_layers.max())
    zs = m.origin[2] + (k_top + 1) * m.dz
    x, y, z = m.axis_centers()

    def extent(profile, coords):
        inside = profile > 0.5
        if not inside.any():
            return None
        idx = np.flatnonzero(inside)
        lo, hi = idx[0], idx[-1]

        def cross(a, b):
            pa, pb = profile[a], profile[b]
            return coords[a] + (0.5 - pa) / (pb - pa) * (coords[b] - coords[a])
        left = cross(lo - 1, lo) if lo > 0 else coords[lo]
        right = cross(hi, hi + 1) if hi + 1 < profile.size else coords[hi]
        return left, right

    width = 0.0
    for i in range(m.nx):
        e = extent(al[k_top, :, i], y)
        if e is not None:
            width = max(width, e[1] - e[0])
    depth = 0.0
    for j in range(m.ny):
        for i in range(m.nx):
            col = al[: k_top + 1, j, i]
            if col[-1] <= 0.5:
                continue
            below = np.flatnonzero(col <= 0.5)
            if below.size == 0:
                depth = max(depth, zs - m.origin[2])
                continue
            kb = below[-1]
            zc = z[kb] + (0.5 - col[kb]) / (col[kb + 1] - col[kb]) * (z[kb + 1] - z[kb])
            depth = max(depth, zs - zc)
    return width, depth


# Class-conditional Gaussians over (x, y, z, vx, vy, vz, T, rho, p); vmag is derived.
_GEN_FEATURES = ("x", "y", "z", "vx", "vy", "vz", "T", "rho", "p")


def _diag_cov(sd, corr=()):
    sd = np.asarray(sd, dtype=np.float64)
    c = np.eye(sd.size)
    for a, b, r in corr:
        c[a, b] = c[b, a] = r
    return (c * sd[:, None] * sd[None, :]).tolist()


# Spatter: broad positions and velocities, narrow temperature and pressure.
# Melt pool: localized positions, slow uniform flow, broad temperature and pressure.
REFERENCE_CLASSES = {
    "spatter": {
        "mean": [300.0, 200.0, 340.0, -4.0, 0.0, 6.0, 3300.0, 5494.0, 4.8e5],
        "cov": _diag_cov([150.0, 60.0, 60.0, 3.0, 1.5, 3.0, 100.0, 70.0, 4.0e4],
                         corr=[(6, 7, -0.9)]),
    },
    "meltpool": {
        "mean": [300.0, 200.0, 295.0, -0.8, 0.0, 0.3, 2700.0, 5900.0, 1.9e5],
        "cov": _diag_cov([60.0, 25.0, 8.0, 0.8, 1.2, 0.8, 400.0, 280.0, 1.2e5],
                         corr=[(6, 7, -0.9), (6, 8, 0.4)]),
    },
}


def gen_dataset(class_model=None, n=488, seed=0):
    """Draw ``n / 2`` records per class from multivariate normal class models.

    ``class_model`` maps ``"spatter"`` and ``"meltpool"`` to dicts with a
    9-entry ``mean`` and 9x9 ``cov`` over (x, y, z, vx, vy, vz, T, rho, p).
    """
    if n % 2:
        raise ValueError("n must be even")
    class_model = class_model or REFERENCE_CLASSES
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for label, name in ((1, "spatter"), (0, "meltpool")):
        mean = np.asarray(class_model[name]["mean"], dtype=np.float64)
        cov = np.asarray(class_model[name]["cov"], dtype=np.float64)
        if cov.shape != (mean.size, mean.size) or mean.size != len(_GEN_FEATURES):
            raise ValueError(f"{name}: mean/cov must cover {_GEN_FEATURES}")
        if not np.allclose(cov, cov.T):
            raise ValueError(f"{name}: covariance is not symmetric")
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError(f"{name}: covariance is not positive definite") from None
        draws = mean + rng.standard_normal((n // 2, mean.size)) @ L.T
        vmag = np.linalg.norm(draws[:, 3:6], axis=1)
        blocks.append(np.column_stack([draws[:, :6], vmag, draws[:, 6:]]))
        labels.append(np.full(n // 2, label))
    return Dataset(np.vstack(blocks), np.concatenate(labels), ALL_FEATURES,
                   {"generator": "gaussian", "seed": seed, "n": n})
