"""Frame-to-frame spatter linking: predict, correlate, assign.

Units: centroids in µm, velocities in m/s, times in µs.  Since
1 m/s == 1 µm/µs, a displacement is simply ``dt * velocity``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree


class TrackingError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    dt: float = 5.0
    max_dist: float = 25.0
    conflict_policy: str = "greedy"

    def __post_init__(self):
        if not self.dt > 0:
            raise TrackingError(f"dt must be > 0, got {self.dt}")
        if not self.max_dist > 0:
            raise TrackingError(f"max_dist must be > 0, got {self.max_dist}")
        if self.conflict_policy != "greedy":
            raise TrackingError("only the greedy conflict policy is supported")


@dataclass(frozen=True)
class LinkResult:
    continued: dict  # prev index -> next index
    terminated: list
    born: list
    distances: dict = field(default_factory=dict)  # prev index -> link distance


@dataclass(frozen=True)
class Trajectory:
    id: int
    observations: tuple  # ((time_us, Blob), ...)
    status: str = "active"
    current: int | None = None  # index of the latest blob in its frame

    @property
    def times(self):
        return np.array([t for t, _ in self.observations])

    @property
    def centroids(self):
        return np.array([b.centroid for _, b in self.observations])


def predict_positions(blobs, dt):
    """Predicted centroids after ``dt`` µs, assuming constant mean velocity."""
    if not dt > 0:
        raise TrackingError(f"dt must be > 0, got {dt}")
    if not blobs:
        return np.empty((0, 3))
    cen = np.array([b.centroid for b in blobs], dtype=np.float64)
    vel = np.array([b.mean_u for b in blobs], dtype=np.float64)
    return cen + dt * vel


def _distance(a, b):
    d = a - b
    return np.sqrt(np.sum(d * d, axis=-1))


def _candidates_brute(pred, nxt, max_dist):
    out = []
    for p in range(len(pred)):
        if len(nxt) == 0:
            continue
        d = _distance(nxt, pred[p])
        n = int(np.argmin(d))  # argmin picks the lowest index among ties
        if d[n] <= max_dist:
            out.append((float(d[n]), p, n))
    return out


def _candidates_tree(pred, nxt, max_dist):
    if len(nxt) == 0 or len(pred) == 0:
        return []
    tree = cKDTree(nxt)
    # the tree only pre-filters; distances are recomputed exactly as in brute force
    hits = tree.query_ball_point(pred, r=max_dist * (1 + 1e-9) + 1e-12)
    out = []
    for p, idx in enumerate(hits):
        if not idx:
            continue
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        d = _distance(nxt[idx], pred[p])
        m = int(np.argmin(d))
        if d[m] <= max_dist:
            out.append((float(d[m]), p, int(idx[m])))
    return out


def link_frames(prev, nxt, cfg, use_index=True):
    """Link blobs of consecutive frames.

    Each prev blob proposes its nearest next blob (to the predicted
    position) if it lies within ``cfg.max_dist``; proposals are accepted in
    ascending distance, each next blob at most once.  Losers terminate.
    """
    pred = predict_positions(prev, cfg.dt)
    cen = (np.array([b.centroid for b in nxt], dtype=np.float64)
           if nxt else np.empty((0, 3)))
    find = _candidates_tree if use_index else _candidates_brute
    cands = sorted(find(pred, cen, cfg.max_dist))
    continued, distances, taken = {}, {}, set()
    for d, p, n in cands:
        if n in taken:
            continue
        continued[p] = n
        distances[p] = d
        taken.add(n)
    terminated = [p for p in range(len(prev)) if p not in continued]
    born = [n for n in range(len(nxt)) if n not in taken]
    return LinkResult(continued=dict(sorted(continued.items())), terminated=terminated,
                      born=born, distances=dict(sorted(distances.items())))


def start_trajectories(blobs, time, first_id=0):
    return [Trajectory(id=first_id + n, observations=((time, b),), current=n)
            for n, b in enumerate(blobs)]


def update_trajectories(state, link, next_blobs, next_time):
    """Apply one :class:`LinkResult` and return the new trajectory list.

    Active trajectories are matched to prev-frame blobs through their
    ``current`` index.  Terminated trajectories keep their observations.
    """
    by_prev = {t.current: t for t in state if t.status == "active"}
    referenced = set(link.continued) | set(link.terminated)
    unknown = referenced - set(by_prev)
    if unknown:
        raise TrackingError(f"link references unknown prev blob(s) {sorted(unknown)}")
    bad_next = [n for n in list(link.continued.values()) + list(link.born)
                if not 0 <= n < len(next_blobs)]
    if bad_next:
        raise TrackingError(f"link references unknown next blob(s) {bad_next}")
    new_state = []
    for t in state:
        if t.status != "active":
            new_state.append(t)
        elif t.current in link.continued:
            n = link.continued[t.current]
            new_state.append(replace(
                t, observations=t.observations + ((next_time, next_blobs[n]),), current=n))
        else:
            new_state.append(replace(t, status="terminated", current=None))
    next_id = max((t.id for t in state), default=-1) + 1
    for offset, n in enumerate(link.born):
        new_state.append(Trajectory(id=next_id + offset,
                                    observations=((next_time, next_blobs[n]),), current=n))
    return new_state


def track(frames, times, cfg, use_index=True):
    """Track blob lists over a time-ordered frame sequence.

    Returns ``(trajectories, links)`` where ``links[n]`` connects frame
    ``n`` to ``n + 1``.
    """
    if len(frames) != len(times):
        raise TrackingError("frames and times differ in length")
    if not frames:
        return [], []
    state = start_trajectories(frames[0], times[0])
    links = []
    for n in range(1, len(frames)):
        link = link_frames(frames[n - 1], frames[n], cfg, use_index=use_index)
        state = update_trajectories(state, link, frames[n], times[n])
        links.append(link)
    return state, links


def kinematics(traj):
    """Per-step displacement (µm), speed (m/s) and unit direction.

    Steps with zero displacement have no direction; they are reported as NaN
    and marked in ``undefined``.
    """
    if len(traj.observations) < 2:
        raise TrackingError("kinematics needs at least two observations")
    cen = traj.centroids
    dts = np.diff(traj.times)
    disp = np.diff(cen, axis=0)
    dist = np.linalg.norm(disp, axis=1)
    undefined = dist == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(undefined[:, None], np.nan, disp / dist[:, None])
    return {"displacement": disp, "speed": dist / dts, "direction": direction,
            "undefined": undefined, "time": traj.times[1:]}
