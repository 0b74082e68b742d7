"""Frame sequence -> labeled dataset: segment, track, sample, assemble."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds_mod
from . import mpsample, segment, track

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    threshold: float = 0.5
    connectivity: int = 6
    min_cells: int = 8
    tracker: track.TrackerConfig = field(default_factory=track.TrackerConfig)
    n_r: int = 3
    seed: int = 0


@dataclass
class RunResult:
    run_id: str
    blobs: list  # spatter blobs per frame
    trajectories: list
    links: list
    frames: list  # dataset.FrameSamples
    dataset: ds_mod.Dataset


def run_frames(bundles, run_id="run", cfg=None):
    """Process one run's bundles (time-ordered, any iterable) into a dataset.

    Every new spatter blob yields one record; each frame contributes as many
    melt-pool surface samples as it has new blobs, drawn with a seed derived
    from ``cfg.seed`` and the frame number.  Frames are consumed one at a
    time so a generator keeps memory flat.
    """
    cfg = cfg or PipelineConfig()
    blobs_per_frame, links, frames = [], [], []
    state, prev, prev_time = [], None, None
    for n, b in enumerate(bundles):
        res, _ = segment.segment(b, cfg.threshold, cfg.connectivity, cfg.min_cells)
        blobs = res.spatter
        if prev is None:
            state = track.start_trajectories(blobs, b.meta.time)
            new = list(range(len(blobs)))
        else:
            if not b.meta.time > prev_time:
                raise track.TrackingError("frame times must increase")
            link = track.link_frames(prev, blobs, cfg.tracker)
            state = track.update_trajectories(state, link, blobs, b.meta.time)
            links.append(link)
            new = sorted(link.born)
        spatter = [blobs[i] for i in new]
        samples = []
        seed = int(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(n,)).generate_state(1)[0])
        if spatter:
            mp = mpsample.meltpool_mask(b, composite=res.composite, threshold=cfg.threshold)
            surf = mpsample.surface_cells(mp, b)
            samples = mpsample.sample_surface(b, surf, n_r=cfg.n_r, n_samples=len(spatter),
                                              seed=seed, mp=mp)
        frames.append(ds_mod.FrameSamples(run_id, n, spatter, samples, seed))
        blobs_per_frame.append(blobs)
        prev, prev_time = blobs, b.meta.time
    data = ds_mod.assemble(frames)
    log.info("run %s: %d frames, %d trajectories, %d records", run_id, len(frames),
             len(state), len(data))
    return RunResult(run_id, blobs_per_frame, state, links, frames, data)
