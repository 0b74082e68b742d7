"""Screen a small power/velocity grid with a model trained on surrogate data.

Run with ``python3 demos/03_process_map.py [out_dir]``.  Takes a few minutes.
"""

import sys

import numpy as np

from lpbfspatter import dataset as dsm
from lpbfspatter import learners as L
from lpbfspatter import pipeline, procmap, synthgen, track
from lpbfspatter.synthgen import ProcessParams, SurrogateConfig

out = sys.argv[1] if len(sys.argv) > 1 else "process_map_out"

# Training data: two spattering runs, spatial columns removed.
cfg = SurrogateConfig(nx=200, ny=80, nz=80, dx=5.0, frames=40, dt=5.0,
                      rate_coefficient=40.0, min_separation=30.0)
pcfg = pipeline.PipelineConfig(tracker=track.TrackerConfig(dt=5.0, max_dist=25.0))
parts = [pipeline.run_frames(synthgen.iter_surrogate(ProcessParams(P, 2.0), None, cfg),
                             f"P{P:.0f}", pcfg).dataset for P in (545.0, 690.0)]
train = dsm.drop_spatial(dsm.merge(parts))
spec, _ = L.grid_search("forest", L.DEFAULT_GRIDS["forest"], train, n_jobs=4)
model = L.fit(spec, train)

# Screening: droplets play no part, so the generator runs without them.
grid = procmap.make_grid(np.linspace(50.0, 550.0, 6), np.linspace(0.2, 2.5, 6))
screen_cfg = SurrogateConfig(nx=80, ny=60, nz=80, dx=10.0, frames=3, rate_coefficient=0.0)
cells = procmap.screen(grid, model, cfg=screen_cfg, n_jobs=4)
for c in cells:
    print(f"P {c.power:5.0f} W  v {c.scan_speed:4.2f} m/s  "
          f"flagged volume {c.spatter_volume:9.0f} um^3")
print("quadrant means:", procmap.quadrant_means(cells))

overlay = procmap.BoundaryOverlay({"keyhole": [[0.2, 100.0], [2.5, 550.0]]})
procmap.emit_map(cells, overlay, out)
print(f"map.csv, overlay.json and trends/ written to {out}/")
