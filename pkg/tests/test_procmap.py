import json

import numpy as np
import pytest

from lpbfspatter import learners as L
from lpbfspatter import procmap as pm
from lpbfspatter import synthgen as syn
from lpbfspatter.dataset import Dataset
from lpbfspatter.synthgen import ProcessParams, SurrogateConfig

TINY = SurrogateConfig(nx=40, ny=30, nz=30, dx=10.0, frames=2, dt=5.0, rate_coefficient=0.0)


def rising_uz(X):
    """Spatter when the vertical velocity is clearly upward."""
    return (X[:, 2] > 1.5).astype(float)


def test_no_meltpool_flags_nothing(make):
    flagged, n = pm.flag_spatter_cells(lambda X: np.ones(len(X)), make(np.zeros((2, 2, 2))))
    assert n == 0 and not flagged.any()


def test_constant_one_flags_every_meltpool_cell(make):
    al = np.zeros((3, 3, 3))
    al[:2] = 1.0
    b = make(np.zeros((3, 3, 3)), alpha_l=al)
    flagged, n = pm.flag_spatter_cells(lambda X: np.ones(len(X)), b)
    assert n == 18 and flagged.sum() == 18
    flagged, n = pm.flag_spatter_cells(lambda X: np.ones(len(X)), b, surface_only=True)
    assert n == 9 and flagged[1].all() and not flagged[0].any()


def test_spatial_model_rejected(make):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(20, 10)), [0, 1] * 10)
    m = L.fit(L.ModelSpec("tree", {"max_depth": 1}), ds)
    with pytest.raises(pm.ProcessMapError, match="spatial"):
        pm.flag_spatter_cells(m, make(np.zeros((2, 2, 2))))


def test_cell_features_order(make):
    u = np.zeros((1, 1, 1, 3))
    u[0, 0, 0] = [3.0, 0.0, 4.0]
    b = make(np.zeros((1, 1, 1)), T=[[[2000.0]]], p=[[[2e5]]], rho=[[[6500.0]]], u=u)
    X = pm.cell_features(b, np.ones((1, 1, 1), dtype=bool))
    assert X.tolist() == [[3.0, 0.0, 4.0, 5.0, 2000.0, 6500.0, 2e5]]


def test_flags_concentrate_behind_beam():
    cfg = SurrogateConfig(frames=1, rate_coefficient=0.0)
    params = ProcessParams(400.0, 1.0)
    b = next(syn.iter_surrogate(params, None, cfg))
    xb = syn.beam_track(params, syn.MaterialParams(), cfg)[0]
    flagged, n = pm.flag_spatter_cells(rising_uz, b)
    assert 0 < flagged.sum() <= n
    _, _, i = np.nonzero(flagged)
    x = (i + 0.5) * cfg.dx
    assert np.all(x <= xb)


def test_screen_rows_order_and_duplicates():
    grid = pm.make_grid([150.0, 250.0], [1.0, 2.0]) + [ProcessParams(150.0, 1.0)]
    cells = pm.screen(grid, rising_uz, cfg=TINY)
    assert [(c.power, c.scan_speed) for c in cells] == [(p.power, p.scan_speed) for p in grid]
    assert cells[0] == cells[-1]
    assert all(c.frames_used == 2 and 0 <= c.flagged_fraction <= 1 and c.spatter_volume >= 0
               for c in cells)
    assert pm.screen(grid, rising_uz, cfg=TINY, n_jobs=3) == cells


def test_screen_errors():
    with pytest.raises(pm.ProcessMapError):
        pm.screen([], rising_uz, cfg=TINY)
    with pytest.raises(syn.SurrogateError):
        SurrogateConfig(frames=0)
    with pytest.raises(pm.ProcessMapError, match="P=900"):
        pm.screen([ProcessParams(900.0, 0.2)], rising_uz, cfg=TINY)


def cells_from(fn, powers=(100.0, 200.0, 300.0), speeds=(0.5, 1.0, 2.0)):
    return [pm.ProcessMapCell(P, v, fn(P, v), 0.1, 3) for P in powers for v in speeds]


def test_trends_preserve_monotone_order():
    cells = cells_from(lambda P, v: P / v)
    t = pm.trend_curves(cells)
    for pts in t["vs_power"].values():
        vols = [v for _, v in pts]
        assert vols == sorted(vols)
    for pts in t["vs_velocity"].values():
        vols = [v for _, v in pts]
        assert vols == sorted(vols, reverse=True)
    e = [v for _, v in t["vs_energy_density"]]
    assert e == sorted(e)
    assert cells[0].energy_density == 200.0


def test_quadrants():
    cells = cells_from(lambda P, v: P * (3 - v), powers=(100, 200, 300, 400),
                       speeds=(0.5, 1.0, 1.5, 2.0))
    q = pm.quadrant_means(cells)
    assert q["HP_LV"] > q["HP_HV"] > q["LP_LV"] > q["LP_HV"]
    odd = pm.quadrant_means(cells_from(lambda P, v: 1.0))
    assert odd["HP_LV"] == 1.0


def test_emit_map_formats(tmp_path):
    overlay = pm.BoundaryOverlay({"keyhole": [[0.2, 150.0], [2.5, 550.0]]})
    pm.emit_map(cells_from(lambda P, v: P / v), overlay, tmp_path)
    lines = (tmp_path / "map.csv").read_text().splitlines()
    assert lines[0] == "power_W,velocity_m_s,spatter_volume_um3,flagged_fraction,frames_used"
    assert len(lines) == 10
    assert json.loads((tmp_path / "overlay.json").read_text()) == overlay.to_json()
    names = sorted(p.name for p in (tmp_path / "trends").iterdir())
    assert names == ["energy_density.csv", "power_at_v0.5.csv", "power_at_v1.csv",
                     "power_at_v2.csv", "velocity_at_P100.csv", "velocity_at_P200.csv",
                     "velocity_at_P300.csv"]
    pm.emit_map([pm.ProcessMapCell(100.0, 1.0, 5.0, 0.5, 1)], None, tmp_path / "one")
    assert len((tmp_path / "one" / "map.csv").read_text().splitlines()) == 2
    with pytest.raises(pm.ProcessMapError):
        pm.emit_map([], None, tmp_path / "none")


def test_overlay_validation():
    with pytest.raises(pm.ProcessMapError):
        pm.BoundaryOverlay({"lof": [[1.0, 100.0]]})
    with pytest.raises(pm.ProcessMapError):
        pm.BoundaryOverlay({"lof": [[1.0, 100.0], [np.nan, 3.0]]})
