import math
from dataclasses import replace
from decimal import Decimal, getcontext

import numpy as np
import pytest

from lpbfspatter import fieldstore as fs
from lpbfspatter import learners as L
from lpbfspatter import segment as sg
from lpbfspatter import synthgen as syn
from lpbfspatter.dataset import drop_spatial, split
from lpbfspatter.synthgen import MaterialParams, ProcessParams, SurrogateConfig

MAT = MaterialParams()
SMALL = SurrogateConfig(nx=120, ny=60, nz=60, dx=5.0, frames=6, dt=2.0, rate_coefficient=30.0,
                        min_separation=40.0, seed=3)


def test_beam_intensity_cases():
    p = ProcessParams(300.0, 1.0)
    centre = syn.beam_intensity(0.0, p)
    assert centre == pytest.approx(4.20e10, rel=5e-3)
    assert centre == pytest.approx(2 * 0.55 * 300 / (math.pi * (50e-6) ** 2), rel=1e-12)
    assert syn.beam_intensity([50.0, 0.0], p) == pytest.approx(centre * math.exp(-2), rel=1e-12)
    offs = np.random.default_rng(0).uniform(-80, 80, (20, 2))
    assert np.allclose(syn.beam_intensity(offs, ProcessParams(600.0, 1.0)),
                       2 * syn.beam_intensity(offs, p), rtol=1e-12)


def test_recoil_pressure_cases():
    assert syn.recoil_pressure(MAT.T_vapor, MAT) == pytest.approx(54715.5, rel=1e-9)
    assert syn.recoil_pressure(MAT.T_vapor - 100, MAT) < 0.54 * MAT.P0
    getcontext().prec = 50
    T, D = Decimal(3500), Decimal
    expo = (D(MAT.L_v) * D(MAT.molar_mass) * (T - D(MAT.T_vapor))
            / (D(MAT.gas_constant) * T * D(MAT.T_vapor)))
    oracle = D("0.54") * D(MAT.P0) * expo.exp()
    assert syn.recoil_pressure(3500.0, MAT) == pytest.approx(float(oracle), rel=1e-12)
    with pytest.raises(syn.SurrogateError):
        syn.recoil_pressure(0.0, MAT)


def test_calibration_table_exact():
    for P, w, d in MAT.calibration:
        assert syn.meltpool_size(P, 1.0, MAT) == pytest.approx((w, d), abs=1e-9)
    w1, d1 = syn.meltpool_size(300.0, 1.0, MAT)
    w4, d4 = syn.meltpool_size(300.0, 4.0, MAT)
    assert (w4, d4) == pytest.approx((w1 / 2, d1 / 2))
    assert syn.meltpool_size(1.0, 1.0, MAT)[1] == pytest.approx(3.8)  # depth floor


@pytest.mark.parametrize("P,w,d", [(150.0, 100.0, 38.0), (450.0, 176.0, 152.0)])
def test_measured_pool_matches_calibration(P, w, d):
    cfg = SurrogateConfig(frames=1, rate_coefficient=0.0)
    b = next(syn.iter_surrogate(ProcessParams(P, 1.0), MAT, cfg))
    mw, md = syn.meltpool_dimensions(b)
    assert abs(mw - w) <= 1.0 and abs(md - d) <= 1.0


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialParams(T_solidus=2000.0, T_liquidus=1700.0)
    with pytest.raises(ValueError):
        ProcessParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        ProcessParams(100.0, 1.0, absorptivity=1.5)


def test_domain_too_small():
    with pytest.raises(syn.SurrogateError, match="domain too small"):
        syn.surrogate_run(ProcessParams(450.0, 1.0), MAT, replace(SMALL, nx=30))


def test_rate_zero_gives_composite_only():
    run = syn.surrogate_run(ProcessParams(300.0, 1.0), MAT, replace(SMALL, rate_coefficient=0))
    assert run.droplets == []
    for b in run.bundles:
        res, _ = sg.segment(b)
        assert res.spatter == [] and res.dropped_small == 0


def test_rate_monotone():
    cfg = replace(SMALL, frames=1)
    lam_P = [syn.spatter_rate(ProcessParams(P, 1.0), MAT, cfg) for P in (150, 250, 350, 450)]
    lam_v = [syn.spatter_rate(ProcessParams(350.0, v), MAT, cfg) for v in (0.6, 1.0, 1.5, 2.0)]
    assert all(a < b for a, b in zip(lam_P, lam_P[1:]))
    assert all(a > b for a, b in zip(lam_v, lam_v[1:]))


@pytest.fixture(scope="module")
def run():
    return syn.surrogate_run(ProcessParams(400.0, 1.5), MAT, SMALL)


def test_run_bundles_valid_and_ground_truth(run):
    assert len(run.bundles) == SMALL.frames and run.droplets
    for b in run.bundles:
        assert fs.validate(b) == []
    lo, hi = SMALL.eject_speed
    for d in run.droplets:
        speed = np.linalg.norm(d.velocity)
        assert lo - 1e-9 <= speed <= hi + 1e-9
        assert d.velocity[0] < 0 < d.velocity[2]
    gt = run.ground_truth()
    assert len(gt["spatter"]) == len(run.droplets)


def test_segmentation_recovers_stamped_droplets(run):
    for f, b in enumerate(run.bundles):
        res, _ = sg.segment(b)
        truth = {}
        for cell, did in run.labels_at(f).items():
            truth.setdefault(did, set()).add(cell)
        found = sorted(tuple(sorted(s.cells.tolist())) for s in res.spatter)
        assert found == sorted(tuple(sorted(c)) for c in truth.values())


def test_run_is_deterministic(run):
    again = syn.surrogate_run(ProcessParams(400.0, 1.5), MAT, SMALL)
    for a, b in zip(run.bundles, again.bundles):
        assert all(np.array_equal(getattr(a, n), getattr(b, n)) for n in fs.FIELD_NAMES)
    assert again.ground_truth() == run.ground_truth()


def test_gen_dataset_counts_and_errors():
    ds = syn.gen_dataset(n=488, seed=1)
    assert ds.class_counts == {"meltpool": 244, "spatter": 244}
    assert ds == syn.gen_dataset(n=488, seed=1)
    assert np.allclose(ds.column("vmag"),
                       np.linalg.norm(ds.X[:, 3:6], axis=1), rtol=1e-12)
    bad = {k: dict(v) for k, v in syn.REFERENCE_CLASSES.items()}
    bad["spatter"]["cov"] = (-np.eye(9)).tolist()
    with pytest.raises(ValueError, match="positive definite"):
        syn.gen_dataset(bad)
    with pytest.raises(ValueError):
        syn.gen_dataset(n=7)


def test_identical_classes_are_chance():
    same = {"spatter": syn.REFERENCE_CLASSES["meltpool"], "meltpool": syn.REFERENCE_CLASSES["meltpool"]}
    accs = []
    for seed in range(3):
        train, test = split(drop_spatial(syn.gen_dataset(same, n=1000, seed=seed)), 0.7, seed)
        m = L.fit(L.ModelSpec("forest", {"n_estimators": 30, "max_depth": 4}, seed=seed), train)
        accs.append(L.evaluate(m, test).accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.05
