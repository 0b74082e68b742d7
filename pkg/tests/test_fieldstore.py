import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpbfspatter import fieldstore as fs
from lpbfspatter.fieldstore import BundleError, GridMeta


def random_bundle(rng, dims=(4, 3, 2)):
    nx, ny, nz = dims
    meta = GridMeta(nx, ny, nz, 2.5, 2.5, 4.0, origin=(1.0, -2.0, 0.5), time=15.0,
                    params=(545.0, 2.0))
    a = rng.random((3,) + meta.shape)
    a /= a.sum(axis=0)
    u = rng.normal(size=(3,) + meta.shape)
    return fs.make_bundle(meta, alpha_g=a[0], alpha_s=a[1], alpha_l=a[2],
                          T=rng.uniform(300, 3000, meta.shape),
                          p=rng.uniform(1e5, 5e5, meta.shape),
                          rho=rng.uniform(1, 8000, meta.shape), ux=u[0], uy=u[1], uz=u[2])


def test_round_trip_bitwise(tmp_path, rng):
    b = random_bundle(rng)
    fs.save_bundle(b, tmp_path / "b")
    c = fs.load_bundle(tmp_path / "b")
    for name in fs.FIELD_NAMES:
        assert getattr(b, name).tobytes() == getattr(c, name).tobytes()
    assert c.meta == b.meta


def test_save_load_save_identical_bytes(tmp_path, rng):
    b = random_bundle(rng)
    fs.save_bundle(b, tmp_path / "a")
    fs.save_bundle(fs.load_bundle(tmp_path / "a"), tmp_path / "b")
    for name in list(fs.FIELD_NAMES) + ["meta"]:
        ext = ".json" if name == "meta" else ".f32"
        assert (tmp_path / "a" / f"{name}{ext}").read_bytes() == \
            (tmp_path / "b" / f"{name}{ext}").read_bytes()


def test_meta_json_keys_preserved(tmp_path, rng):
    b = random_bundle(rng)
    fs.save_bundle(b, tmp_path / "b")
    raw = json.loads((tmp_path / "b" / "meta.json").read_text())
    assert set(raw) == {"dims", "spacing_um", "origin_um", "time_us", "fields", "params"}
    assert GridMeta.from_json(raw).to_json() == raw


def test_save_into_empty_dir_creates_files(tmp_path, make):
    target = tmp_path / "new"
    fs.save_bundle(make(np.ones((1, 1, 2))), target)
    assert sorted(p.name for p in target.iterdir()) == sorted(
        ["meta.json"] + [f"{n}.f32" for n in fs.FIELD_NAMES])


def test_index_formula_two_cells(tmp_path):
    meta = GridMeta(2, 1, 1, 1.0, 1.0, 1.0)
    vals = {n: np.array([0.0, 0.0]) for n in fs.FIELD_NAMES}
    vals.update(alpha_g=[1.0, 1.0], T=[400.0, 500.0], rho=[1.0, 1.0])
    b = fs.make_bundle(meta, **vals)
    fs.save_bundle(b, tmp_path / "b")
    raw = np.fromfile(tmp_path / "b" / "T.f32", dtype="<f4")
    assert raw.tolist() == [400.0, 500.0]
    assert fs.cell_at(fs.load_bundle(tmp_path / "b"), 1, 0, 0)["T"] == 500.0


def test_alpha_sum_violation_lists_cell(tmp_path, make):
    ag = np.ones((2, 2, 2))
    b = make(ag)
    bad = b.replace(alpha_g=np.where(np.arange(8).reshape(2, 2, 2) == 5, 0.5, 1.0)
                    .astype(np.float32), alpha_s=np.zeros((2, 2, 2), np.float32))
    v = fs.validate(bad)
    assert [x["field"] for x in v] == ["alpha_sum"]
    assert v[0]["index"] == 5
    fs.save_bundle(bad, tmp_path / "b")
    with pytest.raises(BundleError, match="cell 5"):
        fs.load_bundle(tmp_path / "b")


def test_validate_conforming_and_T_zero(make):
    b = make(np.ones((2, 2, 2)))
    assert fs.validate(b) == []
    T = np.full((2, 2, 2), 300.0)
    T[1, 0, 1] = 0.0
    v = fs.validate(b.replace(T=T.astype(np.float32)))
    assert len(v) == 1 and v[0]["field"] == "T" and v[0]["index"] == b.meta.flatten(1, 0, 1)


def test_validate_is_pure(rng):
    b = random_bundle(rng)
    b = b.replace(T=np.where(b.T > 1000, -1, b.T).astype(np.float32))
    assert fs.validate(b) == fs.validate(b)


@pytest.mark.parametrize("value,clamped", [(1.0 + 5e-7, True), (1.2, False), (-5e-7, True),
                                           (-0.1, False)])
def test_clamp_boundary(value, clamped):
    meta = GridMeta(1, 1, 1, 1, 1, 1)
    b = fs.FieldBundle(meta, *(np.array([v], dtype=np.float64) for v in
                               (value, 0.0, 1.0 - value, 300.0, 1e5, 1.0, 0, 0, 0)))
    out, warnings = fs.clamp_fractions(b)
    if clamped:
        assert warnings and 0.0 <= float(out.alpha_g.ravel()[0]) <= 1.0
        assert fs.validate(out) == []
    else:
        assert not warnings
        assert any(v["field"] == "alpha_g" for v in fs.validate(out))


def test_load_errors_name_field(tmp_path, rng):
    b = random_bundle(rng)
    fs.save_bundle(b, tmp_path / "b")
    (tmp_path / "b" / "rho.f32").unlink()
    with pytest.raises(BundleError, match="rho"):
        fs.load_bundle(tmp_path / "b")
    fs.save_bundle(b, tmp_path / "c")
    (tmp_path / "c" / "p.f32").write_bytes(b"\0" * 8)
    with pytest.raises(BundleError, match="'p'"):
        fs.load_bundle(tmp_path / "c")
    fs.save_bundle(b, tmp_path / "d")
    ux = b.ux.ravel().copy()
    ux[3] = np.nan
    ux.astype("<f4").tofile(tmp_path / "d" / "ux.f32")
    with pytest.raises(BundleError, match="'ux'.*cell 3"):
        fs.load_bundle(tmp_path / "d")


def test_cell_at(make):
    b = make(np.ones((2, 3, 4)))
    rec = fs.cell_at(b, 0, 0, 0)
    assert rec["alpha_g"] == 1.0 and rec["T"] == 300.0 and rec["u"] == (0.0, 0.0, 0.0)
    with pytest.raises(IndexError):
        fs.cell_at(b, 4, 0, 0)
    T = np.arange(24, dtype=np.float64).reshape(2, 3, 4) + 1
    rec = fs.cell_at(b.replace(T=T.astype(np.float32)), 3, 2, 1)
    assert rec["T"] == T.ravel()[-1]


@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 7), st.data())
def test_flat_index_bijection(nx, ny, nz, data):
    meta = GridMeta(nx, ny, nz, 1, 1, 1)
    i = data.draw(st.integers(0, nx - 1))
    j = data.draw(st.integers(0, ny - 1))
    k = data.draw(st.integers(0, nz - 1))
    idx = meta.flatten(i, j, k)
    assert 0 <= idx < meta.n_cells
    assert meta.unflatten(idx) == (i, j, k)


def test_import_points_csv(tmp_path):
    meta = GridMeta(2, 1, 1, 10.0, 10.0, 10.0)
    rows = ["x_um,y_um,z_um,alpha_g,alpha_s,alpha_l,T_K,p_Pa,rho,ux,uy,uz",
            "12,5,5,0,0,1,2000,2e5,6500,1,0,0",
            "18,5,5,0,0,1,2200,2e5,6500,3,0,0"]
    (tmp_path / "pts.csv").write_text("\n".join(rows) + "\n")
    b = fs.import_points_csv(tmp_path / "pts.csv", meta)
    assert fs.cell_at(b, 1, 0, 0)["T"] == 2100.0
    assert fs.cell_at(b, 1, 0, 0)["u"][0] == 2.0
    assert fs.cell_at(b, 0, 0, 0)["alpha_g"] == 1.0  # unfilled cell is gas
    (tmp_path / "bad.csv").write_text("x_um,y_um\n1,2\n")
    with pytest.raises(BundleError, match="columns"):
        fs.import_points_csv(tmp_path / "bad.csv", meta)
