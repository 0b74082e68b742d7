import json

import numpy as np
import pytest

from cli_chain import CHAIN, run_chain
from lpbfspatter import cli
from lpbfspatter import fieldstore as fs


def write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    out = tmp_path_factory.mktemp("chain")
    return out, run_chain(out)


def test_chain_runs_end_to_end(chain):
    out, codes = chain
    assert codes == {c: 0 for c in CHAIN}
    for rel in ("synth/ground_truth.json", "segment/frame_0000/blobs.csv",
                "segment/frame_0000/labels.u32", "trajectories.csv", "meltpool_samples.csv",
                "dataset.csv", "train.csv", "test.csv", "stats.json", "pairs.csv",
                "model.json", "cv_table.csv", "metrics.json", "shap.csv", "shap_summary.csv",
                "pdp_p.csv", "screen_cells.csv", "map/map.csv", "map/overlay.json",
                "manifest_map.json"):
        assert (out / rel).exists(), rel


def test_chain_outputs_consistent(chain):
    out, _ = chain
    meta = fs.load_bundle(out / "synth" / "frame_0000").meta
    assert (out / "segment/frame_0000/labels.u32").stat().st_size == 4 * meta.n_cells
    header = (out / "dataset.csv").read_text().splitlines()[0]
    assert header == "vx,vy,vz,vmag,T,rho,p,label"
    manifest = json.loads((out / "manifest_train.json").read_text())
    assert manifest["command"] == "train" and "versions" in manifest
    assert len((out / "screen_cells.csv").read_text().splitlines()) == 5


def test_train_single_point_grid_on_generated_data(tmp_path):
    cfg = {"dataset": {"source": "gaussian", "n": 60, "seed": 0},
           "paths": {"train": str(tmp_path / "train.csv")},
           "learner": {"algorithm": "tree", "grid": {"max_depth": [3]}}}
    c = write_cfg(tmp_path, cfg)
    assert cli.main(["dataset", "--config", c, "--out", str(tmp_path)]) == 0
    assert cli.main(["train", "--config", c, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "model.json").exists() and (tmp_path / "cv_table.csv").exists()


def test_bad_config_key_exit_1(tmp_path, capsys):
    c = write_cfg(tmp_path, {"segment": {"treshold": 0.5}})
    assert cli.main(["segment", "--config", c, "--out", str(tmp_path)]) == 1
    assert "treshold" in capsys.readouterr().err
    c = write_cfg(tmp_path, {"tracker": {"dt": "fast"}})
    assert cli.main(["track", "--config", c]) == 1
    assert "tracker/dt" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    assert cli.main(["fly", "--config", "x"]) == 1
    assert cli.main(["segment", "--config", str(tmp_path / "missing.json")]) == 1
    c = write_cfg(tmp_path, {})
    assert cli.main(["segment", "--config", c, "--out", str(tmp_path)]) == 1
    assert cli.main(["segment", "--config", c, "--threads", "0"]) == 1


def test_alpha_sum_violation_exit_2(tmp_path, make, capsys):
    b = make(np.zeros((2, 2, 2)))
    ag = np.zeros((2, 2, 2))
    ag[1, 1, 0] = 0.3
    fs.save_bundle(b.replace(alpha_g=ag.astype(np.float32)), tmp_path / "bad")
    c = write_cfg(tmp_path, {"paths": {"bundles": str(tmp_path / "bad")}})
    assert cli.main(["segment", "--config", c, "--out", str(tmp_path / "o")]) == 2
    assert f"cell {b.meta.flatten(0, 1, 1)}" in capsys.readouterr().err


def test_missing_bundle_exit_2(tmp_path):
    c = write_cfg(tmp_path, {"paths": {"bundles": str(tmp_path / "nothing_*")}})
    assert cli.main(["track", "--config", c, "--out", str(tmp_path)]) == 2


def test_ingest_points(tmp_path):
    (tmp_path / "pts.csv").write_text(
        "x_um,y_um,z_um,alpha_g,alpha_s,alpha_l,T_K,p_Pa,rho,ux,uy,uz\n"
        "5,5,5,0,0,1.0000005,2000,2e5,6500,1,0,0\n")
    c = write_cfg(tmp_path, {"paths": {"points_csv": str(tmp_path / "pts.csv")},
                             "ingest": {"grid": {"dims": [2, 1, 1],
                                                 "spacing_um": [10, 10, 10]}}})
    assert cli.main(["ingest", "--config", c, "--out", str(tmp_path)]) == 0
    b = fs.load_bundle(tmp_path / "bundle")
    assert fs.cell_at(b, 0, 0, 0)["T"] == 2000.0
    assert json.loads((tmp_path / "ingest_warnings.json").read_text())


def test_seed_override(tmp_path):
    cfg = {"dataset": {"source": "gaussian", "n": 40, "seed": 0}}
    c = write_cfg(tmp_path, cfg)
    assert cli.load_config(c, seed=9)["dataset"]["seed"] == 9
    assert cli.main(["dataset", "--config", c, "--out", str(tmp_path / "a"), "--seed", "9"]) == 0
    cfg["dataset"]["seed"] = 9
    c = write_cfg(tmp_path, cfg)
    assert cli.main(["dataset", "--config", c, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/dataset.csv").read_bytes() == (tmp_path / "b/dataset.csv").read_bytes()
