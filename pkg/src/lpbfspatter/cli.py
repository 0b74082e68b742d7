"""``lpbfspatter`` command line: one subcommand per pipeline stage.

Every command reads a JSON config (validated before anything runs), writes
its outputs atomically under ``--out`` and records a run manifest.

Exit codes: 0 success, 1 usage/config error, 2 data/validation error,
3 internal error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import glob
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import dataset as dsm
from . import explain, fieldstore, mpsample, pipeline, procmap, segment, synthgen, track
from . import learners as L
from ._io import atomic_write_bytes, write_csv, write_json

log = logging.getLogger("lpbfspatter")

COMMANDS = ("ingest", "segment", "track", "sample", "dataset", "train", "evaluate",
            "explain", "synth", "screen", "map")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


_num = {"type": "number"}
_int = {"type": "integer"}
_str = {"type": "string"}
_bool = {"type": "boolean"}
_seed = {"type": "integer", "minimum": 0}
_range = {"oneOf": [{"type": "array", "items": _num, "minItems": 1},
                    _obj({"min": _num, "max": _num, "n": {"type": "integer", "minimum": 1}},
                         ["min", "max", "n"])]}
_paths_list = {"oneOf": [_str, {"type": "array", "items": _str, "minItems": 1}]}

_SURROGATE = _obj({k: _num for k in ("dx", "surface_height", "dt", "rate_coefficient",
                                     "min_separation", "x_start", "peak_temperature_scale",
                                     "reference_power", "droplet_cooling")}
                  | {k: _int for k in ("nx", "ny", "nz", "frames", "seed")}
                  | {"eject_speed": {"type": "array", "items": _num, "minItems": 2,
                                     "maxItems": 2},
                     "particle_radius": {"type": "array", "items": _num, "minItems": 2,
                                         "maxItems": 2}})
_MATERIAL = _obj({k: _num for k in ("T_liquidus", "T_solidus", "T_vapor", "P0", "L_v",
                                    "molar_mass", "gas_constant", "rho_metal", "rho_liquid",
                                    "rho_gas", "surface_tension", "T_ambient")}
                 | {"calibration": {"type": "array", "items": {"type": "array", "items": _num,
                                                               "minItems": 3, "maxItems": 3}}})
_PROCESS = {"power": _num, "scan_speed": _num, "beam_radius": _num, "absorptivity": _num}

CONFIG_SCHEMA = _obj({
    "paths": _obj({"bundles": _paths_list, "runs": {"type": "object",
                                                    "additionalProperties": _paths_list},
                   "points_csv": _str, "bundle": _str, "dataset": _str, "train": _str,
                   "test": _str, "model": _str, "cells": _str}),
    "ingest": _obj({"grid": _obj({"dims": {"type": "array", "items": _int},
                                  "spacing_um": {"type": "array", "items": _num},
                                  "origin_um": {"type": "array", "items": _num},
                                  "time_us": _num}, ["dims", "spacing_um"]),
                    "fill": {"type": "object", "additionalProperties": _num}}),
    "segment": _obj({"threshold": _num, "connectivity": {"enum": [6, 18, 26]},
                     "min_cells": {"type": "integer", "minimum": 1}}),
    "tracker": _obj({"dt": _num, "max_dist": _num}),
    "sample": _obj({"n_r": _int, "n_samples": {"type": "integer", "minimum": 0},
                    "seed": _seed}),
    "dataset": _obj({"source": {"enum": ["pipeline", "gaussian"]}, "n": _int,
                     "train_frac": _num, "seed": _seed, "drop_spatial": _bool,
                     "bins": _int, "kde_bandwidth": {"oneOf": [{"const": "auto"}, _num]},
                     "grid_size": _int, "n_pairs": _int}),
    "learner": _obj({"algorithm": {"enum": list(L.ALGORITHMS)},
                     "grid": {"oneOf": [{"const": "default"}, {"type": "object"}]},
                     "hyperparameters": {"type": "object"}, "k": _int,
                     "metric": {"enum": ["roc_auc", "accuracy", "f1", "balanced_accuracy"]},
                     "scaling": {"enum": ["none", "standardize"]}, "seed": _seed,
                     "threshold": _num}, ["algorithm"]),
    "explain": _obj({"background": _int, "max_records": _int, "seed": _seed,
                     "pdp_grid": {"oneOf": [_int, {"type": "array", "items": _num}]},
                     "pdp_features": {"type": "array", "items": _str}}),
    "synth": _obj(_PROCESS | {"surrogate": _SURROGATE, "material": _MATERIAL}),
    "screen": _obj({"powers": _range, "velocities": _range, "beam_radius": _num,
                    "absorptivity": _num, "threshold": _num, "surface_only": _bool,
                    "surrogate": _SURROGATE, "material": _MATERIAL},
                   ["powers", "velocities"]),
    "map": _obj({"overlay": {"type": "object", "additionalProperties": {
        "type": "array", "items": {"type": "array", "items": _num}}}}),
})


def load_config(path, seed=None):
    """Read and schema-validate a config; ``seed`` overrides every stage seed."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config {path}: at {where}: {e.message}")
    if seed is not None:
        cfg = copy.deepcopy(cfg)
        for sec in ("sample", "dataset", "learner", "explain"):
            cfg.setdefault(sec, {})["seed"] = seed
        for sec in ("synth", "screen"):
            cfg.setdefault(sec, {}).setdefault("surrogate", {})["seed"] = seed
    return cfg


def _need(cfg, section, key):
    try:
        return cfg[section][key]
    except KeyError:
        raise ConfigError(f"config needs {section}.{key} for this command") from None


def _bundle_dirs(spec):
    items = [spec] if isinstance(spec, str) else list(spec)
    out = []
    for item in items:
        hits = sorted(glob.glob(item)) if any(c in item for c in "*?[") else [item]
        if not hits:
            raise DataError(f"no bundle directories match {item!r}")
        out.extend(hits)
    return out


def _load(path):
    try:
        return fieldstore.load_bundle(path)
    except FileNotFoundError as exc:
        raise DataError(f"bundle {path}: {exc}") from None


def _seg_kw(cfg):
    s = cfg.get("segment", {})
    return {"threshold": s.get("threshold", 0.5), "connectivity": s.get("connectivity", 6),
            "min_cells": s.get("min_cells", 8)}


def _tracker(cfg):
    t = cfg.get("tracker", {})
    return track.TrackerConfig(dt=t.get("dt", 5.0), max_dist=t.get("max_dist", 25.0))


def _materials(d):
    d = dict(d or {})
    if "calibration" in d:
        d["calibration"] = tuple(tuple(r) for r in d["calibration"])
    return synthgen.MaterialParams(**d)


def _surrogate(d):
    d = dict(d or {})
    for key in ("eject_speed", "particle_radius"):
        if key in d:
            d[key] = tuple(d[key])
    return synthgen.SurrogateConfig(**d)


def _levels(r):
    if isinstance(r, list):
        return [float(v) for v in r]
    return np.linspace(r["min"], r["max"], r["n"]).tolist()


def _blob_rows(blobs, kind):
    return [[b.id, kind, b.n_cells, float(b.volume), *map(float, b.centroid),
             *map(float, b.mean_u), float(b.speed), float(b.mean_T), float(b.mean_rho),
             float(b.mean_p)] for b in blobs]


BLOB_HEADER = ["id", "kind", "n_cells", "volume_um3", "cx", "cy", "cz", "ux", "uy", "uz",
               "speed", "mean_T", "mean_rho", "mean_p"]


# ----------------------------------------------------------------- commands

def cmd_ingest(cfg, out, threads):
    paths = cfg.get("paths", {})
    if "points_csv" in paths:
        g = _need(cfg, "ingest", "grid")
        meta = fieldstore.GridMeta.from_json({"dims": g["dims"], "spacing_um": g["spacing_um"],
                                              "origin_um": g.get("origin_um", [0, 0, 0]),
                                              "time_us": g.get("time_us", 0.0)})
        bundle = fieldstore.import_points_csv(paths["points_csv"], meta,
                                              cfg.get("ingest", {}).get("fill"))
        bundle, warnings = fieldstore.clamp_fractions(bundle)
    elif "bundle" in paths:
        bundle = fieldstore.load_bundle(paths["bundle"], check=False)
        bundle, warnings = fieldstore.clamp_fractions(bundle)
    else:
        raise ConfigError("ingest needs paths.points_csv or paths.bundle")
    problems = fieldstore.validate(bundle)
    if problems:
        p = problems[0]
        raise DataError(f"ingest: {p['field']} {p['message']} at cell {p['index']} "
                        f"({p['count']} cells)")
    fieldstore.save_bundle(bundle, out / "bundle")
    write_json(out / "ingest_warnings.json", warnings)
    return {"bundle": str(out / "bundle"), "warnings": len(warnings)}


def cmd_segment(cfg, out, threads):
    dirs = _bundle_dirs(_need(cfg, "paths", "bundles"))
    summary = {}
    for d in dirs:
        b = _load(d)
        res, labels = segment.segment(b, **_seg_kw(cfg))
        dest = out / "segment" / Path(d).name
        write_csv(dest / "blobs.csv", BLOB_HEADER,
                  _blob_rows([res.composite], "composite") + _blob_rows(res.spatter, "spatter"))
        atomic_write_bytes(dest / "labels.u32",
                           np.ascontiguousarray(labels, dtype="<u4").tobytes())
        summary[Path(d).name] = {"spatter": len(res.spatter), "dropped_small": res.dropped_small}
    return summary


def cmd_track(cfg, out, threads):
    dirs = _bundle_dirs(_need(cfg, "paths", "bundles"))
    frames, times = [], []
    for d in dirs:
        b = _load(d)
        res, _ = segment.segment(b, **_seg_kw(cfg))
        frames.append(res.spatter)
        times.append(b.meta.time)
    order = np.argsort(times, kind="stable")
    if len(set(times)) != len(times):
        raise DataError("track: duplicate frame times")
    frames = [frames[i] for i in order]
    times = [times[i] for i in order]
    trajs, _ = track.track(frames, times, _tracker(cfg))
    rows = []
    for t in trajs:
        for n, (time_us, blob) in enumerate(t.observations):
            status = t.status if n == len(t.observations) - 1 else "active"
            rows.append([t.id, float(time_us), blob.id, *map(float, blob.centroid),
                         *map(float, blob.mean_u), float(blob.speed), float(blob.mean_T),
                         float(blob.mean_rho), float(blob.mean_p), status])
    write_csv(out / "trajectories.csv",
              ["traj_id", "time_us", "blob_id", "cx", "cy", "cz", "ux", "uy", "uz", "speed",
               "mean_T", "mean_rho", "mean_p", "status"], rows)
    return {"trajectories": len(trajs), "frames": len(frames)}


def cmd_sample(cfg, out, threads):
    dirs = _bundle_dirs(_need(cfg, "paths", "bundles"))
    s = cfg.get("sample", {})
    seed = s.get("seed", 0)
    rows = []
    for n, d in enumerate(dirs):
        b = _load(d)
        kw = _seg_kw(cfg)
        mp = mpsample.meltpool_mask(b, threshold=kw["threshold"],
                                    connectivity=kw["connectivity"])
        surf = mpsample.surface_cells(mp, b)
        frame_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(n,))
                         .generate_state(1)[0])
        for smp in mpsample.sample_surface(b, surf, n_r=s.get("n_r", 3),
                                           n_samples=s.get("n_samples", 1), seed=frame_seed,
                                           mp=mp):
            r = dsm.SampleRecord.from_values(smp.position, smp.mean_u, smp.mean_T,
                                             smp.mean_rho, smp.mean_p, "meltpool")
            rows.append([*(float(getattr(r, f)) for f in dsm.ALL_FEATURES), 0])
    write_csv(out / "meltpool_samples.csv", [*dsm.ALL_FEATURES, "label"], rows)
    return {"samples": len(rows)}


def cmd_dataset(cfg, out, threads):
    d = cfg.get("dataset", {})
    seed = d.get("seed", 0)
    if d.get("source", "pipeline") == "gaussian":
        data = synthgen.gen_dataset(n=d.get("n", 488), seed=seed)
    else:
        paths = cfg.get("paths", {})
        runs = paths.get("runs") or ({"run": paths["bundles"]} if "bundles" in paths else None)
        if not runs:
            raise ConfigError("dataset needs paths.runs or paths.bundles (or source=gaussian)")
        pcfg = pipeline.PipelineConfig(tracker=_tracker(cfg), seed=seed,
                                       n_r=cfg.get("sample", {}).get("n_r", 3),
                                       **_seg_kw(cfg))
        parts = []
        for run_id in sorted(runs):
            dirs = _bundle_dirs(runs[run_id])
            bundles = sorted((_load(p) for p in dirs), key=lambda b: b.meta.time)
            parts.append(pipeline.run_frames(bundles, run_id, pcfg).dataset)
        data = dsm.merge(parts)
    if len(data) == 0:
        raise DataError("dataset: no records (no spatter blobs found)")
    if d.get("drop_spatial", False):
        data = dsm.drop_spatial(data)
    dsm.to_csv(data, out / "dataset.csv")
    train, test = dsm.split(data, d.get("train_frac", 0.7), seed)
    dsm.to_csv(train, out / "train.csv")
    dsm.to_csv(test, out / "test.csv")
    stats = dsm.feature_stats(data, bins=d.get("bins", 20),
                              kde_bandwidth=d.get("kde_bandwidth", "auto"),
                              grid_size=d.get("grid_size", 256), n_pairs=d.get("n_pairs", 200),
                              seed=seed)
    dsm.write_stats(stats, out)
    write_json(out / "provenance.json", data.provenance)
    return {"records": len(data), "train": len(train), "test": len(test),
            "classes": data.class_counts}


def _read_dataset(path):
    try:
        return dsm.from_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"dataset {path}: {exc}") from None


def cmd_train(cfg, out, threads):
    _need(cfg, "learner", "algorithm")
    lc = cfg["learner"]
    train = _read_dataset(_need(cfg, "paths", "train"))
    algo, seed = lc["algorithm"], lc.get("seed", 0)
    scaling = lc.get("scaling", "none")
    grid = lc.get("grid")
    if grid is not None:
        grid = L.DEFAULT_GRIDS[algo] if grid == "default" else grid
        fixed = lc.get("hyperparameters")
        spec, table = L.grid_search(algo, grid, train, k=lc.get("k", 5),
                                    metric=lc.get("metric", "roc_auc"), seed=seed,
                                    scaling=scaling, n_jobs=threads, fixed=fixed)
        L.write_cv_table(table, out / "cv_table.csv")
    else:
        spec = L.ModelSpec(algo, dict(lc.get("hyperparameters", {})), seed, scaling)
    model = L.fit(spec, train, n_jobs=threads)
    L.save_model(model, out / "model.json")
    rep = L.evaluate(model, train, lc.get("threshold", 0.5))
    write_json(out / "train_metrics.json", rep.to_dict())
    return {"spec": spec.to_dict(), "train_accuracy": rep.accuracy}


def _read_model(cfg):
    path = _need(cfg, "paths", "model")
    try:
        return L.load_model(path)
    except FileNotFoundError as exc:
        raise DataError(f"model {path}: {exc}") from None


def _align(ds, model):
    if ds.feature_names == tuple(model.feature_names):
        return ds
    if set(model.feature_names) <= set(ds.feature_names):
        cols = [ds.feature_names.index(f) for f in model.feature_names]
        return dsm.Dataset(ds.X[:, cols], ds.y, model.feature_names, ds.provenance)
    raise DataError(f"dataset columns {ds.feature_names} lack model features "
                    f"{model.feature_names}")


def cmd_evaluate(cfg, out, threads):
    model = _read_model(cfg)
    test = _align(_read_dataset(_need(cfg, "paths", "test")), model)
    rep = L.evaluate(model, test, cfg.get("learner", {}).get("threshold", 0.5))
    result = {"test": rep.to_dict()}
    if "train" in cfg.get("paths", {}):
        tr = L.evaluate(model, _align(_read_dataset(cfg["paths"]["train"]), model))
        result["train"] = tr.to_dict()
        result["train_test_gap"] = tr.accuracy - rep.accuracy
    if model.spec.algorithm != "knn":
        result["feature_importance"] = L.feature_importance(model)
    write_json(out / "metrics.json", result)
    return {"accuracy": rep.accuracy, "roc_auc": rep.roc_auc}


def cmd_explain(cfg, out, threads):
    model = _read_model(cfg)
    e = cfg.get("explain", {})
    test = _align(_read_dataset(_need(cfg, "paths", "test")), model)
    bg = _align(_read_dataset(cfg.get("paths", {}).get("train", cfg["paths"]["test"])), model)
    seed = e.get("seed", 0)
    records = test
    if e.get("max_records") is not None and len(test) > e["max_records"]:
        idx = np.sort(np.random.default_rng(seed).choice(len(test), e["max_records"],
                                                         replace=False))
        records = test.subset(idx)
    summary = explain.shap_summary(model, records, bg, max_background=e.get("background", 200),
                                   seed=seed)
    explain.write_shap(summary, out)
    for feat in e.get("pdp_features", list(model.feature_names)):
        explain.write_pdp(explain.pdp(model, test, feat, e.get("pdp_grid", 50)), out)
    worst = max(a.efficiency_residual for a in summary["attributions"])
    return {"records": len(records), "ranking": summary["ranking"],
            "max_efficiency_residual": worst}


def cmd_synth(cfg, out, threads):
    _need(cfg, "synth", "power")
    _need(cfg, "synth", "scan_speed")
    s = cfg["synth"]
    params = synthgen.ProcessParams(**{k: s[k] for k in ("power", "scan_speed", "beam_radius",
                                                          "absorptivity") if k in s})
    ledger = synthgen.SurrogateRun([], [], [], params, None)
    names = []
    for n, b in enumerate(synthgen.iter_surrogate(params, _materials(s.get("material")),
                                                  _surrogate(s.get("surrogate")), ledger)):
        name = f"frame_{n:04d}"
        fieldstore.save_bundle(b, out / "synth" / name)
        names.append(name)
    write_json(out / "synth" / "ground_truth.json", ledger.ground_truth())
    return {"frames": len(names), "spatter": len(ledger.droplets)}


def cmd_screen(cfg, out, threads):
    _need(cfg, "screen", "powers")
    _need(cfg, "screen", "velocities")
    s = cfg["screen"]
    model = _read_model(cfg)
    kw = {k: s[k] for k in ("beam_radius", "absorptivity") if k in s}
    grid = procmap.make_grid(_levels(s["powers"]), _levels(s["velocities"]), **kw)
    cells = procmap.screen(grid, model, _materials(s.get("material")),
                           _surrogate(s.get("surrogate")), s.get("threshold", 0.5),
                           s.get("surface_only", False), n_jobs=threads)
    write_csv(out / "screen_cells.csv",
              ["power_W", "velocity_m_s", "spatter_volume_um3", "flagged_fraction",
               "frames_used"],
              [[c.power, c.scan_speed, c.spatter_volume, c.flagged_fraction, c.frames_used]
               for c in cells])
    return {"cells": len(cells), "quadrants": procmap.quadrant_means(cells)}


def cmd_map(cfg, out, threads):
    path = _need(cfg, "paths", "cells")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"cells {path}: {exc}") from None
    try:
        cells = [procmap.ProcessMapCell(float(r["power_W"]), float(r["velocity_m_s"]),
                                        float(r["spatter_volume_um3"]),
                                        float(r["flagged_fraction"]), int(r["frames_used"]))
                 for r in rows]
    except (KeyError, ValueError) as exc:
        raise DataError(f"cells {path}: malformed row ({exc})") from None
    overlay = procmap.BoundaryOverlay(cfg.get("map", {}).get("overlay", {}))
    procmap.emit_map(cells, overlay, out / "map")
    return {"cells": len(cells), "quadrants": procmap.quadrant_means(cells)}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}

DATA_ERRORS = (DataError, fieldstore.BundleError, segment.SegmentationError,
               track.TrackingError, mpsample.MeltPoolError, dsm.DatasetError,
               L.ModelError, explain.ExplainError, synthgen.SurrogateError,
               procmap.ProcessMapError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def build_parser():
    p = _Parser(prog="lpbfspatter", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--threads", type=int, default=1, help="parallelism cap (default 1)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _manifest(args, cfg, result, started):
    import scipy
    return {"command": args.command, "config_path": os.path.abspath(args.config),
            "config": cfg, "threads": args.threads, "seed_override": args.seed,
            "result": result,
            "versions": {"lpbfspatter": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "started_unix": started, "elapsed_s": time.time() - started}


def main(argv=None):
    started = time.time()
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    try:
        result = HANDLERS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error [{args.command}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    write_json(out / f"manifest_{args.command}.json", _manifest(args, cfg, result, started))
    print(json.dumps(result, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
