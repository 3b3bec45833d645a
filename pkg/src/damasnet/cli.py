"""Command-line entry point: ``damasnet <simulate|dataset|solve|train|eval|image>``."""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics, net, solvers, train
from .config import RunConfig, load_config, write_config
from .errors import FormatError, ParameterError
from .scene import Scene, SourceSpec, save_geometry, save_record, synthesize, add_noise_snr
from .spectra import csm_from_record, load_csm, save_csm
from .steering import build_steering, geometry_hash, grid_hash

METHODS = ("das", "damas", "damas-fista", "net")


class CliError(Exception):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


def _require(path: Path) -> Path:
    if not path.exists():
        raise CliError(f"missing input {path}", str(path))
    return path


def _setup(cfg: RunConfig):
    geometry = cfg.geometry.build()
    grid = cfg.grid.build()
    steering = build_steering(grid, geometry, cfg.scene.frequency, cfg.scene.c, cfg.cache_dir)
    return geometry, grid, steering


def _hashes(cfg: RunConfig, grid, geometry) -> dict:
    return {"config_hash": cfg.hash(), "grid_hash": grid_hash(grid), "geometry_hash": geometry_hash(geometry)}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def cmd_simulate(cfg: RunConfig) -> Path:
    """Synthesize one scene; write record, CSM, geometry and truth files."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    geometry, grid, _ = _setup(cfg)
    tpl = cfg.scene
    positions = []
    for x, y in cfg.simulate.sources:
        p = np.array([x, y, grid.z])
        if cfg.simulate.snap_to_grid:
            p = grid.points[grid.nearest_index(p)]
        positions.append(p)
    sources = [SourceSpec(tuple(p), tpl.amplitude, tpl.frequency) for p in positions]
    rec = synthesize(Scene(sources, tpl.sample_rate, tpl.duration, tpl.c), geometry)
    if np.isfinite(tpl.snr_db):
        rec = add_noise_snr(rec, tpl.snr_db, cfg.seed)
    save_record(rec, out / "record.bin")
    save_csm(csm_from_record(rec, tpl.frame_length, tpl.frequency), out / "csm.bin")
    save_geometry(geometry, out / "geometry.txt")
    gt, idx = train.label_map(grid, geometry, positions, [tpl.amplitude] * len(positions))
    truth = {
        **_hashes(cfg, grid, geometry),
        "sources": [{"position": [float(v) for v in p], "power": float(gt[n]), "grid_index": n} for p, n in zip(positions, idx)],
    }
    _write_json(out / "truth.json", truth)
    write_config(cfg, out)
    return out


def cmd_dataset(cfg: RunConfig) -> Path:
    geometry, grid, _ = _setup(cfg)
    samples = train.make_dataset(cfg.dataset.count, cfg.scene, grid, geometry, cfg.dataset.n_sources, cfg.seed)
    out = Path(cfg.out)
    extra = {"config_hash": cfg.hash(), "seed": cfg.seed, "n_sources": cfg.dataset.n_sources}
    path = train.save_dataset(samples, out, grid, geometry, extra)
    write_config(cfg, out)
    return path


def _solve_map(method: str, c, steering, cfg: RunConfig, params=None) -> np.ndarray:
    if method == "das":
        return solvers.das(c, steering).values
    if method == "damas":
        b = solvers.das(c, steering)
        return solvers.damas_gauss_seidel(b, steering, cfg.solver.sweeps, cfg.solver.tol).map.values
    if method == "damas-fista":
        b = solvers.das(c, steering)
        return solvers.damas_fista(b, steering, cfg.solver.eps, cfg.solver.max_iter, cfg.solver.momentum).map.values
    if method == "net":
        if params is None:
            raise CliError("method 'net' needs --checkpoint")
        return net.predict(c, steering, params)
    raise CliError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def _load_params(path: str | None, cfg: RunConfig, grid, geometry):
    if path is None:
        return None
    p = _require(Path(path))
    return net.load_checkpoint(p, expect={"grid_hash": grid_hash(grid), "geometry_hash": geometry_hash(geometry)})


def cmd_solve(cfg: RunConfig, method: str, input_dir: str, checkpoint: str | None = None) -> dict:
    """Reconstruct a map from a `simulate` output directory."""
    src = Path(input_dir)
    geometry, grid, steering = _setup(cfg)
    c = load_csm(_require(src / "csm.bin"))
    truth = json.loads(_require(src / "truth.json").read_text())
    if truth.get("grid_hash") != grid_hash(grid) or truth.get("geometry_hash") != geometry_hash(geometry):
        raise CliError("input was simulated under a different grid or geometry", str(src))
    params = _load_params(checkpoint, cfg, grid, geometry)
    values, dt = metrics.time_call(_solve_map, method, c, steering, cfg, params)
    positions = [s["position"] for s in truth["sources"]]
    report = metrics.evaluate_map(method, values, grid, positions, dt)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pm = solvers.PowerMap(values, grid)
    solvers.export_csv(pm, grid, out / f"map_{method}.csv")
    solvers.export_pgm(pm, out / f"map_{method}.pgm")
    rep = {**report.__dict__, **_hashes(cfg, grid, geometry)}
    _write_json(out / f"report_{method}.json", rep)
    write_config(cfg, out)
    return rep


def cmd_train(cfg: RunConfig, dataset_dir: str) -> Path:
    geometry, grid, steering = _setup(cfg)
    samples, manifest = train.load_dataset(_require(Path(dataset_dir)))
    if manifest["grid_hash"] != grid_hash(grid) or manifest["geometry_hash"] != geometry_hash(geometry):
        raise CliError("dataset was generated under a different grid or geometry", dataset_dir)
    out = Path(cfg.out)
    meta = _hashes(cfg, grid, geometry)
    res = train.train_loop(samples, steering, cfg.train, checkpoint_dir=out, meta=meta)
    train.write_history(res.history, out / "loss_history.csv")
    write_config(cfg, out)
    return out / "checkpoint.netp"


def cmd_eval(cfg: RunConfig, dataset_dir: str, methods, checkpoint: str | None = None, limit: int | None = None) -> Path:
    """Score each method over a dataset; writes ``comparison.csv`` and ``reports.json``."""
    geometry, grid, steering = _setup(cfg)
    samples, manifest = train.load_dataset(_require(Path(dataset_dir)))
    if manifest["grid_hash"] != grid_hash(grid) or manifest["geometry_hash"] != geometry_hash(geometry):
        raise CliError("dataset was generated under a different grid or geometry", dataset_dir)
    if limit is not None:
        samples = samples[:limit]
    params = _load_params(checkpoint, cfg, grid, geometry)
    truths = [[p for p, _ in s.source_truth] for s in samples]
    all_reports, rows = [], []
    for m in methods:
        fn = lambda c, m=m: _solve_map(m, c, steering, cfg, params)  # noqa: E731
        reps, summary = metrics.benchmark(m, fn, [s.csm for s in samples], grid, truths)
        all_reports += reps
        rows.append(summary)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_reports(all_reports, out / "reports.json")
    lines = ["method,R,delta_L,time,time_median,time_cv," + "config_hash"]
    for r in rows:
        lines.append(
            f"{r['method']},{r['mean_renyi']:.6f},{r['mean_delta_l']:.6f},{r['mean_time']:.6f},"
            f"{r['median_time']:.6f},{r['cv_time']:.4f},{cfg.hash()}"
        )
    (out / "comparison.csv").write_text("\n".join(lines) + "\n")
    write_config(cfg, out)
    return out / "comparison.csv"


def cmd_image(map_csv: str, out_path: str) -> Path:
    """Convert an ``x,y,power`` map CSV into an 8-bit PGM."""
    data = np.loadtxt(_require(Path(map_csv)), delimiter=",", skiprows=1, ndmin=2)
    pm = solvers.PowerMap(data[:, 2])
    solvers.export_pgm(pm, out_path)
    return Path(out_path)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (dotted path, JSON value)")

    p = argparse.ArgumentParser(prog="damasnet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="synthesize one scene")
    sub.add_parser("dataset", parents=[common], help="generate a labelled dataset")
    s = sub.add_parser("solve", parents=[common], help="reconstruct a map from a simulate output")
    s.add_argument("--method", choices=METHODS, default="das")
    s.add_argument("--input", required=True, help="simulate output directory")
    s.add_argument("--checkpoint")
    t = sub.add_parser("train", parents=[common], help="train the unrolled network")
    t.add_argument("--dataset", required=True)
    e = sub.add_parser("eval", parents=[common], help="compare methods on a dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--methods", default="das,damas-fista,net")
    e.add_argument("--checkpoint")
    e.add_argument("--limit", type=int)
    i = sub.add_parser("image", help="map CSV to PGM heatmap")
    i.add_argument("map_csv")
    i.add_argument("output")
    return p


def _overrides(args) -> dict:
    ov = {}
    for item in getattr(args, "set", []):
        key, _, raw = item.partition("=")
        try:
            ov[key] = json.loads(raw)
        except json.JSONDecodeError:
            ov[key] = raw
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        ov["out"] = args.out
    return ov


@contextlib.contextmanager
def _thread_cap():
    n = os.environ.get("BFL_THREADS")
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(n)):
        yield


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        with _thread_cap():
            if args.command == "image":
                result = cmd_image(args.map_csv, args.output)
            else:
                cfg = load_config(args.config, _overrides(args))
                if args.command == "simulate":
                    result = cmd_simulate(cfg)
                elif args.command == "dataset":
                    result = cmd_dataset(cfg)
                elif args.command == "solve":
                    result = cmd_solve(cfg, args.method, args.input, args.checkpoint)
                elif args.command == "train":
                    result = cmd_train(cfg, args.dataset)
                else:
                    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
                    result = cmd_eval(cfg, args.dataset, methods, args.checkpoint, args.limit)
    except (CliError, ParameterError, FormatError, OSError, KeyError, json.JSONDecodeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        path = getattr(exc, "path", None) or getattr(exc, "filename", None)
        if path:
            err["path"] = str(path)
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "result": str(result) if not isinstance(result, dict) else result, "elapsed": time.perf_counter() - t0}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
