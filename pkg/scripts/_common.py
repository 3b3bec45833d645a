"""Shared setup for the experiment scripts."""

import argparse
import csv
from pathlib import Path

from damasnet.config import load_config


def base_parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    return p


def setup(args):
    from damasnet.steering import build_steering

    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    geometry, grid = cfg.geometry.build(), cfg.grid.build()
    steering = build_steering(grid, geometry, cfg.scene.frequency, cfg.scene.c, cfg.cache_dir)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    return cfg, geometry, grid, steering


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
