"""Map quality metrics, peak picking and timing harness."""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError
from .solvers import PowerMap
from .steering import ScanGrid


@dataclass(frozen=True)
class EvalReport:
    method_name: str
    renyi: float
    delta_l: float
    wall_time: float
    unmatched: int = 0


def renyi_entropy(values, alpha: float = 3.0, cell_area: float = 1.0) -> float:
    """Order-`alpha` Renyi entropy in bits, with the first-power denominator.

    ``R = log2( sum |B|^alpha a / sum |B| a ) / (1 - alpha)``. This is not
    scale invariant: ``R(s B) = R(B) - log2(s)``.
    """
    if isinstance(values, PowerMap):
        if values.grid is not None:
            cell_area = values.grid.cell_area
        values = values.values
    if alpha == 1:
        raise ParameterError("alpha = 1 is not supported")
    v = np.abs(np.asarray(values, dtype=float))
    den = np.sum(v) * cell_area
    if den == 0:
        raise ParameterError("entropy of an all-zero map is undefined")
    return float(np.log2(np.sum(v**alpha) * cell_area / den) / (1.0 - alpha))


def extract_locations(values, grid: ScanGrid, n_peaks: int = 1, min_separation: float | None = None):
    """Greedy peak picking with suppression radius `min_separation`.

    Ties resolve to the lowest row-major index. Returns ``(positions,
    complete)``; `complete` is False when the map ran out of positive values
    before `n_peaks` picks.
    """
    if n_peaks < 1:
        raise ParameterError("n_peaks must be >= 1")
    v = np.asarray(values.values if isinstance(values, PowerMap) else values, dtype=float).copy()
    if min_separation is None:
        min_separation = 2 * grid.spacing
    pts = grid.points
    out = []
    for _ in range(n_peaks):
        i = int(np.argmax(v))
        if not v[i] > 0:
            return out, False
        out.append(pts[i].copy())
        near = np.linalg.norm(pts[:, :2] - pts[i, :2], axis=1) <= min_separation
        v[near] = -np.inf
    return out, True


def assign(estimated: Sequence, truth: Sequence):
    """Minimum-total-distance matching. Returns ``(distances, unmatched_truths)``."""
    est = np.atleast_2d(np.asarray(estimated, dtype=float))
    gt = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.size == 0 or gt.size == 0:
        raise ParameterError("need at least one estimate and one truth")
    cost = np.linalg.norm(gt[:, None, :] - est[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols], gt.shape[0] - rows.size


def location_bias(estimated: Sequence, truth: Sequence) -> float:
    """Mean matched Euclidean distance between estimated and true positions."""
    d, _ = assign(estimated, truth)
    return float(np.mean(d))


def evaluate_map(name: str, values, grid: ScanGrid, truth: Sequence, wall_time: float = 0.0, alpha: float = 3.0) -> EvalReport:
    locs, _ = extract_locations(values, grid, n_peaks=len(truth))
    if locs:
        d, unmatched = assign(locs, truth)
        dl = float(np.mean(d))
    else:
        dl, unmatched = float("inf"), len(truth)
    try:
        r = renyi_entropy(values, alpha, grid.cell_area)
    except ParameterError:
        r = float("nan")
    return EvalReport(name, r, dl, wall_time, unmatched)


def time_call(fn: Callable, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def benchmark(name: str, method: Callable, instances: Sequence, grid: ScanGrid, truths: Sequence) -> tuple[list[EvalReport], dict]:
    """Time `method(instance) -> map values` per instance and score each map.

    The returned summary carries mean, median and coefficient of variation
    of the wall times.
    """
    reports = []
    for inst, truth in zip(instances, truths):
        values, dt = time_call(method, inst)
        reports.append(evaluate_map(name, values, grid, truth, dt))
    times = [r.wall_time for r in reports]
    mean = statistics.fmean(times) if times else 0.0
    summary = {
        "method": name,
        "mean_time": mean,
        "median_time": statistics.median(times) if times else 0.0,
        "cv_time": (statistics.pstdev(times) / mean) if mean > 0 else 0.0,
        "mean_renyi": statistics.fmean(r.renyi for r in reports) if reports else float("nan"),
        "mean_delta_l": statistics.fmean(r.delta_l for r in reports) if reports else float("nan"),
    }
    return reports, summary


def write_reports(reports: Sequence[EvalReport], json_path: str | Path, csv_path: str | Path | None = None) -> None:
    Path(json_path).write_text(json.dumps([asdict(r) for r in reports], indent=2))
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "R", "delta_L", "time"])
            for r in reports:
                w.writerow([r.method_name, f"{r.renyi:.6f}", f"{r.delta_l:.6f}", f"{r.wall_time:.6f}"])
