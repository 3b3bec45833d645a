"""Datasets with analytic labels, the loss, reverse-mode gradients and Adam training."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParameterError
from .net import ForwardTrace, NetParams, forward, init_params, predict, save_checkpoint
from .scene import SPEED_OF_SOUND, ArrayGeometry, Scene, SourceSpec, add_noise_snr, synthesize
from .spectra import Csm, csm_from_record, load_csm, save_csm
from .steering import ScanGrid, SteeringSet, geometry_hash, grid_hash

MAX_DRAWS = 100


@dataclass(frozen=True)
class SceneTemplate:
    """Everything about a simulated measurement except where the sources are."""

    amplitude: float = 1.0
    frequency: float = 2000.0
    sample_rate: float = 51200.0
    duration: float = 0.02
    c: float = SPEED_OF_SOUND
    frame_length: int = 256
    snr_db: float = float("inf")
    on_grid: bool = False


@dataclass
class LabeledSample:
    csm: Csm
    gt_map: np.ndarray
    source_truth: list  # [(position (3,), power)]
    gt_indices: list = field(default_factory=list)
    noise_seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 30
    split_fraction: float = 0.7
    rng_seed: int = 0
    L: int = 5
    rho_init: str = "inverse"
    # learning-rate multiplier per parameter name; rho defaults to 1/lipschitz
    lr_scale: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise ParameterError("split_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be >= 1 and epochs >= 0")


def _draw_positions(rng, grid: ScanGrid, n_sources: int, on_grid: bool) -> np.ndarray:
    for _ in range(MAX_DRAWS):
        xy = rng.uniform(-grid.extent, grid.extent, size=(n_sources, 2))
        if on_grid:
            ax = grid.axis
            xy = ax[np.abs(xy[..., None] - ax).argmin(axis=-1)]
        if n_sources == 1 or np.linalg.norm(xy[0] - xy[1]) >= 2 * grid.spacing:
            return np.column_stack([xy, np.full(n_sources, float(grid.z))])
    raise ParameterError(f"could not place {n_sources} separated sources in {MAX_DRAWS} draws")


def label_map(grid: ScanGrid, geometry: ArrayGeometry, positions, amplitudes) -> tuple[np.ndarray, list]:
    """One-hot label per source at its nearest grid point, valued ``(a / r0)^2``."""
    gt = np.zeros(grid.size)
    idx = []
    pts = grid.points
    for pos, amp in zip(positions, amplitudes):
        n = grid.nearest_index(pos)
        r0 = np.linalg.norm(pts[n] - geometry.centroid)
        gt[n] += (amp / r0) ** 2
        idx.append(n)
    return gt, idx


def make_sample(positions, template: SceneTemplate, grid: ScanGrid, geometry: ArrayGeometry, phases=None, noise_seed: int = 0) -> LabeledSample:
    phases = np.zeros(len(positions)) if phases is None else phases
    sources = [SourceSpec(tuple(p), template.amplitude, template.frequency, float(ph)) for p, ph in zip(positions, phases)]
    scene = Scene(sources, template.sample_rate, template.duration, template.c)
    rec = synthesize(scene, geometry)
    if np.isfinite(template.snr_db):
        rec = add_noise_snr(rec, template.snr_db, noise_seed)
    c = csm_from_record(rec, template.frame_length, template.frequency)
    gt, idx = label_map(grid, geometry, positions, [template.amplitude] * len(positions))
    truth = [(np.asarray(p, dtype=float), float(gt[n])) for p, n in zip(positions, idx)]
    return LabeledSample(c, gt, truth, idx, noise_seed)


def make_dataset(
    count: int,
    template: SceneTemplate,
    grid: ScanGrid,
    geometry: ArrayGeometry,
    n_sources: int = 1,
    rng_seed: int = 0,
) -> list[LabeledSample]:
    """Seeded simulated dataset of 1- or 2-source measurements.

    Source x, y are uniform over the grid extent (snapped to grid points when
    ``template.on_grid``); two sources are kept at least two grid spacings apart.
    """
    if n_sources not in (1, 2):
        raise ParameterError(f"unsupported source count {n_sources}")
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(count):
        pos = _draw_positions(rng, grid, n_sources, template.on_grid)
        phases = rng.uniform(0, 2 * np.pi, size=n_sources)
        noise_seed = int(rng.integers(2**63))
        out.append(make_sample(pos, template, grid, geometry, phases, noise_seed))
    return out


def with_noise(samples: list[LabeledSample], template: SceneTemplate, grid: ScanGrid, geometry: ArrayGeometry, snr_db: float) -> list[LabeledSample]:
    """Re-simulate the same source layouts with noise at `snr_db`."""
    tpl = replace(template, snr_db=snr_db)
    return [
        make_sample([p for p, _ in s.source_truth], tpl, grid, geometry, noise_seed=s.noise_seed)
        for s in samples
    ]


def split(dataset: list, fraction: float = 0.7, rng_seed: int = 0) -> tuple[list, list]:
    if not 0 < fraction < 1:
        raise ParameterError("fraction must lie in (0, 1)")
    order = np.random.default_rng(rng_seed).permutation(len(dataset))
    n_train = int(np.floor(fraction * len(dataset)))
    return [dataset[i] for i in order[:n_train]], [dataset[i] for i in order[n_train:]]


def loss(pred, gt) -> float:
    """Euclidean distance between prediction and label."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ParameterError("prediction and label lengths differ")
    return float(np.linalg.norm(pred - gt))


def batch_loss(preds, gts) -> float:
    return float(np.mean([loss(p, g) for p, g in zip(preds, gts)]))


def backward(trace: ForwardTrace, c, steering: SteeringSet, params: NetParams, gt) -> NetParams:
    """Gradient of ``||x* - gt||`` with respect to every network parameter.

    ReLU derivatives are taken as 0 at the kink and the norm's gradient as 0
    when the loss is exactly zero.
    """
    A = steering.A
    L = params.L
    n = trace.b.size
    if len(trace.r) != L or trace.out.shape != (n,) or params.W_re.shape[0] != n:
        raise ParameterError("trace does not match the parameters")
    g = params.zeros_like()

    resid = trace.out - np.asarray(gt, dtype=float)
    norm = np.linalg.norm(resid)
    if norm == 0.0:
        return g
    g_out = resid / norm

    # mapping layer
    g_z = g_out * (trace.z > 0)
    x_L = trace.x[L]
    g.eta[0] = g_z @ x_L
    g.eta[1] = g_z @ trace.fc_out
    g_fc = params.eta[1] * g_z
    g.fc_weight = np.outer(g_fc, x_L)
    g.fc_bias = g_fc
    g_x = [np.zeros(n) for _ in range(L + 1)]
    g_x[L] = params.eta[0] * g_z + params.fc_weight.T @ g_fc
    g_b = np.zeros(n)
    g_y = np.zeros(n)  # gradient w.r.t. the input y of the block after k

    for k in range(L - 1, -1, -1):
        # momentum layer after block k feeds block k+1
        if k + 1 < L:
            g.tau[k] = g_y @ trace.x[k + 1]
            g.mu[k] = g_y @ (trace.x[k + 1] - trace.x[k])
            g_x[k + 1] += (params.tau[k] + params.mu[k]) * g_y
            g_x[k] -= params.mu[k] * g_y
        g_r = g_x[k + 1] * (trace.r[k] > 0)
        y = trace.y[k]
        grad_term = A.T @ (A @ y - trace.b)
        g.iota[k] = g_r @ y
        g.rho[k] = -(g_r @ grad_term)
        g_b += params.rho[k] * (A @ g_r)
        g_y = params.iota[k] * g_r - params.rho[k] * (A.T @ (A @ g_r))

    # pre-imaging: b_n = Re(w_n^H C w_n) / M^2 with C Hermitian
    M = params.W_re.shape[1]
    coef = (2.0 / M**2) * g_b[:, None]
    g.W_re = coef * trace.CW.real
    g.W_im = coef * trace.CW.imag
    return g


def sample_gradient(sample: LabeledSample, steering: SteeringSet, params: NetParams):
    _, trace = forward(sample.csm, steering, params)
    return loss(trace.out, sample.gt_map), backward(trace, sample.csm, steering, params, sample.gt_map)


def init_moments(params: NetParams) -> dict:
    return {"m": params.zeros_like(), "v": params.zeros_like()}


def adam_step(params: NetParams, grads: NetParams, moments: dict, step_index: int, config: TrainConfig):
    """One Adam update with coupled L2 decay; `step_index` starts at 1.

    Returns new ``(params, moments)``; the inputs are not modified.
    """
    new_p, new_m, new_v = params.copy(), moments["m"].copy(), moments["v"].copy()
    bc1 = 1.0 - config.beta1**step_index
    bc2 = 1.0 - config.beta2**step_index
    for name, p in params.arrays().items():
        gr = getattr(grads, name)
        if not np.all(np.isfinite(gr)):
            raise NumericalError(f"non-finite gradient for {name} at step {step_index}")
        gr = gr + config.weight_decay * p
        m = config.beta1 * getattr(moments["m"], name) + (1 - config.beta1) * gr
        v = config.beta2 * getattr(moments["v"], name) + (1 - config.beta2) * gr * gr
        setattr(new_m, name, m)
        setattr(new_v, name, v)
        lr = config.learning_rate * config.lr_scale.get(name, 1.0)
        setattr(new_p, name, p - lr * (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps))
    return new_p, {"m": new_m, "v": new_v}


def evaluate_loss(samples: list[LabeledSample], steering: SteeringSet, params: NetParams) -> float:
    if not samples:
        return float("nan")
    return batch_loss([predict(s.csm, steering, params) for s in samples], [s.gt_map for s in samples])


class TrainingDiverged(NumericalError):
    def __init__(self, message: str, params: NetParams, history: list):
        super().__init__(message)
        self.params = params
        self.history = history


@dataclass
class TrainResult:
    params: NetParams
    history: list  # dicts with epoch, train_loss, val_loss, wall_time
    train_set: list
    val_set: list


def train_loop(
    dataset: list[LabeledSample],
    steering: SteeringSet,
    config: TrainConfig = TrainConfig(),
    params: NetParams | None = None,
    checkpoint_dir: str | Path | None = None,
    meta: dict | None = None,
    log=None,
) -> TrainResult:
    """Mini-batch Adam over a seeded train/validation split.

    History row 0 holds the losses of the initial parameters; rows 1..epochs
    hold the mean training loss over the epoch's batches and the validation
    loss after the epoch.
    """
    if not dataset:
        raise ParameterError("dataset is empty")
    train_set, val_set = split(dataset, config.split_fraction, config.rng_seed)
    if "rho" not in config.lr_scale:
        config = replace(config, lr_scale={**config.lr_scale, "rho": 1.0 / steering.lipschitz})
    if params is None:
        params = init_params(steering, rng_seed=config.rng_seed, L=config.L, rho_init=config.rho_init)
    moments = init_moments(params)
    rng = np.random.default_rng(config.rng_seed + 1)
    t0 = time.perf_counter()
    history = [
        {
            "epoch": 0,
            "train_loss": evaluate_loss(train_set, steering, params),
            "val_loss": evaluate_loss(val_set, steering, params),
            "wall_time": 0.0,
        }
    ]
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            acc = params.zeros_like()
            for s in batch:
                ls, gr = sample_gradient(s, steering, params)
                losses.append(ls)
                for name, v in gr.arrays().items():
                    getattr(acc, name).__iadd__(v)
            for v in acc.arrays().values():
                v /= len(batch)
            step += 1
            try:
                params_new, moments = adam_step(params, acc, moments, step, config)
            except NumericalError as exc:
                raise TrainingDiverged(str(exc), params, history) from exc
            params = params_new
        val = evaluate_loss(val_set, steering, params)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val, "wall_time": time.perf_counter() - t0}
        if not (np.isfinite(row["train_loss"]) and (np.isfinite(val) or not val_set)):
            raise TrainingDiverged(f"loss became non-finite in epoch {epoch}", params, history)
        history.append(row)
        if log is not None:
            log(row)
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            save_checkpoint(params, Path(checkpoint_dir) / "checkpoint.netp", meta)
    return TrainResult(params, history, train_set, val_set)


def write_history(history: list, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "wall_time"])
        w.writeheader()
        w.writerows(history)


def save_dataset(samples: list[LabeledSample], directory: str | Path, grid: ScanGrid, geometry: ArrayGeometry, extra: dict | None = None) -> Path:
    """Write per-sample CSM binaries plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        name = f"sample_{i:05d}.csm"
        save_csm(s.csm, d / name)
        entries.append(
            {
                "csm": name,
                "gt_indices": [int(n) for n in s.gt_indices],
                "gt_values": [float(s.gt_map[n]) for n in s.gt_indices],
                "sources": [{"position": [float(v) for v in p], "power": pw} for p, pw in s.source_truth],
                "noise_seed": s.noise_seed,
            }
        )
    manifest = {
        "grid_hash": grid_hash(grid),
        "geometry_hash": geometry_hash(geometry),
        "grid": asdict(grid),
        "n_samples": len(samples),
        "samples": entries,
    }
    manifest.update(extra or {})
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_dataset(directory: str | Path) -> tuple[list[LabeledSample], dict]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    n = manifest["grid"]["n_side"] ** 2
    out = []
    for e in manifest["samples"]:
        gt = np.zeros(n)
        for i, v in zip(e["gt_indices"], e["gt_values"]):
            gt[i] += v
        truth = [(np.asarray(s["position"]), s["power"]) for s in e["sources"]]
        out.append(LabeledSample(load_csm(d / e["csm"]), gt, truth, e["gt_indices"], e["noise_seed"]))
    return out, manifest
