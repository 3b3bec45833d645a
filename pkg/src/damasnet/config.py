"""Run configuration: nested dataclasses loaded from JSON with strict keys."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ParameterError
from .scene import ArrayGeometry, load_geometry, make_spiral_array
from .steering import ScanGrid
from .train import SceneTemplate, TrainConfig


@dataclass(frozen=True)
class GeometryConfig:
    m: int = 56
    r_min: float = 0.02
    r_max: float = 0.5
    turns: float = 3.0
    file: str | None = None

    def build(self) -> ArrayGeometry:
        if self.file:
            return load_geometry(self.file)
        return make_spiral_array(self.m, self.r_min, self.r_max, self.turns)


@dataclass(frozen=True)
class GridConfig:
    n_side: int = 21
    extent: float = 1.0
    z: float = 2.5

    def build(self) -> ScanGrid:
        return ScanGrid(self.n_side, self.extent, self.z)


@dataclass(frozen=True)
class SimulateConfig:
    # x, y of each source on the scan plane
    sources: tuple = ((0.0, 0.0),)
    snap_to_grid: bool = True


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 200
    n_sources: int = 1


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 1e-3
    max_iter: int = 1000
    sweeps: int = 1000
    tol: float = 1e-4
    momentum: str = "shifted"


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    scene: SceneTemplate = field(default_factory=lambda: SceneTemplate(on_grid=True))
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out: str = "out"
    cache_dir: str | None = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def hash(self) -> str:
        """Digest of everything that affects results; output paths excluded."""
        d = self.to_dict()
        d.pop("out")
        d.pop("cache_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and obj == float("inf"):
        return "inf"
    return obj


def _build(cls, data: Any, path: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ParameterError(f"config section {path or '<root>'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ParameterError(f"unknown config keys at {path or '<root>'}: {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        sub = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(current):
            merged = {**_jsonable(asdict(current)), **value} if isinstance(value, dict) else value
            kwargs[name] = _build(type(current), merged, sub)
        elif name == "snr_db" and value == "inf":
            kwargs[name] = float("inf")
        elif name == "sources":
            kwargs[name] = tuple(tuple(float(v) for v in s) for s in value)
        else:
            kwargs[name] = value
    try:
        return dataclasses.replace(defaults, **kwargs)
    except TypeError as exc:
        raise ParameterError(f"invalid config at {path or '<root>'}: {exc}") from None


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file, then `overrides` (dotted keys allowed)."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
        data.pop("config_hash", None)
    for key, value in (overrides or {}).items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return _build(RunConfig, data, "")


def write_config(cfg: RunConfig, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / "config.json"
    path.write_text(json.dumps({**cfg.to_dict(), "config_hash": cfg.hash()}, indent=2, sort_keys=True))
    return path

