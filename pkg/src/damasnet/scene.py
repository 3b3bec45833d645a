"""Array geometries, point-source scenes and time-domain signal synthesis."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, FormatError, ParameterError

SPEED_OF_SOUND = 343.0
RECORD_MAGIC = b"BFL1"


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone coordinates in meters, shape (M, 3)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, copy=True)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ParameterError(f"positions must have shape (M, 3) with M >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ParameterError("microphone positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)


@dataclass(frozen=True)
class SourceSpec:
    position: tuple[float, float, float]
    amplitude: float = 1.0
    frequency: float = 2000.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ParameterError("source frequency must be positive")
        if self.amplitude < 0:
            raise ParameterError("source amplitude must be non-negative")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class Scene:
    sources: tuple[SourceSpec, ...] = ()
    sample_rate: float = 51200.0
    duration: float = 0.02
    c: float = SPEED_OF_SOUND

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.duration <= 0 or self.c <= 0:
            raise ParameterError("duration and sound speed must be positive")
        fmax = max((s.frequency for s in self.sources), default=0.0)
        if not self.sample_rate > 2 * fmax:
            raise ParameterError(f"sample rate {self.sample_rate} does not exceed twice {fmax} Hz")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass(frozen=True)
class MultichannelRecord:
    samples: np.ndarray  # (M, T)
    sample_rate: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ParameterError("samples must be an (M, T) matrix")
        if not np.all(np.isfinite(s)):
            raise ParameterError("record contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def M(self) -> int:
        return self.samples.shape[0]

    @property
    def T(self) -> int:
        return self.samples.shape[1]


def make_spiral_array(m: int = 56, r_min: float = 0.02, r_max: float = 0.5, turns: float = 3.0) -> ArrayGeometry:
    """Archimedean spiral of `m` microphones in the z=0 plane.

    Mic i sits at radius ``r_min + (r_max - r_min) * i / (m - 1)`` and angle
    ``2 * pi * turns * i / (m - 1)``. A single mic is placed at (r_min, 0, 0).
    """
    if m < 1:
        raise ParameterError("need at least one microphone")
    if not 0 < r_min < r_max:
        raise ParameterError("radii must satisfy 0 < r_min < r_max")
    frac = np.arange(m) / (m - 1) if m > 1 else np.zeros(1)
    radius = r_min + (r_max - r_min) * frac
    angle = 2 * np.pi * turns * frac
    pos = np.column_stack([radius * np.cos(angle), radius * np.sin(angle), np.zeros(m)])
    return ArrayGeometry(pos)


def synthesize(scene: Scene, geometry: ArrayGeometry) -> MultichannelRecord:
    """Closed-form pure-tone pressure at every microphone.

    Each source contributes ``(a / r) * sin(2 pi f (t - r / c) + phase)`` with
    `r` the source-to-mic distance; delays live in the phase, so no
    fractional-delay interpolation is involved.
    """
    T = scene.n_samples
    t = np.arange(T) / scene.sample_rate
    out = np.zeros((geometry.M, T))
    mics = geometry.positions
    for src in scene.sources:
        pos = np.asarray(src.position)
        if pos[2] <= mics[:, 2].max():
            raise DegenerateGeometryError(f"source {src.position} is not in front of the array plane")
        r = np.linalg.norm(mics - pos, axis=1)
        if np.any(r == 0):
            raise DegenerateGeometryError(f"source {src.position} coincides with a microphone")
        arg = 2 * np.pi * src.frequency * (t[None, :] - r[:, None] / scene.c) + src.phase
        out += (src.amplitude / r)[:, None] * np.sin(arg)
    return MultichannelRecord(out, scene.sample_rate)


def add_noise_snr(record: MultichannelRecord, snr_db: float, rng_seed: int) -> MultichannelRecord:
    """Add white Gaussian noise at `snr_db` relative to the mean signal power.

    ``snr_db = inf`` disables noise and returns the record unchanged.
    """
    if np.isposinf(snr_db):
        return record
    p_signal = float(np.mean(record.samples**2))
    if p_signal == 0:
        raise ParameterError("cannot define an SNR for an all-zero record")
    sigma = np.sqrt(p_signal / 10 ** (snr_db / 10))
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, sigma, size=record.samples.shape)
    return MultichannelRecord(record.samples + noise, record.sample_rate)


def load_geometry(path: str | Path) -> ArrayGeometry:
    """Read an ``x y z`` per line geometry file; ``#`` starts a comment."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no microphone coordinates found")
    return ArrayGeometry(np.array(rows))


def save_geometry(geometry: ArrayGeometry, path: str | Path) -> None:
    lines = ["# x y z [m]"] + [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in geometry.positions]
    Path(path).write_text("\n".join(lines) + "\n")


def save_record(record: MultichannelRecord, path: str | Path) -> None:
    header = RECORD_MAGIC + struct.pack("<IId", record.M, record.T, record.sample_rate)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(record.samples, dtype="<f8").tobytes())


def load_record(path: str | Path) -> MultichannelRecord:
    data = Path(path).read_bytes()
    if data[:4] != RECORD_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    M, T, fs = struct.unpack_from("<IId", data, 4)
    body = data[20:]
    if len(body) != 8 * M * T:
        raise FormatError(f"{path}: expected {8 * M * T} payload bytes, found {len(body)}")
    samples = np.frombuffer(body, dtype="<f8").reshape(M, T).astype(float)
    return MultichannelRecord(samples, fs)
