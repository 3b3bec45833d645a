"""Scan grids, steering matrices and the DAMAS propagation matrix."""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, FormatError, ParameterError
from .scene import SPEED_OF_SOUND, ArrayGeometry

PROPAGATION_MAGIC = b"PRP1"


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ScanGrid:
    """N x N lattice on the plane ``z = const``; point index is ``row * N + col``
    with x varying along a row."""

    n_side: int
    extent: float
    z: float

    def __post_init__(self):
        if self.n_side < 1:
            raise ParameterError("n_side must be >= 1")
        if not (self.extent > 0 and self.z > 0):
            raise ParameterError("extent and z must be positive")

    @property
    def axis(self) -> np.ndarray:
        if self.n_side == 1:
            return np.zeros(1)
        return np.linspace(-self.extent, self.extent, self.n_side)

    @property
    def spacing(self) -> float:
        if self.n_side == 1:
            return 2.0 * self.extent
        return 2.0 * self.extent / (self.n_side - 1)

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def size(self) -> int:
        return self.n_side * self.n_side

    @property
    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.axis, self.axis)
        return np.column_stack([xx.ravel(), yy.ravel(), np.full(self.size, float(self.z))])

    def nearest_index(self, position) -> int:
        ax = self.axis
        col = int(np.argmin(np.abs(ax - position[0])))
        row = int(np.argmin(np.abs(ax - position[1])))
        return row * self.n_side + col


def make_grid(n_side: int = 41, extent: float = 1.0, z: float = 2.5) -> ScanGrid:
    return ScanGrid(n_side, extent, z)


@dataclass(frozen=True)
class SteeringSet:
    G: np.ndarray  # (N², M) complex
    W: np.ndarray  # (N², M) complex
    A: np.ndarray  # (N², N²) real
    lipschitz: float
    key: str = ""

    @property
    def M(self) -> int:
        return self.G.shape[1]

    @property
    def size(self) -> int:
        return self.G.shape[0]


def wavenumber(freq: float, c: float = SPEED_OF_SOUND) -> float:
    return 2 * np.pi * freq / c


def steering_matrices(grid: ScanGrid, geometry: ArrayGeometry, freq: float, c: float = SPEED_OF_SOUND):
    """Return ``(G, W)`` with rows indexed by grid point and columns by mic.

    ``G[n, m] = (r0 / r_mn) exp(-jk (r_mn - r0))`` and
    ``W[n, m] = (r_mn / r0) exp(-jk (r_mn - r0))``, r0 measured from the array
    centroid.
    """
    pts = grid.points
    mics = geometry.positions
    r = np.linalg.norm(pts[:, None, :] - mics[None, :, :], axis=-1)
    r0 = np.linalg.norm(pts - geometry.centroid, axis=1)
    if np.any(r == 0) or np.any(r0 == 0):
        raise DegenerateGeometryError("a grid point coincides with a microphone or the array centroid")
    phase = np.exp(-1j * wavenumber(freq, c) * (r - r0[:, None]))
    G = (r0[:, None] / r) * phase
    W = (r / r0[:, None]) * phase
    return G, W


def propagation_matrix(G: np.ndarray, W: np.ndarray, M: int | None = None) -> np.ndarray:
    """``A[n, j] = |w_n^H g_j|^2 / M^2``."""
    if G.shape != W.shape:
        raise ParameterError(f"G {G.shape} and W {W.shape} are not conformable")
    M = G.shape[1] if M is None else M
    P = W.conj() @ G.T
    return (P.real**2 + P.imag**2) / M**2


def lipschitz_constant(A: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration from the all-ones vector.

    Uses two matrix-vector products per step; ``A^T A`` is never formed.
    Emits a ConvergenceWarning and returns the last estimate when the cap is hit.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ParameterError("A is empty")
    v = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    lam = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            return lam_new
        lam = lam_new
    warnings.warn(f"power iteration did not converge in {max_iter} steps", ConvergenceWarning, stacklevel=2)
    return lam


def steering_key(grid: ScanGrid, geometry: ArrayGeometry, freq: float, c: float) -> str:
    h = hashlib.sha256()
    h.update(struct.pack("<Iddd", grid.n_side, grid.extent, grid.z, freq))
    h.update(struct.pack("<d", c))
    h.update(np.ascontiguousarray(geometry.positions, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def geometry_hash(geometry: ArrayGeometry) -> str:
    return hashlib.sha256(np.ascontiguousarray(geometry.positions, dtype="<f8").tobytes()).hexdigest()[:16]


def grid_hash(grid: ScanGrid) -> str:
    return hashlib.sha256(struct.pack("<Idd", grid.n_side, grid.extent, grid.z)).hexdigest()[:16]


def save_propagation(A: np.ndarray, lipschitz: float, path: str | Path) -> None:
    n = A.shape[0]
    with open(path, "wb") as fh:
        fh.write(PROPAGATION_MAGIC + struct.pack("<Id", n, lipschitz))
        fh.write(np.ascontiguousarray(A, dtype="<f8").tobytes())


def load_propagation(path: str | Path) -> tuple[np.ndarray, float]:
    data = Path(path).read_bytes()
    if data[:4] != PROPAGATION_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    n, lip = struct.unpack_from("<Id", data, 4)
    body = data[16:]
    if len(body) != 8 * n * n:
        raise FormatError(f"{path}: expected {8 * n * n} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).copy(), lip


def build_steering(
    grid: ScanGrid,
    geometry: ArrayGeometry,
    freq: float,
    c: float = SPEED_OF_SOUND,
    cache_dir: str | Path | None = None,
) -> SteeringSet:
    """Assemble G, W, A and the Lipschitz constant, reusing a disk cache if given."""
    G, W = steering_matrices(grid, geometry, freq, c)
    key = steering_key(grid, geometry, freq, c)
    cache = Path(cache_dir) / f"propagation_{key}.bin" if cache_dir is not None else None
    if cache is not None and cache.exists():
        A, lip = load_propagation(cache)
    else:
        A = propagation_matrix(G, W, geometry.M)
        lip = lipschitz_constant(A)
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            save_propagation(A, lip, cache)
    return SteeringSet(G, W, A, lip, key)
