"""Model-based map reconstruction: DAS, DAMAS (Gauss-Seidel) and DAMAS-FISTA."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParameterError
from .spectra import Csm
from .steering import ScanGrid, SteeringSet

IMAG_TOL = 1e-10


@dataclass(frozen=True)
class PowerMap:
    values: np.ndarray
    grid: ScanGrid | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.grid is not None and v.shape != (self.grid.size,):
            raise ParameterError(f"map has {v.size} values, grid has {self.grid.size} points")
        object.__setattr__(self, "values", v)

    def image(self) -> np.ndarray:
        n = int(round(np.sqrt(self.values.size)))
        return self.values.reshape(n, n)


@dataclass(frozen=True)
class FistaState:
    x_prev: np.ndarray
    x_curr: np.ndarray
    y: np.ndarray
    t: float = 1.0
    iteration: int = 0

    @classmethod
    def zeros(cls, n: int) -> FistaState:
        z = np.zeros(n)
        return cls(z, z, z, 1.0, 0)


@dataclass(frozen=True)
class SolveReport:
    map: PowerMap
    iterations: int
    converged: bool
    wall_time: float


def _as_vector(b) -> tuple[np.ndarray, ScanGrid | None]:
    if isinstance(b, PowerMap):
        return b.values, b.grid
    return np.asarray(b, dtype=float), None


def das(c: Csm, steering: SteeringSet, grid: ScanGrid | None = None) -> PowerMap:
    """Conventional beamforming map ``b_n = Re(w_n^H C w_n) / M^2``."""
    C = c.matrix if isinstance(c, Csm) else np.asarray(c)
    W = steering.W
    M = W.shape[1]
    if C.shape != (M, M):
        raise ParameterError(f"CSM shape {C.shape} does not match {M} steering columns")
    q = np.sum(W.conj() * (W @ C.T), axis=1)
    scale = np.max(np.abs(q), initial=0.0)
    if scale > 0 and np.max(np.abs(q.imag)) > IMAG_TOL * scale:
        raise NumericalError("DAS quadratic form has a non-negligible imaginary part; CSM is not Hermitian")
    return PowerMap(q.real / M**2, grid)


def objective(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    r = A @ x - b
    return 0.5 * float(r @ r)


def gauss_seidel_nnls(A: np.ndarray, b: np.ndarray, sweeps: int = 100, tol: float = 1e-4):
    """Projected symmetric Gauss-Seidel for ``A x = b, x >= 0``.

    Each sweep visits indices forward then backward. Returns
    ``(x, sweeps_done, converged)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    diag = np.diag(A).copy()
    if np.any(diag <= 0):
        raise ParameterError("Gauss-Seidel needs a positive diagonal")
    x = np.zeros(n)
    order = list(range(n)) + list(range(n - 1, -1, -1))
    for sweep in range(1, sweeps + 1):
        x_old = x.copy()
        for i in order:
            x[i] = max(0.0, x[i] + (b[i] - A[i] @ x) / diag[i])
        dx = np.linalg.norm(x - x_old)
        nx = np.linalg.norm(x)
        if dx == 0.0 or dx < tol * nx:
            return x, sweep, True
    return x, sweeps, False


def damas_gauss_seidel(b, steering: SteeringSet, sweeps: int = 100, tol: float = 1e-4) -> SolveReport:
    vec, grid = _as_vector(b)
    t0 = time.perf_counter()
    x, done, ok = gauss_seidel_nnls(steering.A, vec, sweeps, tol)
    return SolveReport(PowerMap(x, grid), done, ok, time.perf_counter() - t0)


def next_t(t: float) -> float:
    return (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0


def momentum_coefficient(t: float, t_next: float, rule: str = "shifted") -> float:
    """Extrapolation weight on ``x_k - x_{k-1}``.

    ``"shifted"`` uses ``(t_k + 1) / t_{k+1}``; ``"standard"`` uses the
    Beck-Teboulle ``(t_k - 1) / t_{k+1}``.
    """
    if rule == "shifted":
        return (t + 1.0) / t_next
    if rule == "standard":
        return (t - 1.0) / t_next
    raise ParameterError(f"unknown momentum rule {rule!r}")


def momentum_schedule(n: int, rule: str = "shifted") -> np.ndarray:
    """The first `n` extrapolation weights starting from ``t = 1``."""
    out = np.empty(n)
    t = 1.0
    for k in range(n):
        tn = next_t(t)
        out[k] = momentum_coefficient(t, tn, rule)
        t = tn
    return out


def fista_step(state: FistaState, A: np.ndarray, b: np.ndarray, lipschitz: float, rule: str = "shifted") -> FistaState:
    y = state.y
    x = np.maximum(y - (A.T @ (A @ y - b)) / lipschitz, 0.0)
    t_next = next_t(state.t)
    y_next = x + momentum_coefficient(state.t, t_next, rule) * (x - state.x_curr)
    return FistaState(state.x_curr, x, y_next, t_next, state.iteration + 1)


def fista_nnls(
    A: np.ndarray,
    b: np.ndarray,
    lipschitz: float,
    eps: float = 1e-3,
    max_iter: int = 1000,
    rule: str = "shifted",
):
    """Accelerated projected gradient for ``min 0.5 ||Ax - b||^2, x >= 0``.

    Stops once ``||x_k - x_{k-1}|| < eps ||x_{k-1}||`` (or both are zero).
    Returns ``(x, iterations, converged)``.
    """
    if not lipschitz > 0:
        raise ParameterError("Lipschitz constant must be positive")
    if not eps > 0:
        raise ParameterError("eps must be positive")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    state = FistaState.zeros(b.size)
    for _ in range(max_iter):
        # overflow is reported below as a NumericalError
        with np.errstate(over="ignore", invalid="ignore"):
            state = fista_step(state, A, b, lipschitz, rule)
        if not np.all(np.isfinite(state.y)):
            raise NumericalError(f"non-finite iterate at FISTA iteration {state.iteration}")
        dx = np.linalg.norm(state.x_curr - state.x_prev)
        nprev = np.linalg.norm(state.x_prev)
        if dx == 0.0 or dx < eps * nprev:
            return state.x_curr, state.iteration, True
    return state.x_curr, state.iteration, False


def damas_fista(
    b,
    steering: SteeringSet,
    eps: float = 1e-3,
    max_iter: int = 1000,
    rule: str = "shifted",
) -> SolveReport:
    vec, grid = _as_vector(b)
    t0 = time.perf_counter()
    x, its, ok = fista_nnls(steering.A, vec, steering.lipschitz, eps, max_iter, rule)
    return SolveReport(PowerMap(x, grid), its, ok, time.perf_counter() - t0)


def with_grid(m: PowerMap, grid: ScanGrid) -> PowerMap:
    return replace(m, grid=grid)


def export_csv(m: PowerMap, grid: ScanGrid, path: str | Path) -> None:
    pts = grid.points
    lines = ["x,y,power"] + [f"{x:.9g},{y:.9g},{p:.12g}" for (x, y, _), p in zip(pts, m.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def to_pixels(values: np.ndarray) -> np.ndarray:
    """Min-max normalize to uint8; a constant map becomes all 0 (or 255 if nonzero)."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 255 if hi != 0 else 0, dtype=np.uint8)
    return np.round(255 * (v - lo) / (hi - lo)).astype(np.uint8)


def export_pgm(m: PowerMap, path: str | Path) -> None:
    img = to_pixels(m.image())
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ParameterError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
