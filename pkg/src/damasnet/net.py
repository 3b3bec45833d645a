"""Unrolled DAMAS-FISTA network: forward pass and parameter container."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .solvers import PowerMap
from .spectra import Csm
from .steering import ScanGrid, SteeringSet

CHECKPOINT_MAGIC = b"NETP"


@dataclass
class NetParams:
    """Every learnable tensor of the network.

    The complex steering weights are kept as two real matrices. `eta` holds
    the residual weights ``(eta1, eta2)``.
    """

    W_re: np.ndarray
    W_im: np.ndarray
    iota: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    fc_weight: np.ndarray
    fc_bias: np.ndarray

    @property
    def L(self) -> int:
        return self.iota.size

    @property
    def eta1(self) -> float:
        return float(self.eta[0])

    @property
    def eta2(self) -> float:
        return float(self.eta[1])

    @property
    def W(self) -> np.ndarray:
        return self.W_re + 1j * self.W_im

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> NetParams:
        return NetParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> NetParams:
        return NetParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def count(self) -> int:
        return sum(v.size for v in self.arrays().values())

    def validate(self) -> None:
        n, m = self.W_re.shape
        if self.W_im.shape != (n, m):
            raise ParameterError("W_re and W_im shapes differ")
        if self.L < 1 or any(getattr(self, k).shape != (self.L,) for k in ("rho", "tau", "mu")):
            raise ParameterError("per-layer scalars must all have length L >= 1")
        if self.eta.shape != (2,) or self.fc_weight.shape != (n, n) or self.fc_bias.shape != (n,):
            raise ParameterError("mapping-layer parameter shapes do not match the grid")
        for k, v in self.arrays().items():
            if not np.all(np.isfinite(v)):
                raise ParameterError(f"parameter {k} has non-finite entries")


@dataclass
class ForwardTrace:
    b: np.ndarray
    y: list  # y[k] is the input to block k (y[0] = 0)
    r: list
    x: list  # x[0] = 0, x[k] output of block k
    fc_out: np.ndarray
    z: np.ndarray  # pre-activation of the mapping layer
    out: np.ndarray
    CW: np.ndarray  # C applied to each steering row, kept for the W gradient


def init_params(
    steering: SteeringSet,
    grid: ScanGrid | None = None,
    rng_seed: int = 0,
    L: int = 5,
    rho_init: str = "inverse",
) -> NetParams:
    """Warm start: the forward pass begins as DAS followed by L FISTA-like blocks.

    ``rho_init="inverse"`` sets every step weight to ``1 / lipschitz``; the
    alternative ``"lipschitz"`` uses the Lipschitz constant itself.
    """
    if L < 1:
        raise ParameterError("L must be >= 1")
    n = steering.size
    if grid is not None and grid.size != n:
        raise ParameterError("grid does not match the steering set")
    if rho_init == "inverse":
        rho = 1.0 / steering.lipschitz
    elif rho_init == "lipschitz":
        rho = steering.lipschitz
    else:
        raise ParameterError(f"unknown rho_init {rho_init!r}")
    rng = np.random.default_rng(rng_seed)
    bound = np.sqrt(6.0 / (n + n))
    return NetParams(
        W_re=steering.W.real.copy(),
        W_im=steering.W.imag.copy(),
        iota=np.ones(L),
        rho=np.full(L, rho),
        tau=np.ones(L),
        mu=np.ones(L),
        eta=np.ones(2),
        fc_weight=rng.uniform(-bound, bound, size=(n, n)),
        fc_bias=np.zeros(n),
    )


def _csm_matrix(c) -> np.ndarray:
    return c.matrix if isinstance(c, Csm) else np.asarray(c)


def pre_imaging_layer(c, params: NetParams, return_cw: bool = False):
    C = _csm_matrix(c)
    W = params.W
    M = W.shape[1]
    if C.shape != (M, M):
        raise ParameterError(f"CSM shape {C.shape} does not match {M} steering columns")
    CW = W @ C.T  # row n holds C w_n
    b = np.sum(W.conj() * CW, axis=1).real / M**2
    return (b, CW) if return_cw else b


def reconstruction_layer(y, b, A, k: int, params: NetParams) -> np.ndarray:
    return params.iota[k] * y - params.rho[k] * (A.T @ (A @ y - b))


def nonlinear_layer(r) -> np.ndarray:
    return np.maximum(r, 0.0)


def momentum_layer(x_curr, x_prev, k: int, params: NetParams) -> np.ndarray:
    return params.tau[k] * x_curr + params.mu[k] * (x_curr - x_prev)


def mapping_layer(x_L, params: NetParams, return_parts: bool = False):
    fc_out = params.fc_weight @ x_L + params.fc_bias
    z = params.eta[0] * x_L + params.eta[1] * fc_out
    out = np.maximum(z, 0.0)
    return (out, fc_out, z) if return_parts else out


def forward(c, steering: SteeringSet, params: NetParams, grid: ScanGrid | None = None):
    """Run pre-imaging, L iteration blocks and the mapping layer.

    Returns ``(PowerMap, ForwardTrace)``. Block indices are zero-based
    internally; ``x[0] = y[0] = 0``.
    """
    A = steering.A
    b, CW = pre_imaging_layer(c, params, return_cw=True)
    if A.shape[0] != b.size:
        raise ParameterError(f"steering set has {A.shape[0]} points, parameters have {b.size}")
    zero = np.zeros_like(b)
    xs, ys, rs = [zero], [zero], []
    for k in range(params.L):
        try:
            r = reconstruction_layer(ys[k], b, A, k, params)
        except ValueError as exc:
            raise ParameterError(f"block {k + 1}: {exc}") from exc
        rs.append(r)
        xs.append(nonlinear_layer(r))
        if k + 1 < params.L:
            ys.append(momentum_layer(xs[k + 1], xs[k], k, params))
    out, fc_out, z = mapping_layer(xs[-1], params, return_parts=True)
    trace = ForwardTrace(b=b, y=ys, r=rs, x=xs, fc_out=fc_out, z=z, out=out, CW=CW)
    return PowerMap(out, grid), trace


def predict(c, steering: SteeringSet, params: NetParams) -> np.ndarray:
    """Forward pass without keeping the activation trace."""
    A = steering.A
    b = pre_imaging_layer(c, params)
    x_prev = np.zeros_like(b)
    y = x_prev
    for k in range(params.L):
        x = np.maximum(params.iota[k] * y - params.rho[k] * (A.T @ (A @ y - b)), 0.0)
        if k + 1 < params.L:
            y = params.tau[k] * x + params.mu[k] * (x - x_prev)
        x_prev = x
    return mapping_layer(x_prev, params)


def with_solver_momentum(params: NetParams, coefficients) -> NetParams:
    """Copy of `params` with residual branch off and momentum set to fixed weights."""
    p = params.copy()
    p.mu = np.asarray(coefficients, dtype=float)[: p.L].copy()
    p.eta = np.array([1.0, 0.0])
    return p


def save_checkpoint(params: NetParams, path: str | Path, meta: dict | None = None) -> None:
    """Write the binary checkpoint and a ``.json`` sidecar with `meta`."""
    n, m = params.W_re.shape
    L = params.L
    layers = np.column_stack([params.iota, params.rho, params.tau, params.mu]).ravel()
    parts = [params.W_re.ravel(), params.W_im.ravel(), layers, params.eta, params.fc_weight.ravel(), params.fc_bias]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<III", n, m, L))
        fh.write(np.concatenate(parts).astype("<f8").tobytes())
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta or {}, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path, expect: dict | None = None) -> NetParams:
    """Read a checkpoint; keys in `expect` must match the sidecar exactly."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    n, m, L = struct.unpack_from("<III", data, 4)
    sizes = [n * m, n * m, 4 * L, 2, n * n, n]
    vals = np.frombuffer(data[16:], dtype="<f8")
    if vals.size != sum(sizes):
        raise FormatError(f"{path}: expected {sum(sizes)} values, found {vals.size}")
    chunks = np.split(vals.astype(float), np.cumsum(sizes)[:-1])
    layers = chunks[2].reshape(L, 4)
    if expect:
        side = path.with_suffix(path.suffix + ".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        for key, want in expect.items():
            if meta.get(key) != want:
                raise FormatError(f"{path}: sidecar {key}={meta.get(key)!r} does not match {want!r}")
    params = NetParams(
        W_re=chunks[0].reshape(n, m),
        W_im=chunks[1].reshape(n, m),
        iota=layers[:, 0].copy(),
        rho=layers[:, 1].copy(),
        tau=layers[:, 2].copy(),
        mu=layers[:, 3].copy(),
        eta=chunks[3].copy(),
        fc_weight=chunks[4].reshape(n, n),
        fc_bias=chunks[5].copy(),
    )
    params.validate()
    return params
