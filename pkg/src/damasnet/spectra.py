"""Framed single-bin spectra and the cross-spectral matrix."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .scene import MultichannelRecord

CSM_MAGIC = b"CSM1"


@dataclass(frozen=True)
class FrameSpectra:
    coefficients: np.ndarray  # (J, M) complex
    bin_frequency: float
    bin_index: int

    @property
    def J(self) -> int:
        return self.coefficients.shape[0]


@dataclass(frozen=True)
class Csm:
    matrix: np.ndarray  # (M, M) complex Hermitian
    frequency: float

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    def scaled(self, s: float) -> Csm:
        return Csm(self.matrix * s, self.frequency)


def frame_and_transform(record: MultichannelRecord, frame_length: int = 256, scan_freq: float = 2000.0) -> FrameSpectra:
    """Single-bin DFT of non-overlapping rectangular frames.

    The bin nearest `scan_freq` is evaluated directly per frame and channel
    and scaled by ``2 / frame_length``, so a sinusoid of amplitude A sitting
    exactly on the bin has coefficient magnitude A. Trailing samples that do
    not fill a frame are dropped.
    """
    if frame_length < 2:
        raise ParameterError("frame_length must be at least 2")
    if frame_length > record.T:
        raise ParameterError(f"frame_length {frame_length} exceeds record length {record.T}")
    fs = record.sample_rate
    if not 0 <= scan_freq < fs / 2:
        raise ParameterError(f"scan frequency {scan_freq} Hz is not below Nyquist ({fs / 2} Hz)")
    J = record.T // frame_length
    k = int(round(scan_freq * frame_length / fs))
    frames = record.samples[:, : J * frame_length].reshape(record.M, J, frame_length)
    kernel = np.exp(-2j * np.pi * k * np.arange(frame_length) / frame_length)
    coeffs = (2.0 / frame_length) * (frames @ kernel)  # (M, J)
    return FrameSpectra(np.ascontiguousarray(coeffs.T), k * fs / frame_length, k)


def csm(spectra: FrameSpectra) -> Csm:
    """Frame-averaged outer product ``(1/J) sum_j p_j p_j^H``."""
    p = spectra.coefficients
    if p.shape[0] < 1:
        raise ParameterError("need at least one frame")
    C = (p.T @ p.conj()) / p.shape[0]
    # Hermitian by construction: keep the upper triangle, mirror the conjugate.
    upper = np.triu(C, 1)
    C = upper + upper.conj().T + np.diag(np.real(np.diag(C)))
    return Csm(C, spectra.bin_frequency)


def csm_from_record(record: MultichannelRecord, frame_length: int = 256, scan_freq: float = 2000.0) -> Csm:
    return csm(frame_and_transform(record, frame_length, scan_freq))


def save_csm(c: Csm, path: str | Path) -> None:
    m = c.M
    buf = np.empty((m, m, 2), dtype="<f8")
    buf[..., 0] = c.matrix.real
    buf[..., 1] = c.matrix.imag
    with open(path, "wb") as fh:
        fh.write(CSM_MAGIC + struct.pack("<Id", m, c.frequency))
        fh.write(buf.tobytes())


def load_csm(path: str | Path) -> Csm:
    data = Path(path).read_bytes()
    if data[:4] != CSM_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    m, freq = struct.unpack_from("<Id", data, 4)
    body = data[16:]
    if len(body) != 16 * m * m:
        raise FormatError(f"{path}: expected {16 * m * m} payload bytes, found {len(body)}")
    buf = np.frombuffer(body, dtype="<f8").reshape(m, m, 2)
    return Csm(buf[..., 0] + 1j * buf[..., 1], freq)
