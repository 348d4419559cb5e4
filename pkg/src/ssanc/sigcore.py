"""Signal containers, convolution operators and dense linear-algebra helpers.

Time-alignment convention
-------------------------
A :class:`Fir` with ``anticausal_len = L_a`` stores taps for the lags
``-L_a, ..., L_h - 1`` (``taps[m]`` is the tap at lag ``m - L_a``). Filtering
a signal ``x`` gives ``y(n) = sum_k h_k x(n - k)``. :func:`fir_convolve`
returns the full linear convolution, so output index ``m`` holds ``y`` at
time ``n = m - L_a``. A causal FIR (``L_a = 0``) keeps the usual alignment.
Every module in the package uses this convention.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import InsufficientDataError, NotPositiveDefiniteError

__all__ = [
    "Signal",
    "Component",
    "MultichannelSignal",
    "Fir",
    "OperatorKind",
    "BlockConvOperator",
    "Covariance",
    "SelectionVector",
    "SpdSolver",
    "fir_convolve",
    "build_secondary_operator",
    "build_constraint_operator",
    "estimate_covariance",
    "selection_vector",
    "lambda_max",
    "solve_spd",
]


def _frozen_array(values, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen_array(self.samples, ndim=1))
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("signal contains NaN or Inf")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))


class Component(str, enum.Enum):
    TOTAL = "total"
    SPEECH = "speech"
    NOISE = "noise"


@dataclass(frozen=True)
class MultichannelSignal:
    """Equal-length channels stored as a ``(channels, samples)`` array."""

    data: np.ndarray
    sample_rate_hz: int
    component: Component = Component.TOTAL

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, ndim=2))
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        object.__setattr__(self, "component", Component(self.component))
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("signal contains NaN or Inf")

    @classmethod
    def from_signals(cls, signals: Sequence[Signal], component=Component.TOTAL):
        if not signals:
            raise ValueError("need at least one channel")
        rates = {s.sample_rate_hz for s in signals}
        lengths = {len(s) for s in signals}
        if len(rates) != 1 or len(lengths) != 1:
            raise ValueError("channels must share length and sample rate")
        return cls(np.stack([s.samples for s in signals]), rates.pop(), component)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> list[Signal]:
        return [Signal(row, self.sample_rate_hz) for row in self.data]

    def __getitem__(self, k: int) -> Signal:
        return Signal(self.data[k], self.sample_rate_hz)


@dataclass(frozen=True)
class Fir:
    taps: np.ndarray
    anticausal_len: int = 0

    def __post_init__(self):
        taps = _frozen_array(self.taps, ndim=1)
        if taps.size == 0:
            raise ValueError("FIR must have at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("FIR taps contain NaN or Inf")
        la = int(self.anticausal_len)
        if la < 0 or la >= taps.size:
            raise ValueError("anticausal_len must satisfy 0 <= L_a < len(taps)")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "anticausal_len", la)

    def __len__(self) -> int:
        return self.taps.shape[0]

    @property
    def causal_len(self) -> int:
        """``L_h``: number of taps at lags ``>= 0``."""
        return len(self) - self.anticausal_len

    @property
    def is_causal(self) -> bool:
        return self.anticausal_len == 0

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.anticausal_len, self.causal_len)

    def tap(self, lag: int) -> float:
        idx = lag + self.anticausal_len
        if 0 <= idx < len(self):
            return float(self.taps[idx])
        return 0.0

    def scaled(self, c: float) -> "Fir":
        return Fir(self.taps * c, self.anticausal_len)


def fir_convolve(x: Signal, f: Fir) -> Signal:
    """Full linear convolution; output index ``m`` is time ``m - f.anticausal_len``."""
    if len(x) == 0:
        raise ValueError("empty signal")
    return Signal(np.convolve(x.samples, f.taps), x.sample_rate_hz)


class OperatorKind(str, enum.Enum):
    SECONDARY_PATH = "G"
    CONSTRAINT = "H"


@dataclass(frozen=True)
class BlockConvOperator:
    """Structured block convolution matrix applied without materializing it.

    ``SECONDARY_PATH`` is block diagonal (one Toeplitz block per channel, all
    built from the same FIR); ``CONSTRAINT`` places one Toeplitz block per
    channel side by side. ``block_in`` is the per-block column count.
    """

    kind: OperatorKind
    blocks: tuple[Fir, ...]
    block_in: int

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def block_out(self) -> int:
        return len(self.blocks[0]) + self.block_in - 1

    @property
    def shape(self) -> tuple[int, int]:
        C = self.n_blocks
        if self.kind is OperatorKind.SECONDARY_PATH:
            return C * self.block_out, C * self.block_in
        return self.block_out, C * self.block_in

    @property
    def conv_len(self) -> int:
        """``L`` of the underlying convolution (rows of one block)."""
        return self.block_out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).reshape(self.n_blocks, self.block_in)
        parts = [np.convolve(f.taps, vk) for f, vk in zip(self.blocks, v)]
        if self.kind is OperatorKind.SECONDARY_PATH:
            return np.concatenate(parts)
        return np.sum(parts, axis=0)

    def rmatvec(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.kind is OperatorKind.SECONDARY_PATH:
            zs = z.reshape(self.n_blocks, self.block_out)
        else:
            zs = [z] * self.n_blocks
        return np.concatenate([np.correlate(zk, f.taps, mode="valid") for f, zk in zip(self.blocks, zs)])

    def block_dense(self, k: int) -> np.ndarray:
        return scipy.linalg.convolution_matrix(self.blocks[k].taps, self.block_in, mode="full")

    def densify(self) -> np.ndarray:
        mats = [self.block_dense(k) for k in range(self.n_blocks)]
        if self.kind is OperatorKind.SECONDARY_PATH:
            return scipy.linalg.block_diag(*mats)
        return np.hstack(mats)

    def __matmul__(self, v):
        return self.matvec(v)


def build_secondary_operator(g: Fir, L_w: int, K: int) -> BlockConvOperator:
    """Block-diagonal convolution matrix of the secondary path, one block per input channel."""
    if not g.is_causal:
        raise ValueError("secondary path must be causal")
    if L_w < 1 or K < 0:
        raise ValueError("need L_w >= 1 and K >= 0")
    return BlockConvOperator(OperatorKind.SECONDARY_PATH, (g,) * (K + 1), int(L_w))


def build_constraint_operator(reirs: Sequence[Fir], L: int) -> BlockConvOperator:
    """Horizontally stacked convolution matrices of the relative impulse responses."""
    reirs = tuple(reirs)
    if not reirs:
        raise ValueError("need at least one ReIR")
    shapes = {(h.anticausal_len, h.causal_len) for h in reirs}
    if len(shapes) != 1:
        raise ValueError(f"ReIRs must share (L_a, L_h); got {sorted(shapes)}")
    if L < 1:
        raise ValueError("L must be positive")
    return BlockConvOperator(OperatorKind.CONSTRAINT, reirs, int(L))


@dataclass(frozen=True)
class SelectionVector:
    q: np.ndarray
    target: np.ndarray

    @property
    def delay_index(self) -> int:
        return int(np.flatnonzero(self.target)[0])


def selection_vector(K: int, L: int, L_a: int = 0, L_h: int = 1, delta: int = 0) -> SelectionVector:
    """Leakage-channel selector ``q`` and delayed unit target ``delta_Delta``."""
    q = np.zeros((K + 1) * L)
    q[K * L] = 1.0
    n_rows = L_a + L_h + L - 1
    if delta < 0 or L_a + delta >= n_rows:
        raise ValueError("delay outside the constraint support")
    target = np.zeros(n_rows)
    target[L_a + delta] = 1.0
    q.setflags(write=False)
    target.setflags(write=False)
    return SelectionVector(q, target)


@dataclass(frozen=True)
class Covariance:
    """Symmetric PSD matrix of the stacked delay-line input."""

    matrix: np.ndarray
    frame_count: int = 0
    n_channels: int = 1
    L: int = field(default=0)

    def __post_init__(self):
        m = _frozen_array(self.matrix, ndim=2)
        if m.shape[0] != m.shape[1]:
            raise ValueError("covariance must be square")
        scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
        if np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "matrix", m)
        if self.L == 0:
            object.__setattr__(self, "L", m.shape[0] // max(self.n_channels, 1))
        if self.n_channels * self.L != m.shape[0]:
            raise ValueError("matrix size must equal n_channels * L")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def min_eig_ratio(self) -> float:
        """Smallest eigenvalue over largest (negative values flag PSD violations)."""
        ev = np.linalg.eigvalsh(self.matrix)
        top = ev[-1]
        return float(ev[0] / top) if top > 0 else 0.0


def estimate_covariance(x: MultichannelSignal | np.ndarray, L: int) -> Covariance:
    """Biased stride-1 sample average of ``x~(n) x~(n)^T`` over every full frame.

    ``x~(n)`` stacks ``[x_k(n), ..., x_k(n-L+1)]`` for each channel in order.
    """
    data = x.data if isinstance(x, MultichannelSignal) else np.atleast_2d(np.asarray(x, float))
    C, N = data.shape
    if N < 2 * L:
        raise InsufficientDataError(f"insufficient data: {N} samples for L={L} (need >= {2 * L})")
    T = N - L + 1
    acc = _kernels.lagged_covariance(data, L) / T
    acc = 0.5 * (acc + acc.T)
    return Covariance(acc, frame_count=T, n_channels=C, L=L)


def _check_symmetric(m: np.ndarray, rtol: float) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > rtol * scale:
        raise ValueError("matrix is not symmetric")


def lambda_max(m: np.ndarray, max_iter: int = 500, tol: float = 1e-8) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Starts from the normalized all-ones vector and stops once the Rayleigh
    quotient changes by less than ``tol`` relative.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_symmetric(m, 1e-9)
    n = m.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    rq = 0.0
    for _ in range(max_iter):
        w = m @ v
        new_rq = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new_rq - rq) <= tol * abs(new_rq):
            return new_rq
        rq = new_rq
    return rq


class SpdSolver:
    """Cholesky factorization of a symmetric positive definite matrix."""

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=np.float64)
        _check_symmetric(a, 1e-9)
        try:
            self._factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("matrix not positive definite; increase regularization") from exc
        self.n = a.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, np.asarray(b, dtype=np.float64))


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return SpdSolver(a).solve(b)
