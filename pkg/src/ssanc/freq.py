"""Per-bin frequency-domain designs and the model they need.

Conventions: ``x(omega)`` is the STFT coefficient of the stacked input and
the error is ``E = (q^H + G w^H) x``. A time-domain filter channel ``w_k``
therefore corresponds to ``W_k(omega) = conj(DFT(w_k))``
(see :func:`filter_response`).

Bins where ``|G|`` falls below ``1e-6 * max |G|`` are flagged in
:attr:`FreqModel.valid` and get zero weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import NumericalError
from .sigcore import Fir

__all__ = [
    "FreqModel",
    "estimate_freq_model",
    "design_anc_freq",
    "design_hard_freq",
    "design_soft_freq",
    "filter_response",
    "limit_distances",
]

G_FLOOR = 1e-6
LOADING = 1e-6


@dataclass(frozen=True)
class FreqModel:
    """``phi_x`` is ``(F, C, C)``, ``h`` is ``(F, C)``, ``G`` is ``(F,)``."""

    freqs_hz: np.ndarray
    phi_x: np.ndarray
    h: np.ndarray
    G: np.ndarray
    fft_size: int
    sample_rate_hz: int

    @property
    def n_bins(self) -> int:
        return self.freqs_hz.shape[0]

    @property
    def n_channels(self) -> int:
        return self.h.shape[1]

    @property
    def omega(self) -> np.ndarray:
        """Radian frequency in rad/s."""
        return 2.0 * np.pi * self.freqs_hz

    @property
    def valid(self) -> np.ndarray:
        mag = np.abs(self.G)
        return mag >= G_FLOOR * mag.max()

    def delay_phase(self, delta: int) -> np.ndarray:
        """``exp(i omega Delta)`` with ``Delta`` in samples."""
        return np.exp(1j * 2.0 * np.pi * self.freqs_hz * delta / self.sample_rate_hz)

    @property
    def q(self) -> np.ndarray:
        q = np.zeros(self.n_channels)
        q[-1] = 1.0
        return q


def _stft(x: np.ndarray, n: int) -> np.ndarray:
    """``(C, frames, bins)`` STFT with a periodic Hann window and 50 % overlap."""
    hop = n // 2
    if x.shape[1] < n:
        raise ValueError("signal shorter than one FFT frame")
    frames = np.lib.stride_tricks.sliding_window_view(x, n, axis=1)[:, ::hop, :]
    win = scipy.signal.get_window("hann", n)
    return np.fft.rfft(frames * win, axis=-1)


def estimate_freq_model(
    desired: np.ndarray,
    total: np.ndarray,
    g: Fir,
    fft_size: int,
    sample_rate_hz: int,
    reference_mic: int = 0,
    loading: float = LOADING,
) -> FreqModel:
    """Welch-style per-bin input covariance, relative transfer vector and ``G``.

    ``desired`` and ``total`` are ``(K+1, N)`` stacked inputs (leakage last):
    the desired-source component alone, and the full mixture.
    """
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ValueError("fft_size must be a power of two")
    desired = np.asarray(desired, dtype=np.float64)
    total = np.asarray(total, dtype=np.float64)
    X = _stft(total, fft_size)
    phi = np.einsum("ctf,dtf->fcd", X, X.conj()) / X.shape[1]
    phi = 0.5 * (phi + np.conj(np.swapaxes(phi, 1, 2)))
    C = phi.shape[1]
    load = loading * np.real(np.trace(phi, axis1=1, axis2=2)) / C
    phi = phi + load[:, None, None] * np.eye(C)

    S = _stft(desired, fft_size)
    ref = S[reference_mic]
    auto = np.mean(np.abs(ref) ** 2, axis=0)
    cross = np.mean(S * ref.conj()[None], axis=1)
    if np.any(auto <= 0):
        raise NumericalError("reference microphone has empty bins; cannot form relative transfer functions")
    h = (cross / auto).T

    G = np.fft.rfft(g.taps, fft_size)
    freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate_hz)
    return FreqModel(freqs, phi, h, G, fft_size, int(sample_rate_hz))


def _inv_g_conj(model: FreqModel) -> np.ndarray:
    out = np.zeros(model.n_bins, dtype=complex)
    valid = model.valid
    out[valid] = 1.0 / np.conj(model.G[valid])
    return out


def _phi_inv_h(model: FreqModel) -> tuple[np.ndarray, np.ndarray]:
    """``Phi^-1 h`` per bin and the real scalar ``h^H Phi^-1 h``."""
    try:
        v = np.linalg.solve(model.phi_x, model.h[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for f in range(model.n_bins):
            try:
                np.linalg.solve(model.phi_x[f], model.h[f])
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"singular input covariance at bin {f}") from exc
        raise
    a = np.real(np.einsum("fc,fc->f", model.h.conj(), v))
    return v, a


def design_anc_freq(model: FreqModel) -> np.ndarray:
    """``-q / conj(G)`` at every bin, shape ``(F, K+1)``."""
    return _inv_g_conj(model)[:, None] * (-model.q)[None, :]


def _constrained(model: FreqModel, delta: int, denom_extra: float) -> np.ndarray:
    v, a = _phi_inv_h(model)
    corr = v * (model.delay_phase(delta) / (denom_extra + a))[:, None]
    return _inv_g_conj(model)[:, None] * (corr - model.q[None, :])


def design_hard_freq(model: FreqModel, delta: int) -> np.ndarray:
    return _constrained(model, delta, 0.0)


def design_soft_freq(model: FreqModel, delta: int, mu: float) -> np.ndarray:
    """Soft-constrained weights; ``mu = 0`` and ``mu = inf`` give the two limiting designs."""
    mu = float(mu)
    if not mu >= 0:
        raise ValueError("mu must be non-negative")
    if mu == 0.0:
        return design_anc_freq(model)
    if math.isinf(mu):
        return design_hard_freq(model, delta)
    return _constrained(model, delta, 1.0 / mu)


def filter_response(taps: np.ndarray, fft_size: int) -> np.ndarray:
    """Frequency-domain weights ``(F, K+1)`` of time-domain taps ``(K+1, L_w)``."""
    return np.conj(np.fft.rfft(np.atleast_2d(taps), fft_size, axis=1)).T


def limit_distances(model: FreqModel, delta: int, mus) -> list[dict]:
    """Max-over-bins relative distance of the soft design to both limiting designs."""
    valid = model.valid
    w_anc = design_anc_freq(model)[valid]
    w_hard = design_hard_freq(model, delta)[valid]
    n_anc = np.linalg.norm(w_anc, axis=1)
    n_hard = np.linalg.norm(w_hard, axis=1)
    rows = []
    for mu in mus:
        w = design_soft_freq(model, delta, mu)[valid]
        d_anc = np.linalg.norm(w - w_anc, axis=1) / n_anc
        d_hard = np.linalg.norm(w - w_hard, axis=1) / n_hard
        rows.append({"mu": float(mu), "dist_anc": float(d_anc.max()), "dist_hard": float(d_hard.max())})
    return rows
