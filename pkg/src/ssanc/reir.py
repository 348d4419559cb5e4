"""Relative impulse responses of the desired source, estimated with NLMS.

For microphone ``k`` an adaptive FIR of ``L_a + L_h`` taps predicts
``x_k(n - L_a)`` from the reference microphone's last ``L_a + L_h`` samples.
Delaying the target by ``L_a`` lets the causal adaptive filter represent the
``L_a`` anti-causal lags of the ReIR.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DivergenceError, InsufficientDataError
from .sigcore import Fir, MultichannelSignal

log = logging.getLogger(__name__)

__all__ = [
    "ReirSet",
    "lms_estimate_reirs",
    "probe_desired_mics",
    "deconvolved_reirs",
    "normalized_misalignment",
]


@dataclass(frozen=True)
class ReirSet:
    reirs: tuple[Fir, ...]
    reference_mic: int
    converged: bool = True
    final_mse: float = 0.0
    passes: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "reirs", tuple(self.reirs))
        shapes = {(h.anticausal_len, h.causal_len) for h in self.reirs}
        if len(shapes) != 1:
            raise ValueError("all ReIRs must share (L_a, L_h)")

    @property
    def L_a(self) -> int:
        return self.reirs[0].anticausal_len

    @property
    def L_h(self) -> int:
        return self.reirs[0].causal_len

    def __len__(self) -> int:
        return len(self.reirs)


def _adapt_channel(u, d, n_taps, step, max_passes, tol, eps):
    w_rev = np.zeros(n_taps)
    power = float(np.mean(d * d))
    floor = 1e-12 * power
    prev = None
    history = []
    for _ in range(max_passes):
        mse = _kernels.nlms_pass(u, d, w_rev, step, eps) / d.shape[0]
        history.append(mse)
        if not np.isfinite(mse) or (prev is not None and mse > 10.0 * prev and mse > floor):
            raise DivergenceError("LMS diverged; reduce step")
        if mse <= floor or (prev is not None and abs(prev - mse) <= tol * prev):
            return w_rev[::-1].copy(), history, True
        prev = mse
    return w_rev[::-1].copy(), history, False


def lms_estimate_reirs(
    desired_only: MultichannelSignal | np.ndarray,
    reference_mic: int,
    L_a: int,
    L_h: int,
    step: float = 0.5,
    passes: int = 50,
    tol: float = 1e-4,
    eps: float = 1e-8,
) -> ReirSet:
    """NLMS estimate of every channel's ReIR relative to ``reference_mic``.

    Parameters
    ----------
    desired_only
        ``(C, N)`` desired-source component at each microphone, leakage
        channel last. Any noise here biases the estimate.
    reference_mic
        0-based channel index of the reference microphone.
    step
        NLMS step, normalized by the regressor energy (plus ``eps``).
    passes
        Maximum number of sweeps over the data. Adaptation stops earlier once
        the per-pass MSE changes by less than ``tol`` relative.
    """
    data = desired_only.data if isinstance(desired_only, MultichannelSignal) else np.asarray(desired_only, float)
    C, N = data.shape
    M = L_a + L_h
    if not 0 <= reference_mic < C:
        raise ValueError("reference_mic out of range")
    if L_a < 0 or L_h < 1:
        raise ValueError("need L_a >= 0 and L_h >= 1")
    if N < 2 * M:
        raise InsufficientDataError("insufficient data for the requested ReIR length")
    if not 0.0 < step < 2.0:
        raise ValueError("NLMS step must lie in (0, 2)")

    u = data[reference_mic]
    reirs = []
    n_passes = []
    final = 0.0
    converged = True
    for k in range(C):
        d = np.concatenate([np.zeros(L_a), data[k, : N - L_a]])
        taps, history, ok = _adapt_channel(u, d, M, step, passes, tol, eps)
        reirs.append(Fir(taps, anticausal_len=L_a))
        n_passes.append(len(history))
        power = float(np.mean(d * d))
        nmse = history[-1] / power if power > 0 else 0.0
        final = max(final, nmse)
        converged &= ok
        log.debug("channel %d: %d passes, normalized MSE %.3e", k, len(history), nmse)
    if not converged:
        log.warning("NLMS did not meet the convergence tolerance within %d passes", passes)
    return ReirSet(tuple(reirs), reference_mic, converged, final, tuple(n_passes))


def probe_desired_mics(irs: Sequence[Fir], n_samples: int, seed: int) -> np.ndarray:
    """Seeded white noise rendered through the desired source's responses."""
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(n_samples)
    return np.stack([np.convolve(s, ir.taps)[:n_samples] for ir in irs])


def deconvolved_reirs(irs: Sequence[Fir], reference_mic: int, L_a: int, L_h: int, nfft: int = 1 << 14) -> list[Fir]:
    """Ground-truth ReIRs by spectral division, truncated to lags ``-L_a .. L_h-1``.

    Only meaningful when the reference response is minimum phase (its
    inverse is then causal and decays), as for the synthetic responses.
    """
    ref = np.fft.rfft(irs[reference_mic].taps, nfft)
    out = []
    for ir in irs:
        rel = np.fft.irfft(np.fft.rfft(ir.taps, nfft) / ref, nfft)
        taps = np.concatenate([rel[nfft - L_a :], rel[:L_h]]) if L_a else rel[:L_h].copy()
        out.append(Fir(taps, anticausal_len=L_a))
    return out


def normalized_misalignment(est: ReirSet | Sequence[Fir], truth: ReirSet | Sequence[Fir]) -> np.ndarray:
    """``||h_est - h||^2 / ||h||^2`` for each channel."""
    est = est.reirs if isinstance(est, ReirSet) else tuple(est)
    truth = truth.reirs if isinstance(truth, ReirSet) else tuple(truth)
    if len(est) != len(truth):
        raise ValueError("channel counts differ")
    out = np.empty(len(est))
    for k, (a, b) in enumerate(zip(est, truth)):
        if (a.anticausal_len, a.causal_len) != (b.anticausal_len, b.causal_len):
            raise ValueError("ReIR supports differ")
        energy = float(np.dot(b.taps, b.taps))
        if energy == 0.0:
            raise ValueError("zero-energy reference ReIR")
        diff = a.taps - b.taps
        out[k] = float(np.dot(diff, diff)) / energy
    return out
