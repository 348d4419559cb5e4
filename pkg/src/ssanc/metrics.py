"""Objective evaluation: noise reduction and intelligibility-weighted measures.

Band powers come from a Welch PSD (Hann window, 64 ms frames, 50 % overlap)
integrated over each one-third-octave band. Degenerate log ratios are
clamped to [-200, 200] dB and flagged in the report.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import InsufficientDataError
from .sigcore import Signal

log = logging.getLogger(__name__)

__all__ = [
    "BandImportance",
    "MetricsReport",
    "highpass_minphase",
    "noise_reduction",
    "third_octave_psd",
    "sd_intellig",
    "snr_improvement_intellig",
    "DB_CAP",
]

DB_CAP = 200.0
ANALYSIS_FLOOR_HZ = 100.0

# One-third-octave band importance, average speech (ANSI S3.5-1997, Table 3)
SII_CENTERS_HZ = np.array(
    [160, 200, 250, 315, 400, 500, 630, 800, 1000, 1250, 1600, 2000, 2500, 3150, 4000, 5000, 6300, 8000],
    dtype=float,
)
SII_IMPORTANCE = np.array(
    [
        0.0083, 0.0095, 0.0150, 0.0289, 0.0440, 0.0578, 0.0653, 0.0711, 0.0818,
        0.0844, 0.0882, 0.0898, 0.0868, 0.0844, 0.0771, 0.0527, 0.0364, 0.0185,
    ]
)


def _exact_center(nominal: np.ndarray) -> np.ndarray:
    """Base-2 one-third-octave center ``1000 * 2**(n/3)`` nearest each nominal value."""
    n = np.round(3.0 * np.log2(np.asarray(nominal, dtype=float) / 1000.0))
    return 1000.0 * 2.0 ** (n / 3.0)


@dataclass(frozen=True)
class BandImportance:
    centers_hz: np.ndarray
    importance: np.ndarray
    lower_hz: np.ndarray = field(default=None)
    upper_hz: np.ndarray = field(default=None)

    def __post_init__(self):
        centers = np.asarray(self.centers_hz, dtype=float)
        imp = np.asarray(self.importance, dtype=float)
        if centers.shape != imp.shape or centers.ndim != 1 or centers.size == 0:
            raise ValueError("centers and importance must be equal-length 1-d arrays")
        exact = _exact_center(centers)
        lower = exact * 2.0 ** (-1 / 6) if self.lower_hz is None else np.asarray(self.lower_hz, float)
        upper = exact * 2.0 ** (1 / 6) if self.upper_hz is None else np.asarray(self.upper_hz, float)
        if np.any(np.diff(centers) <= 0) or np.any(lower[1:] < upper[:-1] - 1e-9):
            raise ValueError("bands must be ascending and non-overlapping")
        if np.any(imp < 0):
            raise ValueError("band importance must be non-negative")
        if abs(imp.sum() - 1.0) > 1e-6:
            raise ValueError(f"band importance must sum to 1 (got {imp.sum():.8f})")
        for name, val in (("centers_hz", centers), ("importance", imp), ("lower_hz", lower), ("upper_hz", upper)):
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def from_table(cls, centers, importance, sample_rate_hz: int | None = None, floor_hz: float = ANALYSIS_FLOOR_HZ):
        """Keep bands above ``floor_hz`` and below Nyquist, then renormalize."""
        centers = np.asarray(centers, dtype=float)
        importance = np.asarray(importance, dtype=float)
        keep = centers >= floor_hz
        if sample_rate_hz is not None:
            keep &= _exact_center(centers) * 2.0 ** (1 / 6) <= sample_rate_hz / 2.0
        if not keep.any():
            raise ValueError("no bands left in the analysis range")
        imp = importance[keep]
        return cls(centers[keep], imp / imp.sum())

    @classmethod
    def sii(cls, sample_rate_hz: int | None = None) -> "BandImportance":
        return cls.from_table(SII_CENTERS_HZ, SII_IMPORTANCE, sample_rate_hz)

    @classmethod
    def from_file(cls, path, sample_rate_hz: int | None = None) -> "BandImportance":
        from .io import read_band_table

        centers, imp = read_band_table(path)
        return cls.from_table(centers, imp, sample_rate_hz)

    def __len__(self) -> int:
        return self.centers_hz.shape[0]


@dataclass(frozen=True)
class MetricsReport:
    design: str
    mu: float
    nr_db: float
    sd_db: float
    dsnr_db: float
    flags: tuple[str, ...] = ()


def _samples(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def _clamped_db(num: float, den: float) -> float:
    if den <= 0.0:
        return DB_CAP
    if num <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CAP, DB_CAP))


def highpass_minphase(x: Signal, fc_hz: float = ANALYSIS_FLOOR_HZ, sample_rate_hz: int | None = None):
    """Fourth-order Butterworth high-pass (minimum phase), applied causally.

    Accepts a :class:`Signal` (returns a :class:`Signal`) or an array together
    with ``sample_rate_hz``.
    """
    fs = getattr(x, "sample_rate_hz", sample_rate_hz)
    if fs is None:
        raise ValueError("sample rate required for array input")
    if not 0 < fc_hz < fs / 2:
        raise ValueError("cut-off must lie between 0 and Nyquist")
    sos = scipy.signal.butter(4, fc_hz, btype="highpass", fs=fs, output="sos")
    y = scipy.signal.sosfilt(sos, _samples(x))
    return Signal(y, fs) if isinstance(x, Signal) else y


def noise_reduction(p_v, e_v) -> float:
    """``10 log10 sum p_v^2 - 10 log10 sum e_v^2``, capped at +200 dB."""
    p = _samples(p_v)
    e = _samples(e_v)
    if p.shape != e.shape:
        raise ValueError("signals must have equal length")
    pe = float(np.dot(p, p))
    if pe == 0.0:
        raise ValueError("leakage noise has zero energy")
    return _clamped_db(pe, float(np.dot(e, e)))


def _welch_frame(fs: int) -> int:
    return int(round(0.064 * fs))


def third_octave_psd(x, bands: BandImportance, sample_rate_hz: int | None = None) -> np.ndarray:
    """Band powers: Welch PSD integrated over ``[lower, upper)`` of each band."""
    fs = getattr(x, "sample_rate_hz", sample_rate_hz)
    if fs is None:
        raise ValueError("sample rate required for array input")
    if bands.upper_hz[-1] > fs / 2.0:
        raise ValueError(f"band at {bands.centers_hz[-1]:g} Hz extends above Nyquist")
    data = _samples(x)
    n = _welch_frame(fs)
    if data.shape[-1] < 2 * n:
        raise InsufficientDataError("signal shorter than two Welch frames")
    f, pxx = scipy.signal.welch(data, fs=fs, window="hann", nperseg=n, noverlap=n // 2, detrend=False)
    df = f[1] - f[0]
    out = np.empty(len(bands))
    for b, (lo, hi) in enumerate(zip(bands.lower_hz, bands.upper_hz)):
        out[b] = pxx[(f >= lo) & (f < hi)].sum() * df
    return out


def sd_intellig(e_s, ref_s_delayed, bands: BandImportance, sample_rate_hz: int | None = None) -> float:
    """Importance-weighted log ratio of distortion power to reference power per band."""
    fs = getattr(e_s, "sample_rate_hz", sample_rate_hz)
    e = _samples(e_s)
    r = _samples(ref_s_delayed)
    if e.shape != r.shape:
        raise ValueError("signals must have equal length")
    p_ref = third_octave_psd(r, bands, fs)
    if np.any((p_ref <= 0) & (bands.importance > 0)):
        raise ValueError("reference band empty")
    p_eps = third_octave_psd(e - r, bands, fs)
    per_band = np.array([_clamped_db(a, b) for a, b in zip(p_eps, p_ref)])
    return float(np.clip(np.dot(bands.importance, per_band), -DB_CAP, DB_CAP))


def snr_improvement_intellig(e_s, e_v, p_s, p_v, bands: BandImportance, sample_rate_hz: int | None = None) -> float:
    """Importance-weighted per-band SNR with control minus SNR without control."""
    fs = getattr(e_s, "sample_rate_hz", sample_rate_hz)
    powers = [third_octave_psd(_samples(s), bands, fs) for s in (e_s, e_v, p_s, p_v)]
    stacked = np.vstack(powers)
    empty = np.any(stacked <= 0, axis=0)
    if np.any(empty & (bands.importance > 0)):
        raise ValueError("zero band power in a band with non-zero importance")
    if np.any(empty):
        log.warning("excluding %d empty zero-importance bands", int(empty.sum()))
    keep = ~empty
    es, ev, ps, pv = (p[keep] for p in powers)
    gain = 10.0 * np.log10(es / ev) - 10.0 * np.log10(ps / pv)
    return float(np.dot(bands.importance[keep], gain))
