"""Plain-text and WAV file formats.

FIR file
    One tap per line; ``#`` starts a comment. A ``.wav`` path is read as a
    mono impulse response instead.
ReIR set
    Header ``L_a L_h K+1 ref`` (``ref`` is 1-based), then one line per
    channel holding its ``L_a + L_h`` taps.
Control filter
    Header ``K+1 L_w``, then one line per channel holding its ``L_w`` taps.
Band table
    ``center_hz importance`` per line.

Numbers are written with 17 significant digits so text files round-trip
exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io.wavfile

from .errors import ConfigError
from .sigcore import Fir

__all__ = [
    "read_wav",
    "write_wav",
    "read_fir",
    "write_fir",
    "read_reirs",
    "write_reirs",
    "read_control_filter",
    "write_control_filter",
    "read_band_table",
]

_FMT = "%.17g"


def read_wav(path) -> tuple[np.ndarray, int]:
    """Return ``(data, rate)``; mono files give ``(N,)``, others ``(C, N)``, as float64."""
    rate, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data.T.copy()
        if data.shape[0] == 1:
            data = data[0]
    return data, int(rate)


def write_wav(path, data: np.ndarray, rate: int, normalize: bool = False) -> float:
    """Write 32-bit float WAV; returns the gain applied (1.0 unless ``normalize``)."""
    data = np.asarray(data, dtype=np.float64)
    gain = 1.0
    if normalize:
        peak = np.max(np.abs(data)) if data.size else 0.0
        if peak > 0:
            gain = 1.0 / peak
    out = (data * gain).astype(np.float32)
    if out.ndim == 2:
        out = out.T
    scipy.io.wavfile.write(path, int(rate), out)
    return gain


def _numeric_lines(path) -> list[list[float]]:
    rows = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: not numeric: {line!r}") from exc
    return rows


def read_fir(path) -> Fir:
    if str(path).lower().endswith(".wav"):
        data, _ = read_wav(path)
        if data.ndim != 1:
            raise ConfigError(f"{path}: impulse-response WAV must be mono")
        return Fir(data)
    rows = _numeric_lines(path)
    taps = [v for row in rows for v in row]
    if not taps:
        raise ConfigError(f"{path}: no taps")
    return Fir(taps)


def write_fir(path, fir: Fir) -> None:
    np.savetxt(path, fir.taps, fmt=_FMT)


def write_reirs(path, reirs, reference_mic: int) -> None:
    """``reference_mic`` is 0-based; it is stored 1-based."""
    reirs = list(reirs)
    La, Lh = reirs[0].anticausal_len, reirs[0].causal_len
    taps = np.stack([h.taps for h in reirs])
    header = f"{La} {Lh} {len(reirs)} {reference_mic + 1}"
    np.savetxt(path, taps, fmt=_FMT, header=header, comments="")


def read_reirs(path) -> tuple[list[Fir], int]:
    """Return ``(reirs, reference_mic)`` with a 0-based reference index."""
    rows = _numeric_lines(path)
    if not rows or len(rows[0]) != 4:
        raise ConfigError(f"{path}: header must be 'L_a L_h K+1 ref'")
    La, Lh, C, ref = (int(v) for v in rows[0])
    body = rows[1:]
    if len(body) != C or any(len(r) != La + Lh for r in body):
        raise ConfigError(f"{path}: expected {C} rows of {La + Lh} taps")
    return [Fir(r, anticausal_len=La) for r in body], ref - 1


def write_control_filter(path, taps: np.ndarray) -> None:
    taps = np.atleast_2d(np.asarray(taps, dtype=np.float64))
    np.savetxt(path, taps, fmt=_FMT, header=f"{taps.shape[0]} {taps.shape[1]}", comments="")


def read_control_filter(path) -> np.ndarray:
    rows = _numeric_lines(path)
    if not rows or len(rows[0]) != 2:
        raise ConfigError(f"{path}: header must be 'K+1 L_w'")
    C, Lw = (int(v) for v in rows[0])
    body = rows[1:]
    if len(body) != C or any(len(r) != Lw for r in body):
        raise ConfigError(f"{path}: expected {C} rows of {Lw} taps")
    return np.array(body)


def read_band_table(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _numeric_lines(path)
    if not rows or any(len(r) != 2 for r in rows):
        raise ConfigError(f"{path}: each line must be 'center_hz importance'")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]
