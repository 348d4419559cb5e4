"""Synthetic acoustic scenes for a hearable with K outer microphones.

Each source reaches K outer microphones and the inner error microphone
through its own causal impulse response. The error-microphone response plays
the role of the leakage path. Speech (desired source) and noise components are
kept separate throughout so that metrics can be computed per component.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.signal

from . import _kernels
from .errors import ConfigError
from .sigcore import Component, Fir, MultichannelSignal, Signal

log = logging.getLogger(__name__)

__all__ = [
    "Role",
    "Excitation",
    "SourceSpec",
    "ScenarioConfig",
    "SceneSignals",
    "ControlOutput",
    "generate_synthetic_ir",
    "make_excitation",
    "synthesize_scene",
    "apply_control",
    "estimate_leakage",
]


class Role(str, enum.Enum):
    DESIRED = "desired"
    NOISE = "noise"


class Excitation(str, enum.Enum):
    WHITE_NOISE = "white_noise"
    BABBLE_LIKE = "babble_like"
    WAV_FILE = "wav_file"


def generate_synthetic_ir(seed: int, delay_samples: int, length: int, decay: float) -> Fir:
    """Delayed unit direct path followed by a random, exponentially decaying tail.

    Tail tap ``k`` (``k >= 1`` samples after the direct path) is
    ``decay**k * u_k`` with ``u_k`` uniform on ``[-1, 1)``. For ``decay < 0.5``
    the tail's absolute sum stays below one, so the response is minimum phase
    and has a stable causal inverse.
    """
    if delay_samples < 0 or delay_samples >= length:
        raise ValueError("need 0 <= delay_samples < length")
    if not 0.0 <= decay <= 1.0:
        raise ValueError("decay must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    taps = np.zeros(length)
    taps[delay_samples] = 1.0
    n_tail = length - delay_samples - 1
    if n_tail > 0:
        envelope = decay ** np.arange(1, n_tail + 1)
        taps[delay_samples + 1 :] = envelope * rng.uniform(-1.0, 1.0, n_tail)
    return Fir(taps)


@dataclass(frozen=True)
class SourceSpec:
    role: Role
    irs: tuple[Fir, ...]
    excitation: Excitation = Excitation.WHITE_NOISE
    wav_path: str | None = None
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "excitation", Excitation(self.excitation))
        object.__setattr__(self, "irs", tuple(self.irs))
        if not all(ir.is_causal for ir in self.irs):
            raise ConfigError("source impulse responses must be causal")
        if self.excitation is Excitation.WAV_FILE and not self.wav_path:
            raise ConfigError("wav_file excitation needs a path")


@dataclass(frozen=True)
class ScenarioConfig:
    """``reference_mic`` is 0-based here; configuration files use 1-based indices."""

    K: int
    reference_mic: int
    sample_rate_hz: int
    duration_s: float
    target_snr_db: float
    sources: tuple[SourceSpec, ...]
    secondary_path: Fir
    seed: int = 0
    secondary_path_estimate: Fir | None = None
    speech_level_dbfs: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.K < 1:
            raise ConfigError("need at least one outer microphone")
        if not 0 <= self.reference_mic < self.K:
            raise ConfigError(f"reference_mic must index an outer microphone (0..{self.K - 1})")
        if not np.isfinite(self.target_snr_db):
            raise ConfigError("target SNR must be finite")
        if sum(s.role is Role.DESIRED for s in self.sources) != 1:
            raise ConfigError("exactly one source must be marked desired")
        for s in self.sources:
            if len(s.irs) != self.K + 1:
                raise ConfigError(f"each source needs K+1={self.K + 1} impulse responses")
        if not self.secondary_path.is_causal:
            raise ConfigError("secondary path must be causal")
        if self.speech_level_dbfs is not None and not np.isfinite(self.speech_level_dbfs):
            raise ConfigError("speech level must be finite")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def desired(self) -> SourceSpec:
        return next(s for s in self.sources if s.role is Role.DESIRED)

    @property
    def noises(self) -> list[SourceSpec]:
        return [s for s in self.sources if s.role is Role.NOISE]


@dataclass(frozen=True)
class SceneSignals:
    """Outer-mic and leakage components; arrays are ``(K, N)`` and ``(N,)``."""

    outer_speech: np.ndarray
    outer_noise: np.ndarray
    leak_speech: np.ndarray
    leak_noise: np.ndarray
    sample_rate_hz: int
    reference_mic: int = 0
    noise_leak_energies: tuple[float, ...] = field(default=())

    @property
    def K(self) -> int:
        return self.outer_speech.shape[0]

    @property
    def n_samples(self) -> int:
        return self.leak_speech.shape[0]

    @property
    def outer_mics(self) -> MultichannelSignal:
        return MultichannelSignal(self.outer_speech + self.outer_noise, self.sample_rate_hz)

    @property
    def leakage(self) -> Signal:
        return Signal(self.leak_speech + self.leak_noise, self.sample_rate_hz)

    def stacked(self, component: Component | str = Component.TOTAL) -> np.ndarray:
        """``(K+1, N)`` control-filter input: outer mics, then the leakage."""
        component = Component(component)
        if component is Component.SPEECH:
            return np.vstack([self.outer_speech, self.leak_speech])
        if component is Component.NOISE:
            return np.vstack([self.outer_noise, self.leak_noise])
        return np.vstack([self.outer_speech + self.outer_noise, self.leak_speech + self.leak_noise])

    def reference_speech(self) -> np.ndarray:
        return self.outer_speech[self.reference_mic]


def _read_wav_mono(path: str, fs: int) -> np.ndarray:
    from .io import read_wav

    try:
        data, rate = read_wav(path)
    except OSError as exc:
        raise ConfigError(f"cannot read excitation {path}: {exc}") from exc
    if rate != fs:
        raise ConfigError(f"{path}: sample rate {rate} Hz does not match scenario rate {fs} Hz")
    if data.ndim != 1:
        raise ConfigError(f"{path}: expected a mono file")
    return data


def make_excitation(source: SourceSpec, n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    if source.excitation is Excitation.WAV_FILE:
        data = _read_wav_mono(source.wav_path, fs)
        if data.shape[0] < n:
            log.warning("%s shorter than scene; zero-padding", source.wav_path)
            data = np.concatenate([data, np.zeros(n - data.shape[0])])
        return data[:n]
    white = rng.standard_normal(n)
    if source.excitation is Excitation.WHITE_NOISE:
        return white
    # first-order low-pass at 500 Hz: -6 dB/octave tilt above the corner
    b, a = scipy.signal.butter(1, 500.0, btype="low", fs=fs)
    colored = scipy.signal.lfilter(b, a, white)
    return colored / np.std(colored)


def _render(excitation: np.ndarray, irs: Sequence[Fir], n: int) -> np.ndarray:
    return np.stack([np.convolve(excitation, ir.taps)[:n] for ir in irs])


def synthesize_scene(cfg: ScenarioConfig) -> SceneSignals:
    """Render all sources and calibrate the noise to the target leakage SNR.

    Noise sources are first equalized to the same leakage energy and then
    scaled jointly. If ``cfg.speech_level_dbfs`` is set, the desired source is
    first scaled so its leakage RMS sits at that level (0 dBFS = unit RMS);
    otherwise it is left untouched.
    """
    n = cfg.n_samples
    fs = cfg.sample_rate_hz
    if n < 1:
        raise ConfigError("scene duration is shorter than one sample")

    desired = cfg.desired
    rng = np.random.default_rng([cfg.seed, 0])
    speech = desired.gain * _render(make_excitation(desired, n, fs, rng), desired.irs, n)
    speech_energy = float(np.dot(speech[-1], speech[-1]))
    if speech_energy <= 0.0:
        raise ConfigError("desired source has zero leakage energy; SNR undefined")
    if cfg.speech_level_dbfs is not None:
        target_power = 10.0 ** (cfg.speech_level_dbfs / 10.0)
        speech *= np.sqrt(target_power * n / speech_energy)
        speech_energy = float(np.dot(speech[-1], speech[-1]))

    noise = np.zeros_like(speech)
    noise_energies = []
    rendered = []
    for idx, src in enumerate(cfg.noises, start=1):
        rng = np.random.default_rng([cfg.seed, idx])
        comp = src.gain * _render(make_excitation(src, n, fs, rng), src.irs, n)
        e = float(np.dot(comp[-1], comp[-1]))
        if e <= 0.0:
            raise ConfigError(f"noise source {idx} has zero leakage energy")
        rendered.append(comp / np.sqrt(e))
    if rendered:
        noise = np.sum(rendered, axis=0)
        total = float(np.dot(noise[-1], noise[-1]))
        target = speech_energy / 10.0 ** (cfg.target_snr_db / 10.0)
        c = np.sqrt(target / total)
        noise *= c
        noise_energies = [float(np.dot(c * r[-1], c * r[-1])) for r in rendered]

    return SceneSignals(
        outer_speech=speech[:-1],
        outer_noise=noise[:-1],
        leak_speech=speech[-1],
        leak_noise=noise[-1],
        sample_rate_hz=fs,
        reference_mic=cfg.reference_mic,
        noise_leak_energies=tuple(noise_energies),
    )


@dataclass(frozen=True)
class ControlOutput:
    """Error-mic signal ``e`` and loudspeaker signal ``y``, split by component."""

    e_speech: np.ndarray
    e_noise: np.ndarray
    y_speech: np.ndarray
    y_noise: np.ndarray

    @property
    def e(self) -> np.ndarray:
        return self.e_speech + self.e_noise

    @property
    def y(self) -> np.ndarray:
        return self.y_speech + self.y_noise


def _control_component(x: np.ndarray, w: np.ndarray, g: Fir, g_hat: Fir | None):
    K1, n = x.shape
    K = K1 - 1
    y_outer = np.zeros(n)
    for k in range(K):
        y_outer += np.convolve(w[k], x[k])[:n]
    p = x[K]
    if g_hat is None or (len(g_hat) == len(g) and np.array_equal(g_hat.taps, g.taps)):
        y = y_outer + np.convolve(w[K], p)[:n]
    else:
        m = max(len(g), len(g_hat))
        dg = np.zeros(m)
        dg[: len(g)] += g.taps
        dg[: len(g_hat)] -= g_hat.taps
        y, _ = _kernels.closed_loop(y_outer, p, w[K], dg)
    e = p + np.convolve(g.taps, y)[:n]
    return e, y


def apply_control(scene: SceneSignals, w, g: Fir, g_hat: Fir | None = None) -> ControlOutput:
    """Run the control filter on the scene and return ``e`` and ``y`` per component.

    ``w`` is a :class:`~ssanc.design.ControlFilter` (or a ``(K+1, L_w)``
    array). The last input channel is the leakage estimate; with ``g_hat``
    left at ``None`` the secondary path is assumed known exactly so the
    estimate equals the leakage. A mismatched ``g_hat`` closes the loop
    through the leakage estimate and is simulated sample by sample.
    """
    taps = np.asarray(getattr(w, "taps", w), dtype=np.float64)
    if taps.ndim != 2 or taps.shape[0] != scene.K + 1:
        raise ValueError(f"control filter needs K+1={scene.K + 1} channels, got shape {taps.shape}")
    e_s, y_s = _control_component(scene.stacked(Component.SPEECH), taps, g, g_hat)
    e_v, y_v = _control_component(scene.stacked(Component.NOISE), taps, g, g_hat)
    return ControlOutput(e_s, e_v, y_s, y_v)


def estimate_leakage(e: Signal | np.ndarray, y: Signal | np.ndarray, g_hat: Fir) -> np.ndarray:
    """``p_hat(n) = e(n) - (g_hat * y)(n)``."""
    e = np.asarray(getattr(e, "samples", e), dtype=np.float64)
    y = np.asarray(getattr(y, "samples", y), dtype=np.float64)
    if e.shape != y.shape:
        raise ValueError("e and y must have equal length")
    return e - np.convolve(g_hat.taps, y)[: e.shape[0]]


def load_scene_irs(paths: Sequence[str | Path]) -> tuple[Fir, ...]:
    from .io import read_fir

    return tuple(read_fir(p) for p in paths)
