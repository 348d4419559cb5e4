"""Run configuration: TOML files layered over a bundled profile.

A run is described by one TOML file with the sections ``[scenario]``
(with ``[scenario.secondary_path]`` and ``[[scenario.sources]]``),
``[design]``, ``[reir]``, ``[sweep]`` and ``[output]``. Every key is
optional: missing keys are taken from the selected profile (``desk`` or
``paper`` for full-scale sizes, see ``ssanc/profiles``). A ``sources`` list given in the file
replaces the profile's list as a whole. Microphone indices in files are
1-based.

The fully resolved configuration is kept as a plain dict; its canonical
JSON form (sorted keys, no whitespace) is hashed to identify the run.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .design import DesignParams
from .errors import ConfigError
from .scene import Excitation, Role, ScenarioConfig, SourceSpec, generate_synthetic_ir, load_scene_irs
from .sigcore import Fir

__all__ = [
    "PROFILES",
    "ReirSettings",
    "RunConfig",
    "load_profile",
    "load_config",
    "resolve_config",
    "canonical_json",
    "config_hash",
    "mu_grid_from",
]

PROFILES = ("desk", "paper")

_SECTIONS = {"scenario", "design", "reir", "sweep", "output"}


@dataclass(frozen=True)
class ReirSettings:
    step: float = 0.5
    max_passes: int = 50
    tol: float = 1e-4
    probe_seed: int = 7
    probe_duration_s: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    """Everything a sweep needs, with file-level settings already resolved.

    ``resolved`` holds the merged configuration dict that produced this
    object; it is written to the run manifest and hashed.
    """

    scenario: ScenarioConfig
    design: DesignParams
    reir: ReirSettings
    mu_grid: tuple[float, ...]
    out_dir: Path
    emit_wav: bool
    normalize_wav: bool
    freq_checks: bool
    fft_size: int
    highpass_hz: float
    band_table: Path | None
    seed: int
    resolved: Mapping[str, Any]

    def __post_init__(self):
        grid = tuple(float(m) for m in self.mu_grid)
        if any(not (m >= 0 and math.isfinite(m)) for m in grid):
            raise ConfigError("mu grid values must be finite and non-negative")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("mu grid must be sorted strictly ascending")
        object.__setattr__(self, "mu_grid", grid)
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigError("fft_size must be a power of two")

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)

    @property
    def g_hat(self) -> Fir:
        est = self.scenario.secondary_path_estimate
        return self.scenario.secondary_path if est is None else est


def _deep_merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_profile(name: str) -> dict:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose one of {', '.join(PROFILES)}")
    text = resources.files("ssanc.profiles").joinpath(f"{name}.toml").read_text(encoding="utf-8")
    return tomllib.loads(text)


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def canonical_json(resolved: Mapping) -> str:
    return json.dumps(resolved, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(resolved: Mapping) -> str:
    return hashlib.sha256(canonical_json(resolved).encode("utf-8")).hexdigest()


def mu_grid_from(sweep: Mapping) -> list[float]:
    """Explicit ``mu`` list, or ``10**k`` for k from ``log10_mu_min`` to ``log10_mu_max``."""
    if "mu" in sweep:
        return [float(m) for m in sweep["mu"]]
    lo = float(sweep["log10_mu_min"])
    hi = float(sweep["log10_mu_max"])
    step = float(sweep["log10_mu_step"])
    if step <= 0:
        raise ConfigError("log10_mu_step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if n < 1:
        return []
    # round exponents so 10**(-2.0) is exactly 0.01 regardless of accumulation
    return [float(10.0 ** round(lo + i * step, 10)) for i in range(n)]


def _get(section: Mapping, key: str, kind, where: str):
    if key not in section:
        raise ConfigError(f"missing {where}.{key}")
    val = section[key]
    try:
        if kind is int:
            if isinstance(val, bool) or (isinstance(val, float) and not val.is_integer()):
                raise TypeError
            return int(val)
        if kind is float:
            if isinstance(val, bool):
                raise TypeError
            return float(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {val!r}") from exc


def _base_dir_path(value: str, base_dir: Path) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base_dir / p


def _secondary_path(sp: Mapping, fs: int, base_dir: Path) -> tuple[Fir, Fir | None]:
    where = "scenario.secondary_path"
    if sp.get("file"):
        from .io import read_fir

        g = read_fir(_base_dir_path(sp["file"], base_dir))
    else:
        if "delay_ms" in sp:
            delay = int(round(_get(sp, "delay_ms", float, where) * fs / 1000.0))
        else:
            delay = _get(sp, "delay_samples", int, where)
        try:
            g = generate_synthetic_ir(
                _get(sp, "seed", int, where), delay, _get(sp, "length", int, where), _get(sp, "decay", float, where)
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    scale = float(sp.get("estimate_scale", 1.0))
    g_hat = None if scale == 1.0 else g.scaled(scale)
    return g, g_hat


def _source(src: Mapping, idx: int, K: int, base_dir: Path) -> SourceSpec:
    where = f"scenario.sources[{idx}]"
    try:
        role = Role(src.get("role", "noise"))
        excitation = Excitation(src.get("excitation", "white_noise"))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if "ir_files" in src:
        irs = load_scene_irs([_base_dir_path(p, base_dir) for p in src["ir_files"]])
    else:
        delays = src.get("delays")
        if not isinstance(delays, list) or len(delays) != K + 1:
            raise ConfigError(f"{where}.delays must list K+1={K + 1} delays (outer mics, then error mic)")
        length = _get(src, "ir_length", int, where)
        decay = _get(src, "decay", float, where)
        seed = _get(src, "seed", int, where)
        try:
            irs = tuple(generate_synthetic_ir(seed + i, int(d), length, decay) for i, d in enumerate(delays))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    wav = src.get("wav") or None
    if excitation is Excitation.WAV_FILE:
        if wav is None:
            raise ConfigError(f"{where}: excitation 'wav_file' needs a 'wav' path")
        wav = str(_base_dir_path(wav, base_dir))
    return SourceSpec(role, irs, excitation, wav, float(src.get("gain", 1.0)))


def resolve_config(raw: Mapping, base_dir: Path | str = ".") -> RunConfig:
    """Build a :class:`RunConfig` from a fully merged configuration dict."""
    base_dir = Path(base_dir)
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    for name in _SECTIONS:
        if not isinstance(raw.get(name), Mapping):
            raise ConfigError(f"missing [{name}] section")
    sc, de, re_, sw, out = (raw[s] for s in ("scenario", "design", "reir", "sweep", "output"))

    K = _get(sc, "K", int, "scenario")
    fs = _get(sc, "sample_rate_hz", int, "scenario")
    if fs <= 0:
        raise ConfigError("scenario.sample_rate_hz must be positive")
    seed = _get(sc, "seed", int, "scenario")
    g, g_hat = _secondary_path(sc.get("secondary_path", {}), fs, base_dir)
    sources = [_source(s, i, K, base_dir) for i, s in enumerate(sc.get("sources", []))]
    level = sc.get("speech_level_dbfs")
    scenario = ScenarioConfig(
        K=K,
        reference_mic=_get(sc, "reference_mic", int, "scenario") - 1,
        sample_rate_hz=fs,
        duration_s=_get(sc, "duration_s", float, "scenario"),
        target_snr_db=_get(sc, "target_snr_db", float, "scenario"),
        sources=sources,
        secondary_path=g,
        seed=seed,
        secondary_path_estimate=g_hat,
        speech_level_dbfs=None if level is None else float(level),
    )
    try:
        design = DesignParams(
            L_w=_get(de, "L_w", int, "design"),
            L_g=len(g),
            L_a=_get(de, "L_a", int, "design"),
            L_h=_get(de, "L_h", int, "design"),
            delta=_get(de, "delta", int, "design"),
            beta_scale=float(de.get("beta_scale", 4e5)),
            rho_scale=float(de.get("rho_scale", 4e5)),
        )
    except ValueError as exc:
        raise ConfigError(f"design: {exc}") from exc
    reir = ReirSettings(
        step=_get(re_, "step", float, "reir"),
        max_passes=_get(re_, "max_passes", int, "reir"),
        tol=_get(re_, "tol", float, "reir"),
        probe_seed=_get(re_, "probe_seed", int, "reir"),
        probe_duration_s=_get(re_, "probe_duration_s", float, "reir"),
    )
    band_table = sw.get("band_table") or None
    highpass = _get(sw, "highpass_hz", float, "sweep")
    if not 0 < highpass < fs / 2:
        raise ConfigError("sweep.highpass_hz must lie between 0 and Nyquist")
    return RunConfig(
        scenario=scenario,
        design=design,
        reir=reir,
        mu_grid=tuple(mu_grid_from(sw)),
        out_dir=Path(str(out.get("dir", "ssanc-out"))),
        emit_wav=_get(out, "emit_wav", bool, "output"),
        normalize_wav=_get(out, "normalize_wav", bool, "output"),
        freq_checks=_get(out, "freq_checks", bool, "output"),
        fft_size=_get(sw, "fft_size", int, "sweep"),
        highpass_hz=highpass,
        band_table=None if band_table is None else _base_dir_path(band_table, base_dir),
        seed=seed,
        resolved=copy.deepcopy(dict(raw)),
    )


def load_config(
    path: str | os.PathLike | None = None,
    profile: str = "desk",
    overrides: Mapping | None = None,
) -> RunConfig:
    """Merge profile, config file and ``overrides`` (in that order) and resolve.

    Relative paths inside the file are taken relative to the file's directory.
    """
    raw = load_profile(profile)
    base_dir = Path(".")
    if path is not None:
        path = Path(path)
        raw = _deep_merge(raw, _read_toml(path))
        base_dir = path.parent
    if overrides:
        raw = _deep_merge(raw, overrides)
    # numpy scalars would break the canonical JSON dump
    raw = json.loads(json.dumps(raw, default=lambda o: o.item() if isinstance(o, np.generic) else str(o)))
    return resolve_config(raw, base_dir)
