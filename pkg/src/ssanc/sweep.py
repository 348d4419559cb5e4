"""End-to-end sweep: scene, ReIRs, designs over the mu grid, metrics, artifacts.

The expensive shared work (scene synthesis, ReIR estimation, the input
covariance and the design's cached operator products) happens once in
:func:`prepare`. Grid points then run in a thread pool; results are
always reported in ascending mu order, ANC first and hard last.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, _kernels
from .config import RunConfig, config_hash
from .design import ControlFilter, TimeDomainProblem
from .errors import ConfigError, NumericalError, SsancError
from .freq import estimate_freq_model, limit_distances
from .io import write_control_filter, write_reirs, write_wav
from .metrics import (
    DB_CAP,
    BandImportance,
    MetricsReport,
    highpass_minphase,
    noise_reduction,
    sd_intellig,
    snr_improvement_intellig,
)
from .reir import ReirSet, lms_estimate_reirs, probe_desired_mics
from .scene import ControlOutput, SceneSignals, apply_control, synthesize_scene
from .sigcore import (
    Component,
    build_constraint_operator,
    build_secondary_operator,
    estimate_covariance,
    selection_vector,
)

log = logging.getLogger(__name__)

__all__ = [
    "CSV_HEADER",
    "FREQ_CSV_HEADER",
    "Prepared",
    "SweepResult",
    "FreqCheckReport",
    "prepare",
    "run_sweep",
    "run_freq_checks",
    "export_artifacts",
    "metrics_csv",
    "thread_count",
]

CSV_HEADER = "design,mu,nr_db,sd_db,dsnr_db,flags"
FREQ_CSV_HEADER = "mu,dist_anc,dist_hard"
THREADS_ENV = "SSANC_THREADS"


def thread_count() -> int:
    """Worker threads for the mu grid, from ``SSANC_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def _label(design: str, mu: float) -> str:
    return f"soft_mu{_fmt(mu)}" if design == "soft" else design


def _stage_error(exc: Exception, stage: str, mu: float | None) -> SsancError:
    where = f"stage '{stage}'" + ("" if mu is None else f" at mu={_fmt(mu)}")
    cls = type(exc) if isinstance(exc, SsancError) else NumericalError
    try:
        return cls(f"{where}: {exc}")
    except TypeError:
        return NumericalError(f"{where}: {exc}")


@dataclass
class Prepared:
    """Shared precomputation for one configuration."""

    cfg: RunConfig
    scene: SceneSignals
    reirs: ReirSet
    problem: TimeDomainProblem
    bands: BandImportance
    # high-passed evaluation references
    p_s: np.ndarray
    p_v: np.ndarray
    ref: np.ndarray

    def highpass(self, x: np.ndarray) -> np.ndarray:
        return highpass_minphase(x, self.cfg.highpass_hz, self.scene.sample_rate_hz)


@dataclass
class SweepResult:
    rows: list[MetricsReport]
    provenance: dict
    filters: dict[str, ControlFilter] = field(default_factory=dict)
    outputs: dict[str, ControlOutput] = field(default_factory=dict)

    def csv(self) -> str:
        return metrics_csv(self.rows)


@dataclass
class FreqCheckReport:
    rows: list[dict]
    n_valid_bins: int
    n_bins: int

    def csv(self) -> str:
        lines = [FREQ_CSV_HEADER]
        lines += [f"{_fmt(r['mu'])},{_fmt(r['dist_anc'])},{_fmt(r['dist_hard'])}" for r in self.rows]
        return "\n".join(lines) + "\n"


def metrics_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join([r.design, _fmt(r.mu), _fmt(r.nr_db), _fmt(r.sd_db), _fmt(r.dsnr_db), ";".join(r.flags)])
        )
    return "\n".join(lines) + "\n"


def _staged(stage: str, fn: Callable, mu: float | None = None):
    try:
        return fn()
    except Exception as exc:  # annotate and re-raise with the failing stage
        raise _stage_error(exc, stage, mu) from exc


def prepare(cfg: RunConfig) -> Prepared:
    sc = cfg.scenario
    d = cfg.design
    scene = _staged("scene", lambda: synthesize_scene(sc))
    log.info("scene: K=%d, %d samples at %d Hz", sc.K, scene.n_samples, sc.sample_rate_hz)

    n_probe = int(round(cfg.reir.probe_duration_s * sc.sample_rate_hz))
    probe = probe_desired_mics(sc.desired.irs, n_probe, cfg.reir.probe_seed)
    reirs = _staged(
        "reir",
        lambda: lms_estimate_reirs(
            probe, sc.reference_mic, d.L_a, d.L_h, step=cfg.reir.step, passes=cfg.reir.max_passes, tol=cfg.reir.tol
        ),
    )
    log.info("ReIRs: passes %s, worst normalized MSE %.3e", list(reirs.passes), reirs.final_mse)

    g_hat = cfg.g_hat

    def build():
        L = d.L
        phi = estimate_covariance(scene.stacked(Component.TOTAL), L)
        return TimeDomainProblem(
            phi,
            build_secondary_operator(g_hat, d.L_w, sc.K),
            build_constraint_operator(reirs.reirs, L),
            selection_vector(sc.K, L, d.L_a, d.L_h, d.delta),
            beta_scale=d.beta_scale,
            rho_scale=d.rho_scale,
        )

    problem = _staged("precompute", build)
    log.info("beta = %.4e", problem.beta)

    if cfg.band_table is not None:
        bands = _staged("bands", lambda: BandImportance.from_file(cfg.band_table, sc.sample_rate_hz))
    else:
        bands = BandImportance.sii(sc.sample_rate_hz)

    fs = sc.sample_rate_hz
    hp = lambda x: highpass_minphase(x, cfg.highpass_hz, fs)  # noqa: E731
    ref = np.zeros(scene.n_samples)
    ref[d.delta :] = scene.reference_speech()[: scene.n_samples - d.delta]
    return Prepared(cfg, scene, reirs, problem, bands, hp(scene.leak_speech), hp(scene.leak_noise), hp(ref))


def _evaluate(prep: Prepared, design: str, mu: float, w: ControlFilter) -> tuple[MetricsReport, ControlOutput]:
    cfg = prep.cfg
    fs = prep.scene.sample_rate_hz
    out = _staged(
        "apply_control",
        lambda: apply_control(prep.scene, w, cfg.scenario.secondary_path, cfg.scenario.secondary_path_estimate),
        mu,
    )

    def metrics():
        e_s = prep.highpass(out.e_speech)
        e_v = prep.highpass(out.e_noise)
        nr = noise_reduction(prep.p_v, e_v)
        sd = sd_intellig(e_s, prep.ref, prep.bands, fs)
        dsnr = snr_improvement_intellig(e_s, e_v, prep.p_s, prep.p_v, prep.bands, fs)
        return nr, sd, dsnr

    nr, sd, dsnr = _staged("metrics", metrics, mu)
    flags = [f"{name}_capped" for name, v in (("nr", nr), ("sd", sd), ("dsnr", dsnr)) if abs(v) >= DB_CAP]
    if not prep.reirs.converged:
        flags.append("reir_unconverged")
    return MetricsReport(design, float(mu), nr, sd, dsnr, tuple(flags)), out


def _design_point(prep: Prepared, design: str, mu: float):
    p = prep.problem
    if design == "anc":
        w = _staged("design", p.anc, mu)
    elif design == "hard":
        w = _staged("design", p.hard, mu)
    else:
        w = _staged("design", lambda: p.soft(mu), mu)
    report, out = _evaluate(prep, design, mu, w)
    return report, w, out


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def run_sweep(cfg: RunConfig, prepared: Prepared | None = None, partial_dir: Path | str | None = None) -> SweepResult:
    """ANC, soft designs over ``cfg.mu_grid`` and the hard design, all evaluated.

    If a point fails and ``partial_dir`` is given, the rows finished so far
    are written to ``metrics.partial.csv`` there before the error propagates.
    """
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    prep = prepared if prepared is not None else prepare(cfg)
    points = [("anc", 0.0)] + [("soft", float(m)) for m in cfg.mu_grid] + [("hard", math.inf)]
    results: dict[int, tuple] = {}
    try:
        workers = thread_count()
        if workers == 1:
            for i, (design, mu) in enumerate(points):
                results[i] = _design_point(prep, design, mu)
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(_design_point, prep, design, mu): i for i, (design, mu) in enumerate(points)}
                for fut in concurrent.futures.as_completed(futures):
                    results[futures[fut]] = fut.result()
    except SsancError:
        if partial_dir is not None and results:
            done = [results[i][0] for i in sorted(results)]
            _write_text(Path(partial_dir) / "metrics.partial.csv", metrics_csv(done))
        raise

    rows, filters, outputs = [], {}, {}
    for i in range(len(points)):
        report, w, out = results[i]
        rows.append(report)
        label = _label(report.design, report.mu)
        filters[label] = w
        outputs[label] = out
        log.info(
            "%-14s NR %7.2f dB  SD %8.2f dB  dSNR %6.2f dB", label, report.nr_db, report.sd_db, report.dsnr_db
        )
    provenance = {
        "config_hash": config_hash(cfg.resolved),
        "seed": cfg.seed,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": time.perf_counter() - t0,
        "version": __version__,
        "backend": _kernels.BACKEND,
        "beta": prep.problem.beta,
        "rho": prep.problem.rho,
        "reir": {
            "converged": prep.reirs.converged,
            "final_mse": prep.reirs.final_mse,
            "passes": list(prep.reirs.passes),
        },
    }
    return SweepResult(rows, provenance, filters, outputs)


def freq_check_grid(mu_grid) -> list[float]:
    """The sweep grid extended by decades up to ``1e9``, closed by the ``inf`` sentinel."""
    grid = sorted(set(float(m) for m in mu_grid))
    top = grid[-1] if grid else 1.0
    start = math.floor(math.log10(top)) + 1 if top > 0 else 0
    grid += [10.0**k for k in range(start, 10)]
    return grid + [math.inf]


def run_freq_checks(cfg: RunConfig, prepared: Prepared | None = None) -> FreqCheckReport:
    """Per-bin distance of the frequency-domain soft design to its two limits."""
    scene = prepared.scene if prepared is not None else _staged("scene", lambda: synthesize_scene(cfg.scenario))
    model = _staged(
        "freq_model",
        lambda: estimate_freq_model(
            scene.stacked(Component.SPEECH),
            scene.stacked(Component.TOTAL),
            cfg.g_hat,
            cfg.fft_size,
            scene.sample_rate_hz,
            scene.reference_mic,
        ),
    )
    rows = _staged("freq_design", lambda: limit_distances(model, cfg.design.delta, freq_check_grid(cfg.mu_grid)))
    valid = int(model.valid.sum())
    return FreqCheckReport(rows, valid, model.n_bins)


def export_artifacts(
    result: SweepResult,
    prepared: Prepared,
    out_dir: Path | str,
    emit_wav: bool = True,
    normalize_wav: bool = False,
    freq_report: FreqCheckReport | None = None,
) -> list[Path]:
    """Write CSVs, filters, ReIRs, optional WAVs and ``manifest.json``; return the paths."""
    out_dir = Path(out_dir)
    cfg = prepared.cfg
    scene = prepared.scene
    fs = scene.sample_rate_hz
    written: list[Path] = []

    def text(rel: str, body: str):
        path = out_dir / rel
        _write_text(path, body)
        written.append(path)

    def guarded(path: Path, fn):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            out = fn(path)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
        return out

    text("metrics.csv", result.csv())
    if freq_report is not None:
        text("freq_limits.csv", freq_report.csv())
    for label, w in result.filters.items():
        guarded(out_dir / "filters" / f"{label}.txt", lambda p, w=w: write_control_filter(p, w.taps))
    guarded(out_dir / "reirs.txt", lambda p: write_reirs(p, prepared.reirs.reirs, prepared.reirs.reference_mic))

    gains: dict[str, float] = {}
    if emit_wav:
        leakage = scene.leakage.samples
        for label, out in result.outputs.items():
            signals = {"e": out.e, "e_speech": out.e_speech, "e_noise": out.e_noise, "leakage": leakage}
            for name, data in signals.items():
                rel = f"wav/{label}/{name}.wav"
                gains[rel] = guarded(out_dir / rel, lambda p, d=data: write_wav(p, d, fs, normalize_wav))

    manifest = {
        "config": cfg.resolved,
        "config_hash": result.provenance["config_hash"],
        "seed": cfg.seed,
        "version": __version__,
        "provenance": result.provenance,
        "wav_gains": gains if normalize_wav else {},
        "files": sorted(str(p.relative_to(out_dir)) for p in written),
    }
    text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return written
