import dataclasses
import json
import math

import numpy as np
import pytest

from ssanc import sweep
from ssanc.cli import main
from ssanc.config import load_config, mu_grid_from, resolve_config
from ssanc.errors import ConfigError, NotPositiveDefiniteError, NumericalError
from ssanc.io import read_control_filter, read_wav
from ssanc.sweep import CSV_HEADER, FREQ_CSV_HEADER, run_sweep

SHORT = {"sweep": {"mu": [0.01, 1.0]}}


def _toml(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- config ----------------------------------------------------------------------
def test_default_mu_grid():
    grid = mu_grid_from({"log10_mu_min": -5, "log10_mu_max": 0.5, "log10_mu_step": 0.5})
    assert len(grid) == 12
    assert grid[0] == 1e-5 and 0.01 in grid and grid[-1] == pytest.approx(10**0.5)
    assert mu_grid_from({"log10_mu_min": 1, "log10_mu_max": 0, "log10_mu_step": 0.5}) == []
    with pytest.raises(ConfigError):
        mu_grid_from({"log10_mu_min": 0, "log10_mu_max": 1, "log10_mu_step": 0})


@pytest.mark.parametrize("mu", [[1.0, 0.1], [0.1, 0.1], [-1.0], [math.inf]])
def test_invalid_mu_grid(mu):
    with pytest.raises(ConfigError, match="mu grid"):
        load_config(overrides={"sweep": {"mu": mu}})


def test_unknown_and_missing_sections(desk_cfg):
    raw = dict(desk_cfg.resolved)
    with pytest.raises(ConfigError, match="unknown config section"):
        resolve_config({**raw, "extra": {}})
    raw.pop("reir")
    with pytest.raises(ConfigError, match=r"missing \[reir\]"):
        resolve_config(raw)


@pytest.mark.parametrize(
    "over,match",
    [
        ({"sweep": {"fft_size": 300}}, "power of two"),
        ({"sweep": {"highpass_hz": 5000.0}}, "Nyquist"),
        ({"scenario": {"K": "three"}}, "expected int"),
        ({"design": {"delta": -1}}, "design"),
    ],
)
def test_invalid_values(over, match):
    with pytest.raises(ConfigError, match=match):
        load_config(overrides=over)


def test_reference_mic_is_one_based(desk_cfg):
    assert desk_cfg.resolved["scenario"]["reference_mic"] == 1
    assert desk_cfg.scenario.reference_mic == 0


def test_hash_changes_only_with_content(tmp_path, desk_cfg):
    same = load_config(profile="desk")
    assert same.config_hash == desk_cfg.config_hash
    assert load_config(overrides={"scenario": {"seed": 2}}).config_hash != desk_cfg.config_hash
    assert load_config(overrides={"design": {"delta": 5}}).config_hash != desk_cfg.config_hash
    path = _toml(tmp_path, "[scenario]\nseed = 1\n")
    assert load_config(path).config_hash == desk_cfg.config_hash


def test_file_then_overrides(tmp_path):
    path = _toml(tmp_path, "[scenario]\nseed = 5\n[output]\ndir = 'x'\n")
    cfg = load_config(path, overrides={"scenario": {"seed": 9}})
    # output dir is relative to the working directory, input paths to the file
    assert cfg.seed == 9 and str(cfg.out_dir) == "x"


def test_mismatch_estimate(tmp_path):
    cfg = load_config(overrides={"scenario": {"secondary_path": {"estimate_scale": 1.1}}})
    assert np.allclose(cfg.g_hat.taps, 1.1 * cfg.scenario.secondary_path.taps)


def test_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_toml(tmp_path, "[scenario\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError, match="unknown profile"):
        load_config(profile="nope")


def test_full_scale_profile_resolves():
    cfg = load_config(profile="paper")
    d = cfg.design
    assert (cfg.scenario.K, d.L_w, d.L_a, d.L_h, d.delta) == (4, 600, 22, 262, 32)
    assert cfg.scenario.sample_rate_hz == 16000 and d.L_g == 280


# -- sweep ------------------------------------------------------------------------
def test_sweep_rows_and_header(desk_result, desk_cfg):
    lines = desk_result.csv().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) - 1 == len(desk_cfg.mu_grid) + 2
    designs = [r.design for r in desk_result.rows]
    assert designs[0] == "anc" and designs[-1] == "hard"
    nr = [r.nr_db for r in desk_result.rows]
    sd = [r.sd_db for r in desk_result.rows]
    assert np.argmax(nr) == 0 and np.argmin(sd) == len(sd) - 1


def test_empty_grid_gives_two_rows():
    cfg = load_config(overrides={"sweep": {"mu": []}})
    res = run_sweep(cfg)
    assert [r.design for r in res.rows] == ["anc", "hard"]


def test_threads_do_not_change_results(monkeypatch):
    cfg = load_config(overrides=SHORT)
    prep = sweep.prepare(cfg)
    serial = run_sweep(cfg, prep).csv()
    monkeypatch.setenv("SSANC_THREADS", "3")
    assert sweep.thread_count() == 3
    assert run_sweep(cfg, prep).csv() == serial


def test_thread_env_validation(monkeypatch):
    monkeypatch.setenv("SSANC_THREADS", "zero")
    with pytest.raises(ConfigError):
        sweep.thread_count()


def test_partial_results_flushed(tmp_path, monkeypatch):
    cfg = load_config(overrides=SHORT)
    prep = sweep.prepare(cfg)
    real = sweep.noise_reduction
    calls = iter(range(100))

    def flaky(p, e):
        if next(calls) == 2:
            raise FloatingPointError("boom")
        return real(p, e)

    monkeypatch.setattr(sweep, "noise_reduction", flaky)
    with pytest.raises(NumericalError, match=r"stage 'metrics' at mu=1: boom"):
        run_sweep(cfg, prep, partial_dir=tmp_path)
    lines = (tmp_path / "metrics.partial.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 3


def test_freq_checks_report(desk_cfg, desk_prep):
    report = sweep.run_freq_checks(desk_cfg, desk_prep)
    lines = report.csv().splitlines()
    assert lines[0] == FREQ_CSV_HEADER
    last = lines[-1].split(",")
    assert last[0] == "inf" and float(last[2]) == 0.0
    assert 0 < report.n_valid_bins <= report.n_bins


# -- CLI ---------------------------------------------------------------------------
def _short_config(tmp_path):
    return _toml(tmp_path, "[sweep]\nmu = [0.01, 1.0]\n")


def test_cli_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(_short_config(tmp_path)), "--out", str(out), "--freq-checks"]) == 0
    stdout = capsys.readouterr().out
    assert stdout.splitlines()[0] == CSV_HEADER and len(stdout.splitlines()) == 5
    assert (out / "metrics.csv").read_text() == stdout
    assert (out / "freq_limits.csv").exists()
    w = read_control_filter(out / "filters" / "soft_mu0.01.txt")
    assert w.shape == (4, 64)
    e, fs = read_wav(out / "wav" / "hard" / "e.wav")
    assert fs == 8000 and e.shape == (16000,)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1 and len(manifest["config_hash"]) == 64
    assert "wav/anc/leakage.wav" in manifest["files"]
    assert manifest["provenance"]["backend"] in ("numba", "numpy")


def test_cli_no_wav_and_seed(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", str(_short_config(tmp_path)), "--out", str(out), "--no-wav", "--seed", "4"]) == 0
    assert not (out / "wav").exists()
    assert json.loads((out / "manifest.json").read_text())["seed"] == 4


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = _toml(tmp_path, "[bogus]\n")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert "unknown config section" in capsys.readouterr().err


def test_cli_numerical_error_exit_code(tmp_path, monkeypatch, capsys):
    def fail(cfg):
        raise NotPositiveDefiniteError("stage 'precompute': matrix not positive definite; increase beta")

    monkeypatch.setattr("ssanc.cli.prepare", fail)
    assert main(["run", "--out", str(tmp_path)]) == 3
    assert "increase beta" in capsys.readouterr().err


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0 and "ssanc" in capsys.readouterr().out


def test_config_is_frozen(desk_cfg):
    with pytest.raises(dataclasses.FrozenInstanceError):
        desk_cfg.seed = 3
