"""Command-line entry point: ``ssanc run <config> [options]``.

Exit codes: 0 on success, 2 on configuration or I/O errors, 3 on numerical
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PROFILES, load_config
from .errors import ConfigError, NumericalError, SsancError
from .sweep import THREADS_ENV, export_artifacts, prepare, run_freq_checks, run_sweep

log = logging.getLogger("ssanc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssanc", description="Spatially selective ANC filter design and evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser(
        "run",
        help="run a design sweep",
        description=f"Design and evaluate filters over the mu grid. Worker threads: ${THREADS_ENV}.",
    )
    run.add_argument("config", nargs="?", type=Path, help="TOML config; omitted keys come from the profile")
    run.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    run.add_argument("--seed", type=int, help="scene seed (overrides [scenario] seed)")
    run.add_argument("--profile", choices=PROFILES, default="desk", help="base profile (default: desk)")
    run.add_argument("--freq-checks", action="store_true", help="also write freq_limits.csv")
    run.add_argument("--no-wav", action="store_true", help="write CSVs and text files only")
    return parser


def _overrides(args) -> dict:
    over: dict = {}
    if args.out is not None:
        over.setdefault("output", {})["dir"] = str(args.out)
    if args.seed is not None:
        over.setdefault("scenario", {})["seed"] = args.seed
    if args.no_wav:
        over.setdefault("output", {})["emit_wav"] = False
    if args.freq_checks:
        over.setdefault("output", {})["freq_checks"] = True
    return over


def cmd_run(args) -> int:
    cfg = load_config(args.config, profile=args.profile, overrides=_overrides(args))
    log.info("config hash %s", cfg.config_hash)
    prep = prepare(cfg)
    result = run_sweep(cfg, prep, partial_dir=cfg.out_dir)
    freq = run_freq_checks(cfg, prep) if cfg.freq_checks else None
    written = export_artifacts(result, prep, cfg.out_dir, cfg.emit_wav, cfg.normalize_wav, freq)
    print(result.csv(), end="")
    log.info("wrote %d files to %s", len(written), cfg.out_dir)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SsancError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
