import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# (criterion number, description, passed, detail) collected by test_acceptance
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture(scope="session")
def desk_cfg():
    from ssanc.config import load_config

    return load_config(profile="desk")


@pytest.fixture(scope="session")
def desk_prep(desk_cfg):
    from ssanc.sweep import prepare

    return prepare(desk_cfg)


@pytest.fixture(scope="session")
def desk_result(desk_cfg, desk_prep):
    from ssanc.sweep import run_sweep

    return run_sweep(desk_cfg, desk_prep)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {detail}")
