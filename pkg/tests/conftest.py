import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tvlob import LiquidityProfile, TimeGrid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    number, title = marker
    passed = _criteria.get(number, (True, title))[0]
    if report.failed or (report.when == "call" and report.skipped):
        passed = False
    _criteria[number] = (passed, title)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")


@pytest.fixture
def ow_profile():
    return LiquidityProfile.constant(1.0, 2.0, 1.0)


def random_profile(rng, family=None, gamma=0.0):
    """A smooth random profile with constant rho and K bounded away from 0."""
    family = family or rng.choice(["constant", "exponential", "straight-line", "quadratic"])
    rho = rng.uniform(0.3, 4.0)
    T = rng.uniform(0.5, 2.0)
    kappa = rng.uniform(0.2, 3.0)
    if family == "constant":
        return LiquidityProfile.constant(kappa, rho, T, gamma)
    if family == "exponential":
        return LiquidityProfile.exponential(kappa, rng.uniform(-0.9, 2.0), rho, T, gamma)
    if family == "straight-line":
        return LiquidityProfile.straight_line(kappa, rng.uniform(-0.8 * kappa / T, 2.0), rho, T, gamma)
    return LiquidityProfile.quadratic(kappa, rng.uniform(-0.5, 0.5) * kappa, rng.uniform(0.0, 1.0) * kappa,
                                      rho, T, gamma)


def random_nodes(rng, T, n):
    inner = np.sort(rng.uniform(0, T, n - 1))
    nodes = np.concatenate([[0.0], inner, [T]])
    if np.any(np.diff(nodes) <= 1e-9):
        return np.linspace(0, T, n + 1)
    return nodes


def random_grid(rng, profile, n):
    return TimeGrid.from_nodes(profile, random_nodes(rng, profile.horizon, n))
