from __future__ import annotations

import numpy as np
import pytest

from countdisagg.attendance import STARTING, JourneyTypeSpec, TimeGrid, attendance_table
from countdisagg.config import guiding_example
from countdisagg.distributions import Dirac, TruncatedGaussianMixture, Uniform


@pytest.fixture(scope="session")
def guiding():
    return guiding_example()


@pytest.fixture(scope="session")
def guiding_counters():
    return np.sort(np.random.default_rng(12345).random(50))


@pytest.fixture(scope="session")
def guiding_table(guiding, guiding_counters):
    return attendance_table(guiding.journeys, guiding.grid, guiding_counters, guiding.quadrature)


@pytest.fixture
def smooth_spec():
    """A journey whose laws are all smooth mixtures inside [0, 1]."""
    return JourneyTypeSpec(
        "AB", STARTING, Dirac(2.0),
        TruncatedGaussianMixture((1.0,), (0.3,), (0.15,), (0.0, 1.0)),
        TruncatedGaussianMixture((1.0,), (0.7,), (0.15,), (0.0, 1.0)),
        TruncatedGaussianMixture((1.0,), (9.0,), (1.0,), (0.0, 24.0)),
    )


@pytest.fixture
def hourly():
    return TimeGrid(0.0, 24, 1.0)


def uniform_spec(label="UU", variant=STARTING):
    return JourneyTypeSpec(label, variant, Dirac(2.0), Uniform(0.0, 1.0), Uniform(0.0, 1.0),
                           Uniform(6.0, 10.0))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
