from __future__ import annotations

import numpy as np
import pytest

from mricap.data import read_bundled
from mricap.system import (
    BaseCase,
    IntermittentSpec,
    LoadModel,
    PerfectSpec,
    StorageSpec,
    ThermalSpec,
    parse_system_config,
)


def bundled(name: str) -> BaseCase:
    return parse_system_config(read_bundled(name))


@pytest.fixture(scope="session")
def oracle2h() -> BaseCase:
    return bundled("oracle2h.json")


@pytest.fixture(scope="session")
def oracle3h() -> BaseCase:
    return bundled("oracle3h.json")


@pytest.fixture(scope="session")
def table1() -> BaseCase:
    return bundled("table1.json")


@pytest.fixture(scope="session")
def two_resource() -> BaseCase:
    return bundled("two_resource.json")


def make_case(demand, resources, weights=None, voll=9000.0) -> BaseCase:
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    if weights is None:
        weights = np.full(demand.shape[0], 1.0 / demand.shape[0])
    return BaseCase(LoadModel(np.asarray(weights, dtype=float), demand), resources, voll)


def small_mixed_case() -> BaseCase:
    """Two profiles, two iid units, an intermittent and a storage; small enough to enumerate."""
    return make_case(
        [[100.0, 120.0, 90.0], [110.0, 130.0, 80.0]],
        {
            "P": PerfectSpec(60.0),
            "G1": ThermalSpec(40.0, 0.2, outage_mode="iid"),
            "G2": ThermalSpec(30.0, 0.1, outage_mode="iid"),
            "W": IntermittentSpec(20.0, np.array([[10.0, 0.0, 20.0], [5.0, 15.0, 0.0]])),
            "S": StorageSpec(10.0, 10.0, 15.0),
        },
        weights=[0.3, 0.7],
    )


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
