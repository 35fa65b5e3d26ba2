import warnings
from functools import lru_cache

import numpy as np
import pytest

from areainertia import bench
from areainertia.core import AreaDataset, SignalTrace


CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@lru_cache(maxsize=None)
def simulated(name):
    """(scenario, simulation result, raw dataset) of a shipped fixture, cached."""
    cfg = bench.load_fixture(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result, ds = bench.simulate_scenario(cfg)
    return cfg, result, ds


@pytest.fixture(scope="session")
def three_area():
    return simulated("three_area")


@pytest.fixture(scope="session")
def two_area():
    return simulated("two_area")


@pytest.fixture(scope="session")
def single_machine():
    return simulated("single_machine")


def make_dataset(speeds, powers, dt, areas=None, t0=0.0, disturbance_time=None, clear_time=None):
    areas = areas or [f"A{k}" for k in range(len(speeds))]
    return AreaDataset(
        tuple(areas),
        tuple(SignalTrace(np.asarray(s, float), dt, t0) for s in speeds),
        tuple(SignalTrace(np.asarray(p, float), dt, t0) for p in powers),
        disturbance_time,
        clear_time,
    )
