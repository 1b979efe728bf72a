import functools

import numpy as np
import pytest

from dbcontrol.geometry import make_lshape
from dbcontrol.mesh import build_mesh

#: (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def record(criterion, passed, detail=""):
    ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {criterion}: {status}  {detail}")


@functools.lru_cache(maxsize=None)
def lshape_hierarchy(mu, level):
    """Cached meshes ``[level 0, ..., level]`` of one hierarchy."""
    return tuple(build_mesh(make_lshape(mu), level).hierarchy())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mesh2():
    return lshape_hierarchy(0.5, 3)[2]


@pytest.fixture(scope="session")
def mesh3():
    return lshape_hierarchy(0.5, 3)[3]
