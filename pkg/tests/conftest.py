import numpy as np
import pytest
from hypothesis import settings

from dyadiclab.geometry import GridSpec
from dyadiclab.haar import GridFunction, Mesh
from dyadiclab.scalar import EXACT, convert

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_int_function(mesh: Mesh, rng, backend=EXACT, lo=-5, hi=5) -> GridFunction:
    return GridFunction(mesh, convert(rng.integers(lo, hi + 1, size=mesh.shape), backend))


@pytest.fixture
def mesh3():
    return Mesh(1, 1, 3, 3)


@pytest.fixture
def grid3():
    return GridSpec(1, 1, 3, 3)
