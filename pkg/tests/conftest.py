import numpy as np
import pytest

from surfeig.hierarchy import Hierarchy
from surfeig.mesh import make_fibonacci_sphere, make_octahedron


@pytest.fixture(scope="session")
def octa_hierarchy():
    """Octahedron family: 6, 18, 66, 258, 1026 DoF."""
    return Hierarchy.build(make_octahedron(), 5)


@pytest.fixture(scope="session")
def fib_hierarchy():
    """Unstructured 54-vertex coarse mesh refined to 54, 210, 834, 3330, 13314 DoF."""
    return Hierarchy.build(make_fibonacci_sphere(54), 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
