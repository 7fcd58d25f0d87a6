import numpy as np
import pytest

from racp.problem_gen import (GridParams, SaddleSystem, generate_floating_side, generate_fracture_cube,
                              generate_random_spd_saddle)
from racp.sparse import SparseMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cube2():
    return generate_fracture_cube(GridParams())


@pytest.fixture(scope="session")
def floating2():
    return generate_floating_side()


@pytest.fixture(scope="session")
def cube4():
    return generate_fracture_cube(GridParams(nx=4, ny=4, nz=4, fracture_index=2, distortion=0.3))


@pytest.fixture(scope="session")
def small_random():
    return generate_random_spd_saddle(40, 8, seed=7)


@pytest.fixture
def tiny_system():
    """A = I_2, B = e_1: the smallest non-trivial saddle system."""
    a = SparseMatrix.identity(2)
    b = SparseMatrix.from_dense(np.array([[1.0], [0.0]]))
    return SaddleSystem(a, b)


@pytest.fixture
def report(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.__dict__.setdefault("_racp_acceptance", [])

    def _report(number, title, ok, detail=""):
        lines.append((number, f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"))
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_racp_acceptance", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
