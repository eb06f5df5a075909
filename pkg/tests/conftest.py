import numpy as np
import pytest

from hkflow.domain import Ball, classify_nodes
from hkflow.operators import OperatorParams
from hkflow.solver import radial_oracle, solve_on_grid


@pytest.fixture(scope="session")
def p21():
    return OperatorParams(2, 1.0)


@pytest.fixture(scope="session")
def disk():
    return Ball((0.0, 0.0), 1.0)


@pytest.fixture(scope="session")
def oracle(p21):
    return radial_oracle(p21, 0.0, 1.0, 1e-3)


@pytest.fixture(scope="session")
def disk_solutions(disk, oracle, p21):
    """Converged disk solutions with radial-oracle data on 33, 65, 129 point grids."""
    out = []
    for m in (33, 65, 129):
        grid = classify_nodes(disk, 2.0 / (m - 1))
        u, rep = solve_on_grid(grid, oracle.field, p21)
        err = float(np.max(np.abs(u.nodal - oracle.field(grid.nodes))))
        out.append((grid, u, rep, err))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
