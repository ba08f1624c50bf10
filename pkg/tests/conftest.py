"""Shared, session-scoped solutions (the expensive ones are computed once)."""

from __future__ import annotations

import numpy as np
import pytest

from nemcell.continuation import continue_ee_branch, locate_lambda_c, solve_ee_warm
from nemcell.discretization import Grid, Profile

THETA = -8.0
N = 1001


@pytest.fixture(scope="session")
def grid():
    return Grid(N)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(51)


@pytest.fixture(scope="session")
def ee_solutions(grid):
    """Converged EE solutions at theta = -8 keyed by lambda."""
    out = {}
    for lam in (0.2, 0.5, 1.0, 2.0, 5.0, 10.0):
        sol = solve_ee_warm(lam, THETA, grid)
        assert sol.converged
        out[lam] = sol
    return out


@pytest.fixture(scope="session")
def ee_branch(grid):
    """The full theta = -8 EE branch on [0.1, 20], step 0.05."""
    return continue_ee_branch(THETA, 0.1, 20.0, 0.05, grid)


@pytest.fixture(scope="session")
def critical_point(grid):
    return locate_lambda_c(THETA, (0.8, 0.95), grid)


def random_profile(grid: Grid, theta: float, rng: np.random.Generator, amplitude: float = 0.5) -> Profile:
    """Smooth random profile with the exact boundary data of ``theta``."""
    from nemcell.discretization import linear_profile

    base = linear_profile(grid, theta)
    x = grid.nodes
    k = np.arange(1, 5)
    basis = np.sin(np.outer(x + 1.0, k) * np.pi / 2.0)
    coef = rng.uniform(-amplitude, amplitude, (4, 3))
    return Profile(grid, base.q + basis @ coef)


# acceptance reporting ------------------------------------------------------------

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request, capsys):
    """``record(n, title, checks)`` prints one PASS/FAIL line and returns the verdict."""

    def record(n: int, title: str, checks: dict[str, bool]) -> bool:
        failed = [k for k, ok in checks.items() if not ok]
        line = f"criterion {n:>2}: {'PASS' if not failed else 'FAIL'}  {title}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        request.config.stash.setdefault(ACCEPTANCE_KEY, {})[n] = line
        with capsys.disabled():
            print("\n" + line)
        return not failed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
