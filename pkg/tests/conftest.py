import warnings

import numpy as np
import pytest

from vlasovwave.formfactors import make_bump
from vlasovwave.grids import Grid1D, phase_bumps

TWO_BUMPS = [(-1.0, 0.5, 1.5, 1.5, 1.0), (1.5, -0.5, 1.2, 1.2, 0.7)]


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture
def grid64():
    return Grid1D(-8.0, 8.0, 64)


@pytest.fixture
def f0_64(grid64):
    return phase_bumps(grid64, grid64, TWO_BUMPS)


@pytest.fixture
def sigmas():
    return make_bump(1, 1.0, 2.0), make_bump(3, 1.0, 2.0)


def rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(np.max(np.abs(b)), 1e-300))


def lp_w1(xa, wa, xb, wb):
    """Brute-force optimal transport on the line: min <|x_i - y_j|, P> over couplings."""
    from scipy.optimize import linprog

    na, nb = len(xa), len(xb)
    cost = np.abs(np.subtract.outer(np.asarray(xa), np.asarray(xb))).ravel()
    rows = np.zeros((na + nb, na * nb))
    for i in range(na):
        rows[i, i * nb:(i + 1) * nb] = 1.0
    for j in range(nb):
        rows[na + j, j::nb] = 1.0
    res = linprog(cost, A_eq=rows, b_eq=np.concatenate([wa, wb]), bounds=(0, None), method="highs")
    return float(res.fun)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
