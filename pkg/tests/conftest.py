import os

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(ROOT, "configs")

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rs():
    # test-side randomness only; the library never uses numpy's default generator
    return np.random.default_rng(12345)


def dense_dft_matrix(n):
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def dense_dft2(a):
    h, w = a.shape
    return dense_dft_matrix(h) @ a @ dense_dft_matrix(w).T


def fd_divergence(fn, y, step=1e-6):
    """Central finite-difference divergence of ``fn`` at ``y``, coordinate by coordinate."""
    y = np.asarray(y, dtype=np.float64)
    total = 0.0
    for idx in np.ndindex(y.shape):
        e = np.zeros_like(y)
        e[idx] = step
        total += (fn(y + e)[idx] - fn(y - e)[idx]) / (2 * step)
    return total
