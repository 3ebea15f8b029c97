import sys

import numpy as np
import pytest


def central_diff(f, x, h=1e-5, stencil=2):
    """Central finite-difference gradient of a scalar function of a flat vector.

    ``stencil=4`` uses the fourth-order five-point formula for steep functions.
    """
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)

    def at(i, step):
        xs = x.copy()
        xs[i] += step
        return f(xs)

    for i in range(x.size):
        if stencil == 4:
            g[i] = (-at(i, 2 * h) + 8 * at(i, h) - 8 * at(i, -h) + at(i, -2 * h)) / (12 * h)
        else:
            g[i] = (at(i, h) - at(i, -h)) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol, atol=1e-9):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.max(np.abs(numeric)), 1e-12)
    err = np.max(np.abs(analytic - numeric))
    assert err <= rtol * scale + atol, f"max abs error {err:.3e} vs scale {scale:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
