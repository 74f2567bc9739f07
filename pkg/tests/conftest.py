import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_difference(f, x, h=1e-5):
    """Independent gradient oracle: central finite differences, elementwise.

    f maps an ndarray to a python float and must not share state with
    the autodiff path under test.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def max_rel_err(got, want):
    scale = max(float(np.abs(want).max()), 1.0)
    return float(np.abs(got - want).max()) / scale
