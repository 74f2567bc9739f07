"""The numba and numpy kernel paths must agree on values and shapes."""

import numpy as np
import pytest

from fixed_dg import kernels


@pytest.mark.parametrize("stride,pad", [(1, 0), (2, 0), (1, 2), (3, 1)])
def test_conv_paths_agree(rng, stride, pad):
    x = rng.uniform(-1, 1, (3, 4, 17))
    w = rng.uniform(-1, 1, (5, 4, 3))
    b = rng.uniform(-1, 1, 5)
    length = kernels.out_length(17, 3, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    out_np = kernels.conv1d_forward_np(xp, w, b, stride, length)
    out_active = kernels.conv1d_forward(xp, w, b, stride, length)
    assert out_np.shape == (3, 5, length)
    assert np.abs(out_np - out_active).max() < 1e-12

    gout = rng.uniform(-1, 1, out_np.shape)
    for a, bb in zip(kernels.conv1d_backward_np(xp, w, gout, stride), kernels.conv1d_backward(xp, w, gout, stride)):
        assert np.abs(a - bb).max() < 1e-12


def test_out_length_formula():
    assert kernels.out_length(10, 3, 1, 0) == 8
    assert kernels.out_length(10, 4, 2, 0) == 4
    assert kernels.out_length(8, 3, 1, 1) == 8


@pytest.mark.parametrize("width", [2, 3, 5])
def test_maxpool_paths_agree(rng, width):
    x = rng.uniform(-1, 1, (2, 3, 13))
    out_np, arg_np = kernels.maxpool1d_forward_np(x, width)
    out_active, arg_active = kernels.maxpool1d_forward(x, width)
    assert np.array_equal(out_np, out_active)
    assert np.array_equal(arg_np, arg_active)

    gout = rng.uniform(-1, 1, out_np.shape)
    g_np = kernels.maxpool1d_backward_np(arg_np, gout, 13)
    g_active = kernels.maxpool1d_backward(np.asarray(arg_active), gout, 13)
    assert np.array_equal(g_np, g_active)


def test_maxpool_selects_maxima(rng):
    x = rng.uniform(-1, 1, (1, 1, 8))
    out, _ = kernels.maxpool1d_forward_np(x, 2)
    assert np.array_equal(out[0, 0], x[0, 0].reshape(4, 2).max(axis=1))


def test_backend_reports_selection():
    assert kernels.active_backend() in ("numba", "numpy")
