"""Hot numeric kernels: 1-D convolution and max-pooling.

Each kernel has two interchangeable implementations:

* numba ``@njit`` loops, used by default when numba is importable, and
* a pure-numpy path built from shifted strided slices.

The env var ``FIXED_DG_NUMBA`` selects the path: ``0`` forces numpy,
``1`` requires numba (ImportError if missing), unset means "numba if
available". Both paths compute the same values up to floating-point
summation order; ``benchmarks/bench_kernels.py`` times them against
each other.

Convolution kernels take the already padded input ``xp`` so the loop
bodies stay branch-free.
"""

import os

import numpy as np

_flag = os.environ.get("FIXED_DG_NUMBA", "").strip()

if _flag == "0":
    _HAVE_NUMBA = False
else:
    try:
        import numba

        _HAVE_NUMBA = True
    except ImportError:
        if _flag == "1":
            raise ImportError("FIXED_DG_NUMBA=1 but numba is not installed")
        _HAVE_NUMBA = False


def active_backend() -> str:
    """Name of the kernel path selected at import time: 'numba' or 'numpy'."""
    return "numba" if _HAVE_NUMBA else "numpy"


def out_length(t: int, kernel: int, stride: int, padding: int) -> int:
    """Output length of a 1-D convolution: floor((T + 2p - K)/s) + 1."""
    return (t + 2 * padding - kernel) // stride + 1


# -- pure numpy --------------------------------------------------------------
# The loops below run over kernel taps only (K iterations); the batch/length
# axes are handled by BLAS through matmul on strided views.


def conv1d_forward_np(xp, w, b, stride, length):
    taps = w.shape[2]
    acc = np.zeros((xp.shape[0], length, w.shape[0]))
    for k in range(taps):
        seg = xp[:, :, k : k + stride * length : stride]  # [B, Cin, L]
        acc += seg.transpose(0, 2, 1) @ w[:, :, k].T
    return acc.transpose(0, 2, 1) + b[None, :, None]


def conv1d_backward_np(xp, w, gout, stride):
    length = gout.shape[2]
    taps = w.shape[2]
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    gt = gout.transpose(0, 2, 1)  # [B, L, Cout]
    for k in range(taps):
        seg = xp[:, :, k : k + stride * length : stride]
        gw[:, :, k] = np.tensordot(gout, seg, axes=([0, 2], [0, 2]))
        gxp[:, :, k : k + stride * length : stride] += (gt @ w[:, :, k]).transpose(0, 2, 1)
    gb = gout.sum(axis=(0, 2))
    return gxp, gw, gb


def maxpool1d_forward_np(x, width):
    b, c, t = x.shape
    length = t // width
    xv = x[:, :, : length * width].reshape(b, c, length, width)
    arg = xv.argmax(axis=3)
    out = np.take_along_axis(xv, arg[..., None], axis=3)[..., 0]
    return out, arg + np.arange(length)[None, None, :] * width


def maxpool1d_backward_np(arg, gout, t):
    # windows are disjoint (stride == width), so plain fancy assignment suffices
    b, c, _ = gout.shape
    gx = np.zeros((b, c, t))
    gx[np.arange(b)[:, None, None], np.arange(c)[None, :, None], arg] = gout
    return gx


# -- numba -------------------------------------------------------------------

if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _conv1d_forward_nb(xp, w, b, stride, length):
        bs, cin, _ = xp.shape
        cout, _, taps = w.shape
        out = np.empty((bs, cout, length))
        for i in range(bs):
            for o in range(cout):
                for pos in range(length):
                    base = pos * stride
                    acc = b[o]
                    for c in range(cin):
                        for k in range(taps):
                            acc += xp[i, c, base + k] * w[o, c, k]
                    out[i, o, pos] = acc
        return out

    @numba.njit(cache=True)
    def _conv1d_backward_nb(xp, w, gout, stride):
        bs, cin, tp = xp.shape
        cout, _, taps = w.shape
        length = gout.shape[2]
        gxp = np.zeros((bs, cin, tp))
        gw = np.zeros((cout, cin, taps))
        gb = np.zeros(cout)
        for i in range(bs):
            for o in range(cout):
                for pos in range(length):
                    g = gout[i, o, pos]
                    gb[o] += g
                    base = pos * stride
                    for c in range(cin):
                        for k in range(taps):
                            gxp[i, c, base + k] += g * w[o, c, k]
                            gw[o, c, k] += g * xp[i, c, base + k]
        return gxp, gw, gb

    @numba.njit(cache=True)
    def _maxpool1d_forward_nb(x, width):
        bs, cs, t = x.shape
        length = t // width
        out = np.empty((bs, cs, length))
        arg = np.empty((bs, cs, length), dtype=np.int64)
        for i in range(bs):
            for c in range(cs):
                for pos in range(length):
                    base = pos * width
                    best = x[i, c, base]
                    besti = base
                    for k in range(1, width):
                        v = x[i, c, base + k]
                        if v > best:
                            best = v
                            besti = base + k
                    out[i, c, pos] = best
                    arg[i, c, pos] = besti
        return out, arg

    @numba.njit(cache=True)
    def _maxpool1d_backward_nb(arg, gout, t):
        bs, cs, length = gout.shape
        gx = np.zeros((bs, cs, t))
        for i in range(bs):
            for c in range(cs):
                for pos in range(length):
                    gx[i, c, arg[i, c, pos]] += gout[i, c, pos]
        return gx

    conv1d_forward = _conv1d_forward_nb
    conv1d_backward = _conv1d_backward_nb
    maxpool1d_forward = _maxpool1d_forward_nb
    maxpool1d_backward = _maxpool1d_backward_nb
else:
    conv1d_forward = conv1d_forward_np
    conv1d_backward = conv1d_backward_np
    maxpool1d_forward = maxpool1d_forward_np
    maxpool1d_backward = maxpool1d_backward_np
