"""Reverse-mode automatic differentiation on a per-step tape.

Every training step builds a fresh :class:`Tape`, records float64
forward values, and calls :meth:`Tape.backward` once on a scalar loss.
Nodes are appended in topological order, so the backward sweep is a
single reverse pass that visits each node at most once.

All exposed operations reject non-finite forward values; the backward
pass rejects non-finite gradients, naming the first offending node.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, NumericsError, ShapeError


class Tensor:
    """Dense float64 value, optionally recorded on a tape via ``node_id``."""

    __slots__ = ("data", "node_id")

    def __init__(self, data, node_id=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, node_id={self.node_id})"


@dataclass
class BNStats:
    """Running batch-norm statistics, updated in place during training."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, width: int) -> "BNStats":
        return cls(mean=np.zeros(width), var=np.ones(width))

    def copy(self) -> "BNStats":
        return BNStats(self.mean.copy(), self.var.copy())


def _bcast_ok(a_shape, b_shape):
    """True if b broadcasts over the leading axes of a (trailing match)."""
    k = len(a_shape) - len(b_shape)
    return k >= 0 and tuple(a_shape[k:]) == tuple(b_shape)


class Tape:
    """Append-only gradient graph for one forward/backward pass."""

    def __init__(self):
        self._ops: list[str] = []
        self._parents: list[tuple[int, ...]] = []
        self._bwd: list = []
        self._shapes: list[tuple[int, ...]] = []
        self._watched: set[int] = set()

    def __len__(self):
        return len(self._ops)

    # -- recording ------------------------------------------------------

    def _record(self, op, value, parents, bwd):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericsError(f"op '{op}' produced non-finite values")
        nid = len(self._ops)
        self._ops.append(op)
        self._parents.append(parents)
        self._bwd.append(bwd)
        self._shapes.append(value.shape)
        return Tensor(value, nid)

    def leaf(self, data, requires_grad=True) -> Tensor:
        t = self._record("leaf", data, (), None)
        if requires_grad:
            self._watched.add(t.node_id)
        return t

    def watch(self, t: Tensor) -> Tensor:
        """Flag a recorded tensor so backward() reports its gradient."""
        if t.node_id is None:
            raise ShapeError("watch", "tensor is not recorded on this tape")
        self._watched.add(t.node_id)
        return t

    def _ids(self, *tensors):
        for t in tensors:
            if t.node_id is None or t.node_id >= len(self._ops):
                raise ShapeError("record", "operand tensor is not recorded on this tape")
        return tuple(t.node_id for t in tensors)

    # -- elementwise / linear algebra ------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.data, b.data
        if av.shape == bv.shape:
            reduce_b = None
        elif _bcast_ok(av.shape, bv.shape):
            reduce_b = tuple(range(av.ndim - bv.ndim))
        else:
            raise ShapeError("add", f"shapes {av.shape} and {bv.shape} are not batch-broadcastable")

        def bwd(g):
            gb = g if reduce_b is None else g.sum(axis=reduce_b)
            return g, gb

        return self._record("add", av + bv, self._ids(a, b), bwd)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.data, b.data
        if av.shape == bv.shape:
            reduce_b = None
        elif _bcast_ok(av.shape, bv.shape):
            reduce_b = tuple(range(av.ndim - bv.ndim))
        else:
            raise ShapeError("sub", f"shapes {av.shape} and {bv.shape} are not batch-broadcastable")

        def bwd(g):
            gb = -g if reduce_b is None else -g.sum(axis=reduce_b)
            return g, gb

        return self._record("sub", av - bv, self._ids(a, b), bwd)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.shape != b.data.shape:
            raise ShapeError("mul", f"shapes {a.data.shape} and {b.data.shape} differ")
        av, bv = a.data, b.data
        return self._record("mul", av * bv, self._ids(a, b), lambda g: (g * bv, g * av))

    def scale(self, a: Tensor, c: float) -> Tensor:
        c = float(c)
        return self._record("scale", a.data * c, self._ids(a), lambda g: (g * c,))

    def mul_const(self, a: Tensor, c) -> Tensor:
        """Elementwise multiply by a constant array; no gradient flows to c."""
        c = np.asarray(c, dtype=np.float64)
        out = a.data * c
        if out.shape != a.data.shape:
            raise ShapeError("mul_const", f"constant {c.shape} does not broadcast into {a.data.shape}")
        return self._record("mul_const", out, self._ids(a), lambda g: (g * c,))

    def add_const(self, a: Tensor, c) -> Tensor:
        c = np.asarray(c, dtype=np.float64)
        out = a.data + c
        if out.shape != a.data.shape:
            raise ShapeError("add_const", f"constant {c.shape} does not broadcast into {a.data.shape}")
        return self._record("add_const", out, self._ids(a), lambda g: (g,))

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.data, b.data
        if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
            raise ShapeError("matmul", f"inner dimensions disagree: {av.shape} x {bv.shape}")
        return self._record(
            "matmul", av @ bv, self._ids(a, b), lambda g: (g @ bv.T, av.T @ g)
        )

    def transpose(self, a: Tensor) -> Tensor:
        if a.data.ndim != 2:
            raise ShapeError("transpose", f"expected 2-d operand, got shape {a.data.shape}")
        return self._record("transpose", a.data.T, self._ids(a), lambda g: (g.T,))

    def reshape(self, a: Tensor, shape) -> Tensor:
        old = a.data.shape
        try:
            out = a.data.reshape(shape)
        except ValueError:
            raise ShapeError("reshape", f"cannot reshape {old} into {tuple(shape)}") from None
        return self._record("reshape", out, self._ids(a), lambda g: (g.reshape(old),))

    # -- nonlinearities ---------------------------------------------------

    def relu(self, a: Tensor) -> Tensor:
        mask = a.data > 0  # subgradient at 0 is 0
        return self._record("relu", np.where(mask, a.data, 0.0), self._ids(a), lambda g: (g * mask,))

    # -- reductions -------------------------------------------------------

    def sum(self, a: Tensor) -> Tensor:
        shape = a.data.shape
        return self._record("sum", a.data.sum(), self._ids(a), lambda g: (np.broadcast_to(g, shape).copy(),))

    def mean(self, a: Tensor) -> Tensor:
        shape = a.data.shape
        n = a.data.size
        return self._record(
            "mean", a.data.mean(), self._ids(a), lambda g: (np.broadcast_to(g / n, shape).copy(),)
        )

    def mean_rows(self, a: Tensor) -> Tensor:
        """Mean over axis 0 of a 2-d tensor: [B, F] -> [F]."""
        if a.data.ndim != 2:
            raise ShapeError("mean_rows", f"expected 2-d operand, got shape {a.data.shape}")
        b = a.data.shape[0]
        return self._record(
            "mean_rows",
            a.data.mean(axis=0),
            self._ids(a),
            lambda g: (np.broadcast_to(g / b, a.data.shape).copy(),),
        )

    def l2norm(self, a: Tensor) -> Tensor:
        av = a.data
        out = float(np.sqrt((av * av).sum()))

        def bwd(g):
            if out == 0.0:
                return (np.zeros_like(av),)
            return (g * av / out,)

        return self._record("l2norm", out, self._ids(a), bwd)

    # -- gathers ----------------------------------------------------------

    def gather_rows(self, a: Tensor, index) -> Tensor:
        index = np.asarray(index, dtype=np.int64)
        if index.ndim != 1:
            raise ShapeError("gather_rows", f"index must be 1-d, got shape {index.shape}")
        if index.size and (index.min() < 0 or index.max() >= a.data.shape[0]):
            raise ShapeError("gather_rows", f"index out of range for {a.data.shape[0]} rows")
        shape = a.data.shape

        def bwd(g):
            ga = np.zeros(shape)
            np.add.at(ga, index, g)
            return (ga,)

        return self._record("gather_rows", a.data[index], self._ids(a), bwd)

    def gather_cols(self, a: Tensor, index) -> Tensor:
        """Pick a[i, index[i]] per row of a 2-d tensor -> [B]."""
        index = np.asarray(index, dtype=np.int64)
        if a.data.ndim != 2 or index.shape != (a.data.shape[0],):
            raise ShapeError("gather_cols", f"need [B,K] tensor and [B] index, got {a.data.shape} / {index.shape}")
        if index.size and (index.min() < 0 or index.max() >= a.data.shape[1]):
            raise ShapeError("gather_cols", f"index out of range for {a.data.shape[1]} columns")
        rows = np.arange(a.data.shape[0])
        shape = a.data.shape

        def bwd(g):
            ga = np.zeros(shape)
            ga[rows, index] = g
            return (ga,)

        return self._record("gather_cols", a.data[rows, index], self._ids(a), bwd)

    # -- structured ops ----------------------------------------------------

    def conv1d(self, x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
        xv, wv, bv = x.data, w.data, b.data
        if xv.ndim != 3 or wv.ndim != 3 or xv.shape[1] != wv.shape[1]:
            raise ShapeError("conv1d", f"need x[B,C,T], w[O,C,K] with matching C: {xv.shape} / {wv.shape}")
        if bv.shape != (wv.shape[0],):
            raise ShapeError("conv1d", f"bias shape {bv.shape} != ({wv.shape[0]},)")
        if stride < 1 or padding < 0:
            raise ConfigError(f"conv1d: invalid stride={stride} padding={padding}")
        length = kernels.out_length(xv.shape[2], wv.shape[2], stride, padding)
        if length < 1:
            raise ShapeError("conv1d", f"input length {xv.shape[2]} too short for kernel {wv.shape[2]}")
        xp = np.pad(xv, ((0, 0), (0, 0), (padding, padding))) if padding else xv
        out = kernels.conv1d_forward(xp, wv, bv, stride, length)

        def bwd(g):
            gxp, gw, gb = kernels.conv1d_backward(xp, wv, g, stride)
            gx = gxp[:, :, padding : padding + xv.shape[2]] if padding else gxp
            return gx, gw, gb

        return self._record("conv1d", out, self._ids(x, w, b), bwd)

    def maxpool1d(self, x: Tensor, width: int) -> Tensor:
        xv = x.data
        if xv.ndim != 3:
            raise ShapeError("maxpool1d", f"need x[B,C,T], got {xv.shape}")
        if width < 1 or xv.shape[2] < width:
            raise ShapeError("maxpool1d", f"pool width {width} invalid for length {xv.shape[2]}")
        out, arg = kernels.maxpool1d_forward(xv, width)
        t = xv.shape[2]
        return self._record(
            "maxpool1d", out, self._ids(x), lambda g: (kernels.maxpool1d_backward(arg, g, t),)
        )

    def batchnorm(
        self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        running: BNStats,
        training: bool,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ) -> Tensor:
        xv = x.data
        if xv.ndim == 2:
            axes, width = (0,), xv.shape[1]
            expand = lambda v: v[None, :]
        elif xv.ndim == 3:
            axes, width = (0, 2), xv.shape[1]
            expand = lambda v: v[None, :, None]
        else:
            raise ShapeError("batchnorm", f"need 2-d or 3-d input, got {xv.shape}")
        if gamma.data.shape != (width,) or beta.data.shape != (width,):
            raise ShapeError("batchnorm", f"gamma/beta must have shape ({width},)")
        gv, bv = gamma.data, beta.data

        if training:
            mu = xv.mean(axis=axes)
            var = xv.var(axis=axes)
            running.mean[:] = (1.0 - momentum) * running.mean + momentum * mu
            running.var[:] = (1.0 - momentum) * running.var + momentum * var
        else:
            mu, var = running.mean.copy(), running.var.copy()

        invstd = 1.0 / np.sqrt(var + eps)
        xhat = (xv - expand(mu)) * expand(invstd)
        out = expand(gv) * xhat + expand(bv)
        n = xv.size // width

        def bwd(g):
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            if training:
                dxhat = g * expand(gv)
                dx = (
                    expand(invstd)
                    / n
                    * (n * dxhat - expand(dxhat.sum(axis=axes)) - xhat * expand((dxhat * xhat).sum(axis=axes)))
                )
            else:
                dx = g * expand(gv * invstd)
            return dx, dgamma, dbeta

        return self._record("batchnorm", out, self._ids(x, gamma, beta), bwd)

    def softmax_xent(self, logits: Tensor, target_probs) -> Tensor:
        """Fused mean over the batch of -sum_k t_k * log softmax(logits)_k."""
        t = np.asarray(target_probs, dtype=np.float64)
        lv = logits.data
        if lv.ndim != 2 or t.shape != lv.shape:
            raise ShapeError("softmax_xent", f"logits {lv.shape} and targets {t.shape} must be equal 2-d shapes")
        if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-6):
            raise ShapeError("softmax_xent", "target rows must be probability vectors")
        b = lv.shape[0]
        z = lv - lv.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
        logp = z - lse
        loss = -(t * logp).sum() / b
        sm = np.exp(logp)
        return self._record(
            "softmax_xent", loss, self._ids(logits), lambda g: (g * (sm - t) / b,)
        )

    def grad_reverse(self, a: Tensor, eta: float) -> Tensor:
        """Identity forward; backward multiplies the gradient by -eta."""
        eta = float(eta)
        if eta < 0:
            raise ConfigError(f"grad_reverse: eta must be >= 0, got {eta}")
        return self._record("grad_reverse", a.data.copy(), self._ids(a), lambda g: (-eta * g,))

    # -- backward ----------------------------------------------------------

    def backward(self, loss: Tensor) -> dict:
        """Gradients of a scalar loss for every watched node (zeros if unreachable)."""
        if loss.node_id is None or loss.node_id >= len(self._ops):
            raise ShapeError("backward", "loss is not recorded on this tape")
        if self._shapes[loss.node_id] != ():
            raise ShapeError("backward", f"loss must be scalar, got shape {self._shapes[loss.node_id]}")

        grads: dict[int, np.ndarray] = {loss.node_id: np.asarray(1.0)}
        for nid in range(loss.node_id, -1, -1):
            g = grads.get(nid)
            if g is None:
                continue
            bwd = self._bwd[nid]
            if bwd is None:
                continue
            pgrads = bwd(g)
            for pid, pg in zip(self._parents[nid], pgrads):
                if pg is None:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NumericsError(
                        f"non-finite gradient entering node {pid} (op '{self._ops[pid]}') "
                        f"out of node {nid} (op '{self._ops[nid]}')"
                    )
                acc = grads.get(pid)
                grads[pid] = pg if acc is None else acc + pg

        return {
            nid: grads.get(nid, np.zeros(self._shapes[nid])) for nid in self._watched
        }
