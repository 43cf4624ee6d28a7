"""Reverse-mode automatic differentiation over the dense/sparse ops the losses use.

A :class:`Tape` records primal values in topological order; :func:`backward`
replays it in reverse to accumulate exact gradients for the leaves. Sparse
matrices are always constants on the tape; only dense leaves receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseMatrixCSR, spmm_csr, spmv_csr, transpose


@dataclass
class Node:
    value: np.ndarray
    parents: tuple = ()
    vjps: tuple = ()   # one callable per parent: output_grad -> parent grad piece


class Tape:
    """Append-only record of operations; single-threaded by design."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _record(self, value, parents=(), vjps=()) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        self.nodes.append(Node(value, tuple(parents), tuple(vjps)))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value) -> "Var":
        return self._record(value)


@dataclass(frozen=True)
class Var:
    """Handle to a tape node."""

    tape: Tape
    idx: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self):
        return self.value.shape


def _as_var(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("mixing variables from different tapes")
        return x
    return tape.leaf(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic --------------------------------------------------------------

def add(a: Var, b) -> Var:
    tape = a.tape
    b = _as_var(tape, b)
    out = a.value + b.value
    return tape._record(out, (a.idx, b.idx),
                        (lambda g: _unbroadcast(g, a.value.shape),
                         lambda g: _unbroadcast(g, b.value.shape)))


def sub(a: Var, b) -> Var:
    tape = a.tape
    b = _as_var(tape, b)
    out = a.value - b.value
    return tape._record(out, (a.idx, b.idx),
                        (lambda g: _unbroadcast(g, a.value.shape),
                         lambda g: _unbroadcast(-g, b.value.shape)))


def scalar_mul(c: float, a: Var) -> Var:
    c = float(c)
    return a.tape._record(c * a.value, (a.idx,), (lambda g: c * g,))


def mul(a: Var, b) -> Var:
    tape = a.tape
    b = _as_var(tape, b)
    av, bv = a.value, b.value
    return tape._record(av * bv, (a.idx, b.idx),
                        (lambda g: _unbroadcast(g * bv, av.shape),
                         lambda g: _unbroadcast(g * av, bv.shape)))


def matmul(a: Var, b) -> Var:
    tape = a.tape
    b = _as_var(tape, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise ValueError("matmul operands must be 2-D")
    if av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
    return tape._record(av @ bv, (a.idx, b.idx),
                        (lambda g: g @ bv.T, lambda g: av.T @ g))


def csr_matvec(A: SparseMatrixCSR, x: Var) -> Var:
    """A @ x with A a constant sparse matrix and x a differentiable vector."""
    At = transpose(A)
    return x.tape._record(spmv_csr(A, x.value), (x.idx,),
                          (lambda g: spmv_csr(At, g),))


def csr_matmat(A: SparseMatrixCSR, X: Var) -> Var:
    """A @ X with A constant sparse, X a differentiable dense n-by-k matrix."""
    At = transpose(A)
    return X.tape._record(spmm_csr(A, X.value), (X.idx,),
                          (lambda g: spmm_csr(At, g),))


def reciprocal(x: Var) -> Var:
    v = x.value
    return x.tape._record(1.0 / v, (x.idx,), (lambda g: -g / (v * v),))


def power(x: Var, p: float) -> Var:
    v = x.value
    if p != int(p) and np.any(v < 0):
        raise ValueError("negative base with non-integer exponent")
    out = v ** p
    return x.tape._record(out, (x.idx,), (lambda g: g * p * v ** (p - 1.0),))


def sqrt(x: Var) -> Var:
    out = np.sqrt(x.value)
    return x.tape._record(out, (x.idx,), (lambda g: g * 0.5 / out,))


def relu(x: Var) -> Var:
    v = x.value
    mask = v > 0  # subgradient at 0 is 0
    return x.tape._record(np.where(mask, v, 0.0), (x.idx,), (lambda g: g * mask,))


def leaky_relu(x: Var, slope: float = 0.01) -> Var:
    v = x.value
    factor = np.where(v > 0, 1.0, slope)  # slope applies for x <= 0
    return x.tape._record(v * factor, (x.idx,), (lambda g: g * factor,))


# -- reductions --------------------------------------------------------------

def vsum(x: Var, axis=None) -> Var:
    shape = x.value.shape
    if axis is None:
        return x.tape._record(x.value.sum(), (x.idx,),
                              (lambda g: np.broadcast_to(g, shape).copy(),))
    return x.tape._record(x.value.sum(axis=axis), (x.idx,),
                          (lambda g: np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def vmean(x: Var) -> Var:
    n = x.value.size
    return scalar_mul(1.0 / n, vsum(x))


def vmax(x: Var) -> Var:
    """Max over all entries; gradient flows to the first attaining (lowest) index."""
    v = x.value
    flat_idx = int(np.argmax(v.ravel()))

    def vjp(g):
        grad = np.zeros_like(v).ravel()
        grad[flat_idx] = g
        return grad.reshape(v.shape)

    return x.tape._record(v.ravel()[flat_idx], (x.idx,), (vjp,))


def vmin(x: Var) -> Var:
    v = x.value
    flat_idx = int(np.argmin(v.ravel()))

    def vjp(g):
        grad = np.zeros_like(v).ravel()
        grad[flat_idx] = g
        return grad.reshape(v.shape)

    return x.tape._record(v.ravel()[flat_idx], (x.idx,), (vjp,))


def l2_norm(x: Var, axis=None) -> Var:
    """Euclidean norm over all entries, or per-column/row with ``axis``."""
    return sqrt(vsum(mul(x, x), axis=axis))


def concat(parts: list[Var], axis: int = 0) -> Var:
    tape = parts[0].tape
    values = [p.value for p in parts]
    sizes = [v.shape[axis] for v in values]
    offsets = np.concatenate(([0], np.cumsum(sizes)))

    def make_vjp(k):
        lo, hi = offsets[k], offsets[k + 1]
        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]
        return vjp

    return tape._record(np.concatenate(values, axis=axis),
                        tuple(p.idx for p in parts),
                        tuple(make_vjp(k) for k in range(len(parts))))


def gather(x: Var, indices) -> Var:
    """Select rows by an index list; backward scatter-adds."""
    indices = np.asarray(indices, dtype=np.int64)
    v = x.value

    def vjp(g):
        grad = np.zeros_like(v)
        np.add.at(grad, indices, g)
        return grad

    return x.tape._record(v[indices], (x.idx,), (vjp,))


def reshape(x: Var, shape) -> Var:
    old = x.value.shape
    return x.tape._record(x.value.reshape(shape), (x.idx,),
                          (lambda g: g.reshape(old),))


# -- segment reductions (contiguous blocks delimited by `splits`) ------------

def _check_splits(x, splits):
    splits = np.asarray(splits, dtype=np.int64)
    if splits[0] != 0 or splits[-1] != len(x.value):
        raise ValueError("splits must cover the input rows exactly")
    return splits


def segment_sum(x: Var, splits) -> Var:
    splits = _check_splits(x, splits)
    v = np.atleast_2d(x.value)
    n = len(splits) - 1
    out = np.zeros((n, v.shape[1]))
    nonempty = np.flatnonzero(np.diff(splits) > 0)
    if len(nonempty):
        out[nonempty] = np.add.reduceat(v, splits[:-1][nonempty], axis=0)
    seg_of_row = np.repeat(np.arange(n), np.diff(splits))

    def vjp(g):
        return g[seg_of_row]

    return x.tape._record(out, (x.idx,), (vjp,))


def segment_mean(x: Var, splits) -> Var:
    splits = _check_splits(x, splits)
    counts = np.maximum(np.diff(splits), 1).astype(np.float64)
    total = segment_sum(x, splits)
    return mul(total, 1.0 / counts[:, None])


def _segment_extreme(x: Var, splits, ufunc) -> Var:
    splits = _check_splits(x, splits)
    v = np.atleast_2d(x.value)
    n = len(splits) - 1
    out = np.zeros((n, v.shape[1]))
    nonempty = np.flatnonzero(np.diff(splits) > 0)
    if len(nonempty):
        out[nonempty] = ufunc.reduceat(v, splits[:-1][nonempty], axis=0)
    seg_of_row = np.repeat(np.arange(n), np.diff(splits))
    # first row in each segment attaining the extreme, per column
    winners = np.full((n, v.shape[1]), -1, dtype=np.int64)
    hit = v == out[seg_of_row]
    for col in range(v.shape[1]):
        rows = np.flatnonzero(hit[:, col])
        segs, first = np.unique(seg_of_row[rows], return_index=True)
        winners[segs, col] = rows[first]

    def vjp(g):
        grad = np.zeros_like(v)
        cols = np.broadcast_to(np.arange(v.shape[1]), winners.shape)
        valid = winners >= 0
        np.add.at(grad, (winners[valid], cols[valid]), g[valid])
        return grad.reshape(x.value.shape)

    return x.tape._record(out, (x.idx,), (vjp,))


def segment_min(x: Var, splits) -> Var:
    """Per-segment minimum; ties route the gradient to the lowest row index."""
    return _segment_extreme(x, splits, np.minimum)


def segment_max(x: Var, splits) -> Var:
    return _segment_extreme(x, splits, np.maximum)


# -- backward pass -----------------------------------------------------------

def backward(tape: Tape, output: Var) -> dict[int, np.ndarray]:
    """Exact reverse-mode gradients of a scalar output for every tape node.

    Returns a map from node index to gradient array (leaves included).
    """
    if output.value.size != 1:
        raise ValueError("backward requires a scalar output")
    grads: dict[int, np.ndarray] = {
        output.idx: np.ones_like(tape.nodes[output.idx].value)}
    for idx in range(output.idx, -1, -1):
        g = grads.get(idx)
        if g is None:
            continue
        node = tape.nodes[idx]
        for parent, vjp in zip(node.parents, node.vjps):
            piece = vjp(g)
            if parent in grads:
                grads[parent] = grads[parent] + piece
            else:
                # views are fine: accumulation above always allocates fresh arrays
                grads[parent] = np.asarray(piece, dtype=np.float64)
    return grads


def grad_check(f, params: np.ndarray, step: float = 1e-6,
               sample: int | None = None, rng=None) -> float:
    """Compare autodiff against central finite differences.

    ``f(tape, params_var) -> scalar Var`` defines the function; coordinates may
    be subsampled for large parameter vectors. Returns the max relative error.
    """
    params = np.asarray(params, dtype=np.float64)
    tape = Tape()
    p = tape.leaf(params)
    out = f(tape, p)
    analytic = backward(tape, out)[p.idx].ravel()

    def plain(theta):
        t = Tape()
        return float(f(t, t.leaf(theta.reshape(params.shape))).value)

    coords = np.arange(params.size)
    if sample is not None and sample < len(coords):
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(coords, size=sample, replace=False)
    worst = 0.0
    flat = params.ravel().copy()
    for k in coords:
        orig = flat[k]
        flat[k] = orig + step
        hi = plain(flat)
        flat[k] = orig - step
        lo = plain(flat)
        flat[k] = orig
        fd = (hi - lo) / (2 * step)
        denom = max(abs(fd), abs(analytic[k]), 1e-8)
        worst = max(worst, abs(fd - analytic[k]) / denom)
    return worst
