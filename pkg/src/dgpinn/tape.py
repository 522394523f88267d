"""Reverse-mode automatic differentiation over numpy float64 arrays.

A ``Tape`` records every operation applied to ``Var`` objects; a single
backward sweep over the recorded nodes (in reverse order, each node visited
exactly once) produces gradients with respect to any subset of leaves.
Values are numpy arrays except reductions, which carry plain floats.

Constant inputs are wrapped in unrecorded Vars (idx < 0) and receive no
adjoint.  Multi-output nodes (the Taylor tanh kernel) store a tuple value;
their outputs are accessed through ``take``, which routes adjoints into the
matching slot.

Adjoint contributions can alias upstream arrays (pass-through ops); the
accumulator tracks ownership and only mutates arrays it created itself.
"""

from __future__ import annotations

import numbers

import numpy as np

from .backend import kernels


class TapeError(RuntimeError):
    """Misuse of the tape (backward before forward, foreign vars, ...)."""


class EvaluationError(RuntimeError):
    """A recorded operation produced a non-finite value."""


class Var:
    __slots__ = ("tape", "idx", "value")

    def __init__(self, tape, idx, value):
        self.tape = tape
        self.idx = idx
        self.value = value

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.shape})"


class Tape:
    def __init__(self, check_finite: bool = False):
        self.check_finite = check_finite
        self._values = []
        self._vjps = []  # callable(adjoint) -> iterable of (idx, slot, array, owned)
        self._names = []
        self._n_out = []

    def __len__(self):
        return len(self._values)

    def constant(self, value) -> Var:
        return Var(self, -1, np.asarray(value, dtype=np.float64))

    def leaf(self, value) -> Var:
        return self._record(np.asarray(value, dtype=np.float64), None, "leaf")

    def _record(self, value, vjp, name, n_out=1) -> Var:
        if self.check_finite:
            vals = value if isinstance(value, tuple) else (value,)
            for v in vals:
                if not np.all(np.isfinite(v)):
                    raise EvaluationError(
                        f"non-finite value in op '{name}' (node {len(self._values)})"
                    )
        idx = len(self._values)
        self._values.append(value)
        self._vjps.append(vjp)
        self._names.append(name)
        self._n_out.append(n_out)
        return Var(self, idx, value)

    def backward(self, loss: Var, wrt: list[Var]):
        """Gradient of a recorded scalar with respect to the given leaves.

        Returns one array per entry of ``wrt`` (zeros for leaves the loss
        does not depend on).  Raises TapeError if the loss was not recorded
        on this tape or is not scalar.
        """
        if loss.tape is not self or loss.idx < 0:
            raise TapeError("backward called on a value not recorded on this tape")
        if len(self._values) == 0:
            raise TapeError("backward before forward: tape is empty")
        if np.shape(loss.value) != ():
            raise TapeError("backward requires a scalar loss")

        n = loss.idx + 1
        adj = [None] * n
        owned = [False] * n
        adj[loss.idx] = 1.0
        owned[loss.idx] = True

        for i in range(loss.idx, -1, -1):
            a = adj[i]
            if a is None:
                continue
            vjp = self._vjps[i]
            if vjp is None:  # leaf
                continue
            for idx, slot, arr, own in vjp(a):
                if idx < 0 or idx >= n:
                    continue
                self._accumulate(adj, owned, idx, slot, arr, own)

        out = []
        for v in wrt:
            if v.tape is not self:
                raise TapeError("gradient requested for a leaf of another tape")
            a = adj[v.idx] if 0 <= v.idx < n else None
            if a is None:
                out.append(np.zeros_like(np.asarray(v.value)))
            else:
                out.append(np.asarray(a))
        return out

    def _accumulate(self, adj, owned, idx, slot, arr, own):
        if slot is None:
            cur = adj[idx]
            if cur is None:
                adj[idx] = arr
                owned[idx] = own
            elif owned[idx] and not np.isscalar(cur):
                cur += arr
            else:
                adj[idx] = cur + arr
                owned[idx] = True
        else:
            cur = adj[idx]
            if cur is None:
                cur = [None] * self._n_out[idx]
                adj[idx] = cur
                owned[idx] = True
            if cur[slot] is None:
                # Exactly one take node feeds each slot, so this reference is
                # only ever read (never mutated) by the owner's vjp.
                cur[slot] = arr
            else:
                cur[slot] = cur[slot] + arr


def _as_var(tape, x):
    if isinstance(x, Var):
        return x
    return tape.constant(x)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TapeError("no Var operand")


# ---------------------------------------------------------------------------
# elementary ops


def matmul_t(x, w) -> Var:
    """x @ w.T for x (n, k) and w (m, k); returns (n, m)."""
    tape = _tape_of(x, w)
    x = _as_var(tape, x)
    w = _as_var(tape, w)
    xv, wv = x.value, w.value
    val = xv @ wv.T

    def vjp(g):
        out = []
        if x.idx >= 0:
            out.append((x.idx, None, g @ wv, True))
        if w.idx >= 0:
            out.append((w.idx, None, g.T @ xv, True))
        return out

    return tape._record(val, vjp, "matmul_t")


def affine(x, w, b) -> Var:
    """x @ w.T + b with bias broadcast over rows."""
    tape = _tape_of(x, w, b)
    x = _as_var(tape, x)
    w = _as_var(tape, w)
    b = _as_var(tape, b)
    xv, wv = x.value, w.value
    val = xv @ wv.T
    val += b.value

    def vjp(g):
        out = []
        if x.idx >= 0:
            out.append((x.idx, None, g @ wv, True))
        if w.idx >= 0:
            out.append((w.idx, None, g.T @ xv, True))
        if b.idx >= 0:
            out.append((b.idx, None, g.sum(axis=0), True))
        return out

    return tape._record(val, vjp, "affine")


def tanh(x: Var) -> Var:
    tape = x.tape
    y = np.tanh(x.value)

    def vjp(g):
        return [(x.idx, None, kernels.tanh_bwd(g, y), True)]

    return tape._record(y, vjp, "tanh")


def tanh_taylor(y0: Var, us: list) -> list:
    """Taylor-coefficient propagation through tanh (orders 1..len(us)).

    ``y0`` is the taped value-slot output tanh(u0); ``us`` are the taped
    input coefficients u_1..u_K.  Returns taped outputs y_1..y_K.
    """
    tape = y0.tape
    uvals = [u.value for u in us]
    ys, ps = kernels.tanh_taylor_fwd(y0.value, uvals)

    def vjp(gys):
        if not isinstance(gys, list):
            gys = [gys]
        gy0, gus = kernels.tanh_taylor_bwd(gys, y0.value, uvals, ys, ps)
        out = [(y0.idx, None, gy0, True)]
        for u, gu in zip(us, gus):
            if u.idx >= 0:
                out.append((u.idx, None, gu, True))
        return out

    node = tape._record(tuple(ys), vjp, "tanh_taylor", n_out=len(us))
    return [take(node, k) for k in range(len(us))]


def take(node: Var, slot: int) -> Var:
    tape = node.tape
    val = node.value[slot]

    def vjp(g):
        return [(node.idx, slot, g, False)]

    return tape._record(val, vjp, f"take[{slot}]")


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    a = _as_var(tape, a)
    b = _as_var(tape, b)
    val = a.value + b.value

    def vjp(g):
        out = []
        if a.idx >= 0:
            out.append((a.idx, None, _unbroadcast(g, a.value), a.value.shape != np.shape(g)))
        if b.idx >= 0:
            out.append((b.idx, None, _unbroadcast(g, b.value), b.value.shape != np.shape(g)))
        return out

    return tape._record(val, vjp, "add")


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    a = _as_var(tape, a)
    b = _as_var(tape, b)
    val = a.value - b.value

    def vjp(g):
        out = []
        if a.idx >= 0:
            out.append((a.idx, None, _unbroadcast(g, a.value), a.value.shape != np.shape(g)))
        if b.idx >= 0:
            out.append((b.idx, None, _unbroadcast(-g, b.value), True))
        return out

    return tape._record(val, vjp, "sub")


def mul(a, b) -> Var:
    if isinstance(b, numbers.Number):
        return scale(a, float(b))
    if isinstance(a, numbers.Number):
        return scale(b, float(a))
    tape = _tape_of(a, b)
    a = _as_var(tape, a)
    b = _as_var(tape, b)
    av, bv = a.value, b.value
    val = av * bv

    def vjp(g):
        out = []
        if a.idx >= 0:
            out.append((a.idx, None, _unbroadcast(g * bv, av), True))
        if b.idx >= 0:
            out.append((b.idx, None, _unbroadcast(g * av, bv), True))
        return out

    return tape._record(val, vjp, "mul")


def scale(x: Var, c: float) -> Var:
    tape = x.tape
    val = x.value * c

    def vjp(g):
        return [(x.idx, None, g * c, True)]

    return tape._record(val, vjp, "scale")


def column(x: Var, j: int) -> Var:
    """Select column j of a (n, m) array as a (n,) vector."""
    tape = x.tape
    shape = x.value.shape
    val = np.ascontiguousarray(x.value[:, j])

    def vjp(g):
        z = np.zeros(shape)
        z[:, j] = g
        return [(x.idx, None, z, True)]

    return tape._record(val, vjp, f"column[{j}]")


def mean_sq(x: Var) -> Var:
    """Mean of squared entries, as a scalar node."""
    tape = x.tape
    xv = x.value
    val = kernels.mean_sq(xv)

    def vjp(g):
        return [(x.idx, None, kernels.mean_sq_bwd(float(g), xv), True)]

    return tape._record(val, vjp, "mean_sq")


def mean_sq_diff(x: Var, target) -> Var:
    """Mean of squared (x - target) for a constant target array."""
    tape = x.tape
    diff = x.value - np.asarray(target)
    val = kernels.mean_sq(diff)

    def vjp(g):
        return [(x.idx, None, kernels.mean_sq_bwd(float(g), diff), True)]

    return tape._record(val, vjp, "mean_sq_diff")


def weighted_sum(terms: list, weights: list) -> Var:
    """Scalar combination sum_i w_i * terms_i with constant weights."""
    tape = terms[0].tape
    val = 0.0
    for t, w in zip(terms, weights):
        val += w * t.value

    def vjp(g):
        return [(t.idx, None, g * w, True) for t, w in zip(terms, weights)]

    return tape._record(float(val), vjp, "weighted_sum")


def _unbroadcast(g, target_value):
    """Reduce an adjoint to the shape of the operand it belongs to."""
    tshape = np.shape(target_value)
    if np.shape(g) == tshape:
        return g
    if tshape == ():
        return np.sum(g)
    # Sum over prepended axes, then over broadcast (size-1) axes.
    g = np.asarray(g)
    while g.ndim > len(tshape):
        g = g.sum(axis=0)
    for ax, size in enumerate(tshape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g
