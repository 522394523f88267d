"""Input-derivative evaluation and parameter gradients.

Network outputs and their partial derivatives with respect to inputs (pure
partials up to 4th order, no mixed ones) come from propagating truncated
univariate Taylor coefficients through the layer recurrence, one slot set
per differentiated input direction.  Because the propagation itself is
recorded on the tape, any scalar built from the resulting values can be
differentiated with respect to all network parameters and unknown PDE
coefficients with a single backward sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tape as T
from .network import NetworkParams, ShapeError, TrainableState

MAX_ORDER = 4


class DerivSpecError(ValueError):
    """Requested derivative is unsupported (order > 4, mixed, bad dims)."""


@dataclass(frozen=True)
class DerivSpec:
    """Requested pure input partials: entries (channel, dim, order)."""

    input_dim: int
    n_channels: int
    entries: tuple  # tuple of (channel, dim, order)

    def __post_init__(self):
        for ch, dim, order in self.entries:
            if not (0 <= ch < self.n_channels):
                raise DerivSpecError(f"channel {ch} out of range")
            if not (0 <= dim < self.input_dim):
                raise DerivSpecError(f"input dim {dim} out of range")
            if order < 1:
                raise DerivSpecError(f"order {order} must be >= 1")
            if order > MAX_ORDER:
                raise DerivSpecError(f"order {order} unsupported (max {MAX_ORDER})")

    def directions(self) -> dict:
        """dim -> highest requested order along that dim."""
        dirs: dict = {}
        for _, dim, order in self.entries:
            dirs[dim] = max(dirs.get(dim, 0), order)
        return dirs


def spec_from_multi_indices(input_dim, n_channels, multi_indices) -> DerivSpec:
    """Build a DerivSpec from (channel, multi_index) pairs.

    A multi-index is one order per input dimension, e.g. (0, 2) for a second
    partial along dimension 1 of a 2-d input.  Mixed partials are rejected.
    """
    entries = []
    for ch, mi in multi_indices:
        if len(mi) != input_dim:
            raise DerivSpecError(f"multi-index {mi} does not match input dim {input_dim}")
        nonzero = [(d, o) for d, o in enumerate(mi) if o > 0]
        if len(nonzero) == 0:
            raise DerivSpecError("empty multi-index")
        if len(nonzero) > 1:
            raise DerivSpecError(f"mixed partial {mi} unsupported")
        dim, order = nonzero[0]
        entries.append((ch, dim, order))
    return DerivSpec(input_dim, n_channels, tuple(entries))


class NetEval:
    """Taped batched network evaluation with derivative slots.

    Holds the taped output value (n, C) and, per requested (dim, order),
    the taped derivative arrays.  Built by `record_network`.
    """

    def __init__(self, tape, values, derivs, n_points):
        self.tape = tape
        self._values = values  # Var (n, C)
        self._derivs = derivs  # (dim, order) -> Var (n, C)
        self.n_points = n_points
        self._columns: dict = {}

    def value(self, channel: int) -> T.Var:
        key = ("v", channel)
        if key not in self._columns:
            self._columns[key] = T.column(self._values, channel)
        return self._columns[key]

    def deriv(self, channel: int, dim: int, order: int) -> T.Var:
        if (dim, order) not in self._derivs:
            raise DerivSpecError(
                f"derivative (dim={dim}, order={order}) was not requested in the spec"
            )
        key = ("d", channel, dim, order)
        if key not in self._columns:
            self._columns[key] = T.column(self._derivs[(dim, order)], channel)
        return self._columns[key]


def record_network(tp: T.Tape, leaves: list, params: NetworkParams, x: np.ndarray,
                   directions: dict | None = None) -> NetEval:
    """Record a batched forward pass with Taylor slots on an existing tape.

    Args:
        tp: the tape; `leaves` must be the taped weight/bias leaves in layer
            order (w0, b0, w1, b1, ...), values identical to `params`.
        x: input batch (n, d_in).
        directions: dim -> max order; empty/None for a plain evaluation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.widths[0]:
        raise ShapeError(f"input batch {x.shape} does not match input width {params.widths[0]}")
    n = x.shape[0]
    directions = directions or {}

    wb = [(leaves[2 * i], leaves[2 * i + 1]) for i in range(len(params.weights))]

    a0 = tp.constant(x)
    # slots[dim] = list of Taylor coefficient Vars c_1..c_K along that dim
    slots = {}
    for dim, order in directions.items():
        e = np.zeros((n, x.shape[1]))
        e[:, dim] = 1.0
        cs = [tp.constant(e)]
        for _ in range(order - 1):
            cs.append(tp.constant(np.zeros((n, x.shape[1]))))
        slots[dim] = cs

    n_layers = len(params.weights)
    for h in range(n_layers - 1):
        w, b = wb[h]
        z0 = T.affine(a0, w, b)
        y0 = T.tanh(z0)
        new_slots = {}
        for dim, cs in slots.items():
            zs = [T.matmul_t(c, w) for c in cs]
            new_slots[dim] = T.tanh_taylor(y0, zs)
        a0 = y0
        slots = new_slots

    w, b = wb[-1]
    out0 = T.affine(a0, w, b)
    derivs = {}
    for dim, cs in slots.items():
        os = [T.matmul_t(c, w) for c in cs]
        for k, ov in enumerate(os, start=1):
            # Taylor coefficient k carries the k-th derivative / k!.
            derivs[(dim, k)] = T.scale(ov, float(math.factorial(k)))
    return NetEval(tp, out0, derivs, n)


class Evaluation:
    """One recorded computation over a TrainableState.

    Exposes the taped leaves in flat-vector order so scalars built from the
    recorded values can be differentiated with respect to the full state.
    """

    def __init__(self, state: TrainableState, check_finite: bool = False):
        self.state = state
        self.tape = T.Tape(check_finite=check_finite)
        self.wb_leaves = []
        for w, b in zip(state.net.weights, state.net.biases):
            self.wb_leaves.append(self.tape.leaf(w))
            self.wb_leaves.append(self.tape.leaf(b))
        self.gamma_leaves = {}
        if state.inverse is not None:
            for name, val in zip(state.inverse.names, state.inverse.values):
                self.gamma_leaves[name] = self.tape.leaf(np.float64(val))

    def network(self, x: np.ndarray, directions: dict | None = None) -> NetEval:
        return record_network(self.tape, self.wb_leaves, self.state.net, x, directions)

    def gamma(self, name: str) -> T.Var:
        return self.gamma_leaves[name]

    def gradient(self, loss: T.Var) -> np.ndarray:
        """d loss / d Theta as a flat vector matching state.flatten()."""
        leaves = list(self.wb_leaves) + list(self.gamma_leaves.values())
        grads = self.tape.backward(loss, leaves)
        return np.concatenate([np.asarray(g).ravel() for g in grads])


@dataclass
class DerivBundle:
    """Network outputs and requested input partials at a single point.

    `values[c]` is output channel c; `derivs[(c, dim, order)]` the partial.
    The taped Vars are kept so losses built from the bundle can be pushed
    back through `evaluation.gradient`.
    """

    spec: DerivSpec
    values: np.ndarray  # (C,)
    derivs: dict  # (channel, dim, order) -> float
    evaluation: Evaluation
    value_vars: list
    deriv_vars: dict

    def deriv(self, channel, dim, order) -> float:
        return self.derivs[(channel, dim, order)]


def eval_with_input_derivatives(state: TrainableState, point, spec: DerivSpec) -> DerivBundle:
    """Exact (to rounding) outputs and input partials at one point.

    The computation is recorded, so any scalar assembled from the bundle's
    Vars can be differentiated with respect to the full state afterwards.
    Non-finite intermediates raise EvaluationError naming the node.
    """
    point = np.asarray(point, dtype=np.float64)
    if point.ndim != 1 or point.size != spec.input_dim:
        raise ShapeError(f"point shape {point.shape} does not match input dim {spec.input_dim}")
    ev = Evaluation(state, check_finite=True)
    net = ev.network(point[None, :], spec.directions())
    n_ch = spec.n_channels
    value_vars = [net.value(c) for c in range(n_ch)]
    values = np.array([float(v.value[0]) for v in value_vars])
    deriv_vars = {}
    derivs = {}
    for ch, dim, order in spec.entries:
        v = net.deriv(ch, dim, order)
        deriv_vars[(ch, dim, order)] = v
        derivs[(ch, dim, order)] = float(v.value[0])
    return DerivBundle(spec, values, derivs, ev, value_vars, deriv_vars)


def fd_gradient(f, at: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    at = np.asarray(at, dtype=np.float64)
    g = np.zeros_like(at)
    for i in range(at.size):
        hi = at.copy()
        lo = at.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def fd_input_derivative(func, point: np.ndarray, dim: int, order: int, step: float) -> float:
    """Central finite-difference pure partial of func along one input dim.

    func maps a 1-d point to a float.  Standard central stencils up to
    order 4.
    """
    point = np.asarray(point, dtype=np.float64)

    def at(offset):
        p = point.copy()
        p[dim] += offset * step
        return func(p)

    if order == 1:
        return (at(1) - at(-1)) / (2 * step)
    if order == 2:
        return (at(1) - 2 * at(0) + at(-1)) / step**2
    if order == 3:
        return (at(2) - 2 * at(1) + 2 * at(-1) - at(-2)) / (2 * step**3)
    if order == 4:
        return (at(2) - 4 * at(1) + 6 * at(0) - 4 * at(-1) + at(-2)) / step**4
    raise DerivSpecError(f"finite differences not implemented for order {order}")
