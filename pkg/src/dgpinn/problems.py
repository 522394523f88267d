"""The four inverse problems: operators, targets, and closed-form solutions.

Each ProblemSpec declares its residual operator(s) with the unknown
coefficients, initial/boundary operators with targets, the true coefficient
values, and a manufactured-data source.  Residual formulas are written
against a generic accessor so the same code runs on taped Vars during
training and on plain arrays in closed-form checks.

Nondimensional settings throughout: heat/wave/beam on (x, t) in [0,1]^2 with
one scalar unknown each, and a 2-d incompressible-flow problem on (x, y, t)
with two unknowns, manufactured from a decaying vortex field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import DerivSpec

TWO_PI = 2.0 * np.pi


class ContractError(ValueError):
    """A bundle is missing entries the operator needs, or a point is off-manifold."""


class UnsupportedError(ValueError):
    """Requested closed form does not exist (external-data flow problem)."""


@dataclass(frozen=True)
class Operator:
    """One initial- or boundary-condition operator with its target function.

    kind "value" compares the channel value; kind "deriv" compares the pure
    partial (dim, order).  target maps points (n, d) -> (n,) values.
    """

    term_id: str
    channel: int
    kind: str  # "value" | "deriv"
    dim: int = 0
    order: int = 0
    target: callable = None


@dataclass(frozen=True)
class ProblemSpec:
    pid: str
    input_names: tuple
    output_names: tuple
    domain: tuple  # per-dim (lo, hi)
    gamma_names: tuple
    gamma_true: tuple
    residual_ids: tuple
    residual_spec: DerivSpec
    ic_ops: tuple
    bc_ops: tuple
    data_ids: tuple
    data_channels: tuple  # channels entering the data loss
    eval_channels: tuple  # channels reported in test metrics
    term_ids: tuple
    grid_counts: tuple
    residual_manifold: str  # "grid" | "grid_interior"
    data_manifold: str
    time_dim: int
    boundary_dim: int | None
    has_analytic: bool = True

    @property
    def input_dim(self):
        return len(self.input_names)

    @property
    def n_channels(self):
        return len(self.output_names)

    def channel(self, name):
        return self.output_names.index(name)


# ---------------------------------------------------------------------------
# closed-form solutions and their derivatives

HEAT_BETA_SQ = 1.0 / 400.0  # beta = 1/20
WAVE_C_SQ = 4.0  # c = 2
BEAM_ALPHA_SQ = 1.0  # alpha = 1
NS_BETA1 = 1.0
NS_BETA2 = 0.01


def heat_solution(pts):
    x, t = pts[:, 0], pts[:, 1]
    k = (10.0 * np.pi) ** 2 * HEAT_BETA_SQ
    return {"u": np.exp(-k * t) * np.sin(10.0 * np.pi * x)}


def heat_derivatives(pts):
    x, t = pts[:, 0], pts[:, 1]
    w = 10.0 * np.pi
    k = w**2 * HEAT_BETA_SQ
    e = np.exp(-k * t)
    u = e * np.sin(w * x)
    return {
        ("u", 1, 1): -k * u,  # du/dt
        ("u", 0, 1): w * e * np.cos(w * x),
        ("u", 0, 2): -(w**2) * u,
    }


def wave_solution(pts):
    x, t = pts[:, 0], pts[:, 1]
    c = np.sqrt(WAVE_C_SQ)
    return {
        "u": np.sin(np.pi * x) * np.cos(c * np.pi * t)
        + 0.5 * np.sin(4 * np.pi * x) * np.cos(4 * c * np.pi * t)
    }


def wave_derivatives(pts):
    x, t = pts[:, 0], pts[:, 1]
    c = np.sqrt(WAVE_C_SQ)
    s1, s4 = np.sin(np.pi * x), np.sin(4 * np.pi * x)
    c1, c4 = np.cos(c * np.pi * t), np.cos(4 * c * np.pi * t)
    return {
        ("u", 1, 1): -c * np.pi * s1 * np.sin(c * np.pi * t)
        - 2.0 * c * np.pi * s4 * np.sin(4 * c * np.pi * t),
        ("u", 1, 2): -((c * np.pi) ** 2) * s1 * c1 - 0.5 * (4 * c * np.pi) ** 2 * s4 * c4,
        ("u", 0, 2): -(np.pi**2) * s1 * c1 - 8.0 * np.pi**2 * s4 * c4,
    }


def beam_solution(pts):
    x, t = pts[:, 0], pts[:, 1]
    a = np.sqrt(BEAM_ALPHA_SQ)
    return {"u": np.sin(np.pi * x) * np.cos(a * np.pi**2 * t)}


def beam_derivatives(pts):
    x, t = pts[:, 0], pts[:, 1]
    a = np.sqrt(BEAM_ALPHA_SQ)
    s, c = np.sin(np.pi * x), np.cos(a * np.pi**2 * t)
    return {
        ("u", 1, 1): -a * np.pi**2 * s * np.sin(a * np.pi**2 * t),
        ("u", 1, 2): -((a * np.pi**2) ** 2) * s * c,
        ("u", 0, 2): -(np.pi**2) * s * c,
        ("u", 0, 4): np.pi**4 * s * c,
    }


def taylor_green(pts, viscosity=NS_BETA2):
    """Decaying-vortex closed form (u, v, p) satisfying the flow equations.

    u = -cos(x) sin(y) e^(-2 nu t), v = sin(x) cos(y) e^(-2 nu t),
    p = -1/4 (cos 2x + cos 2y) e^(-4 nu t); exact with convection
    coefficient 1 and the given viscosity.
    """
    if viscosity <= 0:
        raise ValueError("viscosity must be positive")
    x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]
    e = np.exp(-2.0 * viscosity * t)
    return {
        "u": -np.cos(x) * np.sin(y) * e,
        "v": np.sin(x) * np.cos(y) * e,
        "p": -0.25 * (np.cos(2 * x) + np.cos(2 * y)) * e * e,
    }


def taylor_green_derivatives(pts, viscosity=NS_BETA2):
    x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]
    e = np.exp(-2.0 * viscosity * t)
    e2 = e * e
    cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)
    u = -cx * sy * e
    v = sx * cy * e
    return {
        ("u", 2, 1): -2.0 * viscosity * u,
        ("u", 0, 1): sx * sy * e,
        ("u", 1, 1): -cx * cy * e,
        ("u", 0, 2): -u,
        ("u", 1, 2): -u,
        ("v", 2, 1): -2.0 * viscosity * v,
        ("v", 0, 1): cx * cy * e,
        ("v", 1, 1): -sx * sy * e,
        ("v", 0, 2): -v,
        ("v", 1, 2): -v,
        ("p", 0, 1): 0.5 * np.sin(2 * x) * e2,
        ("p", 1, 1): 0.5 * np.sin(2 * y) * e2,
    }


# ---------------------------------------------------------------------------
# residual operators (generic over taped Vars / plain arrays)


def residual(problem: ProblemSpec, bundle, gamma) -> list:
    """Evaluate the problem's residual operator(s).

    Args:
        bundle: accessor with .value(channel) and .deriv(channel, dim, order);
            a dict of plain arrays works through `ArrayBundle`.
        gamma: mapping coefficient name -> value (float or taped Var).

    Returns one entry per residual term, in `residual_ids` order.
    """
    b = bundle
    for name in problem.gamma_names:
        if name not in gamma:
            raise ContractError(f"missing coefficient {name}")
    g = gamma
    if problem.pid == "heat":
        return [b.deriv(0, 1, 1) - g["beta_sq"] * b.deriv(0, 0, 2)]
    if problem.pid == "wave":
        return [b.deriv(0, 1, 2) - g["c_sq"] * b.deriv(0, 0, 2)]
    if problem.pid == "beam":
        return [b.deriv(0, 1, 2) + g["alpha_sq"] * b.deriv(0, 0, 4)]
    if problem.pid == "navier_stokes_2d":
        u, v = b.value(0), b.value(1)
        f = (
            b.deriv(0, 2, 1)
            + g["beta1"] * (u * b.deriv(0, 0, 1) + v * b.deriv(0, 1, 1))
            + b.deriv(2, 0, 1)
            - g["beta2"] * (b.deriv(0, 0, 2) + b.deriv(0, 1, 2))
        )
        gmom = (
            b.deriv(1, 2, 1)
            + g["beta1"] * (u * b.deriv(1, 0, 1) + v * b.deriv(1, 1, 1))
            + b.deriv(2, 1, 1)
            - g["beta2"] * (b.deriv(1, 0, 2) + b.deriv(1, 1, 2))
        )
        h = b.deriv(0, 0, 1) + b.deriv(1, 1, 1)
        return [f, gmom, h]
    raise ValueError(f"unknown problem {problem.pid}")


class ArrayBundle:
    """Adapts plain dicts of arrays to the bundle accessor interface."""

    def __init__(self, values: dict, derivs: dict, output_names: tuple):
        self._values = values
        self._derivs = derivs
        self._names = output_names

    def value(self, channel):
        return self._values[self._names[channel]]

    def deriv(self, channel, dim, order):
        key = (self._names[channel], dim, order)
        if key not in self._derivs:
            raise ContractError(f"bundle is missing derivative entry {key}")
        return self._derivs[key]


def analytic_solution(problem: ProblemSpec, pts) -> dict:
    """Closed-form field values with the true coefficients."""
    if not problem.has_analytic:
        raise UnsupportedError(f"{problem.pid} has no closed form in external-data mode")
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    return _SOLUTIONS[problem.pid](pts)


def analytic_derivatives(problem: ProblemSpec, pts) -> ArrayBundle:
    """Closed-form derivative bundle (independent of the autodiff engine)."""
    if not problem.has_analytic:
        raise UnsupportedError(f"{problem.pid} has no closed form in external-data mode")
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    values = _SOLUTIONS[problem.pid](pts)
    derivs = _DERIVATIVES[problem.pid](pts)
    return ArrayBundle(values, derivs, problem.output_names)


def ic_values(problem: ProblemSpec, pts) -> list:
    """(operator, targets) pairs for initial-condition points (t = 0)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if problem.ic_ops and not np.allclose(pts[:, problem.time_dim], 0.0):
        raise ContractError("initial-condition points must lie on t = 0")
    return [(op, op.target(pts)) for op in problem.ic_ops]


def bc_values(problem: ProblemSpec, pts) -> list:
    """(operator, targets) pairs for boundary points (x on the domain edge)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if problem.bc_ops:
        d = problem.boundary_dim
        lo, hi = problem.domain[d]
        on_edge = np.isclose(pts[:, d], lo) | np.isclose(pts[:, d], hi)
        if not np.all(on_edge):
            raise ContractError("boundary points must lie on the spatial edges")
    return [(op, op.target(pts)) for op in problem.bc_ops]


# ---------------------------------------------------------------------------
# problem registry


def _zero(pts):
    return np.zeros(len(pts))


def _heat_ic(pts):
    return np.sin(10.0 * np.pi * pts[:, 0])


def _wave_ic1(pts):
    x = pts[:, 0]
    return np.sin(np.pi * x) + 0.5 * np.sin(4 * np.pi * x)


def _beam_ic1(pts):
    return np.sin(np.pi * pts[:, 0])


def _build_heat():
    return ProblemSpec(
        pid="heat",
        input_names=("x", "t"),
        output_names=("u",),
        domain=((0.0, 1.0), (0.0, 1.0)),
        gamma_names=("beta_sq",),
        gamma_true=(HEAT_BETA_SQ,),
        residual_ids=("r",),
        residual_spec=DerivSpec(2, 1, ((0, 1, 1), (0, 0, 2))),
        ic_ops=(Operator("i", 0, "value", target=_heat_ic),),
        bc_ops=(Operator("b", 0, "value", target=_zero),),
        data_ids=("d",),
        data_channels=("u",),
        eval_channels=("u",),
        term_ids=("r", "i", "b", "d"),
        grid_counts=(201, 201),
        residual_manifold="grid",
        data_manifold="grid",
        time_dim=1,
        boundary_dim=0,
    )


def _build_wave():
    return ProblemSpec(
        pid="wave",
        input_names=("x", "t"),
        output_names=("u",),
        domain=((0.0, 1.0), (0.0, 1.0)),
        gamma_names=("c_sq",),
        gamma_true=(WAVE_C_SQ,),
        residual_ids=("r",),
        residual_spec=DerivSpec(2, 1, ((0, 1, 2), (0, 0, 2))),
        ic_ops=(
            Operator("i1", 0, "value", target=_wave_ic1),
            Operator("i2", 0, "deriv", dim=1, order=1, target=_zero),
        ),
        bc_ops=(Operator("b", 0, "value", target=_zero),),
        data_ids=("d",),
        data_channels=("u",),
        eval_channels=("u",),
        term_ids=("r", "i1", "i2", "b", "d"),
        grid_counts=(201, 201),
        residual_manifold="grid",
        data_manifold="grid",
        time_dim=1,
        boundary_dim=0,
    )


def _build_beam():
    return ProblemSpec(
        pid="beam",
        input_names=("x", "t"),
        output_names=("u",),
        domain=((0.0, 1.0), (0.0, 1.0)),
        gamma_names=("alpha_sq",),
        gamma_true=(BEAM_ALPHA_SQ,),
        residual_ids=("r",),
        residual_spec=DerivSpec(2, 1, ((0, 1, 2), (0, 0, 4))),
        ic_ops=(
            Operator("i1", 0, "value", target=_beam_ic1),
            Operator("i2", 0, "deriv", dim=1, order=1, target=_zero),
        ),
        bc_ops=(
            Operator("b1", 0, "value", target=_zero),
            Operator("b2", 0, "deriv", dim=0, order=2, target=_zero),
        ),
        data_ids=("d",),
        data_channels=("u",),
        eval_channels=("u",),
        term_ids=("r", "i1", "i2", "b1", "b2", "d"),
        grid_counts=(201, 201),
        residual_manifold="grid",
        data_manifold="grid",
        time_dim=1,
        boundary_dim=0,
    )


def _build_navier_stokes():
    ns_spec = DerivSpec(
        3,
        3,
        (
            # u: t, x, y first derivatives and x, y second derivatives
            (0, 2, 1), (0, 0, 1), (0, 1, 1), (0, 0, 2), (0, 1, 2),
            (1, 2, 1), (1, 0, 1), (1, 1, 1), (1, 0, 2), (1, 1, 2),
            (2, 0, 1), (2, 1, 1),  # pressure gradient
        ),
    )
    return ProblemSpec(
        pid="navier_stokes_2d",
        input_names=("x", "y", "t"),
        output_names=("u", "v", "p"),
        domain=((0.0, TWO_PI), (0.0, TWO_PI), (0.0, 1.0)),
        gamma_names=("beta1", "beta2"),
        gamma_true=(NS_BETA1, NS_BETA2),
        residual_ids=("r1", "r2", "r3"),
        residual_spec=ns_spec,
        ic_ops=(),
        bc_ops=(),
        data_ids=("d1", "d2"),
        data_channels=("u", "v"),
        eval_channels=("u", "v", "p"),
        term_ids=("r1", "r2", "r3", "d1", "d2"),
        grid_counts=(41, 41, 21),
        residual_manifold="grid_interior",
        data_manifold="grid_interior",
        time_dim=2,
        boundary_dim=None,
    )


_SOLUTIONS = {
    "heat": heat_solution,
    "wave": wave_solution,
    "beam": beam_solution,
    "navier_stokes_2d": taylor_green,
}

_DERIVATIVES = {
    "heat": heat_derivatives,
    "wave": wave_derivatives,
    "beam": beam_derivatives,
    "navier_stokes_2d": taylor_green_derivatives,
}

_REGISTRY = {
    "heat": _build_heat,
    "wave": _build_wave,
    "beam": _build_beam,
    "navier_stokes_2d": _build_navier_stokes,
}

PROBLEM_IDS = tuple(_REGISTRY)


def get_problem(pid: str) -> ProblemSpec:
    if pid not in _REGISTRY:
        raise ValueError(f"unknown problem {pid!r}; choose from {PROBLEM_IDS}")
    return _REGISTRY[pid]()


def operator_directions(ops) -> dict:
    """dim -> max derivative order needed by the given operators."""
    dirs: dict = {}
    for op in ops:
        if op.kind == "deriv":
            dirs[op.dim] = max(dirs.get(op.dim, 0), op.order)
    return dirs
