"""Trace-based adaptive loss weights.

The convergence rate of each loss term is proportional to
lambda_j / N_j * tr(J_j J_j^T), where J_j is the Jacobian of that term's
per-sample quantities with respect to the full trainable state.  Weights
are chosen to equalize these rates:

    lambda_j = N_j * R / tr(J_j J_j^T),   R = sum_j tr(J_j J_j^T) / N_j

so lambda_j * tr_j / N_j = R for every term.  Traces are exact: one
backward sweep per sample, squared gradient norms accumulated in a fixed
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .engine import Evaluation
from .losses import LossWeights
from .problems import ProblemSpec, operator_directions, residual
from .sampling import DatasetBundle

TRACE_FLOOR = 1e-12


@dataclass
class TraceReport:
    traces: dict  # term id -> tr(J_j J_j^T)
    counts: dict  # term id -> N_j
    lambdas: dict
    ratio: float  # the common rate R
    clamped: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "traces": dict(self.traces),
            "counts": dict(self.counts),
            "lambdas": dict(self.lambdas),
            "ratio": self.ratio,
            "clamped": list(self.clamped),
        }


def _per_sample_quantities(ev: Evaluation, problem: ProblemSpec, term_id: str,
                           point: np.ndarray):
    """Record the term's quantity at one point; returns a scalar-like Var."""
    pt = point[None, :]
    if term_id in problem.residual_ids:
        net = ev.network(pt, problem.residual_spec.directions())
        gammas = {name: ev.gamma(name) for name in problem.gamma_names}
        res = residual(problem, net, gammas)
        return res[problem.residual_ids.index(term_id)]
    for op in problem.ic_ops + problem.bc_ops:
        if op.term_id == term_id:
            dirs = operator_directions([op])
            net = ev.network(pt, dirs)
            if op.kind == "value":
                return net.value(op.channel)
            return net.deriv(op.channel, op.dim, op.order)
    if term_id in problem.data_ids:
        ch = problem.data_channels[problem.data_ids.index(term_id)]
        net = ev.network(pt)
        return net.value(problem.channel(ch))
    raise ValueError(f"unknown term {term_id!r} for problem {problem.pid}")


def _term_points(problem: ProblemSpec, bundle: DatasetBundle, term_id: str) -> np.ndarray:
    if term_id in problem.residual_ids:
        return bundle.residual_points
    if any(op.term_id == term_id for op in problem.ic_ops):
        return bundle.initial_points
    if any(op.term_id == term_id for op in problem.bc_ops):
        return bundle.boundary_points
    if term_id in problem.data_ids:
        return bundle.data_points
    raise ValueError(f"unknown term {term_id!r}")


def trace_jjt(state, problem: ProblemSpec, bundle: DatasetBundle, term_id: str) -> float:
    """tr(J_j J_j^T): sum over samples of the squared per-sample gradient norm.

    Differentiation is with respect to the full state (coefficients
    included; their columns are zero for terms that do not touch them).
    """
    pts = _term_points(problem, bundle, term_id)
    if len(pts) == 0:
        raise ValueError(f"term {term_id!r} has an empty point set")
    total = 0.0
    for k in range(len(pts)):
        ev = Evaluation(state)
        q = _per_sample_quantities(ev, problem, term_id, pts[k])
        g = ev.gradient(_sum1(q))
        total += float(g @ g)
    return total


def _sum1(q):
    tape = q.tape
    val = float(np.asarray(q.value).ravel()[0])

    def vjp(g):
        return [(q.idx, None, np.full(np.shape(q.value), g), True)]

    return tape._record(val, vjp, "sum1")


def trace_counts(problem: ProblemSpec, bundle: DatasetBundle) -> dict:
    return {tid: len(_term_points(problem, bundle, tid)) for tid in problem.term_ids}


def compute_weights(traces: dict, counts: dict, floor: float = TRACE_FLOOR):
    """Weights from traces; terms with degenerate traces are clamped to 1.

    Returns (LossWeights, TraceReport).
    """
    live = {tid: tr for tid, tr in traces.items() if tr > floor}
    clamped = [tid for tid in traces if tid not in live]
    ratio = sum(tr / counts[tid] for tid, tr in live.items())
    lambdas = {}
    for tid, tr in traces.items():
        if tid in live:
            lambdas[tid] = counts[tid] * ratio / tr
        else:
            lambdas[tid] = 1.0
    report = TraceReport(dict(traces), dict(counts), dict(lambdas), float(ratio), clamped)
    return LossWeights(lambdas), report


def weights_for_state(state, problem: ProblemSpec, bundle: DatasetBundle):
    """Traces for every term of the problem, then the weights."""
    traces = {tid: trace_jjt(state, problem, bundle, tid) for tid in problem.term_ids}
    counts = trace_counts(problem, bundle)
    return compute_weights(traces, counts)
