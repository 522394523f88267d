"""Loss terms and the composite objective.

Every term is the mean of squared mismatches over its own point set, so
duplicating a dataset leaves term values unchanged.  `composite` records
all terms on one tape so a single backward sweep yields the gradient of the
weighted total with respect to the full trainable state, including the
unknown PDE coefficients inside the residual terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .engine import Evaluation
from .problems import ProblemSpec, operator_directions, residual
from .sampling import DatasetBundle


class TermError(ValueError):
    """Weight map and problem term ids disagree."""


@dataclass
class LossWeights:
    values: dict  # term id -> lambda

    @classmethod
    def ones(cls, problem: ProblemSpec) -> "LossWeights":
        return cls({tid: 1.0 for tid in problem.term_ids})

    def check(self, problem: ProblemSpec) -> None:
        if set(self.values) != set(problem.term_ids):
            raise TermError(
                f"weights cover {sorted(self.values)}, problem needs {sorted(problem.term_ids)}"
            )


@dataclass
class LossBreakdown:
    terms: dict  # term id -> mean-squared value
    weights: dict
    total: float

    def as_dict(self) -> dict:
        return {"terms": dict(self.terms), "weights": dict(self.weights), "total": self.total}


def _record_terms(ev: Evaluation, problem: ProblemSpec, bundle: DatasetBundle,
                  which: str = "all") -> dict:
    """Record the requested loss terms; returns term id -> scalar Var.

    which: "all" for the composite, "data" for the pre-training objective.
    """
    terms = {}

    if which == "all":
        net_r = ev.network(bundle.residual_points, problem.residual_spec.directions())
        gammas = {name: ev.gamma(name) for name in problem.gamma_names}
        res = residual(problem, net_r, gammas)
        for tid, r in zip(problem.residual_ids, res):
            terms[tid] = T.mean_sq(r)

        if problem.ic_ops:
            net_i = ev.network(bundle.initial_points, operator_directions(problem.ic_ops))
            for op in problem.ic_ops:
                terms[op.term_id] = _operator_term(net_i, op, bundle.initial_points)
        if problem.bc_ops:
            net_b = ev.network(bundle.boundary_points, operator_directions(problem.bc_ops))
            for op in problem.bc_ops:
                terms[op.term_id] = _operator_term(net_b, op, bundle.boundary_points)

    net_d = ev.network(bundle.data_points)
    for tid, ch in zip(problem.data_ids, problem.data_channels):
        c = problem.channel(ch)
        terms[tid] = T.mean_sq_diff(net_d.value(c), bundle.data_values[ch])
    return terms


def _operator_term(net, op, pts):
    if op.kind == "value":
        out = net.value(op.channel)
    else:
        out = net.deriv(op.channel, op.dim, op.order)
    target = op.target(pts)
    if np.any(target):
        return T.mean_sq_diff(out, target)
    return T.mean_sq(out)


def composite(state, problem: ProblemSpec, bundle: DatasetBundle,
              weights: LossWeights):
    """Weighted total over all terms, with its gradient over the full state.

    Returns (LossBreakdown, flat gradient).
    """
    weights.check(problem)
    ev = Evaluation(state)
    terms = _record_terms(ev, problem, bundle, "all")
    order = list(problem.term_ids)
    total = T.weighted_sum([terms[tid] for tid in order], [weights.values[tid] for tid in order])
    grad = ev.gradient(total)
    bd = LossBreakdown(
        {tid: float(terms[tid].value) for tid in order},
        dict(weights.values),
        float(total.value),
    )
    return bd, grad


def composite_value(state, problem, bundle, weights) -> LossBreakdown:
    """Term values only (no gradient)."""
    weights.check(problem)
    ev = Evaluation(state)
    terms = _record_terms(ev, problem, bundle, "all")
    order = list(problem.term_ids)
    total = sum(weights.values[tid] * float(terms[tid].value) for tid in order)
    return LossBreakdown(
        {tid: float(terms[tid].value) for tid in order}, dict(weights.values), float(total)
    )


def data_objective(state, problem: ProblemSpec, bundle: DatasetBundle):
    """Sum of the data terms (the pre-training objective) and its gradient.

    The gradient covers the full state; coefficient entries are exactly
    zero because no residual participates.

    Returns (LossBreakdown, flat gradient).
    """
    ev = Evaluation(state)
    terms = _record_terms(ev, problem, bundle, "data")
    order = list(problem.data_ids)
    total = T.weighted_sum([terms[tid] for tid in order], [1.0] * len(order))
    grad = ev.gradient(total)
    bd = LossBreakdown(
        {tid: float(terms[tid].value) for tid in order},
        {tid: 1.0 for tid in order},
        float(total.value),
    )
    return bd, grad


def data_loss(state, problem, bundle) -> dict:
    """Per-term data loss values (no gradient)."""
    ev = Evaluation(state)
    terms = _record_terms(ev, problem, bundle, "data")
    return {tid: float(v.value) for tid, v in terms.items()}


def residual_loss(state, problem, bundle) -> dict:
    """Mean squared residual value(s) at the residual points (no gradient)."""
    ev = Evaluation(state)
    net = ev.network(bundle.residual_points, problem.residual_spec.directions())
    gammas = {name: ev.gamma(name) for name in problem.gamma_names}
    res = residual(problem, net, gammas)
    return {tid: float(T.mean_sq(r).value) for tid, r in zip(problem.residual_ids, res)}


def ic_loss(state, problem, bundle, term_id) -> float:
    ops = [op for op in problem.ic_ops if op.term_id == term_id]
    if not ops:
        raise TermError(f"no initial-condition term {term_id!r}")
    ev = Evaluation(state)
    net = ev.network(bundle.initial_points, operator_directions(problem.ic_ops))
    return float(_operator_term(net, ops[0], bundle.initial_points).value)


def bc_loss(state, problem, bundle, term_id) -> float:
    ops = [op for op in problem.bc_ops if op.term_id == term_id]
    if not ops:
        raise TermError(f"no boundary-condition term {term_id!r}")
    ev = Evaluation(state)
    net = ev.network(bundle.boundary_points, operator_directions(problem.bc_ops))
    return float(_operator_term(net, ops[0], bundle.boundary_points).value)
