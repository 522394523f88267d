import numpy as np
import pytest

from dgpinn.adaptive import compute_weights, trace_counts, trace_jjt, weights_for_state
from dgpinn.engine import fd_gradient
from dgpinn.losses import composite_value, LossWeights
from dgpinn.network import NetworkParams, TrainableState, init_inverse, init_network
from dgpinn.problems import get_problem
from dgpinn.sampling import GridSpec, build_bundle

HEAT = get_problem("heat")


def make_bundle(counts, seed=0):
    grid = GridSpec(HEAT.domain, (21, 21))
    return build_bundle(HEAT, grid, counts, seed=seed)


def test_affine_output_data_trace_equals_count():
    # Zero weights with a lone output bias: each per-sample gradient has a
    # single unit entry (the bias), so the trace equals the sample count.
    params = init_network((2, 4, 1), seed=0)
    for w in params.weights:
        w[:] = 0.0
    for b in params.biases:
        b[:] = 0.0
    state = TrainableState(params, init_inverse(HEAT.gamma_names, 0))
    bundle = make_bundle({"n_r": 5, "n_i": 4, "n_b": 4, "n_d": 12})
    tr = trace_jjt(state, HEAT, bundle, "d")
    assert tr == pytest.approx(12.0, rel=1e-12)


def test_constant_in_state_quantity_gives_zero_trace():
    # All-zero parameters make the residual quantity first-order flat in the
    # state: every path is gated by a zero output weight, and the
    # coefficient multiplies a zero second derivative.
    params = init_network((2, 4, 1), seed=1)
    for w in params.weights:
        w[:] = 0.0
    for b in params.biases:
        b[:] = 0.0
    state = TrainableState(params, init_inverse(HEAT.gamma_names, 1))
    bundle = make_bundle({"n_r": 6, "n_i": 4, "n_b": 4, "n_d": 6})
    tr = trace_jjt(state, HEAT, bundle, "r")
    assert tr == pytest.approx(0.0, abs=1e-20)


def test_trace_matches_fd_jacobian_small_instance():
    # Brute-force Jacobian, column by column, on a <= 60 parameter network.
    params = init_network((2, 3, 1), seed=2)
    state = TrainableState(params, init_inverse(HEAT.gamma_names, 2))
    assert state.n_params <= 60
    bundle = make_bundle({"n_r": 4, "n_i": 3, "n_b": 3, "n_d": 4}, seed=3)

    from dgpinn.engine import DerivSpec, eval_with_input_derivatives

    spec = DerivSpec(2, 1, ((0, 1, 1), (0, 0, 2)))

    def q(flat, pt):
        s = state.with_flat(flat)
        b = eval_with_input_derivatives(s, pt, spec)
        return b.deriv(0, 1, 1) - float(s.inverse.values[0]) * b.deriv(0, 0, 2)

    flat = state.flatten()
    tr_fd = 0.0
    for pt in bundle.residual_points:
        row = fd_gradient(lambda f: q(f, pt), flat, 1e-5)
        tr_fd += float(row @ row)
    tr = trace_jjt(state, HEAT, bundle, "r")
    assert tr == pytest.approx(tr_fd, rel=1e-6)


def test_data_trace_matches_fd_jacobian():
    from dgpinn.network import forward

    params = init_network((2, 3, 1), seed=4)
    state = TrainableState(params, init_inverse(HEAT.gamma_names, 4))
    bundle = make_bundle({"n_r": 3, "n_i": 3, "n_b": 3, "n_d": 4}, seed=5)

    def q(flat, pt):
        s = state.with_flat(flat)
        return float(forward(s.net, pt)[0])

    flat = state.flatten()
    tr_fd = sum(
        float(g @ g)
        for g in (fd_gradient(lambda f: q(f, pt), flat, 1e-5) for pt in bundle.data_points)
    )
    tr = trace_jjt(state, HEAT, bundle, "d")
    assert tr == pytest.approx(tr_fd, rel=1e-5)


def test_gamma_columns_change_nothing_for_data_term():
    # The data quantity is constant in the coefficients, so including them
    # in the differentiation adds exactly zero to the trace.
    params = init_network((2, 4, 1), seed=6)
    with_gamma = TrainableState(params, init_inverse(HEAT.gamma_names, 6))
    without_gamma = TrainableState(params)
    bundle = make_bundle({"n_r": 3, "n_i": 3, "n_b": 3, "n_d": 5}, seed=6)
    t1 = trace_jjt(with_gamma, HEAT, bundle, "d")
    t2 = trace_jjt(without_gamma, HEAT, bundle, "d")
    assert t1 == t2


def test_compute_weights_equal_traces():
    traces = {"r": 2.0, "i": 2.0, "b": 2.0, "d": 2.0}
    counts = {"r": 1, "i": 1, "b": 1, "d": 1}
    weights, report = compute_weights(traces, counts)
    for tid in traces:
        assert weights.values[tid] == pytest.approx(4.0, rel=1e-15)


def test_compute_weights_two_term_example():
    weights, report = compute_weights({"a": 1.0, "b": 3.0}, {"a": 1, "b": 1})
    assert report.ratio == pytest.approx(4.0, rel=1e-15)
    assert weights.values["a"] == pytest.approx(4.0, rel=1e-15)
    assert weights.values["b"] == pytest.approx(4.0 / 3.0, rel=1e-15)


def test_weights_invariant_under_trace_rescaling():
    rng = np.random.default_rng(0)
    for _ in range(20):
        traces = {f"t{i}": float(rng.uniform(0.1, 10)) for i in range(4)}
        counts = {f"t{i}": int(rng.integers(1, 100)) for i in range(4)}
        w1, _ = compute_weights(traces, counts)
        w2, _ = compute_weights({k: 10.0 * v for k, v in traces.items()}, counts)
        for tid in traces:
            assert w1.values[tid] == pytest.approx(w2.values[tid], rel=1e-12)


def test_rate_equalization_identity():
    rng = np.random.default_rng(1)
    traces = {f"t{i}": float(rng.uniform(0.01, 5)) for i in range(5)}
    counts = {f"t{i}": int(rng.integers(1, 50)) for i in range(5)}
    weights, report = compute_weights(traces, counts)
    for tid in traces:
        rate = weights.values[tid] * traces[tid] / counts[tid]
        assert abs(rate - report.ratio) / report.ratio < 1e-12


def test_degenerate_trace_clamped_and_flagged():
    weights, report = compute_weights({"a": 1.0, "b": 0.0}, {"a": 1, "b": 1})
    assert weights.values["b"] == 1.0
    assert report.clamped == ["b"]
    assert weights.values["a"] == pytest.approx(1.0, rel=1e-15)  # R excludes b


def test_weights_for_state_covers_all_terms():
    params = init_network((2, 4, 1), seed=8)
    state = TrainableState(params, init_inverse(HEAT.gamma_names, 8))
    bundle = make_bundle({"n_r": 4, "n_i": 3, "n_b": 3, "n_d": 5}, seed=8)
    weights, report = weights_for_state(state, HEAT, bundle)
    assert set(weights.values) == set(HEAT.term_ids)
    weights.check(HEAT)
    counts = trace_counts(HEAT, bundle)
    assert counts == {"r": 4, "i": 3, "b": 3, "d": 5}
