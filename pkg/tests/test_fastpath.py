import numpy as np
import pytest

from dgpinn.fastpath import DataObjectiveWorkspace
from dgpinn.losses import data_objective
from dgpinn.network import TrainableState, init_inverse, init_network
from dgpinn.problems import get_problem
from dgpinn.sampling import GridSpec, build_bundle


@pytest.mark.parametrize("pid", ["heat", "navier_stokes_2d"])
def test_fastpath_matches_tape(pid):
    problem = get_problem(pid)
    grid = GridSpec(problem.domain, (15,) * 2 if problem.input_dim == 2 else (9, 9, 5))
    counts = {"n_r": 10, "n_i": 5, "n_b": 5, "n_d": 40}
    bundle = build_bundle(problem, grid, counts, seed=0)
    state = TrainableState(
        init_network((problem.input_dim, 12, 9, problem.n_channels), 1),
        init_inverse(problem.gamma_names, 1),
    )
    ws = DataObjectiveWorkspace(state, problem, bundle)
    terms, total, grad = ws.evaluate(state)
    bd, grad_tape = data_objective(state, problem, bundle)
    assert total == pytest.approx(bd.total, rel=1e-14)
    for tid in problem.data_ids:
        assert terms[tid] == pytest.approx(bd.terms[tid], rel=1e-14)
    np.testing.assert_allclose(grad, grad_tape, rtol=1e-12, atol=1e-18)
    # coefficients keep exact-zero gradients
    assert np.all(grad[-len(problem.gamma_names):] == 0.0)


def test_fastpath_reusable_across_states():
    problem = get_problem("heat")
    grid = GridSpec(problem.domain, (15, 15))
    bundle = build_bundle(problem, grid, {"n_r": 10, "n_i": 5, "n_b": 5, "n_d": 30},
                          seed=2)
    s1 = TrainableState(init_network((2, 8, 1), 3))
    s2 = TrainableState(init_network((2, 8, 1), 4))
    ws = DataObjectiveWorkspace(s1, problem, bundle)
    _, t1, g1 = ws.evaluate(s1)
    g1 = g1.copy()
    _, t2, _ = ws.evaluate(s2)
    _, t1b, g1b = ws.evaluate(s1)
    assert t1 == t1b
    np.testing.assert_array_equal(g1, g1b)
    assert t1 != t2
