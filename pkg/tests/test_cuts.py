import itertools

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from evsiting.ingest import Instance
from evsiting.model import GE, LE, Constraint, MilpModel, Variable, build_model
from evsiting.solver import Cut, branch_and_cut, gomory_cut, solve_lp
from evsiting.solver.cuts import MIN_VIOLATION


def knapsack():
    # max 2x + 2y  s.t.  2x + y <= 6,  y <= 1,  x, y integer
    variables = (Variable("x", 0.0, 5.0, True), Variable("y", 0.0, 1.0, True))
    return MilpModel(variables, {0: -2.0, 1: -2.0}, (Constraint("knap", {0: 2.0, 1: 1.0}, LE, 6.0),))


def test_knapsack_cut():
    m = knapsack()
    lp = solve_lp(m)
    assert lp.values.tolist() == pytest.approx([2.5, 1.0])
    cut = gomory_cut(lp, 0, m.integer_mask, m.lower, m.upper, m.integral_rows)
    assert cut is not None
    assert cut.violation(lp.values) >= MIN_VIOLATION
    assert cut.violation([3.0, 0.0]) <= 1e-9
    assert cut.violation([2.0, 1.0]) <= 1e-9
    for x, y in itertools.product(range(6), range(2)):
        if 2 * x + y <= 6:
            assert cut.violation([x, y]) <= 1e-9


def test_integral_point_gives_no_cut():
    variables = (Variable("x", 0.0, 10.0, True),)
    m = MilpModel(variables, {0: 1.0}, (Constraint("lo", {0: 1.0}, GE, 3.0),))
    lp = solve_lp(m)
    assert lp.values[0] == pytest.approx(3.0)
    assert gomory_cut(lp, 0, m.integer_mask, m.lower, m.upper, m.integral_rows) is None


def test_continuous_variable_gives_no_cut():
    m = knapsack()
    lp = solve_lp(m)
    assert gomory_cut(lp, 0, np.array([False, True]), m.lower, m.upper) is None


def test_cut_helpers():
    c = Cut({0: 1.0, 2: -2.0}, 3.0)
    assert c.dense(3).tolist() == [1.0, 0.0, -2.0]
    assert c.violation([5.0, 9.0, 1.0]) == 0.0
    assert c.key() == Cut({2: -2.0, 0: 1.0}, 3.0).key()


def max_over_node(model, pi, lower, upper):
    """Exact max of pi.x over the integer points of the model rows within the node box."""
    A = model.matrix
    lb = np.where(np.array([s != LE for s in model.senses]), model.rhs, -np.inf)
    ub = np.where(np.array([s != GE for s in model.senses]), model.rhs, np.inf)
    res = milp(-pi, constraints=LinearConstraint(A, lb, ub), integrality=model.integer_mask.astype(int),
               bounds=Bounds(lower, upper), options={"mip_rel_gap": 0})
    if res.status == 2:  # infeasible node
        return -np.inf
    assert res.status == 0
    return -res.fun


@pytest.mark.parametrize("cap", [3, 50])
def test_synthetic_cuts_are_valid(cap):
    m = build_model(Instance.synthetic(5, 3, seed=3), station_cap=cap)
    _, stats = branch_and_cut(m, gap=1e-9, record_cuts=True)
    assert stats.cut_log
    for cut, lo, hi in stats.cut_log:
        pi = cut.dense(m.n_vars)
        assert max_over_node(m, pi, lo, hi) <= cut.rhs + 1e-6 * max(1.0, abs(cut.rhs))
