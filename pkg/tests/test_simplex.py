import itertools

import numpy as np
import pytest

from evsiting.exceptions import NumericalError
from evsiting.ingest import Instance
from evsiting.model import EQ, GE, LE, Constraint, MilpModel, Variable, brute_force, build_model
from evsiting.solver import solve_lp
from evsiting.solver.simplex import INFEASIBLE, OPTIMAL

from conftest import tiny_instance


def lp_model(cost, rows, lower, upper):
    """rows: (coefs, sense, rhs) with dense coefficient lists."""
    variables = tuple(Variable(f"v{k}", float(lower[k]), float(upper[k]), False) for k in range(len(cost)))
    cons = tuple(Constraint(f"r{i}", {k: float(a) for k, a in enumerate(c) if a}, s, float(b))
                 for i, (c, s, b) in enumerate(rows))
    return MilpModel(variables, {k: float(a) for k, a in enumerate(cost) if a}, cons)


def vertex_oracle(cost, rows, lower, upper, tol=1e-9):
    """Minimum over all basic solutions of the box-constrained LP, or None."""
    n = len(cost)
    planes = [(np.array(c, float), float(b)) for c, _, b in rows]
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        planes += [(e, float(lower[k])), (e, float(upper[k]))]
    best = None
    for combo in itertools.combinations(planes, n):
        A = np.array([p[0] for p in combo])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, np.array([p[1] for p in combo]))
        if np.any(x < np.asarray(lower) - tol) or np.any(x > np.asarray(upper) + tol):
            continue
        ok = True
        for c, s, b in rows:
            act = float(np.dot(c, x))
            if (s == LE and act > b + tol) or (s == GE and act < b - tol) or (s == EQ and abs(act - b) > tol):
                ok = False
                break
        if ok:
            val = float(np.dot(cost, x))
            best = val if best is None else min(best, val)
    return best


def random_lp(rng):
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 5))
    cost = rng.integers(-6, 7, n)
    lower = rng.integers(-4, 1, n)
    upper = lower + rng.integers(1, 7, n)
    rows = []
    for _ in range(m):
        c = rng.integers(-5, 6, n)
        if not c.any():
            c[0] = 1
        s = rng.choice([LE, LE, GE, EQ])
        # rhs near the activity of a random box point keeps most LPs feasible
        x = rng.uniform(lower, upper)
        rows.append((c.tolist(), str(s), float(round(c @ x + rng.uniform(-2, 2), 3))))
    return cost.tolist(), rows, lower.tolist(), upper.tolist()


def test_single_bound_row():
    m = lp_model([1.0], [([1.0], GE, 3.0)], [0.0], [10.0])
    lp = solve_lp(m)
    assert lp.status == OPTIMAL
    assert lp.values[0] == pytest.approx(3.0, abs=1e-12) and lp.objective == pytest.approx(3.0)


def test_infeasible_box():
    m = lp_model([1.0], [([1.0], GE, 11.0)], [0.0], [10.0])
    assert solve_lp(m).status == INFEASIBLE


def test_requires_finite_bounds():
    m = lp_model([1.0], [([1.0], GE, 1.0)], [0.0], [np.inf])
    with pytest.raises(ValueError):
        solve_lp(m)


def test_vertex_enumeration_oracle():
    rng = np.random.default_rng(2024)
    feasible = 0
    for _ in range(200):
        cost, rows, lower, upper = random_lp(rng)
        expected = vertex_oracle(cost, rows, lower, upper)
        lp = solve_lp(lp_model(cost, rows, lower, upper))
        if expected is None:
            assert lp.status == INFEASIBLE
            continue
        feasible += 1
        assert lp.status == OPTIMAL
        assert lp.objective == pytest.approx(expected, abs=1e-8 * max(1.0, abs(expected)))
        x = lp.values
        assert np.all(x >= np.array(lower) - 1e-9) and np.all(x <= np.array(upper) + 1e-9)
        for c, s, b in rows:
            act = float(np.dot(c, x))
            assert (s != LE or act <= b + 1e-7) and (s != GE or act >= b - 1e-7) and (s != EQ or abs(act - b) <= 1e-7)
    assert feasible >= 100


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(100):
        cost, rows, lower, upper = random_lp(rng)
        m = lp_model(cost, rows, lower, upper)
        first = solve_lp(m)
        if first.status != OPTIMAL:
            continue
        k = int(rng.integers(len(cost)))
        lo, hi = m.lower.copy(), m.upper.copy()
        hi[k] = np.floor((lo[k] + first.values[k]) / 2)
        if hi[k] < lo[k]:
            continue
        cold = solve_lp(m, lo, hi)
        warm = solve_lp(m, lo, hi, basis=first.basis, at_upper=first.at_upper)
        assert warm.status == cold.status
        if cold.status == OPTIMAL:
            assert warm.objective == pytest.approx(cold.objective, abs=1e-8 * max(1.0, abs(cold.objective)))
            checked += 1
    assert checked > 20


def test_deterministic():
    m = build_model(Instance.synthetic(5, 4, seed=9), station_cap=3)
    a, b = solve_lp(m), solve_lp(m)
    assert a.basis == b.basis
    assert np.array_equal(a.values, b.values)


def test_relaxation_of_trivial_instance():
    m = build_model(tiny_instance(vehicles=30), station_cap=4)
    assert solve_lp(m).objective <= brute_force(m, cap=4).objective * (1 + 1e-12)


def test_numerical_error_carries_diagnostics():
    err = NumericalError("singular basis", basis=(1, 2))
    assert err.diagnostics["basis"] == (1, 2)
