"""Acceptance criteria 1-8.

Each test stores its verdict in ``conftest.ACCEPTANCE`` before asserting, so
the terminal summary prints one ``criterion N: PASS/FAIL/SKIP`` line per
criterion. Run with ``pytest tests/test_acceptance.py`` or directly as a
script.
"""

import itertools
import math
import os
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from evsiting.cli import main as cli_main
from evsiting.costmodel import (
    ChargerSpec, charging_cost, charging_time, charging_time_derated, evaluate, installation_cost, land_cost,
    maintenance_cost, operation_cost, travel_cost, waiting_cost,
)
from evsiting.geo import DistanceMatrix
from evsiting.ingest import Instance
from evsiting.model import EQ, GE, LE, brute_force, build_model, check_feasibility
from evsiting.report import breakdown_shares
from evsiting.solver import branch_and_cut

N_INSTANCES = 200
CAP = 3
# tighter than the 1e-4 default so that the optimum matches the oracle to 1e-6
SWEEP_GAP = 5e-7
TIME_BUDGET = 60.0
GAP_CONTRACT = 1e-4


def record(n, ok, detail):
    conftest.ACCEPTANCE[n] = (ok, detail)


def sweep_instances():
    rng = random.Random(0)
    for seed in range(N_INSTANCES):
        yield seed, rng.randint(1, 8), rng.randint(1, 6)


@pytest.fixture(scope="module")
def sweep():
    runs = []
    t_solver = t_oracle = 0.0
    for seed, ns, nr in sweep_instances():
        model = build_model(Instance.synthetic(ns, nr, seed=seed), station_cap=CAP)
        t0 = time.perf_counter()
        sol, stats = branch_and_cut(model, gap=SWEEP_GAP)
        t1 = time.perf_counter()
        oracle = brute_force(model, cap=CAP)
        t2 = time.perf_counter()
        t_solver += t1 - t0
        t_oracle += t2 - t1
        runs.append({"seed": seed, "size": (ns, nr), "model": model, "sol": sol, "stats": stats, "oracle": oracle})
    return runs, t_solver, t_oracle


def test_criterion_1_oracle_equivalence(sweep):
    runs, t_solver, t_oracle = sweep
    bad = []
    for r in runs:
        sol, oracle = r["sol"], r["oracle"]
        if (sol is None) != (oracle is None):
            bad.append(r["seed"])
        elif sol is not None and abs(sol.objective - oracle.objective) > 1e-6 * max(1.0, abs(oracle.objective)):
            bad.append(r["seed"])
    total = t_solver + t_oracle
    ok = not bad and total < TIME_BUDGET
    record(1, ok, f"{len(runs) - len(bad)}/{len(runs)} agree within 1e-6; "
                  f"{total:.1f} s total (solver {t_solver:.1f} s, oracle {t_oracle:.1f} s)")
    assert not bad, f"mismatching seeds: {bad}"
    assert total < TIME_BUDGET


def test_criterion_2_gap_contract(sweep):
    runs, _, _ = sweep
    done = [r for r in runs if r["stats"].status in ("optimal", "gap_reached")]
    bad = [r["seed"] for r in done if not r["stats"].final_gap <= GAP_CONTRACT]
    infeasible = [r["seed"] for r in runs if r["stats"].status == "infeasible"]
    unfinished = len(runs) - len(done) - len(infeasible)
    ok = not bad and unfinished == 0
    record(2, ok, f"{len(done)} completed runs with final_gap <= 1e-4, {len(infeasible)} infeasible, "
                  f"{unfinished} unfinished")
    assert not bad and unfinished == 0


def test_criterion_3_feasibility(sweep):
    runs, _, _ = sweep
    done = [r for r in runs if r["sol"] is not None]
    bad = [r["seed"] for r in done if not check_feasibility(r["model"], r["sol"], tol=1e-6)]
    record(3, not bad, f"{len(done) - len(bad)}/{len(done)} incumbents feasible at 1e-6")
    assert not bad


def test_criterion_5_monotone_bounds(sweep):
    runs, _, _ = sweep
    bad = []
    for r in runs:
        bounds = [v for _, v in r["stats"].bound_history]
        incs = [v for _, v in r["stats"].incumbent_history]
        up = all(b >= a - 1e-9 * max(1.0, abs(a)) for a, b in zip(bounds, bounds[1:]))
        down = all(b <= a for a, b in zip(incs, incs[1:]))
        if not (up and down):
            bad.append(r["seed"])
    record(5, not bad, f"{len(runs) - len(bad)}/{len(runs)} runs monotone")
    assert not bad


# ---------------------------------------------------------------------------
# criterion 4


def _pure_integer_rows(model):
    return [row for row in model.constraints if all(model.variables[k].integer for k in row.coefs)]


def _row_ok(sense, act, rhs, tol):
    if sense == LE:
        return act <= rhs + tol
    if sense == GE:
        return act >= rhs - tol
    return abs(act - rhs) <= tol


def integer_feasible_points(model):
    """Every (z, vertex of Y(z)) pair, where z ranges over the integer vectors
    within the root bounds that satisfy the pure-integer rows and Y(z) is the
    polytope of the continuous variables once z is fixed.

    A linear function is maximised over the integer-feasible set at one of
    these points, so checking a cut against all of them proves validity.
    """
    n = model.n_vars
    ints = np.flatnonzero(model.integer_mask)
    conts = np.flatnonzero(~model.integer_mask)
    A = model.matrix
    rhs = model.rhs
    senses = model.senses
    int_rows = _pure_integer_rows(model)
    mixed = [i for i, row in enumerate(model.constraints) if any(not model.variables[k].integer for k in row.coefs)]

    # hyperplanes in y-space: mixed rows (rhs depends on z) and y bounds
    planes = [("row", i) for i in mixed]
    planes += [("lo", k) for k in range(len(conts))] + [("hi", k) for k in range(len(conts))]
    ny = len(conts)
    combos, inverses = [], []
    for combo in itertools.combinations(range(len(planes)), ny):
        M = np.zeros((ny, ny))
        for r, p in enumerate(combo):
            kind, i = planes[p]
            if kind == "row":
                M[r] = A[i, conts]
            else:
                M[r, i] = 1.0
        if abs(np.linalg.det(M)) > 1e-10:
            combos.append(combo)
            inverses.append(np.linalg.inv(M))
    inverses = np.array(inverses)

    points = []
    ranges = [range(int(model.lower[k]), int(model.upper[k]) + 1) for k in ints]
    for z in itertools.product(*ranges):
        x = np.zeros(n)
        x[ints] = z
        if not all(_row_ok(row.sense, row.activity(x), row.rhs, 1e-9 * max(1.0, abs(row.rhs))) for row in int_rows):
            continue
        if ny == 0:
            points.append(x)
            continue
        residual = rhs - A[:, ints] @ np.asarray(z, dtype=float)
        b = np.array([[residual[planes[p][1]] if planes[p][0] == "row" else
                       (model.lower[conts[planes[p][1]]] if planes[p][0] == "lo" else model.upper[conts[planes[p][1]]])
                       for p in combo] for combo in combos])
        ys = np.einsum("kij,kj->ki", inverses, b)
        ok = np.all(ys >= model.lower[conts] - 1e-9, axis=1) & np.all(ys <= model.upper[conts] + 1e-9, axis=1)
        act = ys @ A[np.ix_(mixed, conts)].T
        for col, i in enumerate(mixed):
            tol = 1e-9 * max(1.0, abs(residual[i]))
            if senses[i] == LE:
                ok &= act[:, col] <= residual[i] + tol
            elif senses[i] == GE:
                ok &= act[:, col] >= residual[i] - tol
            else:
                ok &= np.abs(act[:, col] - residual[i]) <= tol
        for y in np.unique(np.round(ys[ok], 12), axis=0):
            p = x.copy()
            p[conts] = y
            points.append(p)
    return np.array(points).reshape(-1, n)


def cut_sweep_instances():
    rng = random.Random(4)
    seed = 0
    while True:
        ns, nr = rng.choice([(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 1)])
        yield seed, ns, nr
        seed += 1


def test_criterion_4_cut_validity():
    runs = cuts = checks = 0
    violations = []
    for seed, ns, nr in cut_sweep_instances():
        if runs == 50:
            break
        model = build_model(Instance.synthetic(ns, nr, seed=1000 + seed), station_cap=2)
        _, stats = branch_and_cut(model, gap=0.0, record_cuts=True)
        runs += 1
        if not stats.cut_log:
            continue
        pts = integer_feasible_points(model)
        ints = model.integer_mask
        for cut, lo, hi in stats.cut_log:
            cuts += 1
            inside = np.all((pts[:, ints] >= lo[ints] - 1e-9) & (pts[:, ints] <= hi[ints] + 1e-9), axis=1)
            sub = pts[inside]
            checks += len(sub)
            pi = cut.dense(model.n_vars)
            act = sub @ pi
            scale = np.maximum(1.0, np.maximum(abs(cut.rhs), np.abs(sub) @ np.abs(pi)))
            if np.any(act - cut.rhs > 1e-7 * scale):
                violations.append((seed, cut))
    ok = not violations and cuts > 0
    record(4, ok, f"{runs} runs, {cuts} cuts checked against {checks} node points, {len(violations)} violations")
    assert cuts > 0
    assert not violations


# ---------------------------------------------------------------------------
# criterion 6


def test_criterion_6_full_scale():
    data = os.environ.get("EVCS_DATA_DIR")
    if not data:
        record(6, None, "dataset not available (set EVCS_DATA_DIR to a directory with sites, rps, params)")
        pytest.skip("EVCS_DATA_DIR not set")
    d = Path(data)
    sites = next(p for p in (d / "sites.csv", d / "sites.geojson") if p.exists())
    rps = next(p for p in (d / "rps.csv", d / "rps.geojson") if p.exists())
    inst = Instance.from_files(sites, rps, d / "params.yaml")
    model = build_model(inst)
    sol, stats = branch_and_cut(model, gap=GAP_CONTRACT, time_limit=600.0)
    ok = sol is not None and stats.final_gap <= GAP_CONTRACT and bool(check_feasibility(model, sol))
    detail = f"status={stats.status} gap={stats.final_gap!r} time={stats.wall_time:.0f} s"
    if sol is not None:
        p = breakdown_shares(sol.breakdown).percent
        ranking = p["charging"] >= p["operation"] >= p["travel"] and p["maintenance"] == min(p.values())
        ok = ok and ranking
        detail += f" opened={len(sol.opened_sites)} stations={sol.total_stations} ranking={'ok' if ranking else 'off'}"
    record(6, ok, detail)
    assert ok


# ---------------------------------------------------------------------------
# criterion 7


def test_criterion_7_cost_model_hand_values():
    s2 = ChargerSpec("L2", install_cost=14600.0, maintenance_cost=5.0, energy_per_day=50.0, power=7.4)
    s3 = ChargerSpec("L3", install_cost=29200.0, maintenance_cost=20.0, energy_per_day=200.0, power=60.0)
    dmat = DistanceMatrix(("r1",), ("a",), np.array([[5.0]]), 10.0)
    checks = {
        # 1 * 14600 / 14600
        "installation": (installation_cost(1, 0, s2, s3, 14600), 1.0),
        # 14600 / 14600 * (1 + 1)
        "land": (land_cost(1, 1, 14600.0, 14600), 2.0),
        # 2 * 5 + 1 * 20
        "maintenance": (maintenance_cost(2, 1, s2, s3), 30.0),
        # (2 * 50 + 1 * 200) * 3
        "operation": (operation_cost(2, 1, s2, s3, 3.0), 900.0),
        "charging": (charging_cost(2, 1, s2, s3, 3.0), 900.0),
        # 400 * 0.5 * 3
        "waiting": (waiting_cost(2, 1, 400.0, 0.5), 600.0),
        # 5 km * 2 per km * 1 * 10 vehicles
        "travel": (travel_cost({("a", "r1"): 10}, dmat, 2.0, 1.0), 100.0),
        # 17 / (0.85 * 20) = 17 / 17
        "derated time": (charging_time_derated(17.0, 20.0), 1.0),
    }
    bad = [k for k, (got, want) in checks.items() if got != want]
    # 15 * 50 / 740 = 1.01351...; a quotient, so compared to the last ulp range
    t = charging_time(15.0, 50.0, 7.4)
    if abs(t - 750.0 / 740.0) > 1e-15 or round(t, 4) != 1.0135:
        bad.append("charging time")
    inst = conftest.tiny_instance(vehicles=1)
    p = inst.params
    b = evaluate({"s1": 0}, {"s1": 1}, {("s1", "r1"): 1.0}, inst)
    # 9e8 / 14600, 14600 / 14600, 60000, 600 * 2500, 600 * 3500, 300000 * 0.5, 0
    hand = [9.0e8 / 14600, 1.0, 60000.0, 1.5e6, 2.1e6, 150000.0, 0.0]
    got = [b.installation, b.land, b.maintenance, b.operation, b.charging, b.waiting, b.travel]
    if got != hand or p.level3.install_cost != 9.0e8:
        bad.append("one-site evaluate")
    record(7, not bad, f"{len(checks) + 2 - len(bad)}/{len(checks) + 2} hand-computed values exact"
                       + (f"; wrong: {bad}" if bad else ""))
    assert not bad


# ---------------------------------------------------------------------------
# criterion 8


def test_criterion_8_determinism(tmp_path):
    inst_dir = tmp_path / "inst"
    assert cli_main(["synth", "--sites", "7", "--rps", "5", "--seed", "3", "--out-dir", str(inst_dir)]) == 0
    files = ["--sites", str(inst_dir / "sites.csv"), "--rps", str(inst_dir / "rps.csv"),
             "--params", str(inst_dir / "params.yaml")]
    outputs = []
    for k in range(2):
        csv_path, geo_path = tmp_path / f"s{k}.csv", tmp_path / f"s{k}.geojson"
        code = cli_main(["solve", *files, "--out-csv", str(csv_path), "--out-geojson", str(geo_path)])
        assert code == 0
        outputs.append((csv_path.read_bytes(), geo_path.read_bytes()))
    ok = outputs[0] == outputs[1] and len(outputs[0][0].splitlines()) > 1
    record(8, ok, "two solve runs gave byte-identical CSV and GeoJSON" if ok else "outputs differ")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
