"""Integer programming model of the siting problem.

Variables, per candidate site ``i`` and reachable pair ``(i, j)``:

* ``x2_i``, ``x3_i`` -- level-2 / level-3 station counts, integer in ``[0, U_i]``
* ``open_i`` -- binary, 1 when the site hosts any station
* ``y_i_j`` -- fraction of RP ``j``'s vehicles served at site ``i``, in ``[0, 1]``

Rows:

* ``budget`` -- one-off installation prices of all stations <= B
* ``demand[j]`` -- sum_i y_ij = 1 for every RP with vehicles
* ``capacity[i]`` -- r (x2 e2 + x3 e3) >= sum_j ebar c_j y_ij
* ``aggregate`` -- r sum_i (x2 e2 + x3 e3) >= ebar sum_j c_j (implied, kept as a valid inequality)
* ``link[i]`` -- x2 + x3 <= U_i open

``y`` only exists for pairs within ``d_max``, which is how the range limit
enters the model. The objective is the daily total cost of
:mod:`evsiting.costmodel`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .costmodel import CostBreakdown, evaluate, site_breakdown, site_specs
from .exceptions import ContractViolationError, InfeasibleInstanceError, TooLargeError
from .ingest import Instance, atomic_write_text

LE, GE, EQ = "<=", ">=", "="

#: Hard upper bound on stations of one level at one site.
DEFAULT_STATION_CAP = 50

INTEGRALITY_TOL = 1e-6


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    integer: bool


@dataclass(frozen=True)
class Constraint:
    name: str
    coefs: Mapping[int, float]
    sense: str
    rhs: float

    def activity(self, x) -> float:
        return math.fsum(a * x[k] for k, a in self.coefs.items())


@dataclass(frozen=True, eq=False)
class MilpModel:
    """A minimisation MILP with finite variable bounds.

    ``site_index`` maps site id to ``(x2, x3, open)`` variable indices and
    ``pair_index`` maps ``(site_id, rp_id)`` to the assignment variable.
    Both are empty for models not built from an :class:`Instance`.
    """

    variables: tuple
    objective: Mapping[int, float]
    constraints: tuple
    site_index: Mapping[str, tuple] = field(default_factory=dict)
    pair_index: Mapping[tuple, int] = field(default_factory=dict)
    instance: Instance | None = None

    def __post_init__(self):
        n = len(self.variables)
        for row in self.constraints:
            if row.sense not in (LE, GE, EQ):
                raise ValueError(f"row {row.name}: unknown sense {row.sense!r}")
            if any(not 0 <= k < n for k in row.coefs):
                raise ValueError(f"row {row.name} references an undeclared variable")
        if any(not 0 <= k < n for k in self.objective):
            raise ValueError("objective references an undeclared variable")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.variables], dtype=float)

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.variables], dtype=float)

    @cached_property
    def integer_mask(self) -> np.ndarray:
        return np.array([v.integer for v in self.variables], dtype=bool)

    @cached_property
    def cost(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for k, a in self.objective.items():
            c[k] = a
        return c

    @cached_property
    def matrix(self) -> np.ndarray:
        a = np.zeros((self.n_rows, self.n_vars))
        for r, row in enumerate(self.constraints):
            for k, v in row.coefs.items():
                a[r, k] = v
        return a

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.array([row.rhs for row in self.constraints], dtype=float)

    @cached_property
    def senses(self) -> tuple:
        return tuple(row.sense for row in self.constraints)

    @cached_property
    def integral_rows(self) -> np.ndarray:
        """Rows whose slack is integer at every integer-feasible point."""
        flags = []
        for row in self.constraints:
            ok = float(row.rhs).is_integer() and all(
                self.variables[k].integer and float(a).is_integer() for k, a in row.coefs.items()
            )
            flags.append(ok)
        return np.array(flags, dtype=bool)

    def objective_value(self, x) -> float:
        return math.fsum(a * x[k] for k, a in self.objective.items())

    def index_of(self, name: str) -> int:
        for k, v in enumerate(self.variables):
            if v.name == name:
                return k
        raise KeyError(name)

    def with_objective(self, objective: Mapping[int, float]) -> "MilpModel":
        return MilpModel(self.variables, dict(objective), self.constraints,
                         self.site_index, self.pair_index, self.instance)

    def decode(self, x) -> "Solution":
        """Turn a variable vector of an instance model into a :class:`Solution`."""
        if self.instance is None:
            raise ValueError("model was not built from an instance")
        x = np.asarray(x, dtype=float)
        x2, x3, opened = {}, {}, {}
        for sid, (k2, k3, ko) in self.site_index.items():
            x2[sid] = int(round(x[k2]))
            x3[sid] = int(round(x[k3]))
            opened[sid] = int(round(x[ko]))
        shares = {pair: float(x[k]) for pair, k in self.pair_index.items() if x[k] > 0}
        breakdown = evaluate(x2, x3, shares, self.instance)
        return Solution(x2=x2, x3=x3, open=opened, assignment=shares,
                        objective=self.objective_value(x), breakdown=breakdown, values=x.copy())

    def export_lp(self, path) -> None:
        """Write the model in CPLEX LP text format."""
        atomic_write_text(path, to_lp_text(self))


@dataclass(frozen=True, eq=False)
class Solution:
    """Decoded decision for an instance model.

    ``assignment`` holds only pairs with a positive share.
    """

    x2: Mapping[str, int]
    x3: Mapping[str, int]
    open: Mapping[str, int]
    assignment: Mapping[tuple, float]
    objective: float
    breakdown: CostBreakdown
    values: np.ndarray = field(repr=False, default=None)

    @property
    def total_stations(self) -> int:
        return sum(self.x2.values()) + sum(self.x3.values())

    @property
    def opened_sites(self) -> list:
        return [sid for sid in self.x2 if self.x2[sid] + self.x3[sid] >= 1]


def station_caps(instance: Instance, hard_cap: int = DEFAULT_STATION_CAP) -> dict:
    """Per-site cap ``U_i = ceil(ebar * total vehicles / (r * min(e2, e3)))``, clamped to ``hard_cap``."""
    params = instance.params
    demand = params.avg_energy_per_vehicle_day * sum(p.vehicles for p in instance.rps)
    caps = {}
    for site in instance.sites:
        spec2, spec3 = site_specs(site, params)
        unit = params.traffic_rate * min(spec2.energy_per_day, spec3.energy_per_day)
        if demand == 0:
            caps[site.id] = 0
        elif unit <= 0:
            caps[site.id] = hard_cap
        else:
            caps[site.id] = min(hard_cap, math.ceil(demand / unit - 1e-9))
    return caps


def build_model(instance: Instance, station_cap: int = DEFAULT_STATION_CAP,
                include_aggregate: bool = True) -> MilpModel:
    """Assemble the siting MILP for ``instance``.

    Raises :class:`InfeasibleInstanceError` if an RP with vehicles has no
    site within ``d_max``.
    """
    params = instance.params
    dmat = instance.dmat
    reach = dmat.reachable
    unreachable = [rp.id for j, rp in enumerate(instance.rps) if rp.vehicles > 0 and not reach[j].any()]
    if unreachable:
        raise InfeasibleInstanceError(unreachable)

    caps = station_caps(instance, station_cap)
    h = params.amortization_days
    r = params.traffic_rate
    ebar = params.avg_energy_per_vehicle_day

    variables, objective = [], {}
    site_index, pair_index = {}, {}
    budget, aggregate = {}, {}
    specs = {}
    for site in instance.sites:
        spec2, spec3 = site_specs(site, params)
        specs[site.id] = (spec2, spec3)
        u = caps[site.id]
        k2 = len(variables)
        variables += [Variable(f"x2_{site.id}", 0.0, float(u), True),
                      Variable(f"x3_{site.id}", 0.0, float(u), True),
                      Variable(f"open_{site.id}", 0.0, 1.0, True)]
        site_index[site.id] = (k2, k2 + 1, k2 + 2)
        objective[k2] = site_breakdown(1, 0, site, params).total
        objective[k2 + 1] = site_breakdown(0, 1, site, params).total
        budget[k2], budget[k2 + 1] = spec2.install_cost, spec3.install_cost
        aggregate[k2], aggregate[k2 + 1] = r * spec2.energy_per_day, r * spec3.energy_per_day

    served_rps = [(j, rp) for j, rp in enumerate(instance.rps) if rp.vehicles > 0]
    for j, rp in served_rps:
        for i, site in enumerate(instance.sites):
            if reach[j, i]:
                k = len(variables)
                variables.append(Variable(f"y_{site.id}_{rp.id}", 0.0, 1.0, False))
                pair_index[(site.id, rp.id)] = k
                objective[k] = float(dmat.d[j, i]) * params.price_per_km * r * rp.vehicles

    rows = [Constraint("budget", budget, LE, params.budget)]
    for j, rp in served_rps:
        coefs = {pair_index[(s.id, rp.id)]: 1.0 for s in instance.sites if (s.id, rp.id) in pair_index}
        rows.append(Constraint(f"demand_{rp.id}", coefs, EQ, 1.0))
    for site in instance.sites:
        k2, k3, _ = site_index[site.id]
        spec2, spec3 = specs[site.id]
        coefs = {k2: r * spec2.energy_per_day, k3: r * spec3.energy_per_day}
        for j, rp in served_rps:
            k = pair_index.get((site.id, rp.id))
            if k is not None:
                coefs[k] = -ebar * rp.vehicles
        rows.append(Constraint(f"capacity_{site.id}", coefs, GE, 0.0))
    if include_aggregate:
        rows.append(Constraint("aggregate", aggregate, GE, ebar * sum(rp.vehicles for rp in instance.rps)))
    for site in instance.sites:
        k2, k3, ko = site_index[site.id]
        rows.append(Constraint(f"link_{site.id}", {k2: 1.0, k3: 1.0, ko: -float(caps[site.id])}, LE, 0.0))

    objective = {k: a for k, a in objective.items() if a != 0}
    return MilpModel(tuple(variables), objective, tuple(rows), site_index, pair_index, instance)


# --------------------------------------------------------------------------
# feasibility


@dataclass(frozen=True)
class Violation:
    row: str
    slack: float
    magnitude: float


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.feasible

    def names(self) -> list:
        return [v.row for v in self.violations]


def check_feasibility(model: MilpModel, x, tol: float = 1e-6) -> FeasibilityReport:
    """Evaluate every bound, row and integrality requirement at ``x``.

    Row slack is signed so that negative means violated (``rhs - activity``
    for ``<=`` rows). A row counts as violated when the slack is below
    ``-tol * max(1, |rhs|, largest |term|)``. Integrality uses ``tol`` as an
    absolute tolerance.
    """
    if isinstance(x, Solution):
        x = x.values
    x = np.asarray(x, dtype=float)
    out = []
    for k, var in enumerate(model.variables):
        if x[k] < var.lower - tol:
            out.append(Violation(f"lower_{var.name}", x[k] - var.lower, var.lower - x[k]))
        if x[k] > var.upper + tol:
            out.append(Violation(f"upper_{var.name}", var.upper - x[k], x[k] - var.upper))
        if var.integer and abs(x[k] - round(x[k])) > tol:
            out.append(Violation(f"integrality_{var.name}", -abs(x[k] - round(x[k])), abs(x[k] - round(x[k]))))
    for row in model.constraints:
        act = row.activity(x)
        scale = max([1.0, abs(row.rhs)] + [abs(a * x[k]) for k, a in row.coefs.items()])
        if row.sense == LE:
            slack = row.rhs - act
        elif row.sense == GE:
            slack = act - row.rhs
        else:
            slack = -abs(act - row.rhs)
        if slack < -tol * scale:
            out.append(Violation(row.name, slack, -slack))
    return FeasibilityReport(tuple(out))


def solution_vector(model: MilpModel, x2: Mapping, x3: Mapping, shares: Mapping, opened: Mapping | None = None):
    """Build a variable vector from per-site counts and assignment shares."""
    x = np.zeros(model.n_vars)
    for sid, (k2, k3, ko) in model.site_index.items():
        x[k2] = x2.get(sid, 0)
        x[k3] = x3.get(sid, 0)
        x[ko] = opened.get(sid, 0) if opened is not None else int(x[k2] + x[k3] > 0)
    for pair, share in shares.items():
        if pair not in model.pair_index:
            raise ContractViolationError(f"assignment {pair} is not a reachable pair of the model")
        x[model.pair_index[pair]] = share
    return x


# --------------------------------------------------------------------------
# LP file export


def _lp_num(a: float) -> str:
    return repr(float(a))


def _lp_expr(coefs: Mapping[int, float], names) -> str:
    parts = []
    for k in sorted(coefs):
        a = coefs[k]
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_lp_num(abs(a))} {names[k]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_text(model: MilpModel) -> str:
    names = [v.name for v in model.variables]
    lines = ["\\ siting model", "Minimize", " obj: " + _lp_expr(model.objective, names), "Subject To"]
    for row in model.constraints:
        lines.append(f" {row.name}: {_lp_expr(row.coefs, names)} {row.sense} {_lp_num(row.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        lines.append(f" {_lp_num(v.lower)} <= {v.name} <= {_lp_num(v.upper)}")
    ints = [v.name for v in model.variables if v.integer]
    if ints:
        lines.append("General")
        for k in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# brute-force oracle


def brute_force(model: MilpModel, cap: int = 4, max_count_vars: int = 16):
    """Exact optimum of an instance model by enumerating station counts.

    Every ``(x2, x3)`` vector within bounds is considered; ``open`` is set to
    its smallest feasible value and the remaining assignment problem (a
    transportation LP) is solved exactly by the simplex solver. Branches are
    skipped only when their installation spend already exceeds the budget,
    when the remaining sites cannot supply the missing capacity, or when
    their station cost plus a lower bound on travel cannot beat the best
    value found. Equal-cost optima are resolved to the lexicographically
    smallest variable vector.

    Returns a :class:`Solution`, or ``None`` if the instance is infeasible.
    """
    from .solver.simplex import solve_lp

    if model.instance is None:
        raise ValueError("brute_force needs a model built from an instance")
    sites = list(model.site_index)
    count_vars = [k for sid in sites for k in model.site_index[sid][:2]]
    if len(count_vars) > max_count_vars:
        raise TooLargeError(f"{len(count_vars)} station-count variables exceed the limit of {max_count_vars}")
    if cap > 4 or any(model.upper[k] > cap for k in count_vars):
        raise TooLargeError(f"station-count bounds exceed the enumeration cap {min(cap, 4)}")

    c = model.cost
    rows = {row.name: row for row in model.constraints}
    budget_row = rows["budget"]
    budget_coef = budget_row.coefs
    cap_rows = [rows[f"capacity_{sid}"] for sid in sites]
    supply = [(cap_rows[n].coefs.get(model.site_index[sid][0], 0.0), cap_rows[n].coefs.get(model.site_index[sid][1], 0.0))
              for n, sid in enumerate(sites)]
    inst = model.instance
    demand_energy = inst.params.avg_energy_per_vehicle_day * sum(p.vehicles for p in inst.rps)
    need = demand_energy * (1 - 1e-12)

    # per-site candidate (x2, x3) pairs, cheapest first
    choices = []
    for sid in sites:
        k2, k3, ko = model.site_index[sid]
        link = rows.get(f"link_{sid}")
        limit = -link.coefs[ko] if link is not None else model.upper[k2] + model.upper[k3]
        opts = [(a, b) for a in range(int(model.upper[k2]) + 1) for b in range(int(model.upper[k3]) + 1)
                if a + b <= limit + 1e-9]
        choices.append(sorted(opts, key=lambda ab: (ab[0] * c[k2] + ab[1] * c[k3], ab)))
    max_supply_after = [0.0] * (len(sites) + 1)
    cheapest_rate_after = [math.inf] * (len(sites) + 1)
    for n in range(len(sites) - 1, -1, -1):
        k2, k3, _ = model.site_index[sites[n]]
        s2, s3 = supply[n]
        max_supply_after[n] = max_supply_after[n + 1] + model.upper[k2] * s2 + model.upper[k3] * s3
        rates = [c[k] / s for k, s in ((k2, s2), (k3, s3)) if s > 0]
        cheapest_rate_after[n] = min([cheapest_rate_after[n + 1]] + rates)

    # per RP: pair cost and energy drawn, by site position
    pos = {sid: n for n, sid in enumerate(sites)}
    rp_ids = sorted({rid for _, rid in model.pair_index})
    travel_by_site = np.full((len(rp_ids), len(sites)), np.inf)
    draw = np.zeros((len(rp_ids), len(sites)))
    for r, rid in enumerate(rp_ids):
        for sid in sites:
            k = model.pair_index.get((sid, rid))
            if k is not None:
                travel_by_site[r, pos[sid]] = c[k]
                draw[r, pos[sid]] = -cap_rows[pos[sid]].coefs[k]
    by_price = [[n for n in np.argsort(travel_by_site[r], kind="stable") if np.isfinite(travel_by_site[r, n])]
                for r in range(len(rp_ids))]
    max_energy = np.array([model.upper[model.site_index[sid][0]] * supply[n][0]
                           + model.upper[model.site_index[sid][1]] * supply[n][1] for n, sid in enumerate(sites)])
    energy = np.zeros(len(sites))

    def travel_floor(caps):
        # each RP alone fills the cheapest capacity first; inf if it cannot be served
        total = 0.0
        for r, order in enumerate(by_price):
            left, cost = 1.0, 0.0
            for n in order:
                if caps[n] <= 0:
                    continue
                f = min(left, caps[n] / draw[r, n])
                cost += f * travel_by_site[r, n]
                left -= f
                if left <= 1e-12:
                    break
            if left > 1e-6:
                return math.inf
            total += cost
        return total * (1 - 1e-9)

    best = {"obj": math.inf, "x": None}
    slack = 1e-9

    def improves(obj, x):
        tol = 1e-9 * max(1.0, abs(best["obj"])) if math.isfinite(best["obj"]) else 0.0
        if obj < best["obj"] - tol:
            return True
        return abs(obj - best["obj"]) <= tol and tuple(x) < tuple(best["x"])

    def leaf(counts):
        lo = model.lower.copy()
        hi = model.upper.copy()
        for n, sid in enumerate(sites):
            k2, k3, ko = model.site_index[sid]
            a, b = counts[n]
            lo[k2] = hi[k2] = a
            lo[k3] = hi[k3] = b
            needed = 0 if a + b == 0 else 1
            lo[ko] = hi[ko] = needed
        station = sum(a * c[model.site_index[sid][0]] + b * c[model.site_index[sid][1]]
                      for sid, (a, b) in zip(sites, counts))
        travel_lb = travel_floor(energy)
        if math.isinf(travel_lb):
            return
        if math.isfinite(best["obj"]) and station + travel_lb > best["obj"] * (1 + slack) + slack:
            return
        x0 = np.where(model.integer_mask, lo, 0.0)
        for row in model.constraints:
            if all(model.variables[k].integer for k in row.coefs):
                act = row.activity(x0)
                tol = 1e-9 * max(1.0, abs(row.rhs))
                if (row.sense == LE and act > row.rhs + tol) or (row.sense == GE and act < row.rhs - tol) or (
                        row.sense == EQ and abs(act - row.rhs) > tol):
                    return
        warm = best.get("warm")
        lp = solve_lp(model, lo, hi, basis=warm and warm[0], at_upper=warm and warm[1])
        if lp.status != "optimal":
            return
        best["warm"] = (lp.basis, lp.at_upper)
        x = lp.values.copy()
        x[model.integer_mask] = np.round(x[model.integer_mask])
        obj = model.objective_value(x)
        if best["x"] is None or improves(obj, x):
            best["obj"], best["x"] = obj, x

    counts = [None] * len(sites)

    def dfs(n, spent, station, supplied):
        if spent > budget_row.rhs * (1 + 1e-12) + 1e-9:
            return
        deficit = need - supplied
        if deficit > max_supply_after[n] * (1 + 1e-12):
            return
        bound = station + (max(deficit, 0.0) * cheapest_rate_after[n] if deficit > 0 else 0.0)
        if bound > best["obj"] * (1 + slack) + slack:
            return
        bound += travel_floor(np.concatenate([energy[:n], max_energy[n:]]))
        if math.isinf(bound) or bound > best["obj"] * (1 + slack) + slack:
            return
        if n == len(sites):
            leaf(counts)
            return
        k2, k3, _ = model.site_index[sites[n]]
        s2, s3 = supply[n]
        for a, b in choices[n]:
            counts[n] = (a, b)
            energy[n] = a * s2 + b * s3
            dfs(n + 1, spent + a * budget_coef.get(k2, 0.0) + b * budget_coef.get(k3, 0.0),
                station + a * c[k2] + b * c[k3], supplied + a * s2 + b * s3)
        counts[n] = None
        energy[n] = 0.0

    dfs(0, 0.0, 0.0, 0.0)
    if best["x"] is None:
        return None
    return model.decode(best["x"])
