"""Best-bound branch-and-cut over LP relaxations."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..exceptions import NumericalError
from ..model import Solution, check_feasibility
from .cuts import Cut, gomory_cut
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
POOL_TOL = 1e-9
# largest |cosine| between two cuts separated in the same round
MAX_PARALLELISM = 0.3

OPTIMAL_STATUS = "optimal"
GAP_REACHED = "gap_reached"
TIME_LIMIT = "time_limit"
NODE_LIMIT = "node_limit"
INFEASIBLE_STATUS = "infeasible"
NO_SOLUTION = "no_solution"


def mip_gap(best_bound: float, incumbent: float) -> float:
    """Relative gap ``|bound - incumbent| / |incumbent|``.

    Both zero gives 0; a zero incumbent with a nonzero bound gives ``inf``.
    """
    if incumbent == 0:
        return 0.0 if best_bound == 0 else math.inf
    return abs(best_bound - incumbent) / abs(incumbent)


@dataclass(frozen=True)
class Node:
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    bound: float
    depth: int
    id: int
    parent: int | None = None
    # pool indices of the cuts loaded into this node's LP up front
    cuts: tuple = ()
    # pool indices of cuts valid only in this subtree (separated at ancestors)
    local: tuple = ()
    # parent LP basis as (basis, at_upper, pool indices of its cut rows)
    warm: tuple | None = field(default=None, repr=False, compare=False)


def fractional_vars(values, integer_mask, tol=INTEGRALITY_TOL) -> np.ndarray:
    dist = np.abs(values - np.round(values))
    return np.flatnonzero(integer_mask & (dist > tol))


def branch(node: Node, lp, integer_mask, next_id: int = 0) -> tuple[Node, Node]:
    """Split on the most fractional integer variable (ties: lowest index).

    Returns the ``x <= floor`` child first, then ``x >= ceil``.
    """
    frac = fractional_vars(lp.values, integer_mask)
    if frac.size == 0:
        raise ValueError("branch needs a fractional integer variable")
    v = lp.values[frac]
    score = np.abs(v - np.floor(v) - 0.5)
    k = int(frac[np.argmin(score)])  # argmin returns the first, i.e. lowest index
    value = lp.values[k]
    bound = max(node.bound, lp.objective)
    up_lo = node.lower.copy()
    up_lo[k] = math.ceil(value)
    dn_hi = node.upper.copy()
    dn_hi[k] = math.floor(value)
    down = Node(node.lower, dn_hi, bound, node.depth + 1, next_id, node.id, node.cuts, node.local, node.warm)
    up = Node(up_lo, node.upper, bound, node.depth + 1, next_id + 1, node.id, node.cuts, node.local, node.warm)
    return down, up


@dataclass
class SolverStats:
    nodes_explored: int = 0
    cuts_added: int = 0
    incumbent_history: list = field(default_factory=list)
    bound_history: list = field(default_factory=list)
    final_gap: float = math.inf
    best_bound: float = -math.inf
    wall_time: float = 0.0
    status: str = NO_SOLUTION
    lp_iterations: int = 0
    # (cut, node lower, node upper) triples, filled when record_cuts=True
    cut_log: list = field(default_factory=list, repr=False)
    # (node id, parent LP bound, node LP objective), filled when record_cuts=True
    node_log: list = field(default_factory=list, repr=False)


def _dominated(bound, incumbent):
    return math.isfinite(incumbent) and bound >= incumbent - 1e-9 * max(1.0, abs(incumbent))


def _roundable(model):
    """Per variable: (can round down, can round up) without breaking any row.

    A column may move in a direction when every row it appears in only gets
    looser that way.
    """
    A = model.matrix
    senses = np.array(model.senses)
    le = (senses == "<=")[:, None]
    ge = (senses == ">=")[:, None]
    eq = (senses == "=")[:, None]
    nz = A != 0
    # increasing x_k loosens a <= row iff a_ik < 0, a >= row iff a_ik > 0
    up_bad = nz & (eq | (le & (A > 0)) | (ge & (A < 0)))
    down_bad = nz & (eq | (le & (A < 0)) | (ge & (A > 0)))
    return ~down_bad.any(axis=0), ~up_bad.any(axis=0)


def _simple_round(values, frac, roundable, cost):
    """Round the fractional integers in the cheaper safe direction, if any."""
    can_down, can_up = roundable
    x = values.copy()
    for k in frac:
        down_first = cost[k] >= 0
        if can_down[k] and (down_first or not can_up[k]):
            x[k] = math.floor(x[k])
        elif can_up[k]:
            x[k] = math.ceil(x[k])
        else:
            return None
    return x


def _map_basis(warm, active, n_fixed):
    """Translate a basis between LPs that differ only in their cut rows.

    ``n_fixed`` counts structural plus model-row slack columns. Rows of cuts
    missing from ``active`` should have had their slack basic; new cut rows
    enter with their slack basic. A translation that does not give one
    basic column per row is rejected later by the LP solver, which then
    starts cold.
    """
    basis, at_upper, old_active = warm
    pos = {c: i for i, c in enumerate(active)}
    col = np.arange(n_fixed + len(old_active))
    for k, c in enumerate(old_active):
        col[n_fixed + k] = n_fixed + pos[c] if c in pos else -1
    old = set(old_active)
    new_basis = [int(col[b]) for b in basis if col[b] >= 0]
    new_basis += [n_fixed + i for i, c in enumerate(active) if c not in old]
    up = np.zeros(n_fixed + len(active), dtype=bool)
    keep = col >= 0
    up[col[keep]] = np.asarray(at_upper)[keep]
    return new_basis, up


def _nonbasic_cuts(lp, active, n_fixed):
    """Cuts whose slack is nonbasic, i.e. binding at the LP vertex."""
    basic = set(lp.basis)
    return tuple(c for k, c in enumerate(active) if n_fixed + k not in basic)


def format_progress(nodes, bound, incumbent, gap, cuts, elapsed) -> str:
    return f"nodes={nodes} bound={bound!r} incumbent={incumbent!r} gap={gap!r} cuts={cuts} time={elapsed:.3f}"


def branch_and_cut(model, gap: float = 1e-4, time_limit: float | None = None, node_limit: int | None = None,
                   max_cuts_per_node: int = 5, cut_rounds: int = 3, max_parallelism: float = MAX_PARALLELISM, log_every: int = 100,
                   observer: Callable | None = None, record_cuts: bool = False):
    """Solve ``model`` to within relative ``gap``.

    Nodes are processed best bound first (ties: deeper, then older). Every
    node separates up to ``max_cuts_per_node`` Gomory cuts, skipping a cut
    whose direction is closer than ``max_parallelism`` (absolute cosine) to
    one already taken in the same round. Root cuts reference the root
    bounds, so they are globally valid; they are separated in up to
    ``cut_rounds`` rounds with a re-solve after each. Cuts below the root
    reference the node's bounds and are valid in its subtree only; they are
    not re-solved at the node but loaded into its children's LPs.
    ``observer(time, bound, incumbent, gap)`` is called on every incumbent
    improvement and every ``log_every`` nodes, alongside a progress log
    line.

    Node LPs carry only the cuts that matter: those binding at the parent,
    the parent's new cuts, and any other cut valid at the node that its LP
    point violates, added until none is violated. The resulting bound
    equals the bound with every valid cut loaded.

    Returns ``(solution, stats)``; ``solution`` is ``None`` when no
    integer-feasible point was found. For models built from an instance the
    solution is a decoded :class:`~evsiting.model.Solution`, otherwise the
    raw variable vector.
    """
    start = time.perf_counter()
    stats = SolverStats()
    mask = model.integer_mask
    root_lo, root_hi = model.lower.copy(), model.upper.copy()
    integral_rows = model.integral_rows
    n_fixed = model.n_vars + model.n_rows
    roundable = _roundable(model)
    pool: list[Cut] = []
    pool_rows = np.zeros((64, model.n_vars))  # grown by doubling
    pool_rhs = np.zeros(64)
    global_cuts: list = []
    is_global: set = set()
    pool_keys: dict = {}
    incumbent_x = None
    incumbent = math.inf
    heap: list = []
    next_id = 1
    node_id = 0  # node being processed, for error diagnostics
    current = math.inf  # bound of the node being processed

    def elapsed():
        return time.perf_counter() - start

    def global_bound():
        return min(heap[0][0] if heap else math.inf, current, incumbent)

    def report(force=False):
        b = global_bound()
        g = mip_gap(b, incumbent) if math.isfinite(incumbent) else math.inf
        t = elapsed()
        if math.isfinite(b):
            stats.bound_history.append((t, b))
        if force or (log_every and stats.nodes_explored % log_every == 0):
            logger.info(format_progress(stats.nodes_explored, b, incumbent, g, stats.cuts_added, t))
            if observer is not None:
                observer(t, b, incumbent, g)
        return g

    def lp_call(lo, hi, active, warm):
        basis = at_upper = None
        if warm is not None:
            basis, at_upper = _map_basis(warm, active, n_fixed)
        try:
            lp = solve_lp(model, lo, hi, [pool[i] for i in active], basis=basis, at_upper=at_upper)
        except NumericalError as exc:
            exc.diagnostics.setdefault("node", node_id)
            raise
        stats.lp_iterations += lp.iterations
        if lp.status == UNBOUNDED:
            raise ValueError("LP relaxation is unbounded; the model needs finite bounds")
        return lp

    def solve(lo, hi, active, local, warm=None):
        while True:
            lp = lp_call(lo, hi, active, warm)
            if lp.status != OPTIMAL:
                return lp, active
            loaded = set(active)
            idx = np.array([i for i in global_cuts + list(local) if i not in loaded], dtype=int)
            if not idx.size:
                return lp, active
            rhs = pool_rhs[idx]
            viol = pool_rows[idx] @ lp.values - rhs > POOL_TOL * np.maximum(1.0, np.abs(rhs))
            if not viol.any():
                return lp, active
            warm = (lp.basis, lp.at_upper, active)
            active = active + tuple(int(i) for i in idx[viol])

    def try_incumbent(point):
        nonlocal incumbent, incumbent_x
        lo, hi = root_lo.copy(), root_hi.copy()
        lo[mask] = hi[mask] = np.round(point[mask])
        try:
            polished = solve_lp(model, lo, hi)
        except NumericalError as exc:
            exc.diagnostics.setdefault("node", node_id)
            raise
        if polished.status != OPTIMAL:
            return
        x = polished.values.copy()
        x[mask] = np.round(x[mask])
        obj = model.objective_value(x)
        improved = incumbent_x is None or obj < incumbent - 1e-12 * max(1.0, abs(incumbent))
        if improved and check_feasibility(model, x):
            incumbent, incumbent_x = obj, x
            stats.incumbent_history.append((elapsed(), obj))
            report(force=True)

    root = Node(root_lo, root_hi, -math.inf, 0, 0)
    heapq.heappush(heap, (root.bound, 0, root.id, root))
    status = None

    while heap:
        if time_limit is not None and elapsed() >= time_limit:
            status = TIME_LIMIT
            break
        if node_limit is not None and stats.nodes_explored >= node_limit:
            status = NODE_LIMIT
            break
        _, _, _, node = heapq.heappop(heap)
        if _dominated(node.bound, incumbent):
            continue
        stats.nodes_explored += 1
        current = node.bound
        node_id = node.id

        local = node.local
        lp, active = solve(node.lower, node.upper, node.cuts, local, node.warm)
        if lp.status == INFEASIBLE:
            current = math.inf
            report()
            continue
        node_bound = max(node.bound, lp.objective)
        current = node_bound

        cuts_here = 0
        handoff = ()
        for _ in range(cut_rounds):
            if cuts_here >= max_cuts_per_node or node_bound >= incumbent:
                break
            frac = fractional_vars(lp.values, mask)
            if frac.size == 0:
                break
            v = lp.values[frac]
            order = frac[np.argsort(-np.minimum(v - np.floor(v), np.ceil(v) - v), kind="stable")]
            new = []
            dirs = []
            for k in order:
                if cuts_here + len(new) >= max_cuts_per_node:
                    break
                # at the root the node bounds are the root bounds, so the cut is global
                cut = gomory_cut(lp, int(k), mask, node.lower, node.upper, integral_rows, node=node.id)
                if cut is None:
                    continue
                direction = cut.dense(model.n_vars)
                direction /= np.linalg.norm(direction)
                if any(abs(direction @ w) > max_parallelism for w in dirs):
                    continue
                key = cut.key()
                seen = pool_keys.get(key, ())
                if any(i >= len(pool) or i in is_global for i in seen) or set(seen) & set(local):
                    continue
                pool_keys[key] = seen + (len(pool) + len(new),)
                new.append(cut)
                dirs.append(direction)
            if not new:
                break
            first = len(pool)
            pool.extend(new)
            if len(pool) > len(pool_rhs):
                grow = max(len(pool), 2 * len(pool_rhs))
                pool_rows = np.vstack([pool_rows, np.zeros((grow - len(pool_rhs), model.n_vars))])
                pool_rhs = np.concatenate([pool_rhs, np.zeros(grow - len(pool_rhs))])
            for i, c in enumerate(new, first):
                pool_rows[i] = c.dense(model.n_vars)
                pool_rhs[i] = c.rhs
            fresh = tuple(range(first, len(pool)))
            cuts_here += len(new)
            stats.cuts_added += len(new)
            if record_cuts:
                stats.cut_log.extend((c, node.lower.copy(), node.upper.copy()) for c in new)
            if node.depth > 0:
                # below the root, cuts take effect in the children's LPs
                local = local + fresh
                handoff = fresh
                break
            global_cuts.extend(fresh)
            is_global.update(fresh)
            prev = active
            active = active + fresh
            lp, active = solve(node.lower, node.upper, active, local, (lp.basis, lp.at_upper, prev))
            if lp.status == INFEASIBLE:
                break
            node_bound = max(node_bound, lp.objective)
            current = node_bound
        if lp.status == INFEASIBLE:
            current = math.inf
            report()
            continue
        if record_cuts:
            stats.node_log.append((node.id, node.bound, lp.objective))

        if _dominated(node_bound, incumbent):
            current = math.inf
            report()
            continue
        frac = fractional_vars(lp.values, mask)
        if frac.size:
            rounded = _simple_round(lp.values, frac, roundable, model.cost)
            if rounded is not None:
                try_incumbent(rounded)
        else:
            try_incumbent(lp.values)
        if frac.size == 0 or _dominated(node_bound, incumbent):
            current = math.inf
        else:
            kept = _nonbasic_cuts(lp, active, n_fixed) + handoff
            node = Node(node.lower, node.upper, node_bound, node.depth, node.id, node.parent, kept, local,
                        (lp.basis, lp.at_upper, active))
            for child in branch(node, lp, mask, next_id):
                heapq.heappush(heap, (child.bound, -child.depth, child.id, child))
            next_id += 2
            current = math.inf

        g = report()
        if math.isfinite(incumbent) and heap and g <= gap:
            status = GAP_REACHED
            break

    current = math.inf
    if status is None:
        status = OPTIMAL_STATUS if incumbent_x is not None else INFEASIBLE_STATUS
    elif incumbent_x is None:
        status = NO_SOLUTION

    stats.status = status
    stats.best_bound = global_bound() if incumbent_x is not None or heap else math.inf
    stats.final_gap = mip_gap(stats.best_bound, incumbent) if incumbent_x is not None else math.inf
    stats.wall_time = elapsed()
    if math.isfinite(stats.best_bound):
        stats.bound_history.append((stats.wall_time, stats.best_bound))
    logger.info(format_progress(stats.nodes_explored, stats.best_bound, incumbent, stats.final_gap,
                                stats.cuts_added, stats.wall_time))
    if observer is not None:
        observer(stats.wall_time, stats.best_bound, incumbent, stats.final_gap)

    if incumbent_x is None:
        return None, stats
    if model.instance is not None:
        return model.decode(incumbent_x), stats
    return incumbent_x, stats
