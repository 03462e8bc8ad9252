"""Bounded-variable simplex on a dense tableau.

The LP is ``min c.x`` subject to the model rows, extra ``<=`` cut rows and
per-variable bounds ``lower <= x <= upper`` (all finite). Each row gets a
slack ``s`` so that ``A x + s = b``; the slack bounds encode the row sense
(``<=``: s >= 0, ``>=``: s <= 0, ``=``: s = 0). Rows are scaled by their
largest coefficient before solving.

A cold solve runs the primal simplex in two phases: rows whose slack cannot
absorb the starting residual get an artificial column, driven to zero in
phase one. Entering columns are chosen by largest reduced cost until 1000
consecutive degenerate pivots have been made, after which Bland's
smallest-index rule takes over for the rest of the solve.

A warm solve starts from a given basis (typically the parent node's) and
restores primal feasibility with the dual simplex. Whenever the warm start
cannot be used safely the solve falls back to a cold start, so the result
never depends on the quality of the hint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import NumericalError

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
FEAS_TOL = 1e-9
BLAND_AFTER = 1000
COND_LIMIT = 1e12
REINVERT_EVERY = 100
# a tableau at most this many pivots past its last inversion is reported as is
FRESH_PIVOTS = 25

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass(eq=False)
class LpSolution:
    """Result of :func:`solve_lp`.

    ``values`` and ``objective`` refer to the structural variables only.
    ``basis`` lists the basic column of every row; columns ``n..n+m-1`` are
    row slacks (model rows first, then cut rows). The remaining fields keep
    the final tableau for cut generation and warm starts. Rows are divided
    by ``row_scale`` before solving, so slack columns of the tableau are in
    scaled units, while ``row_matrix``/``row_rhs`` hold the unscaled data.
    """

    status: str
    values: np.ndarray | None = None
    objective: float = float("nan")
    basis: tuple = ()
    iterations: int = 0
    # final tableau state, structural + slack columns only
    tableau: np.ndarray | None = field(default=None, repr=False)
    column_values: np.ndarray | None = field(default=None, repr=False)
    at_upper: np.ndarray | None = field(default=None, repr=False)
    column_lower: np.ndarray | None = field(default=None, repr=False)
    column_upper: np.ndarray | None = field(default=None, repr=False)
    row_matrix: np.ndarray | None = field(default=None, repr=False)
    row_rhs: np.ndarray | None = field(default=None, repr=False)
    row_scale: np.ndarray | None = field(default=None, repr=False)
    warm: bool = False

    @property
    def n_structural(self) -> int:
        return 0 if self.values is None else len(self.values)

    def row_of(self, column: int) -> int | None:
        """Tableau row in which ``column`` is basic, or ``None``."""
        try:
            return self.basis.index(column)
        except ValueError:
            return None


def _standard_form(model, cuts):
    a = model.matrix
    b = model.rhs
    senses = np.array(model.senses + ("<=",) * len(cuts))
    if cuts:
        rows = np.zeros((len(cuts), model.n_vars))
        for i, cut in enumerate(cuts):
            rows[i, list(cut.coefs)] = list(cut.coefs.values())
        a = np.vstack([a, rows])
        b = np.concatenate([b, [cut.rhs for cut in cuts]])
    slo = np.where(senses == ">=", -np.inf, 0.0)
    shi = np.where(senses == "<=", np.inf, 0.0)
    return a, b, slo, shi


def _row_scale(a):
    scale = np.abs(a).max(axis=1, initial=0.0) if a.shape[0] else np.zeros(0)
    scale[scale == 0] = 1.0
    return scale


class _Stalled(Exception):
    """Warm solve gave up; the caller restarts cold."""


class _Tableau:
    """Working state of one simplex solve.

    ``A0``/``b0`` are the original (scaled) rows; ``T`` is ``B^-1 A0`` for
    the current basis.
    """

    def __init__(self, A0, b0, lo, hi, basis, at_upper, x=None, T=None):
        self.A0 = A0
        self.b0 = b0
        self.lo = lo
        self.hi = hi
        self.basis = np.asarray(basis, dtype=int)
        self.at_upper = at_upper
        self.is_basic = np.zeros(A0.shape[1], dtype=bool)
        self.is_basic[self.basis] = True
        self.iterations = 0
        self.since_reinvert = 0
        self.degenerate_run = 0
        self.bland = False
        if x is None:
            self.x = np.where(at_upper, hi, lo)
            self.x[self.basis] = 0.0
            self.T = np.empty_like(A0)
            self.reinvert()
        else:
            self.x = x
            self.T = T

    def reinvert(self):
        """Rebuild the tableau and basic values from the original rows."""
        B = self.A0[:, self.basis]
        nonbasic = ~self.is_basic
        rhs = self.b0 - self.A0[:, nonbasic] @ self.x[nonbasic]
        try:
            B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular basis", iterations=self.iterations) from exc
        self.T[:] = B_inv @ self.A0
        self.x[self.basis] = B_inv @ rhs
        self.since_reinvert = 0

    def pivot(self, r, j):
        T = self.T
        leaving = int(self.basis[r])
        self.is_basic[leaving] = False
        self.is_basic[j] = True
        self.basis[r] = j
        self.at_upper[j] = False
        self.since_reinvert += 1
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])

    def primal(self, cost, max_iter):
        T = self.T
        d = cost - cost[self.basis] @ T
        start = self.iterations
        while True:
            done = self.iterations - start
            if done >= max_iter:
                raise NumericalError("simplex iteration limit reached", iterations=self.iterations)
            if done and done % REINVERT_EVERY == 0:
                self.reinvert()
                d = cost - cost[self.basis] @ T
            movable = (~self.is_basic) & (self.hi > self.lo)
            improve = movable & (((~self.at_upper) & (d < -OPT_TOL)) | (self.at_upper & (d > OPT_TOL)))
            candidates = np.flatnonzero(improve)
            if candidates.size == 0:
                return OPTIMAL
            if self.bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            delta = -1.0 if self.at_upper[j] else 1.0
            alpha = delta * T[:, j]
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            # Harris ratio test: bounds relaxed by FEAS_TOL give the longest
            # admissible step, then the largest pivot within it is taken
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            room = np.full(len(alpha), np.inf)
            theta = np.full(len(alpha), np.inf)
            with np.errstate(invalid="ignore"):
                room[dec] = (xb[dec] - lob[dec] + FEAS_TOL) / alpha[dec]
                room[inc] = (hib[inc] - xb[inc] + FEAS_TOL) / (-alpha[inc])
                theta[dec] = (xb[dec] - lob[dec]) / alpha[dec]
                theta[inc] = (hib[inc] - xb[inc]) / (-alpha[inc])
            # a basic value already past its bound by roundoff gives room < 0
            theta_max = max(room.min(), 0.0) if room.size else np.inf
            theta = np.maximum(theta, 0.0)
            eligible = np.flatnonzero(theta <= theta_max)
            theta_rows = theta[eligible].min() if eligible.size else np.inf
            theta_flip = self.hi[j] - self.lo[j]
            self.iterations += 1

            if theta_flip <= theta_rows:
                if not np.isfinite(theta_flip):
                    return UNBOUNDED
                self.x[self.basis] = xb - theta_flip * alpha
                self.at_upper[j] = not self.at_upper[j]
                self.x[j] = self.hi[j] if self.at_upper[j] else self.lo[j]
                self.degenerate_run = 0
                continue

            if self.bland:
                tie = np.flatnonzero(theta <= theta_rows + 1e-12 * max(1.0, theta_rows))
                r = int(tie[np.argmin(self.basis[tie])])
                step = theta_rows
            else:
                r = int(eligible[np.argmax(np.abs(alpha[eligible]))])
                step = theta[r]
            self.x[self.basis] = xb - step * alpha
            self.x[j] = self.x[j] + delta * step
            leaving = int(self.basis[r])
            to_upper = alpha[r] < 0
            self.at_upper[leaving] = to_upper
            self.x[leaving] = self.hi[leaving] if to_upper else self.lo[leaving]
            self.pivot(r, j)
            d -= d[j] * T[r]

            if step <= 1e-12:
                self.degenerate_run += 1
                if self.degenerate_run >= BLAND_AFTER:
                    self.bland = True
            else:
                self.degenerate_run = 0

    def dual(self, cost, max_iter):
        """Dual simplex from a dual feasible basis.

        Returns OPTIMAL once the basic values are within bounds, or
        INFEASIBLE when a row certifies that they cannot be. Raises
        :class:`_Stalled` on anything doubtful.
        """
        T = self.T
        d = cost - cost[self.basis] @ T
        start = self.iterations
        while True:
            done = self.iterations - start
            if done >= max_iter:
                raise _Stalled
            if done and done % REINVERT_EVERY == 0:
                self.reinvert()
                d = cost - cost[self.basis] @ T
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            below = lob - xb
            above = xb - hib
            infeas = np.maximum(below, above)
            r = int(np.argmax(infeas))
            if infeas[r] <= FEAS_TOL:
                return OPTIMAL
            row = T[r]
            movable = (~self.is_basic) & (self.hi > self.lo)
            up = self.at_upper
            raise_it = bool(below[r] > 0)
            sign = -1.0 if raise_it else 1.0
            # nonbasic moves that push x_r toward the violated bound
            elig = movable & (((~up) & (sign * row > PIVOT_TOL)) | (up & (sign * row < -PIVOT_TOL)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                if self._certified_infeasible(r, raise_it):
                    return INFEASIBLE
                raise _Stalled
            ad = np.abs(d[cand])
            ar = np.abs(row[cand])
            limit = ((ad + OPT_TOL) / ar).min()
            near = cand[ad / ar <= limit]
            j = int(near[np.argmax(np.abs(row[near]))])
            target = lob[r] if raise_it else hib[r]
            step = (xb[r] - target) / row[j]
            self.x[self.basis] = xb - step * T[:, j]
            self.x[j] += step
            leaving = int(self.basis[r])
            self.x[leaving] = target
            self.at_upper[leaving] = not raise_it
            self.pivot(r, j)
            d -= d[j] * T[r]
            self.iterations += 1

    def _certified_infeasible(self, r, raise_it):
        # range of x_r over all nonbasic bounds, tiny entries included
        row = self.T[r]
        nb = ~self.is_basic
        coef = -row[nb]
        lo, hi = self.lo[nb], self.hi[nb]
        with np.errstate(invalid="ignore"):
            if raise_it:
                ext = np.where(coef > 0, hi, lo)
            else:
                ext = np.where(coef > 0, lo, hi)
            terms = np.where(coef == 0, 0.0, coef * ext)
        if not np.all(np.isfinite(terms)):
            return False
        b = self.basis[r]
        beta = self.x[b] + row[nb] @ self.x[nb]
        best = beta + terms.sum()
        margin = 1e-7 * max(1.0, abs(beta))
        if raise_it:
            return bool(best < self.lo[b] - margin)
        return bool(best > self.hi[b] + margin)


def _drive_out_artificials(tab, n_real):
    """Pivot basic artificials (at zero) out in favour of real columns."""
    for r in range(len(tab.basis)):
        if tab.basis[r] < n_real:
            continue
        row = np.abs(tab.T[r, :n_real])
        row[tab.is_basic[:n_real]] = 0.0
        j = int(np.argmax(row))
        if row[j] <= PIVOT_TOL:
            raise NumericalError("cannot remove artificial from basis", row=r)
        tab.pivot(r, j)


def _cold(A0, b, lo, hi, n, cost, max_iter):
    m = len(b)
    x = np.where(np.isfinite(lo), lo, hi)
    x[n:] = 0.0
    residual = b - A0[:, :n] @ x[:n]
    slack_ok = (residual >= lo[n:] - FEAS_TOL) & (residual <= hi[n:] + FEAS_TOL)
    art_rows = np.flatnonzero(~slack_ok)
    k = len(art_rows)
    full_cost = np.concatenate([cost, np.zeros(m)])

    sign = np.ones(m)
    sign[art_rows] = np.where(residual[art_rows] > 0, 1.0, -1.0)
    A = np.zeros((m, n + m + k))
    A[:, :n + m] = A0
    A[art_rows, n + m + np.arange(k)] = sign[art_rows]
    lo_a = np.concatenate([lo, np.zeros(k)])
    hi_a = np.concatenate([hi, np.full(k, np.inf)])
    x = np.concatenate([x, np.abs(residual[art_rows])])
    x[n:n + m] = np.where(slack_ok, residual, 0.0)
    basis = n + np.arange(m)
    basis[art_rows] = n + m + np.arange(k)
    # nonbasic slacks of >= rows rest at their (upper) bound 0
    at_upper = ~np.isfinite(lo_a)
    tab = _Tableau(A, b, lo_a, hi_a, basis, at_upper, x=x, T=A / sign[:, None])
    if not k:
        tab.A0 = A0
        return tab, tab.primal(full_cost, max_iter)

    phase1 = np.zeros(n + m + k)
    phase1[n + m:] = 1.0
    tab.primal(phase1, max_iter)
    if np.any(tab.x[n + m:] > FEAS_TOL * np.maximum(1.0, np.abs(b[art_rows]))):
        return tab, INFEASIBLE
    tab.x[n + m:] = 0.0
    _drive_out_artificials(tab, n + m)
    # continue without the artificial columns
    done = tab.iterations
    tab = _Tableau(A0, b, lo, hi, tab.basis, tab.at_upper[:n + m].copy(),
                   x=tab.x[:n + m].copy(), T=tab.T[:, :n + m].copy())
    tab.iterations = done
    tab.since_reinvert = done
    return tab, tab.primal(full_cost, max_iter)


def _warm(A0, b, lo, hi, n, cost, basis, at_upper, max_iter):
    m = len(b)
    basis = np.asarray(basis, dtype=int)
    if basis.shape != (m,) or len(set(basis.tolist())) != m or basis.min() < 0 or basis.max() >= n + m:
        raise _Stalled
    up = np.asarray(at_upper, dtype=bool).copy()
    if up.shape != (n + m,):
        raise _Stalled
    up &= np.isfinite(hi)
    up |= ~np.isfinite(lo)
    up[basis] = False
    try:
        tab = _Tableau(A0, b, lo, hi, basis, up)
    except NumericalError:
        raise _Stalled from None
    full_cost = np.concatenate([cost, np.zeros(m)])
    d = full_cost - full_cost[tab.basis] @ tab.T
    movable = (~tab.is_basic) & (hi > lo)
    wrong = movable & (((~tab.at_upper) & (d < -OPT_TOL)) | (tab.at_upper & (d > OPT_TOL)))
    if wrong.any():
        # boxed columns can sit at whichever bound their reduced cost favours
        if np.any(wrong & ~(np.isfinite(lo) & np.isfinite(hi))):
            raise _Stalled
        tab.at_upper[wrong] = ~tab.at_upper[wrong]
        tab.x[wrong] = np.where(tab.at_upper[wrong], hi[wrong], lo[wrong])
        tab.reinvert()
    if tab.dual(full_cost, max_iter) == INFEASIBLE:
        return tab, INFEASIBLE
    # tidy up reduced costs that drifted past the tolerance
    return tab, tab.primal(full_cost, max_iter)


def solve_lp(model, lower=None, upper=None, cuts=(), max_iter: int = 50000, basis=None,
             at_upper=None) -> LpSolution:
    """Solve the LP relaxation of ``model`` under the given bounds and cuts.

    ``lower``/``upper`` default to the model bounds and must be finite.
    ``basis`` (one column per row, in this LP's column numbering) and
    ``at_upper`` (one flag per column) describe an optional warm start.
    Raises :class:`NumericalError` when the final basis is too badly
    conditioned to trust.
    """
    n = model.n_vars
    lower = model.lower if lower is None else np.asarray(lower, dtype=float)
    upper = model.upper if upper is None else np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("solve_lp needs finite bounds on every variable")
    if np.any(lower > upper + FEAS_TOL):
        return LpSolution(INFEASIBLE)

    a_orig, b_orig, slo, shi = _standard_form(model, cuts)
    # equilibrate rows; slacks are solved in scaled units
    row_scale = _row_scale(a_orig)
    a = a_orig / row_scale[:, None]
    b = b_orig / row_scale
    m = len(b)
    cost = model.cost
    A0 = np.hstack([a, np.eye(m)])
    lo = np.concatenate([lower, slo])
    hi = np.concatenate([upper, shi])

    tab = None
    warm = False
    if basis is not None and at_upper is not None and m:
        try:
            tab, status = _warm(A0, b, lo, hi, n, cost, basis, at_upper, max_iter)
            warm = True
        except (_Stalled, NumericalError):
            tab = None
    if tab is None:
        tab, status = _cold(A0, b, lo, hi, n, cost, max_iter)
    if status != OPTIMAL:
        return LpSolution(status, iterations=tab.iterations, warm=warm)

    x = tab.x
    basis = tab.basis
    if m:
        B = A0[:, basis]
        if tab.since_reinvert <= FRESH_PIVOTS:
            # the slack columns of a fresh tableau hold B^-1
            B_inv = tab.T[:, n:]
            tableau = tab.T
        else:
            # refactor from the original data to shed accumulated pivoting error
            try:
                B_inv = np.linalg.inv(B)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular basis", basis=tuple(int(v) for v in basis)) from exc
            tableau = B_inv @ A0
        cond = np.linalg.norm(B, 1) * np.linalg.norm(B_inv, 1)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise NumericalError("ill-conditioned basis", condition=float(cond), basis=tuple(int(v) for v in basis))
        nonbasic = ~tab.is_basic
        x[basis] = B_inv @ (b - A0[:, nonbasic] @ x[nonbasic])
    else:
        tableau = np.zeros((0, n))
    ref = np.maximum(1.0, np.abs(np.where(np.isfinite(lo), lo, 0.0)) + np.abs(np.where(np.isfinite(hi), hi, 0.0)))
    drift = np.max(np.maximum(lo - x, x - hi) / ref, initial=0.0)
    if drift > 1e-6:
        raise NumericalError("basic solution drifted outside its bounds", drift=float(drift))
    # clip roundoff at bounds
    x = np.clip(x, lo, hi)
    values = x[:n].copy()
    return LpSolution(
        status=OPTIMAL,
        values=values,
        objective=float(cost @ values),
        basis=tuple(int(v) for v in basis),
        iterations=tab.iterations,
        tableau=tableau,
        column_values=x.copy(),
        at_upper=tab.at_upper.copy(),
        column_lower=lo.copy(),
        column_upper=hi.copy(),
        row_matrix=a_orig,
        row_rhs=b_orig,
        row_scale=row_scale,
        warm=warm,
    )
