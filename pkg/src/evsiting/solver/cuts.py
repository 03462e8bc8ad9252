"""Gomory cuts read off the simplex tableau.

For a basic integer variable ``z_b`` with fractional value, its tableau row
is rewritten over nonnegative distances ``t_j`` of the nonbasic columns from
reference bounds::

    z_b + sum_j alpha_j t_j = beta

and the Gomory rounding argument gives ``sum_j g_j t_j >= 1`` where, with
``f0 = frac(beta)`` and ``f_j = frac(alpha_j)``::

    integer t_j:     g_j = f_j / f0            if f_j <= f0
                     g_j = (1 - f_j) / (1 - f0) otherwise
    continuous t_j:  g_j = alpha_j / f0         if alpha_j >= 0
                     g_j = -alpha_j / (1 - f0)  otherwise

When every column is integer this is the strengthened form of the classic
fractional cut ``sum f_j t_j >= f0``. Slack and bound distances are then
substituted back so the cut is returned over the structural variables as
``pi . x <= pi0``.

Reference bounds default to the bounds the LP was solved with. Passing the
root bounds instead yields a cut that is valid for the whole problem, not
only for the node's subtree; it is returned only if it still separates the
current LP point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FRACTIONALITY_TOL = 1e-6
MIN_VIOLATION = 1e-6
MAX_DYNAMISM = 1e8
ZERO_TOL = 1e-11


@dataclass(frozen=True)
class Cut:
    """Valid inequality ``sum_k coefs[k] x_k <= rhs``."""

    coefs: dict
    rhs: float
    origin_node: int = 0
    source_var: int = -1

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for k, a in self.coefs.items():
            out[k] = a
        return out

    def activity(self, x) -> float:
        return math.fsum(a * x[k] for k, a in self.coefs.items())

    def violation(self, x) -> float:
        """Positive when ``x`` violates the cut."""
        return self.activity(x) - self.rhs

    def key(self, resolution: float = 1e-9) -> tuple:
        items = tuple(sorted((k, round(a / resolution)) for k, a in self.coefs.items()))
        return items + (round(self.rhs / resolution),)


def _frac(v):
    return v - math.floor(v)


def gomory_cut(lp, var: int, integer_mask, lower=None, upper=None, integral_rows=None,
               node: int = 0) -> Cut | None:
    """Cut from the tableau row of basic integer variable ``var``.

    ``integer_mask`` flags integer structural variables; ``integral_rows``
    flags model rows whose slack is integer (cut rows never are).
    ``lower``/``upper`` are the reference bounds. Returns ``None`` when the
    variable is not basic, not fractional enough, or when the resulting cut
    is numerically unsafe or does not separate the LP point.
    """
    n = lp.n_structural
    r = lp.row_of(var)
    if r is None or not integer_mask[var]:
        return None
    value = lp.column_values[var]
    if min(_frac(value), 1 - _frac(value)) < FRACTIONALITY_TOL:
        return None

    m = lp.tableau.shape[0]
    # work with slacks in the units of the original rows
    unscale = np.concatenate([np.ones(n), lp.row_scale])
    row = lp.tableau[r] / unscale
    colval = lp.column_values * unscale
    lo = lp.column_lower * unscale
    hi = lp.column_upper * unscale
    if lower is not None:
        lo[:n] = lower
    if upper is not None:
        hi[:n] = upper
    col_int = np.zeros(n + m, dtype=bool)
    col_int[:n] = integer_mask
    if integral_rows is not None:
        col_int[n:n + len(integral_rows)] = integral_rows

    basic = np.zeros(n + m, dtype=bool)
    basic[[b for b in lp.basis if b < n + m]] = True

    # z_b + sum alpha_j t_j = beta, t_j = z_j - lo_j  or  hi_j - z_j
    nz = ~basic & (np.abs(row) > ZERO_TOL)
    from_upper = lp.at_upper.astype(bool) & np.isfinite(hi)
    from_upper |= ~np.isfinite(lo)
    ref = np.where(from_upper, hi, lo)
    if not np.all(np.isfinite(ref[nz])):
        return None
    ref = np.where(nz, ref, 0.0)
    alpha = np.where(nz, np.where(from_upper, -row, row), 0.0)
    with np.errstate(invalid="ignore"):
        t = np.where(from_upper, ref - colval, colval - ref)
    beta = value + math.fsum(alpha[nz] * t[nz])
    f0 = _frac(beta)
    if min(f0, 1 - f0) < FRACTIONALITY_TOL:
        return None

    fj = alpha - np.floor(alpha)
    int_col = nz & col_int & (ref == np.round(ref))
    g = np.where(alpha >= 0, alpha / f0, -alpha / (1 - f0))
    g_int = np.where(fj <= f0, fj / f0, (1 - fj) / (1 - f0))
    g_int[(fj < ZERO_TOL) | (fj > 1 - ZERO_TOL)] = 0.0
    g = np.where(int_col, g_int, g)
    g[~nz] = 0.0

    # sum g_j t_j >= 1  ->  coef . x + const >= 1 over structural x
    # t_j = sgn_j * (z_j - ref_j); slack s_i = b_i - A_i x
    w = np.where(from_upper, -g, g)
    A, b = lp.row_matrix, lp.row_rhs
    coef = w[:n] - w[n:] @ A
    const = -math.fsum(w[:n] * ref[:n]) + math.fsum(w[n:] * (b - ref[n:]))
    # as <= : -coef . x <= const - 1
    pi = -coef
    pi0 = const - 1.0
    return _finalize(pi, pi0, lp.values, lo[:n], hi[:n], node, var)


def _finalize(pi, pi0, point, lo, hi, node, var):
    big = np.abs(pi).max(initial=0.0)
    if big <= ZERO_TOL:
        return None
    pi = pi / big
    pi0 = pi0 / big
    # drop negligible terms, relaxing the rhs by their worst case over the bounds
    tiny = (np.abs(pi) < 1e-9) & (pi != 0)
    for k in np.flatnonzero(tiny):
        pi0 -= min(pi[k] * lo[k], pi[k] * hi[k])
        pi[k] = 0.0
    nz = np.flatnonzero(pi)
    if nz.size == 0:
        return None
    if np.abs(pi[nz]).max() / np.abs(pi[nz]).min() > MAX_DYNAMISM:
        return None
    # absorb roundoff so that exact integer points are never cut off
    pi0 += 1e-9 * max(1.0, abs(pi0))
    cut = Cut({int(k): float(pi[k]) for k in nz}, float(pi0), node, int(var))
    if cut.violation(point) < MIN_VIOLATION:
        return None
    return cut
