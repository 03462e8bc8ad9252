"""Branch-and-cut MILP solver: simplex relaxations, Gomory cuts, best-bound search."""

from ..model import Solution
from .bnc import Node, SolverStats, branch, branch_and_cut, fractional_vars, mip_gap
from .cuts import Cut, gomory_cut
from .simplex import LpSolution, solve_lp

__all__ = [
    "Cut", "LpSolution", "Node", "Solution", "SolverStats",
    "branch", "branch_and_cut", "fractional_vars", "gomory_cut", "mip_gap", "solve_lp",
]
