"""Siting of EV charging stations as a cost-minimising integer program."""

from .costmodel import ChargerLevel, ChargerSpec, CostBreakdown, evaluate
from .geo import DistanceMatrix, GeoPoint, build_distance_matrix, haversine
from .ingest import (
    CandidateSite, Category, Instance, ResidentialPoint, ScenarioParams,
    generate_synthetic, load_params, load_rps, load_sites,
)
from .model import MilpModel, Solution, brute_force, build_model, check_feasibility
from .report import RunReport, build_report, export_csv_summary, export_geojson
from .solver import branch_and_cut, mip_gap, solve_lp

__version__ = "0.1.0"

__all__ = [
    "CandidateSite", "Category", "ChargerLevel", "ChargerSpec", "CostBreakdown", "DistanceMatrix",
    "GeoPoint", "Instance", "MilpModel", "ResidentialPoint", "RunReport", "ScenarioParams", "Solution",
    "branch_and_cut", "brute_force", "build_distance_matrix", "build_model", "build_report",
    "check_feasibility", "evaluate", "export_csv_summary", "export_geojson", "generate_synthetic", "haversine", "load_params", "load_rps", "load_sites",
    "mip_gap", "solve_lp",
]
