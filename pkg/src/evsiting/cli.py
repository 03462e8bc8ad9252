"""Command-line interface: ``evsiting {solve,validate,synth,oracle}``.

Exit codes:

    0  solved to optimality or within the requested gap; feasible solution
    1  bad input or usage
    2  infeasible instance (or, for ``validate``, an infeasible solution)
    3  time or node limit reached without any feasible solution
    4  time or node limit reached with a feasible solution
    5  numerical failure inside the LP solver
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .exceptions import EvSitingError, InfeasibleInstanceError, NumericalError, TooLargeError
from .ingest import Instance, generate_synthetic, load_params, load_rps, load_sites, write_params, write_rps, write_sites
from .model import DEFAULT_STATION_CAP, brute_force, build_model, check_feasibility, solution_vector
from .report import build_report, export_csv_summary, export_geojson, format_report, read_solution, write_solution
from .solver import bnc

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT_NO_SOLUTION = 3
EXIT_LIMIT_WITH_SOLUTION = 4
EXIT_NUMERICAL = 5

logger = logging.getLogger("evsiting")


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; 2 is taken by "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _instance_args(p, station_cap=True):
    p.add_argument("--sites", required=True, help="candidate sites (CSV or GeoJSON)")
    p.add_argument("--rps", required=True, help="residential points (CSV or GeoJSON)")
    p.add_argument("--params", required=True, help="scenario parameters (YAML)")
    if station_cap:
        p.add_argument("--station-cap", type=int, default=DEFAULT_STATION_CAP,
                       help=f"hard cap on stations per level per site (default {DEFAULT_STATION_CAP})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evsiting", description="EV charging-station siting by branch-and-cut.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve an instance")
    _instance_args(p)
    p.add_argument("--gap", type=float, default=1e-4, help="relative MIP gap target (default 1e-4)")
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--max-cuts", type=int, default=5, help="Gomory cuts per node (default 5)")
    p.add_argument("--out-geojson")
    p.add_argument("--out-csv")
    p.add_argument("--out-solution", help="JSON decision file, readable by 'validate'")
    p.add_argument("--log", help="append solver progress lines to this file")

    p = sub.add_parser("validate", help="check a solution file against an instance")
    _instance_args(p)
    p.add_argument("--solution", required=True, help="JSON file written by 'solve --out-solution'")
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("synth", help="write a seeded synthetic instance")
    p.add_argument("--sites", type=int, required=True, help="number of candidate sites")
    p.add_argument("--rps", type=int, required=True, help="number of residential points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".", help="receives sites.csv, rps.csv and params.yaml")

    p = sub.add_parser("oracle", help="exact optimum of a small instance by enumeration")
    _instance_args(p, station_cap=False)
    p.add_argument("--station-cap", type=int, default=3, help="per-site cap, at most 4 (default 3)")
    p.add_argument("--out-solution")
    return parser


def _load_instance(args) -> Instance:
    return Instance.build(load_sites(args.sites), load_rps(args.rps), load_params(args.params))


def _attach_log(path):
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    return handler


def cmd_solve(args) -> int:
    instance = _load_instance(args)
    try:
        model = build_model(instance, station_cap=args.station_cap)
    except InfeasibleInstanceError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    handler = _attach_log(args.log) if args.log else None
    try:
        solution, stats = bnc.branch_and_cut(model, gap=args.gap, time_limit=args.time_limit,
                                             node_limit=args.node_limit, max_cuts_per_node=args.max_cuts)
    finally:
        if handler is not None:
            logger.removeHandler(handler)
            handler.close()
    report = build_report(solution, instance, stats)
    print(format_report(report))
    if solution is not None:
        if args.out_csv:
            export_csv_summary(report, args.out_csv)
        if args.out_geojson:
            export_geojson(solution, instance, args.out_geojson)
        if args.out_solution:
            write_solution(solution, args.out_solution)
    if stats.status in (bnc.OPTIMAL_STATUS, bnc.GAP_REACHED):
        return EXIT_OK
    if stats.status == bnc.INFEASIBLE_STATUS:
        return EXIT_INFEASIBLE
    return EXIT_LIMIT_WITH_SOLUTION if solution is not None else EXIT_LIMIT_NO_SOLUTION


def cmd_validate(args) -> int:
    instance = _load_instance(args)
    data = read_solution(args.solution)
    model = build_model(instance, station_cap=args.station_cap)
    unknown = [pair for pair in data["assignment"] if pair not in model.pair_index]
    if unknown:
        print(f"assignment names unreachable or unknown pairs: {unknown[:5]}")
        return EXIT_INFEASIBLE
    x = solution_vector(model, data["x2"], data["x3"], data["assignment"], data.get("open"))
    result = check_feasibility(model, x, tol=args.tol)
    print(f"objective={model.objective_value(x)!r} per day")
    if result:
        print("feasible")
        return EXIT_OK
    for v in result.violations:
        print(f"violated {v.row}: slack={v.slack!r}")
    return EXIT_INFEASIBLE


def cmd_synth(args) -> int:
    sites, rps, params = generate_synthetic(args.sites, args.rps, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sites(sites, out / "sites.csv")
    write_rps(rps, out / "rps.csv")
    write_params(params, out / "params.yaml")
    print(f"wrote {out / 'sites.csv'}, {out / 'rps.csv'}, {out / 'params.yaml'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    instance = _load_instance(args)
    try:
        model = build_model(instance, station_cap=args.station_cap)
    except InfeasibleInstanceError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    solution = brute_force(model, cap=args.station_cap)
    if solution is None:
        print("infeasible")
        return EXIT_INFEASIBLE
    print(format_report(build_report(solution, instance)))
    if args.out_solution:
        write_solution(solution, args.out_solution)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "synth": cmd_synth, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TooLargeError, EvSitingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
