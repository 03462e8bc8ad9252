"""Reports built from a solved instance: cost shares, CSV and GeoJSON files.

Every number in a report is recomputed from the :class:`~evsiting.model.Solution`
and the :class:`~evsiting.ingest.Instance`; solver internals enter only
through :class:`~evsiting.solver.bnc.SolverStats`.

CSV summary schema (UTF-8, header row, one row per opened site, then a
``TOTAL`` row holding the column sums; header only when nothing is opened)::

    site_id,x2,x3,open,installation,land,maintenance,operation,charging,waiting,travel,total

Costs are per day. ``travel`` is charged to the site where the vehicles
are served. Floats are written with full precision so that a reload is
exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .costmodel import COMPONENTS, CostBreakdown, served_vehicles, site_breakdown
from .ingest import atomic_write_text

TOTAL_ID = "TOTAL"
CSV_COLUMNS = ("site_id", "x2", "x3", "open", *COMPONENTS, "total")


@dataclass(frozen=True)
class CostShares:
    """Percentage of the total cost per component.

    ``zero_total`` flags a zero total, in which case every share is 0.
    """

    percent: Mapping[str, float]
    zero_total: bool = False

    def ranked(self) -> list:
        """Component names from largest to smallest share (ties: component order)."""
        return sorted(COMPONENTS, key=lambda c: -self.percent[c])

    def formatted(self) -> dict:
        return {c: f"{self.percent[c]:.2f}%" for c in COMPONENTS}


def breakdown_shares(breakdown: CostBreakdown) -> CostShares:
    total = breakdown.total
    if total == 0:
        return CostShares({c: 0.0 for c in COMPONENTS}, zero_total=True)
    return CostShares({c: getattr(breakdown, c) / total * 100.0 for c in COMPONENTS})


@dataclass(frozen=True)
class SiteRow:
    site_id: str
    x2: int
    x3: int
    open: int
    costs: CostBreakdown

    def as_list(self) -> list:
        return [self.site_id, self.x2, self.x3, self.open, *(getattr(self.costs, c) for c in COMPONENTS),
                self.costs.total]


@dataclass(frozen=True)
class RunReport:
    """Everything a run reports, derived from (Solution, Instance, SolverStats)."""

    n_sites: int
    n_rps: int
    solution: object
    stats: object = None
    site_rows: tuple = ()
    breakdown: CostBreakdown = field(default_factory=CostBreakdown)
    shares: CostShares = None
    districts: Mapping = field(default_factory=dict)

    @property
    def opened_sites(self) -> int:
        return sum(1 for r in self.site_rows if r.x2 + r.x3 >= 1)

    @property
    def total_stations(self) -> int:
        return sum(r.x2 + r.x3 for r in self.site_rows)

    def totals(self) -> list:
        """The TOTAL row: column sums of the per-site rows."""
        return _totals(self.site_rows)


def _totals(rows) -> list:
    out = [TOTAL_ID, sum(r.x2 for r in rows), sum(r.x3 for r in rows), sum(r.open for r in rows)]
    for c in COMPONENTS:
        out.append(math.fsum(getattr(r.costs, c) for r in rows))
    out.append(math.fsum(r.costs.total for r in rows))
    return out


def site_rows(solution, instance) -> tuple:
    """Per-site cost rows for every site with at least one station."""
    served = served_vehicles(solution.assignment, instance)
    col = {sid: k for k, sid in enumerate(instance.dmat.site_ids)}
    row = {rid: k for k, rid in enumerate(instance.dmat.rp_ids)}
    params = instance.params
    rows = []
    for site in instance.sites:
        n2, n3 = solution.x2.get(site.id, 0), solution.x3.get(site.id, 0)
        if n2 + n3 == 0:
            continue
        travel = math.fsum(
            instance.dmat.d[row[rid], col[sid]] * params.price_per_km * params.traffic_rate * v
            for (sid, rid), v in served.items() if sid == site.id
        )
        b = site_breakdown(n2, n3, site, params)
        costs = CostBreakdown(**{c: getattr(b, c) for c in COMPONENTS[:-1]}, travel=travel)
        rows.append(SiteRow(site.id, n2, n3, int(solution.open.get(site.id, 1)), costs))
    return tuple(rows)


def district_summary(solution, instance, rows=None) -> dict:
    """Aggregate stations, costs and demand by district.

    Keys come from the optional ``district`` attribute of sites and RPs;
    returns an empty dict when no site carries one.
    """
    if not any(s.district for s in instance.sites):
        return {}
    rows = site_rows(solution, instance) if rows is None else rows
    district_of = {s.id: s.district or "" for s in instance.sites}
    out: dict = {}

    def entry(name):
        return out.setdefault(name, {"opened": 0, "x2": 0, "x3": 0, "cost": 0.0, "vehicles": 0})

    for r in rows:
        e = entry(district_of[r.site_id])
        e["opened"] += 1
        e["x2"] += r.x2
        e["x3"] += r.x3
        e["cost"] += r.costs.total
    for p in instance.rps:
        if p.district:
            entry(p.district)["vehicles"] += p.vehicles
    return dict(sorted(out.items()))


def build_report(solution, instance, stats=None) -> RunReport:
    """Assemble a :class:`RunReport`; ``solution`` may be ``None`` (nothing opened)."""
    if solution is None:
        return RunReport(len(instance.sites), len(instance.rps), None, stats,
                         shares=breakdown_shares(CostBreakdown()))
    rows = site_rows(solution, instance)
    return RunReport(
        n_sites=len(instance.sites),
        n_rps=len(instance.rps),
        solution=solution,
        stats=stats,
        site_rows=rows,
        breakdown=solution.breakdown,
        shares=breakdown_shares(solution.breakdown),
        districts=district_summary(solution, instance, rows),
    )


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_summary_text(report: RunReport) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    if report.site_rows:
        for r in report.site_rows:
            writer.writerow([_cell(v) for v in r.as_list()])
        writer.writerow([_cell(v) for v in report.totals()])
    return buf.getvalue()


def export_csv_summary(report: RunReport, path) -> None:
    atomic_write_text(path, csv_summary_text(report))


@dataclass(frozen=True)
class CsvSummary:
    rows: tuple
    totals: list | None


def load_csv_summary(path) -> CsvSummary:
    """Read back a file written by :func:`export_csv_summary`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows, totals = [], None
        for rec in reader:
            ints = [int(v) for v in rec[1:4]]
            floats = [float(v) for v in rec[4:]]
            if rec[0] == TOTAL_ID:
                totals = [rec[0], *ints, *floats]
                continue
            costs = CostBreakdown(**dict(zip(COMPONENTS, floats[:-1])))
            rows.append(SiteRow(rec[0], *ints, costs))
    return CsvSummary(tuple(rows), totals)


def export_district_csv(report: RunReport, path) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["district", "opened", "x2", "x3", "cost", "vehicles"])
    for name, e in report.districts.items():
        writer.writerow([name, e["opened"], e["x2"], e["x3"], repr(e["cost"]), e["vehicles"]])
    atomic_write_text(path, buf.getvalue())


def geojson_dict(solution, instance) -> dict:
    """FeatureCollection of opened sites, RPs and assignment lines.

    Coordinates are ``[lon, lat]`` as RFC 7946 requires.
    """
    features = []
    if solution is not None:
        for site in instance.sites:
            n2, n3 = solution.x2.get(site.id, 0), solution.x3.get(site.id, 0)
            if n2 + n3 == 0:
                continue
            features.append(_point(site.location, {
                "role": "site", "id": site.id, "x2": n2, "x3": n3, "category": site.category.value,
            }))
    for rp in instance.rps:
        features.append(_point(rp.location, {"role": "rp", "id": rp.id, "vehicles": rp.vehicles}))
    if solution is not None:
        sites = {s.id: s for s in instance.sites}
        rps = {p.id: p for p in instance.rps}
        col = {sid: k for k, sid in enumerate(instance.dmat.site_ids)}
        row = {rid: k for k, rid in enumerate(instance.dmat.rp_ids)}
        for (sid, rid) in sorted(solution.assignment, key=lambda p: (col[p[0]], row[p[1]])):
            share = solution.assignment[(sid, rid)]
            if share <= 0:
                continue
            a, b = rps[rid].location, sites[sid].location
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [[a.lon, a.lat], [b.lon, b.lat]]},
                "properties": {
                    "role": "assignment", "site_id": sid, "rp_id": rid, "share": share,
                    "vehicles_served": share * rps[rid].vehicles,
                    "distance_km": float(instance.dmat.d[row[rid], col[sid]]),
                },
            })
    return {"type": "FeatureCollection", "features": features}


def _point(loc, props) -> dict:
    return {"type": "Feature", "geometry": {"type": "Point", "coordinates": [loc.lon, loc.lat]},
            "properties": props}


def export_geojson(solution, instance, path) -> None:
    text = json.dumps(geojson_dict(solution, instance), indent=1, allow_nan=False) + "\n"
    atomic_write_text(path, text)


def format_report(report: RunReport) -> str:
    """Plain-text summary for terminals and logs."""
    lines = [f"sites={report.n_sites} rps={report.n_rps} opened={report.opened_sites} "
             f"stations={report.total_stations}"]
    if report.solution is not None:
        lines.append(f"objective={report.solution.objective!r} per day")
    if report.stats is not None:
        s = report.stats
        lines.append(f"status={s.status} gap={s.final_gap!r} nodes={s.nodes_explored} cuts={s.cuts_added}")
    if report.shares.zero_total:
        lines.append("cost shares: total is zero")
    else:
        shown = report.shares.formatted()
        lines.append("cost shares: " + ", ".join(f"{c} {shown[c]}" for c in report.shares.ranked()))
    for name, e in report.districts.items():
        lines.append(f"district {name}: opened={e['opened']} x2={e['x2']} x3={e['x3']} cost={e['cost']!r}")
    return "\n".join(lines)


def write_solution(solution, path) -> None:
    """Store a solution's decision as JSON (for ``evsiting validate``)."""
    data = {
        "x2": dict(solution.x2),
        "x3": dict(solution.x3),
        "open": dict(solution.open),
        "assignment": [[sid, rid, share] for (sid, rid), share in solution.assignment.items()],
        "objective": solution.objective,
    }
    atomic_write_text(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def read_solution(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("x2", "x3", "assignment"):
        if key not in data:
            raise ValueError(f"{path}: missing key {key!r}")
    data["assignment"] = {(sid, rid): float(share) for sid, rid, share in data["assignment"]}
    return data
