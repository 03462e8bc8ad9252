"""Loading candidate sites, residential points and scenario parameters.

File formats
------------
sites CSV (UTF-8, header row)::

    id,lat,lon,land_cost,category[,i2,i3,m2,m3,e2,e3][,district]

rps CSV (UTF-8, header row)::

    id,lat,lon,vehicles[,district]

params (YAML, flat dotted keys; nested mappings are flattened)::

    avg_energy_per_vehicle_day, price_operator, price_user, price_per_km,
    avg_wage, traffic_rate, budget, d_max, amortization_days (default 14600),
    level2.{install,maintenance,energy,power}, level3.{install,maintenance,energy,power}

Sites and RPs may also be given as a GeoJSON FeatureCollection of Point
features whose properties carry the CSV columns (minus lat/lon).

``land_cost`` is the total land cost of a site over the amortization
horizon; vehicle counts are taken as-is (no population conversion).
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import yaml

from .costmodel import ChargerLevel, ChargerSpec
from .exceptions import ConfigError, EmptyInstanceError, InvalidArgumentError, SchemaError
from .geo import GeoPoint, build_distance_matrix

DEFAULT_AMORTIZATION_DAYS = 14600
OVERRIDE_KEYS = ("i2", "i3", "m2", "m3", "e2", "e3")


class Category(str, enum.Enum):
    PARKING = "parking"
    SUPERMARKET_MALL = "supermarket_mall"
    APARTMENT_OFFICE = "apartment_office"
    UNIVERSITY_COLLEGE = "university_college"
    HOTEL = "hotel"
    GAS_STATION = "gas_station"


@dataclass(frozen=True)
class CandidateSite:
    id: str
    location: GeoPoint
    land_cost: float
    category: Category
    overrides: Mapping[str, float] = field(default_factory=dict)
    district: str | None = None

    def __post_init__(self):
        if not self.id:
            raise InvalidArgumentError("site id must be non-empty")
        land = float(self.land_cost)
        if not math.isfinite(land) or land < 0:
            raise InvalidArgumentError(f"site {self.id}: land_cost must be finite and >= 0")
        object.__setattr__(self, "land_cost", land)
        object.__setattr__(self, "category", Category(self.category))
        bad = set(self.overrides) - set(OVERRIDE_KEYS)
        if bad:
            raise InvalidArgumentError(f"site {self.id}: unknown override keys {sorted(bad)}")
        for k, v in self.overrides.items():
            if not math.isfinite(v) or v < 0:
                raise InvalidArgumentError(f"site {self.id}: override {k} must be finite and >= 0")
        object.__setattr__(self, "overrides", MappingProxyType(dict(self.overrides)))

    def __eq__(self, other):
        if not isinstance(other, CandidateSite):
            return NotImplemented
        return (self.id, self.location, self.land_cost, self.category, dict(self.overrides), self.district) == (
            other.id, other.location, other.land_cost, other.category, dict(other.overrides), other.district)

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True)
class ResidentialPoint:
    id: str
    location: GeoPoint
    vehicles: int
    district: str | None = None

    def __post_init__(self):
        if not self.id:
            raise InvalidArgumentError("RP id must be non-empty")
        v = self.vehicles
        if isinstance(v, float):
            if not v.is_integer():
                raise InvalidArgumentError(f"RP {self.id}: vehicles must be an integer, got {v}")
            v = int(v)
        if not isinstance(v, int) or v < 0:
            raise InvalidArgumentError(f"RP {self.id}: vehicles must be an integer >= 0, got {self.vehicles}")
        object.__setattr__(self, "vehicles", v)


@dataclass(frozen=True)
class ScenarioParams:
    avg_energy_per_vehicle_day: float
    price_operator: float
    price_user: float
    price_per_km: float
    avg_wage: float
    traffic_rate: float
    budget: float
    d_max: float
    level2: ChargerSpec
    level3: ChargerSpec
    amortization_days: int = DEFAULT_AMORTIZATION_DAYS

    def __post_init__(self):
        for name in ("avg_energy_per_vehicle_day", "price_operator", "price_user", "price_per_km",
                     "avg_wage", "traffic_rate", "budget", "d_max"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)
        if not 0 < self.traffic_rate <= 1:
            raise ConfigError(f"traffic_rate must be in (0, 1], got {self.traffic_rate}")
        if not self.budget > 0:
            raise ConfigError("budget must be > 0")
        if not self.d_max > 0:
            raise ConfigError("d_max must be > 0")
        days = self.amortization_days
        if isinstance(days, float) and days.is_integer():
            days = int(days)
        if not isinstance(days, int) or days < 1:
            raise ConfigError(f"amortization_days must be an integer >= 1, got {self.amortization_days}")
        object.__setattr__(self, "amortization_days", days)
        if self.level2.level is not ChargerLevel.L2 or self.level3.level is not ChargerLevel.L3:
            raise ConfigError("level2/level3 specs carry the wrong charger level")

    def to_flat(self) -> dict:
        out = {
            "avg_energy_per_vehicle_day": self.avg_energy_per_vehicle_day,
            "price_operator": self.price_operator,
            "price_user": self.price_user,
            "price_per_km": self.price_per_km,
            "avg_wage": self.avg_wage,
            "traffic_rate": self.traffic_rate,
            "budget": self.budget,
            "d_max": self.d_max,
            "amortization_days": self.amortization_days,
        }
        for prefix, spec in (("level2", self.level2), ("level3", self.level3)):
            out[f"{prefix}.install"] = spec.install_cost
            out[f"{prefix}.maintenance"] = spec.maintenance_cost
            out[f"{prefix}.energy"] = spec.energy_per_day
            out[f"{prefix}.power"] = spec.power
        return out

    def replace(self, **changes) -> "ScenarioParams":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return ScenarioParams(**data)


# --------------------------------------------------------------------------
# readers


def _read_table(path, required, optional=()):
    """Yield ``(rowno, record)`` from a CSV or GeoJSON file.

    GeoJSON point coordinates are exposed as ``lat``/``lon`` columns.
    """
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("type") != "FeatureCollection":
            raise SchemaError(path, [(None, "type", "expected a FeatureCollection")])
        rows = []
        for n, feat in enumerate(doc.get("features", []), start=1):
            geom = feat.get("geometry") or {}
            rec = {k: ("" if v is None else str(v)) for k, v in (feat.get("properties") or {}).items()}
            if geom.get("type") == "Point" and len(geom.get("coordinates", [])) >= 2:
                rec["lon"], rec["lat"] = (repr(float(c)) for c in geom["coordinates"][:2])
            else:
                rec.setdefault("lat", "")
                rec.setdefault("lon", "")
            rows.append((n, rec))
        columns = set(required)
        return rows, columns
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        if not header:
            raise EmptyInstanceError(f"{path}: empty file")
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(path, [(None, c, "missing column") for c in missing])
        rows = [(n, {(k or "").strip(): (v or "").strip() for k, v in rec.items()})
                for n, rec in enumerate(reader, start=1)]
    return rows, set(header)


def _number(rec, name, problems, n, *, integer=False, nonneg=True):
    raw = rec.get(name, "")
    try:
        value = float(raw)
    except ValueError:
        problems.append((n, name, f"cannot parse {raw!r} as a number"))
        return None
    if not math.isfinite(value):
        problems.append((n, name, f"non-finite value {raw!r}"))
        return None
    if nonneg and value < 0:
        problems.append((n, name, f"negative value {value}"))
        return None
    if integer:
        if not value.is_integer():
            problems.append((n, name, f"expected an integer, got {raw!r}"))
            return None
        return int(value)
    return value


def _point(rec, problems, n):
    lat = _number(rec, "lat", problems, n, nonneg=False)
    lon = _number(rec, "lon", problems, n, nonneg=False)
    if lat is None or lon is None:
        return None
    try:
        return GeoPoint(lat, lon)
    except InvalidArgumentError as exc:
        problems.append((n, "lat/lon", str(exc)))
        return None


def _finish(path, items, problems, errors):
    if problems:
        if errors is None:
            raise SchemaError(path, problems)
        errors.extend(problems)
    return items


def load_sites(path, errors: list | None = None) -> list[CandidateSite]:
    """Read candidate sites from CSV or GeoJSON.

    Any bad row raises :class:`SchemaError` naming the row and field. If an
    ``errors`` list is given instead, bad rows are skipped and their
    problems appended to it, so ``rows read == len(result) + rows with errors``.
    """
    rows, _ = _read_table(path, ("id", "lat", "lon", "land_cost", "category"))
    sites, problems, seen = [], [], set()
    for n, rec in rows:
        row_problems = []
        sid = rec.get("id", "")
        if not sid:
            row_problems.append((n, "id", "empty id"))
        elif sid in seen:
            row_problems.append((n, "id", f"duplicate id {sid!r}"))
        loc = _point(rec, row_problems, n)
        land = _number(rec, "land_cost", row_problems, n)
        try:
            cat = Category(rec.get("category", ""))
        except ValueError:
            row_problems.append((n, "category", f"unknown category {rec.get('category')!r}"))
            cat = None
        overrides = {}
        for key in OVERRIDE_KEYS:
            if rec.get(key, "") != "":
                value = _number(rec, key, row_problems, n)
                if value is not None:
                    overrides[key] = value
        if row_problems:
            problems.extend(row_problems)
            continue
        seen.add(sid)
        sites.append(CandidateSite(sid, loc, land, cat, overrides, rec.get("district") or None))
    if not rows:
        raise EmptyInstanceError(f"{path}: no candidate sites")
    return _finish(path, sites, problems, errors)


def load_rps(path, errors: list | None = None) -> list[ResidentialPoint]:
    """Read residential points from CSV or GeoJSON (same error contract as :func:`load_sites`)."""
    rows, _ = _read_table(path, ("id", "lat", "lon", "vehicles"))
    rps, problems, seen = [], [], set()
    for n, rec in rows:
        row_problems = []
        rid = rec.get("id", "")
        if not rid:
            row_problems.append((n, "id", "empty id"))
        elif rid in seen:
            row_problems.append((n, "id", f"duplicate id {rid!r}"))
        loc = _point(rec, row_problems, n)
        vehicles = _number(rec, "vehicles", row_problems, n, integer=True)
        if row_problems:
            problems.extend(row_problems)
            continue
        seen.add(rid)
        rps.append(ResidentialPoint(rid, loc, vehicles, rec.get("district") or None))
    if not rows:
        raise EmptyInstanceError(f"{path}: no residential points")
    return _finish(path, rps, problems, errors)


REQUIRED_PARAM_KEYS = (
    "avg_energy_per_vehicle_day", "price_operator", "price_user", "price_per_km", "avg_wage",
    "traffic_rate", "budget", "d_max",
    "level2.install", "level2.maintenance", "level2.energy",
    "level3.install", "level3.maintenance", "level3.energy",
)
OPTIONAL_PARAM_DEFAULTS = {
    "amortization_days": DEFAULT_AMORTIZATION_DAYS,
    "level2.power": 7.4,
    "level3.power": 60.0,
}


def _flatten(mapping, prefix=""):
    out = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def params_from_mapping(raw: Mapping) -> ScenarioParams:
    flat = _flatten(raw)
    missing = [k for k in REQUIRED_PARAM_KEYS if k not in flat]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    unknown = set(flat) - set(REQUIRED_PARAM_KEYS) - set(OPTIONAL_PARAM_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    values = dict(OPTIONAL_PARAM_DEFAULTS)
    values.update(flat)
    for key, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
    try:
        level2 = ChargerSpec(ChargerLevel.L2, values["level2.install"], values["level2.maintenance"],
                             values["level2.energy"], values["level2.power"])
        level3 = ChargerSpec(ChargerLevel.L3, values["level3.install"], values["level3.maintenance"],
                             values["level3.energy"], values["level3.power"])
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    return ScenarioParams(
        avg_energy_per_vehicle_day=values["avg_energy_per_vehicle_day"],
        price_operator=values["price_operator"],
        price_user=values["price_user"],
        price_per_km=values["price_per_km"],
        avg_wage=values["avg_wage"],
        traffic_rate=values["traffic_rate"],
        budget=values["budget"],
        d_max=values["d_max"],
        level2=level2,
        level3=level3,
        amortization_days=values["amortization_days"],
    )


def load_params(path) -> ScenarioParams:
    """Read scenario parameters from a YAML (or JSON) key-value file."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: expected a key-value mapping")
    return params_from_mapping(raw)


# --------------------------------------------------------------------------
# writers


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_sites(sites, path) -> None:
    extra = [k for k in OVERRIDE_KEYS if any(k in s.overrides for s in sites)]
    with_district = any(s.district for s in sites)
    header = ["id", "lat", "lon", "land_cost", "category", *extra] + (["district"] if with_district else [])
    rows = []
    for s in sites:
        row = [s.id, repr(s.location.lat), repr(s.location.lon), repr(s.land_cost), s.category.value]
        row += [repr(s.overrides[k]) if k in s.overrides else "" for k in extra]
        if with_district:
            row.append(s.district or "")
        rows.append(row)
    atomic_write_text(path, _csv_text(header, rows))


def write_rps(rps, path) -> None:
    with_district = any(p.district for p in rps)
    header = ["id", "lat", "lon", "vehicles"] + (["district"] if with_district else [])
    rows = []
    for p in rps:
        row = [p.id, repr(p.location.lat), repr(p.location.lon), str(p.vehicles)]
        if with_district:
            row.append(p.district or "")
        rows.append(row)
    atomic_write_text(path, _csv_text(header, rows))


def write_params(params: ScenarioParams, path) -> None:
    atomic_write_text(path, yaml.safe_dump(params.to_flat(), sort_keys=False))


# --------------------------------------------------------------------------
# synthetic instances

#: Default bounding box (south-west, north-east), roughly central Ho Chi Minh City.
DEFAULT_BBOX = (GeoPoint(10.72, 106.62), GeoPoint(10.86, 106.78))

#: Uniform ranges used by :func:`generate_synthetic`.
SYNTHETIC_LAND_COST = (2.0e8, 2.0e9)
SYNTHETIC_VEHICLES = (1, 20)

#: Parameter values given to synthetic instances. ``d_max`` is replaced by
#: 60% of the bounding-box diagonal.
SYNTHETIC_PARAMS = {
    "avg_energy_per_vehicle_day": 12.0,
    "price_operator": 2500.0,
    "price_user": 3500.0,
    "price_per_km": 20000.0,
    "avg_wage": 300000.0,
    "traffic_rate": 0.5,
    "budget": 1.0e11,
    "d_max": 10.0,
    "amortization_days": DEFAULT_AMORTIZATION_DAYS,
    "level2.install": 1.5e8,
    "level2.maintenance": 15000.0,
    "level2.energy": 100.0,
    "level2.power": 7.4,
    "level3.install": 9.0e8,
    "level3.maintenance": 60000.0,
    "level3.energy": 600.0,
    "level3.power": 60.0,
}


def generate_synthetic(n_sites: int, n_rps: int, seed: int, bbox=DEFAULT_BBOX, **param_overrides):
    """Seeded random instance ``(sites, rps, params)``.

    Locations are uniform in ``bbox``; land costs and vehicle counts are
    uniform over :data:`SYNTHETIC_LAND_COST` and :data:`SYNTHETIC_VEHICLES`.
    Each RP is redrawn until at least one site lies within ``d_max``.
    """
    if n_sites < 1 or n_rps < 1:
        raise InvalidArgumentError("n_sites and n_rps must be >= 1")
    sw, ne = bbox
    if not (ne.lat > sw.lat and ne.lon > sw.lon):
        raise InvalidArgumentError("bbox must have positive extent (south-west, north-east)")
    from .geo import haversine

    rng = random.Random(seed)
    cats = list(Category)
    raw = dict(SYNTHETIC_PARAMS)
    raw["d_max"] = round(0.6 * haversine(sw, ne), 6)
    raw.update(param_overrides)
    params = params_from_mapping(raw)

    def draw_point():
        return GeoPoint(round(rng.uniform(sw.lat, ne.lat), 6), round(rng.uniform(sw.lon, ne.lon), 6))

    sites = [
        CandidateSite(f"s{i + 1}", draw_point(), round(rng.uniform(*SYNTHETIC_LAND_COST), 2), rng.choice(cats))
        for i in range(n_sites)
    ]
    rps = []
    for j in range(n_rps):
        for _ in range(1000):
            loc = draw_point()
            if any(haversine(loc, s.location) <= params.d_max for s in sites):
                break
        else:  # pragma: no cover - needs a pathological bbox
            raise InvalidArgumentError("could not place an RP within range of any site")
        rps.append(ResidentialPoint(f"r{j + 1}", loc, rng.randint(*SYNTHETIC_VEHICLES)))
    return sites, rps, params


@dataclass(frozen=True, eq=False)
class Instance:
    """Sites, residential points, parameters and their distance matrix."""

    sites: tuple
    rps: tuple
    params: ScenarioParams
    dmat: object

    def __post_init__(self):
        if not self.sites or not self.rps:
            raise EmptyInstanceError("instance needs at least one site and one RP")
        if self.dmat.rp_ids != tuple(p.id for p in self.rps) or self.dmat.site_ids != tuple(s.id for s in self.sites):
            raise InvalidArgumentError("distance matrix ids do not match the site/RP lists")
        for kind, items in (("site", self.sites), ("RP", self.rps)):
            ids = [x.id for x in items]
            if len(set(ids)) != len(ids):
                raise InvalidArgumentError(f"duplicate {kind} ids")

    @classmethod
    def build(cls, sites, rps, params: ScenarioParams) -> "Instance":
        sites, rps = tuple(sites), tuple(rps)
        if not sites or not rps:
            raise EmptyInstanceError("instance needs at least one site and one RP")
        return cls(sites, rps, params, build_distance_matrix(rps, sites, params.d_max))

    @classmethod
    def from_files(cls, sites_path, rps_path, params_path) -> "Instance":
        return cls.build(load_sites(sites_path), load_rps(rps_path), load_params(params_path))

    @classmethod
    def synthetic(cls, n_sites, n_rps, seed, **kwargs) -> "Instance":
        return cls.build(*generate_synthetic(n_sites, n_rps, seed, **kwargs))

    def with_params(self, params: ScenarioParams) -> "Instance":
        return Instance.build(self.sites, self.rps, params)
