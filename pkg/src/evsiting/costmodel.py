"""The seven daily cost components of a station deployment.

All components are expressed per day. One-off installation and land
costs are spread over ``amortization_days`` (straight-line), recurring
costs are already daily.

Note that the waiting cost grows with the number of installed stations
(``wage * rate * stations``). This is the published formula, kept as is,
even though queueing intuition would suggest the opposite.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, fields
from typing import Mapping

from .exceptions import ContractViolationError, InvalidArgumentError

#: Derating applied to nominal charger power when estimating charging time.
POWER_FACTOR = 0.85

L2_POWER_BAND = (3.7, 22.0)
L3_MIN_POWER = 44.0

COMPONENTS = ("installation", "land", "maintenance", "operation", "charging", "waiting", "travel")


class ChargerLevel(str, enum.Enum):
    L2 = "L2"
    L3 = "L3"


@dataclass(frozen=True)
class ChargerSpec:
    """Economic and physical constants of one charger level.

    install_cost is a one-off price per station, maintenance_cost is per
    station per day, energy_per_day is the nominal daily throughput in kWh
    and power is the rated power in kW.
    """

    level: ChargerLevel
    install_cost: float
    maintenance_cost: float
    energy_per_day: float
    power: float

    def __post_init__(self):
        object.__setattr__(self, "level", ChargerLevel(self.level))
        for name in ("install_cost", "maintenance_cost", "energy_per_day", "power"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{self.level.value}.{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)
        lo, hi = L2_POWER_BAND
        if self.level is ChargerLevel.L2 and not lo <= self.power <= hi:
            warnings.warn(f"level-2 power {self.power} kW outside [{lo}, {hi}] kW", stacklevel=3)
        if self.level is ChargerLevel.L3 and not self.power > L3_MIN_POWER:
            warnings.warn(f"level-3 power {self.power} kW not above {L3_MIN_POWER} kW", stacklevel=3)

    def with_overrides(self, install=None, maintenance=None, energy=None) -> "ChargerSpec":
        return ChargerSpec(
            self.level,
            self.install_cost if install is None else install,
            self.maintenance_cost if maintenance is None else maintenance,
            self.energy_per_day if energy is None else energy,
            self.power,
        )


@dataclass(frozen=True)
class CostBreakdown:
    installation: float = 0.0
    land: float = 0.0
    maintenance: float = 0.0
    operation: float = 0.0
    charging: float = 0.0
    waiting: float = 0.0
    travel: float = 0.0

    @property
    def total(self) -> float:
        return math.fsum(getattr(self, name) for name in COMPONENTS)

    def as_dict(self) -> dict:
        out = {name: getattr(self, name) for name in COMPONENTS}
        out["total"] = self.total
        return out

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})


def _check_counts(x2, x3):
    if x2 < 0 or x3 < 0:
        raise InvalidArgumentError(f"station counts must be >= 0, got ({x2}, {x3})")


def installation_cost(x2, x3, spec2: ChargerSpec, spec3: ChargerSpec, amortization_days=14600) -> float:
    _check_counts(x2, x3)
    return (x2 * spec2.install_cost + x3 * spec3.install_cost) / amortization_days


def land_cost(x2, x3, land: float, amortization_days=14600) -> float:
    _check_counts(x2, x3)
    return land / amortization_days * (x2 + x3)


def maintenance_cost(x2, x3, spec2: ChargerSpec, spec3: ChargerSpec) -> float:
    _check_counts(x2, x3)
    return x2 * spec2.maintenance_cost + x3 * spec3.maintenance_cost


def operation_cost(x2, x3, spec2: ChargerSpec, spec3: ChargerSpec, price_operator: float) -> float:
    _check_counts(x2, x3)
    return (x2 * spec2.energy_per_day + x3 * spec3.energy_per_day) * price_operator


def charging_cost(x2, x3, spec2: ChargerSpec, spec3: ChargerSpec, price_user: float) -> float:
    _check_counts(x2, x3)
    return (x2 * spec2.energy_per_day + x3 * spec3.energy_per_day) * price_user


def waiting_cost(x2, x3, wage: float, rate: float) -> float:
    _check_counts(x2, x3)
    return wage * rate * (x2 + x3)


def travel_cost(assignment: Mapping, dmat, price_per_km: float, rate: float) -> float:
    """Daily travel cost of an explicit demand assignment.

    ``assignment`` maps ``(site_id, rp_id)`` to the number of vehicles of
    that residential point served at that site. Pairs beyond the driving
    range are rejected.
    """
    if not assignment:
        return 0.0
    rp_pos = {rid: j for j, rid in enumerate(dmat.rp_ids)}
    site_pos = {sid: i for i, sid in enumerate(dmat.site_ids)}
    terms = []
    for (sid, rid), served in assignment.items():
        if served == 0:
            continue
        j, i = rp_pos[rid], site_pos[sid]
        dist = float(dmat.d[j, i])
        if dist > dmat.d_max:
            raise ContractViolationError(f"site {sid} is {dist:.3f} km from RP {rid}, beyond d_max={dmat.d_max}")
        terms.append(dist * price_per_km * rate * served)
    return math.fsum(terms)


def charging_time(energy_per_100km: float, daily_distance: float, power: float) -> float:
    """Hours needed to recharge one day of driving at the given power."""
    if power <= 0:
        raise InvalidArgumentError("power must be positive")
    return energy_per_100km * daily_distance / (100.0 * power)


def charging_time_derated(consumption: float, power: float) -> float:
    """Hours to deliver ``consumption`` kWh, derated by the power factor."""
    if power <= 0:
        raise InvalidArgumentError("power must be positive")
    return consumption / (POWER_FACTOR * power)


def site_specs(site, params) -> tuple[ChargerSpec, ChargerSpec]:
    """Effective level-2 and level-3 specs at a site, after per-site overrides."""
    o = site.overrides
    spec2 = params.level2.with_overrides(o.get("i2"), o.get("m2"), o.get("e2"))
    spec3 = params.level3.with_overrides(o.get("i3"), o.get("m3"), o.get("e3"))
    return spec2, spec3


def site_breakdown(x2, x3, site, params) -> CostBreakdown:
    """Every component except travel for one site."""
    spec2, spec3 = site_specs(site, params)
    h = params.amortization_days
    return CostBreakdown(
        installation=installation_cost(x2, x3, spec2, spec3, h),
        land=land_cost(x2, x3, site.land_cost, h),
        maintenance=maintenance_cost(x2, x3, spec2, spec3),
        operation=operation_cost(x2, x3, spec2, spec3, params.price_operator),
        charging=charging_cost(x2, x3, spec2, spec3, params.price_user),
        waiting=waiting_cost(x2, x3, params.avg_wage, params.traffic_rate),
    )


def served_vehicles(shares: Mapping, instance) -> dict:
    """Convert assignment shares in [0, 1] to served-vehicle counts."""
    vehicles = {rp.id: rp.vehicles for rp in instance.rps}
    return {(sid, rid): share * vehicles[rid] for (sid, rid), share in shares.items()}


def evaluate(x2: Mapping, x3: Mapping, shares: Mapping, instance) -> CostBreakdown:
    """Total daily cost breakdown of a decision on ``instance``.

    ``x2`` and ``x3`` map site ids to station counts (missing ids count as
    zero); ``shares`` maps ``(site_id, rp_id)`` to the fraction of that
    RP's vehicles served at the site.
    """
    params = instance.params
    parts = {name: [] for name in COMPONENTS}
    for site in instance.sites:
        n2, n3 = x2.get(site.id, 0), x3.get(site.id, 0)
        if n2 == 0 and n3 == 0:
            continue
        b = site_breakdown(n2, n3, site, params)
        for name in COMPONENTS[:-1]:
            parts[name].append(getattr(b, name))
    parts["travel"].append(
        travel_cost(served_vehicles(shares, instance), instance.dmat, params.price_per_km, params.traffic_rate)
    )
    return CostBreakdown(**{name: math.fsum(v) for name, v in parts.items()})
