"""Great-circle geometry for residential points and candidate sites."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import EmptyInstanceError, InvalidArgumentError

#: Mean Earth radius in kilometres.
EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise InvalidArgumentError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise InvalidArgumentError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise InvalidArgumentError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in km."""
    if not isinstance(a, GeoPoint) or not isinstance(b, GeoPoint):
        raise InvalidArgumentError("haversine expects GeoPoint arguments")
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    # asin argument can exceed 1 by an ulp for antipodal points
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _haversine_grid(lat1, lon1, lat2, lon2):
    phi1 = np.radians(lat1)[:, None]
    phi2 = np.radians(lat2)[None, :]
    dphi = phi2 - phi1
    dlmb = np.radians(lon2)[None, :] - np.radians(lon1)[:, None]
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """RP-by-site distances in km with the driving-range mask.

    Rows index residential points, columns index candidate sites, in the
    order of the lists the matrix was built from.
    """

    rp_ids: tuple
    site_ids: tuple
    d: np.ndarray
    d_max: float

    @property
    def rows(self) -> int:
        return self.d.shape[0]

    @property
    def cols(self) -> int:
        return self.d.shape[1]

    @property
    def reachable(self) -> np.ndarray:
        return self.d <= self.d_max

    def with_range(self, d_max: float) -> "DistanceMatrix":
        if not d_max > 0:
            raise InvalidArgumentError("d_max must be positive")
        return DistanceMatrix(self.rp_ids, self.site_ids, self.d, float(d_max))


def build_distance_matrix(rps: Sequence, sites: Sequence, d_max: float) -> DistanceMatrix:
    """Haversine distances from every residential point to every site.

    ``rps`` and ``sites`` are sequences of objects carrying ``id`` and
    ``location`` (a :class:`GeoPoint`).
    """
    if len(rps) == 0 or len(sites) == 0:
        raise EmptyInstanceError("distance matrix needs at least one RP and one site")
    if not (math.isfinite(d_max) and d_max > 0):
        raise InvalidArgumentError(f"d_max must be positive and finite, got {d_max}")
    lat1 = np.array([p.location.lat for p in rps], dtype=float)
    lon1 = np.array([p.location.lon for p in rps], dtype=float)
    lat2 = np.array([s.location.lat for s in sites], dtype=float)
    lon2 = np.array([s.location.lon for s in sites], dtype=float)
    d = _haversine_grid(lat1, lon1, lat2, lon2)
    d.setflags(write=False)
    return DistanceMatrix(
        rp_ids=tuple(p.id for p in rps),
        site_ids=tuple(s.id for s in sites),
        d=d,
        d_max=float(d_max),
    )
