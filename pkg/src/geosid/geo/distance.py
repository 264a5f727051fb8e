"""Great-circle distance and the five-bin transition-distance buckets."""
from __future__ import annotations

import enum
import math
from typing import NamedTuple

EARTH_RADIUS_KM = 6371.0


class GeoPoint(NamedTuple):
    latitude: float
    longitude: float

    def validate(self) -> "GeoPoint":
        if not (-90.0 <= self.latitude <= 90.0) or not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"coordinate out of bounds: {self.latitude}, {self.longitude}")
        if math.isnan(self.latitude) or math.isnan(self.longitude):
            raise ValueError("coordinate is NaN")
        return self


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in kilometres on a sphere of radius 6371 km."""
    lat1, lng1 = map(math.radians, a)
    lat2, lng2 = map(math.radians, b)
    dlat = lat2 - lat1
    dlng = lng2 - lng1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlng / 2) ** 2
    # clamp: rounding can push h a hair above 1 for antipodes
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


class DistanceBucket(enum.IntEnum):
    ADJACENT = 0
    NEARBY = 1
    SHORT_HOP = 2
    FAR = 3
    LONG = 4

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    DistanceBucket.ADJACENT: "Adjacent",
    DistanceBucket.NEARBY: "Nearby",
    DistanceBucket.SHORT_HOP: "Short hop",
    DistanceBucket.FAR: "Far",
    DistanceBucket.LONG: "Long",
}

# upper edges are inclusive
BUCKET_EDGES_KM = (
    (0.2, DistanceBucket.ADJACENT),
    (1.2, DistanceBucket.NEARBY),
    (3.0, DistanceBucket.SHORT_HOP),
    (10.0, DistanceBucket.FAR),
)


def bucket_distance(d_km: float) -> DistanceBucket:
    if d_km < 0 or math.isnan(d_km):
        raise ValueError(f"distance must be non-negative, got {d_km}")
    for edge, bucket in BUCKET_EDGES_KM:
        if d_km <= edge:
            return bucket
    return DistanceBucket.LONG
