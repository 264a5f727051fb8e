from .cells import MAX_LEVEL, SpatialCellId, ancestor, cell_id, from_hex, to_hex
from .distance import (
    EARTH_RADIUS_KM,
    DistanceBucket,
    GeoPoint,
    bucket_distance,
    haversine_km,
)

__all__ = [
    "EARTH_RADIUS_KM",
    "MAX_LEVEL",
    "DistanceBucket",
    "GeoPoint",
    "SpatialCellId",
    "ancestor",
    "bucket_distance",
    "cell_id",
    "from_hex",
    "haversine_km",
    "to_hex",
]
