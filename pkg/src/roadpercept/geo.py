"""Local tangent-plane (ENU) conversions.

World coordinates are kept in meters east/north of a configured origin;
longitude/latitude appear only at file boundaries.  The conversion is
equirectangular, which is accurate to millimeters over a few hundred meters.
"""

from __future__ import annotations

import math

# WGS-84 equatorial radius.
EARTH_RADIUS_M = 6378137.0


def enu_from_lonlat(lon, lat, origin_lon, origin_lat):
    """Convert WGS-84 degrees to local east/north meters."""
    x = math.radians(lon - origin_lon) * EARTH_RADIUS_M * math.cos(math.radians(origin_lat))
    y = math.radians(lat - origin_lat) * EARTH_RADIUS_M
    return x, y


def lonlat_from_enu(x, y, origin_lon, origin_lat):
    """Inverse of :func:`enu_from_lonlat`."""
    lon = origin_lon + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(origin_lat))))
    lat = origin_lat + math.degrees(y / EARTH_RADIUS_M)
    return lon, lat
