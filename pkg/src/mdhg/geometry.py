"""Planar projection, buffering, point-in-polygon joins and intersection areas.

All distances are meters in a local equirectangular frame centred on a
reference point. Polygon work is delegated to shapely.
"""

from dataclasses import dataclass, field
from math import cos, radians

import numpy as np
import shapely
from shapely.strtree import STRtree

from .exceptions import GeometryError, OutOfBoundsError

EARTH_RADIUS_M = 6371008.8
QUAD_SEGS = 16


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Projection:
    """Local equirectangular projection about (ref_lon, ref_lat).

    ``bbox`` is (min_lon, min_lat, max_lon, max_lat); points outside it are
    rejected so that the small-extent accuracy assumption holds.
    """

    ref_lon: float
    ref_lat: float
    bbox: tuple = (-180.0, -90.0, 180.0, 90.0)
    _kx: float = field(init=False, repr=False)
    _ky: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_kx", EARTH_RADIUS_M * radians(1.0) * cos(radians(self.ref_lat)))
        object.__setattr__(self, "_ky", EARTH_RADIUS_M * radians(1.0))

    @classmethod
    def around(cls, bounds, pad_deg=0.1):
        """Projection centred on a lon/lat bounds tuple, box padded by `pad_deg`."""
        min_lon, min_lat, max_lon, max_lat = bounds
        return cls(
            ref_lon=(min_lon + max_lon) / 2.0,
            ref_lat=(min_lat + max_lat) / 2.0,
            bbox=(min_lon - pad_deg, min_lat - pad_deg, max_lon + pad_deg, max_lat + pad_deg),
        )

    def contains(self, lon, lat):
        min_lon, min_lat, max_lon, max_lat = self.bbox
        return min_lon <= lon <= max_lon and min_lat <= lat <= max_lat

    def project(self, lon, lat):
        if not self.contains(lon, lat):
            raise OutOfBoundsError(f"point ({lon}, {lat}) outside projection bbox {self.bbox}")
        return PlanarPoint((lon - self.ref_lon) * self._kx, (lat - self.ref_lat) * self._ky)

    def unproject(self, x, y):
        return (self.ref_lon + x / self._kx, self.ref_lat + y / self._ky)

    def project_array(self, lonlat):
        """Vectorised forward projection of an (N, 2) lon/lat array."""
        lonlat = np.asarray(lonlat, dtype=float)
        min_lon, min_lat, max_lon, max_lat = self.bbox
        lon, lat = lonlat[:, 0], lonlat[:, 1]
        outside = (lon < min_lon) | (lon > max_lon) | (lat < min_lat) | (lat > max_lat)
        if outside.any():
            i = int(np.flatnonzero(outside)[0])
            raise OutOfBoundsError(
                f"point ({lon[i]}, {lat[i]}) outside projection bbox {self.bbox}"
            )
        return np.column_stack(((lon - self.ref_lon) * self._kx, (lat - self.ref_lat) * self._ky))

    def project_geometry(self, geom):
        return shapely.transform(geom, self.project_array)

    def unproject_geometry(self, geom):
        def inverse(xy):
            return np.column_stack(
                (self.ref_lon + xy[:, 0] / self._kx, self.ref_lat + xy[:, 1] / self._ky)
            )

        return shapely.transform(geom, inverse)


def planar_distance(a, b):
    return float(np.hypot(a.x - b.x, a.y - b.y))


def buffer_polygon(poly, radius):
    """Dilate a projected polygon by `radius` meters (interior included)."""
    if radius <= 0:
        raise ValueError(f"buffer radius must be positive, got {radius}")
    if poly.is_empty or poly.area <= 0:
        raise GeometryError("cannot buffer a degenerate (zero-area) polygon")
    return poly.buffer(radius, quad_segs=QUAD_SEGS)


class SpatialIndex:
    """Bounding-box tree over geometries keyed by id.

    Thin wrapper around shapely's STRtree that speaks in ids rather than
    positional indices.
    """

    def __init__(self, geometries):
        # geometries: mapping id -> shapely geometry
        self.ids = list(geometries)
        self.geometries = [geometries[k] for k in self.ids]
        self._tree = STRtree(self.geometries)

    def __len__(self):
        return len(self.ids)

    def query_bbox(self, bounds):
        """Ids whose envelope intersects `bounds` (superset of true hits)."""
        hits = self._tree.query(shapely.box(*bounds))
        return [self.ids[i] for i in sorted(hits)]

    def query(self, geom, predicate="intersects"):
        hits = self._tree.query(geom, predicate=predicate)
        return [self.ids[i] for i in sorted(hits)]


def stations_in_buffer(zone_poly, stations, radius, index=None):
    """Ids of stations inside the `radius` buffer of a projected zone polygon.

    `stations` maps station id -> projected shapely Point. Points on the buffer
    boundary count as inside.
    """
    buf = buffer_polygon(zone_poly, radius)
    if index is None:
        return {sid for sid, pt in stations.items() if buf.covers(pt)}
    return set(index.query(buf, predicate="covers"))


def join_stations(zone_polys, stations, radius, use_index=True):
    """zone id -> set of station ids for every zone in `zone_polys`."""
    index = SpatialIndex(stations) if (use_index and stations) else None
    out = {}
    for zid, poly in zone_polys.items():
        out[zid] = stations_in_buffer(poly, stations, radius, index=index) if stations else set()
    return out


def _as_union(polys):
    if isinstance(polys, shapely.Geometry):
        return polys
    polys = [p for p in polys if not p.is_empty]
    if not polys:
        return shapely.Polygon()
    return shapely.union_all(polys)


def intersection_area(a, b):
    """Area of the geometric intersection of two polygon sets (m²)."""
    ua, ub = _as_union(a), _as_union(b)
    if ua.is_empty or ub.is_empty:
        return 0.0
    return float(shapely.intersection(ua, ub).area)


class AreaOverlay:
    """Repeated intersection-area queries against one fixed polygon set."""

    def __init__(self, polygons):
        self.polygons = [p for p in polygons if not p.is_empty]
        self._tree = STRtree(self.polygons) if self.polygons else None

    def area_within(self, geom):
        if self._tree is None:
            return 0.0
        hits = self._tree.query(geom, predicate="intersects")
        if len(hits) == 0:
            return 0.0
        return intersection_area(geom, [self.polygons[i] for i in hits])
