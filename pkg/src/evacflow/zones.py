"""Evacuation-zone geometry, order timelines, and point classification.

Zones arrive as WGS84 GeoJSON plus a JSON order timeline and are projected
to UTM 17N at load. A dilation ring (default 7.5 km) is built around the
union of all zone polygons; each connected ring component inherits the
order time of its nearest zone. Point queries return one of four classes
with fixed precedence: mandatory > voluntary > buffer > outside.
Membership is boundary-inclusive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon
from shapely.ops import unary_union
from shapely.validation import explain_validity

DEFAULT_BUFFER_M = 7500.0
DEFAULT_CHORD_TOL_M = 1.0
DEFAULT_UTC_OFFSET_HOURS = -4.0

LEVEL_VOLUNTARY = "voluntary"
LEVEL_MANDATORY = "mandatory"


class ZoneConfigError(ValueError):
    """Inconsistent or invalid zone geometry / order configuration."""


class ZoneClass(str, Enum):
    MANDATORY = "mandatory"
    VOLUNTARY = "voluntary"
    BUFFER = "buffer"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class OrderEvent:
    time: int        # UTC epoch seconds
    level: str       # voluntary | mandatory


@dataclass
class Zone:
    zone_id: str
    county: str
    geom: object     # shapely (Multi)Polygon, UTM 17N meters
    orders: list

    @property
    def zone_class(self):
        if any(o.level == LEVEL_MANDATORY for o in self.orders):
            return ZoneClass.MANDATORY
        return ZoneClass.VOLUNTARY

    @property
    def first_order_time(self):
        return min(o.time for o in self.orders)

    def order_time(self, level):
        for o in self.orders:
            if o.level == level:
                return o.time
        return None


@dataclass
class BufferComponent:
    geom: object
    order_time: int
    source_zone_id: str
    county: str


class ZoneMap:
    """Immutable zone geometry + order timelines; safe for concurrent reads."""

    def __init__(self, zones, buffer_components):
        self.zones = list(zones)
        self.buffer_components = list(buffer_components)
        self._zone_union = unary_union([z.geom for z in self.zones]) \
            if self.zones else Polygon()
        self._buffer_union = unary_union(
            [c.geom for c in self.buffer_components]) \
            if self.buffer_components else Polygon()
        shapely.prepare(self._zone_union)
        shapely.prepare(self._buffer_union)
        for z in self.zones:
            shapely.prepare(z.geom)
        for c in self.buffer_components:
            shapely.prepare(c.geom)

    def locate(self, easting, northing):
        """Classify one point; boundary points count as inside."""
        zone = self.governing_zone(easting, northing)
        if zone is not None:
            return zone.zone_class
        if shapely.intersects_xy(self._buffer_union, easting, northing):
            return ZoneClass.BUFFER
        return ZoneClass.OUTSIDE

    def governing_zone(self, easting, northing):
        """The zone whose orders apply at a point, or None.

        Overlaps resolve to the mandatory-class zone first, then the
        earliest first order, then zone_id.
        """
        hits = [z for z in self.zones
                if shapely.intersects_xy(z.geom, easting, northing)]
        if not hits:
            return None
        hits.sort(key=lambda z: (z.zone_class != ZoneClass.MANDATORY,
                                 z.first_order_time, z.zone_id))
        return hits[0]

    def buffer_component_at(self, easting, northing):
        for c in self.buffer_components:
            if shapely.intersects_xy(c.geom, easting, northing):
                return c
        return None

    def in_any_zone(self, easting, northing):
        """Vectorized membership in the union of all evacuation zones."""
        return shapely.intersects_xy(self._zone_union, easting, northing)


def buffer_quad_segs(radius, chord_tol):
    """Segments per quadrant so the arc chord error stays below chord_tol."""
    if chord_tol >= radius:
        return 8
    theta = 2.0 * math.acos(1.0 - chord_tol / radius)
    return max(8, math.ceil((math.pi / 2.0) / theta))


def build_buffer(zone_geoms, radius=DEFAULT_BUFFER_M,
                 chord_tol=DEFAULT_CHORD_TOL_M):
    """Dilation ring: union of zones buffered by `radius`, minus the union.

    Returns the ring as a list of disjoint polygons (connected components).
    """
    union = unary_union(list(zone_geoms))
    quad = buffer_quad_segs(radius, chord_tol)
    ring = union.buffer(radius, quad_segs=quad).difference(union)
    if ring.is_empty:
        return []
    if isinstance(ring, Polygon):
        return [ring]
    return [g for g in ring.geoms if isinstance(g, Polygon)]


def assign_buffer_order_time(component, zones):
    """Order time inherited by a buffer component from its nearest zone.

    Nearest by boundary-to-boundary distance; ties go to the zone with the
    earlier first order time. Returns (time, zone).
    """
    if not zones:
        raise ZoneConfigError("cannot assign buffer order time without zones")
    boundary = component.boundary
    best = min(zones, key=lambda z: (boundary.distance(z.geom.boundary),
                                     z.first_order_time, z.zone_id))
    return best.first_order_time, best


def _parse_order_time(entry):
    raw = entry["time_iso8601_local"]
    off = entry.get("utc_offset", DEFAULT_UTC_OFFSET_HOURS)
    if isinstance(off, str):
        sign = -1.0 if off.startswith("-") else 1.0
        hh, _, mm = off.lstrip("+-").partition(":")
        off = sign * (float(hh) + (float(mm) if mm else 0.0) / 60.0)
    local = datetime.fromisoformat(raw)
    if local.tzinfo is not None:
        return int(local.timestamp())
    tz = timezone(timedelta(hours=float(off)))
    return int(local.replace(tzinfo=tz).timestamp())


def _load_orders(doc):
    if isinstance(doc, (str, bytes)) or hasattr(doc, "__fspath__"):
        with open(doc, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    orders = {}
    for entry in doc:
        zone_id = str(entry["zone_id"])
        level = str(entry["level"])
        if level not in (LEVEL_VOLUNTARY, LEVEL_MANDATORY):
            raise ZoneConfigError(
                f"zone {zone_id}: unknown order level {level!r}")
        ev = OrderEvent(time=_parse_order_time(entry), level=level)
        bucket = orders.setdefault(zone_id, [])
        if any(o.level == level for o in bucket):
            raise ZoneConfigError(
                f"zone {zone_id}: duplicate {level} order")
        bucket.append(ev)
    for zone_id, evs in orders.items():
        evs.sort(key=lambda o: (o.time, o.level))
        mand = next((o for o in evs if o.level == LEVEL_MANDATORY), None)
        vol = next((o for o in evs if o.level == LEVEL_VOLUNTARY), None)
        if mand and vol and mand.time < vol.time:
            raise ZoneConfigError(
                f"zone {zone_id}: mandatory order precedes voluntary order")
    return orders


def _project_ring(ring):
    arr = np.asarray(ring, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ZoneConfigError("ring is not a coordinate list")
    from .projection import wgs84_to_utm17n
    e, n = wgs84_to_utm17n(arr[:, 1], arr[:, 0])
    return np.column_stack([e, n])


def _project_polygon(coords):
    shell = _project_ring(coords[0])
    holes = [_project_ring(r) for r in coords[1:]]
    return Polygon(shell, holes)


def load_zonemap(geojson_doc, orders_doc, buffer_m=DEFAULT_BUFFER_M,
                 chord_tol_m=DEFAULT_CHORD_TOL_M):
    """Load WGS84 zone GeoJSON + order timeline into a validated ZoneMap."""
    if isinstance(geojson_doc, (str, bytes)) or hasattr(geojson_doc, "__fspath__"):
        with open(geojson_doc, "r", encoding="utf-8") as fh:
            geojson_doc = json.load(fh)
    orders = _load_orders(orders_doc)

    zones = []
    for feature in geojson_doc.get("features", []):
        props = feature.get("properties") or {}
        zone_id = str(props.get("zone_id", ""))
        if not zone_id:
            raise ZoneConfigError("feature without zone_id property")
        county = str(props.get("county", ""))
        geometry = feature.get("geometry") or {}
        gtype = geometry.get("type")
        coords = geometry.get("coordinates")
        try:
            if gtype == "Polygon":
                geom = _project_polygon(coords)
            elif gtype == "MultiPolygon":
                geom = MultiPolygon([_project_polygon(c) for c in coords])
            else:
                raise ZoneConfigError(
                    f"zone {zone_id}: unsupported geometry type {gtype!r}")
        except (TypeError, ValueError) as exc:
            raise ZoneConfigError(f"zone {zone_id}: bad geometry ({exc})")
        if geom.is_empty:
            raise ZoneConfigError(f"zone {zone_id}: empty geometry")
        if not geom.is_valid:
            raise ZoneConfigError(
                f"zone {zone_id}: invalid geometry ({explain_validity(geom)})")
        if zone_id not in orders:
            raise ZoneConfigError(f"zone {zone_id}: no evacuation order")
        zones.append(Zone(zone_id=zone_id, county=county, geom=geom,
                          orders=orders[zone_id]))

    if not zones:
        raise ZoneConfigError("no zones in geometry document")
    unknown = set(orders) - {z.zone_id for z in zones}
    if unknown:
        raise ZoneConfigError(
            f"orders reference unknown zones {sorted(unknown)}")

    components = []
    for geom in build_buffer([z.geom for z in zones], buffer_m, chord_tol_m):
        t, src = assign_buffer_order_time(geom, zones)
        components.append(BufferComponent(
            geom=geom, order_time=t, source_zone_id=src.zone_id,
            county=src.county))
    return ZoneMap(zones, components)
