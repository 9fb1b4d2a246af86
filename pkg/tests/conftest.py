import numpy as np
import pytest
from shapely.geometry import Polygon

from evacflow.classify import StudyWindow
from evacflow.clock import LocalClock, parse_utc
from evacflow.ingest import UserTrack
from evacflow.zones import (OrderEvent, Zone, ZoneMap, assign_buffer_order_time,
                            build_buffer)


@pytest.fixture
def clock():
    return LocalClock.from_hours(-4)


def make_track(uid, points):
    """UserTrack from (t, e, n) triples (kept in the given order)."""
    t = np.asarray([p[0] for p in points], dtype=np.int64)
    e = np.asarray([p[1] for p in points], dtype=np.float64)
    n = np.asarray([p[2] for p in points], dtype=np.float64)
    return UserTrack(uid, t, e, n)


def square(cx, cy, half):
    return Polygon([(cx - half, cy - half), (cx + half, cy - half),
                    (cx + half, cy + half), (cx - half, cy + half)])


def t_local(clock, dom, hour=0, minute=0):
    """Epoch of a September 2022 local wall-clock time."""
    from datetime import date
    return clock.local_time(clock.day_of(date(2022, 9, dom)), hour, minute)


@pytest.fixture
def study_window(clock):
    return StudyWindow(start=t_local(clock, 23),
                       end=t_local(clock, 30),
                       landfall=parse_utc("2022-09-28T19:05:00Z"))


def build_zonemap(clock, mandatory_center=(376000.0, 3042000.0),
                  voluntary_center=(406000.0, 3042000.0), half=3000.0,
                  buffer_m=7500.0):
    """Two-zone map: one upgraded (voluntary then mandatory) zone, one
    voluntary-only zone, with the standard test order times."""
    zm = Zone("zone_m", "county_m", square(*mandatory_center, half),
              [OrderEvent(t_local(clock, 25, 12), "voluntary"),
               OrderEvent(t_local(clock, 26, 12), "mandatory")])
    zv = Zone("zone_v", "county_v", square(*voluntary_center, half),
              [OrderEvent(t_local(clock, 26, 8), "voluntary")])
    zones = [zm, zv]
    comps = []
    from evacflow.zones import BufferComponent
    for geom in build_buffer([z.geom for z in zones], buffer_m):
        t, src = assign_buffer_order_time(geom, zones)
        comps.append(BufferComponent(geom, t, src.zone_id, src.county))
    return ZoneMap(zones, comps)


@pytest.fixture
def zonemap(clock):
    return build_zonemap(clock)
