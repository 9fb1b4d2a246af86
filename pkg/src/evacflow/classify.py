"""Evacuation behavior inference.

For every homed user living in a zone or the buffer ring:
  1. nightly dominant place (home / buffer / voluntary / mandatory / other)
     for the seven hurricane-week nights, by summed activity overlap;
  2. imputation of data-free nights from the nearest subsequent night
     (trailing gaps from the nearest preceding); more than three missing
     nights makes the user uncategorized;
  3. departure time: end of the last at-home activity in the window, else
     start of the earliest in-window activity;
  4. assignment to one of seven groups from nights away from home, a
     clean-window check for activities inside evacuation zones, and the
     departure time versus the governing order timeline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

from .clock import DAY_S
from .home import DEFAULT_CELL_M, cell_center, cell_of
from .zones import ZoneClass

DEFAULT_MIN_AWAY_NIGHTS_ZONE = 1
DEFAULT_MIN_AWAY_NIGHTS_BUFFER = 3
DEFAULT_MAX_MISSING_NIGHTS = 3
DEFAULT_HORIZON_DAYS = 4

CAT_HOME = "home"
CAT_MANDATORY = "mandatory"
CAT_VOLUNTARY = "voluntary"
CAT_BUFFER = "buffer"
CAT_OTHER = "other"

# nightly tie-break, strongest first
_CAT_PRECEDENCE = (CAT_HOME, CAT_MANDATORY, CAT_VOLUNTARY, CAT_BUFFER,
                   CAT_OTHER)


class EvacClass(str, Enum):
    NON_EVACUEE = "non_evacuee"
    SHADOW = "shadow_evacuee"
    SELF = "self_evacuee"
    VOLUNTARY = "voluntary_evacuee"
    MANDATORY = "mandatory_evacuee"
    IN_ZONE = "in_zone_evacuee"
    UNCATEGORIZED = "uncategorized"


EVACUEE_CLASSES = (EvacClass.SHADOW, EvacClass.SELF, EvacClass.VOLUNTARY,
                   EvacClass.MANDATORY, EvacClass.IN_ZONE)


@dataclass(frozen=True)
class StudyWindow:
    start: int       # UTC epoch, local midnight opening the window
    end: int         # UTC epoch, local midnight closing the window
    landfall: int    # UTC epoch
    horizon_s: int = DEFAULT_HORIZON_DAYS * DAY_S

    def __post_init__(self):
        if not (self.start < self.landfall < self.end):
            raise ValueError(
                f"window start {self.start} < landfall {self.landfall} "
                f"< end {self.end} violated")


@dataclass
class NightRecord:
    day: int                  # local day index the night starts on
    dominant: str | None      # category, or None when the night has no data
    imputed: bool = False


@dataclass
class ClassifyParams:
    min_away_nights_zone: int = DEFAULT_MIN_AWAY_NIGHTS_ZONE
    min_away_nights_buffer: int = DEFAULT_MIN_AWAY_NIGHTS_BUFFER
    max_missing_nights: int = DEFAULT_MAX_MISSING_NIGHTS
    night_start_hour: int = 20
    night_end_hour: int = 6
    cell_m: float = DEFAULT_CELL_M


@dataclass
class UserOutcome:
    user_id: str
    home_cell: object
    home_zone: ZoneClass
    evac_class: EvacClass
    departure: int | None
    nights: list = field(default_factory=list)
    region: str = ""

    @property
    def nights_away(self):
        return sum(1 for n in self.nights
                   if n.dominant is not None and n.dominant != CAT_HOME)

    @property
    def imputed_nights(self):
        return sum(1 for n in self.nights if n.imputed)


def _overlaps(a, lo, hi):
    return a.end >= lo and a.start <= hi


def in_window_activities(activities, window):
    """Activities whose [start, end] interval touches the study window."""
    return [a for a in activities
            if a.end >= window.start and a.start < window.end]


def _activity_category(activity, home_cell, zonemap, cell_m):
    if cell_of(activity.centroid_e, activity.centroid_n, cell_m) == home_cell:
        return CAT_HOME
    zc = zonemap.locate(activity.centroid_e, activity.centroid_n)
    if zc is ZoneClass.MANDATORY:
        return CAT_MANDATORY
    if zc is ZoneClass.VOLUNTARY:
        return CAT_VOLUNTARY
    if zc is ZoneClass.BUFFER:
        return CAT_BUFFER
    return CAT_OTHER


def nightly_dominant(activities, home_cell, zonemap, window, clock,
                     params=None):
    """One NightRecord per hurricane-week night, by summed overlap.

    Uses in-window activities; a night with zero overlap everywhere is
    recorded as missing. Overlap ties resolve home > mandatory >
    voluntary > buffer > other.
    """
    params = params or ClassifyParams()
    acts = in_window_activities(activities, window)
    cats = [_activity_category(a, home_cell, zonemap, params.cell_m)
            for a in acts]

    first_day = clock.day_index(window.start)
    last_day = clock.day_index(window.end - 1)  # night starting the last day
    records = []
    for d in range(first_day, last_day + 1):
        n0, n1 = clock.night_interval(d, params.night_start_hour,
                                      params.night_end_hour)
        totals = {}
        for a, cat in zip(acts, cats):
            ov = min(a.end, n1) - max(a.start, n0)
            if ov > 0:
                totals[cat] = totals.get(cat, 0) + ov
        if not totals:
            records.append(NightRecord(d, None))
            continue
        best = max(totals.values())
        dominant = next(c for c in _CAT_PRECEDENCE
                        if totals.get(c, 0) == best)
        records.append(NightRecord(d, dominant))
    return records


def impute_nights(nights, max_missing=DEFAULT_MAX_MISSING_NIGHTS):
    """Fill data-free nights; returns (filled nights, uncategorized flag).

    A missing night copies the nearest subsequent night with data;
    trailing missing nights copy the nearest preceding one. More than
    `max_missing` missing nights means the user cannot be categorized
    (the original records are returned untouched).
    """
    missing = sum(1 for n in nights if n.dominant is None)
    if missing > max_missing:
        return nights, True
    filled = [NightRecord(n.day, n.dominant, n.imputed) for n in nights]
    for i, rec in enumerate(filled):
        if rec.dominant is not None:
            continue
        source = None
        for j in range(i + 1, len(filled)):
            if filled[j].dominant is not None and not filled[j].imputed:
                source = filled[j].dominant
                break
        if source is None:
            for j in range(i - 1, -1, -1):
                if filled[j].dominant is not None:
                    source = filled[j].dominant
                    break
        if source is None:
            return nights, True  # no data at all
        filled[i] = NightRecord(rec.day, source, True)
    return filled, False


def departure_time(activities, home_cell, window, cell_m=DEFAULT_CELL_M):
    """Home-departure time from in-window activities, or None.

    End of the latest-ending at-home activity; when the user never stayed
    home, the start of the earliest activity (clamped to the window start
    so a straddling stay cannot yield a pre-window departure).
    """
    acts = in_window_activities(activities, window)
    if not acts:
        return None
    home_acts = [a for a in acts
                 if cell_of(a.centroid_e, a.centroid_n, cell_m) == home_cell]
    if home_acts:
        return max(a.end for a in home_acts)
    return max(window.start, min(a.start for a in acts))


def _is_clear(activities, home_cell, zonemap, departure, window, cell_m):
    """True when no activity inside any evacuation zone touches the clean
    window [departure, landfall] (or departure + horizon when departing
    after landfall). At-home activities that began before departure are
    the user's own pre-departure residence and do not count."""
    if departure <= window.landfall:
        lo, hi = departure, window.landfall
    else:
        lo, hi = departure, departure + window.horizon_s
    for a in activities:
        if not _overlaps(a, lo, hi):
            continue
        if not bool(zonemap.in_any_zone(a.centroid_e, a.centroid_n)):
            continue
        if (cell_of(a.centroid_e, a.centroid_n, cell_m) == home_cell
                and a.start < departure):
            continue
        return False
    return True


def classify_user(user_id, activities, home, zonemap, window, clock,
                  params=None):
    """Assign one homed zone/buffer resident to an evacuation group.

    `home` is the user's HomeRecord; callers must exclude users whose home
    falls outside both the zones and the buffer ring.
    """
    params = params or ClassifyParams()
    he, hn = cell_center(home.cell, params.cell_m)
    home_zone = zonemap.locate(he, hn)
    if home_zone is ZoneClass.OUTSIDE:
        raise ValueError(
            f"user {user_id}: home outside zones and buffer; "
            "exclude upstream")

    if home_zone is ZoneClass.BUFFER:
        comp = zonemap.buffer_component_at(he, hn)
        region = comp.county
    else:
        zone = zonemap.governing_zone(he, hn)
        region = zone.county

    nights = nightly_dominant(activities, home.cell, zonemap, window, clock,
                              params)
    nights, uncategorized = impute_nights(nights, params.max_missing_nights)
    if uncategorized:
        return UserOutcome(user_id, home.cell, home_zone,
                           EvacClass.UNCATEGORIZED, None, nights, region)

    departure = departure_time(activities, home.cell, window, params.cell_m)
    away = sum(1 for n in nights if n.dominant != CAT_HOME)

    if home_zone is ZoneClass.BUFFER:
        min_away = params.min_away_nights_buffer
    else:
        min_away = params.min_away_nights_zone

    if away < min_away:
        return UserOutcome(user_id, home.cell, home_zone,
                           EvacClass.NON_EVACUEE, None, nights, region)

    # an away night implies a night with data, hence in-window activities
    assert departure is not None

    clear = _is_clear(activities, home.cell, zonemap, departure, window,
                      params.cell_m)
    if not clear:
        return UserOutcome(user_id, home.cell, home_zone, EvacClass.IN_ZONE,
                           departure, nights, region)

    if home_zone is ZoneClass.BUFFER:
        cls = EvacClass.SELF if departure < comp.order_time \
            else EvacClass.SHADOW
        return UserOutcome(user_id, home.cell, home_zone, cls, departure,
                           nights, region)

    if departure < zone.first_order_time:
        cls = EvacClass.SELF
    else:
        mand = zone.order_time("mandatory")
        cls = EvacClass.MANDATORY if mand is not None and mand <= departure \
            else EvacClass.VOLUNTARY
    return UserOutcome(user_id, home.cell, home_zone, cls, departure, nights,
                       region)


def classify_users(activities_by_user, homes, zonemap, window, clock,
                   params=None):
    """Classify every homed user whose home lies in a zone or the buffer.

    Returns (outcomes ordered by user_id, count of users excluded because
    their home falls outside the study geography).
    """
    params = params or ClassifyParams()
    outcomes = []
    outside = 0
    for uid in sorted(homes):
        home = homes[uid]
        he, hn = cell_center(home.cell, params.cell_m)
        if zonemap.locate(he, hn) is ZoneClass.OUTSIDE:
            outside += 1
            continue
        acts = activities_by_user.get(uid, [])
        outcomes.append(classify_user(uid, acts, home, zonemap, window,
                                      clock, params))
    return outcomes, outside


def write_outcomes(outcomes, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "evac_class", "departure_utc", "home_zone",
                    "region", "nights_away", "imputed_nights"])
        for o in outcomes:
            w.writerow([o.user_id, o.evac_class.value,
                        "" if o.departure is None else o.departure,
                        o.home_zone.value, o.region, o.nights_away,
                        o.imputed_nights])


def read_outcomes(path):
    """Outcome rows as written by write_outcomes (nights not round-tripped)."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "user_id": row["user_id"],
                "evac_class": EvacClass(row["evac_class"]),
                "departure": None if row["departure_utc"] == ""
                else int(row["departure_utc"]),
                "home_zone": ZoneClass(row["home_zone"]),
                "region": row["region"],
                "nights_away": int(row["nights_away"]),
                "imputed_nights": int(row["imputed_nights"]),
            })
    return out
