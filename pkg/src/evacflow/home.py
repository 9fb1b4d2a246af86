"""Proxy-home inference on a 20 m grid.

Primary rule: the cell that dominates the most nights (dwell-wise) during
the pre-hurricane window, requiring at least `min_nights` dominant nights.
Fallback when the night rule yields nothing: the cell with the most
weekend dwell, requiring at least `min_weekend_s` seconds. Dwell between
consecutive pings is attributed to the earlier ping's cell and capped so
signal gaps cannot fabricate residence.

Tie-breaks (dominant-night count, then total night dwell, then
lexicographic cell) make the result independent of ping input order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .clock import DAY_S

DEFAULT_CELL_M = 20.0
DEFAULT_GAP_CAP_S = 21600
DEFAULT_MIN_NIGHTS = 5
DEFAULT_MIN_WEEKEND_S = 21600
DEFAULT_NIGHT_START_HOUR = 20
DEFAULT_NIGHT_END_HOUR = 6

METHOD_NIGHT = "night"
METHOD_WEEKEND = "weekend"


@dataclass(frozen=True)
class GridCell:
    ix: int
    iy: int


@dataclass(frozen=True)
class HomeRecord:
    user_id: str
    cell: GridCell
    method: str
    support: float


def cell_of(easting, northing, cell_m=DEFAULT_CELL_M):
    """Grid cell containing a point; lower edges inclusive, origin (0, 0)."""
    return GridCell(int(math.floor(easting / cell_m)),
                    int(math.floor(northing / cell_m)))


def cell_center(cell, cell_m=DEFAULT_CELL_M):
    return ((cell.ix + 0.5) * cell_m, (cell.iy + 0.5) * cell_m)


def cell_dwell(track, window, cell_m=DEFAULT_CELL_M,
               gap_cap=DEFAULT_GAP_CAP_S):
    """Seconds dwelt per grid cell inside the [start, end) window.

    Each consecutive ping pair with both timestamps in the window adds
    min(dt, gap_cap) seconds to the earlier ping's cell; the final ping
    contributes nothing.
    """
    t0, t1 = window
    t = track.t
    if len(t) < 2:
        return {}
    inside = (t >= t0) & (t < t1)
    pair = inside[:-1] & inside[1:]
    if not pair.any():
        return {}
    dt = np.minimum(t[1:][pair] - t[:-1][pair], gap_cap)
    ix = np.floor(track.e[:-1][pair] / cell_m).astype(np.int64)
    iy = np.floor(track.n[:-1][pair] / cell_m).astype(np.int64)
    cells = np.stack([ix, iy], axis=1)
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    sums = np.bincount(inv, weights=dt.astype(np.float64))
    return {GridCell(int(cx), int(cy)): float(s)
            for (cx, cy), s in zip(uniq, sums) if s > 0.0}


def _weekend_intervals(day_lo, day_hi, clock):
    """[start, end) spans of Sat 00:00 .. Mon 00:00 clipped to the window."""
    env_lo = clock.day_start(day_lo)
    env_hi = clock.day_start(day_hi + 1)
    spans = []
    for d in range(day_lo, day_hi + 1):
        if clock.weekday(d) == 5:  # Saturday
            s = clock.day_start(d)
            e = s + 2 * DAY_S
            s, e = max(s, env_lo), min(e, env_hi)
            if s < e:
                spans.append((s, e))
        elif clock.weekday(d) == 6 and d == day_lo:
            # window opens mid-weekend: keep the Sunday remainder
            s = clock.day_start(d)
            e = min(s + DAY_S, env_hi)
            spans.append((s, e))
    return spans


def detect_home(track, window_start, window_end, clock,
                night_start_hour=DEFAULT_NIGHT_START_HOUR,
                night_end_hour=DEFAULT_NIGHT_END_HOUR,
                min_nights=DEFAULT_MIN_NIGHTS,
                min_weekend_s=DEFAULT_MIN_WEEKEND_S,
                cell_m=DEFAULT_CELL_M, gap_cap=DEFAULT_GAP_CAP_S):
    """Infer one user's proxy-home cell, or None.

    `window_start`/`window_end` are inclusive local calendar dates; night
    and weekend intervals are clipped to the window envelope so no
    hurricane-period data leaks in.
    """
    day_lo = clock.day_of(window_start)
    day_hi = clock.day_of(window_end)
    env_hi = clock.day_start(day_hi + 1)

    night_counts = {}
    night_dwell = {}
    for d in range(day_lo, day_hi + 1):
        n0, n1 = clock.night_interval(d, night_start_hour, night_end_hour)
        n1 = min(n1, env_hi)
        if n0 >= n1:
            continue
        dwell = cell_dwell(track, (n0, n1), cell_m, gap_cap)
        if not dwell:
            continue
        for cell, s in dwell.items():
            night_dwell[cell] = night_dwell.get(cell, 0.0) + s
        dominant = min(dwell, key=lambda c: (-dwell[c], c.ix, c.iy))
        night_counts[dominant] = night_counts.get(dominant, 0) + 1

    if night_counts:
        best = min(night_counts,
                   key=lambda c: (-night_counts[c],
                                  -night_dwell.get(c, 0.0), c.ix, c.iy))
        if night_counts[best] >= min_nights:
            return HomeRecord(track.user_id, best, METHOD_NIGHT,
                              night_counts[best])

    weekend_dwell = {}
    for span in _weekend_intervals(day_lo, day_hi, clock):
        for cell, s in cell_dwell(track, span, cell_m, gap_cap).items():
            weekend_dwell[cell] = weekend_dwell.get(cell, 0.0) + s
    if weekend_dwell:
        best = min(weekend_dwell,
                   key=lambda c: (-weekend_dwell[c], c.ix, c.iy))
        if weekend_dwell[best] >= min_weekend_s:
            return HomeRecord(track.user_id, best, METHOD_WEEKEND,
                              weekend_dwell[best])
    return None


def filter_active_users(tracks, clock, min_days=15, min_points_per_day=10):
    """Users with >= min_days local days carrying >= min_points_per_day
    pings over the whole track lifespan."""
    keep = set()
    for uid, track in tracks.items():
        if len(track) == 0:
            continue
        days = clock.day_index(track.t)
        _, counts = np.unique(days, return_counts=True)
        if int((counts >= min_points_per_day).sum()) >= min_days:
            keep.add(uid)
    return keep


def detect_homes(tracks, window_start, window_end, clock,
                 min_days=15, min_points_per_day=10, **kwargs):
    """Batch home inference + activity-days eligibility filter.

    Returns homes keyed and ordered by user_id; only users passing both
    home detection and the active-days filter appear.
    """
    active = filter_active_users(tracks, clock, min_days, min_points_per_day)
    homes = {}
    for uid in sorted(tracks):
        if uid not in active:
            continue
        rec = detect_home(tracks[uid], window_start, window_end, clock,
                          **kwargs)
        if rec is not None:
            homes[uid] = rec
    return homes


def write_homes(homes, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "ix", "iy", "method", "support"])
        for uid in sorted(homes):
            h = homes[uid]
            support = int(h.support) if h.method == METHOD_NIGHT \
                else repr(float(h.support))
            w.writerow([uid, h.cell.ix, h.cell.iy, h.method, support])


def read_homes(path):
    homes = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            homes[row["user_id"]] = HomeRecord(
                row["user_id"], GridCell(int(row["ix"]), int(row["iy"])),
                row["method"], float(row["support"]))
    return homes
