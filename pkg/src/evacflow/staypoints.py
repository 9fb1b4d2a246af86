"""Stay-point extraction: sequential 100 m / 5 min clustering.

A single forward pass over each clean track. A cluster grows while the
next ping is under `radius` meters from the running centroid; when a ping
falls outside, the cluster closes and is kept only if its first-to-last
timestamp span reaches `min_duration` seconds (shorter clusters are
fly-over noise and are discarded). The out-of-radius ping seeds the next
cluster alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_RADIUS_M = 100.0
DEFAULT_MIN_DURATION_S = 300


@dataclass(frozen=True)
class Activity:
    user_id: str
    centroid_e: float
    centroid_n: float
    start: int
    end: int
    n_points: int

    @property
    def duration(self):
        return self.end - self.start


def extract_activities(track, radius=DEFAULT_RADIUS_M,
                       min_duration=DEFAULT_MIN_DURATION_S):
    """Segment one track into stay-point activities (time-ordered)."""
    # list indexing beats numpy scalar indexing in this sequential pass
    t = track.t.tolist() if isinstance(track.t, np.ndarray) else list(track.t)
    e = track.e.tolist() if isinstance(track.e, np.ndarray) else list(track.e)
    n = track.n.tolist() if isinstance(track.n, np.ndarray) else list(track.n)
    count = len(t)
    if count == 0:
        return []

    uid = track.user_id
    out = []
    r2 = radius * radius

    sum_e = e[0]
    sum_n = n[0]
    members = 1
    first_t = t[0]
    last_t = t[0]

    for i in range(1, count):
        ei = e[i]
        ni = n[i]
        de = ei - sum_e / members
        dn = ni - sum_n / members
        if de * de + dn * dn < r2:
            sum_e += ei
            sum_n += ni
            members += 1
            last_t = t[i]
        else:
            if last_t - first_t >= min_duration:
                out.append(Activity(uid, sum_e / members, sum_n / members,
                                    int(first_t), int(last_t), members))
            sum_e = ei
            sum_n = ni
            members = 1
            first_t = t[i]
            last_t = t[i]

    if last_t - first_t >= min_duration:
        out.append(Activity(uid, sum_e / members, sum_n / members,
                            int(first_t), int(last_t), members))
    return out


def extract_all(tracks, radius=DEFAULT_RADIUS_M,
                min_duration=DEFAULT_MIN_DURATION_S):
    """Per-user activity lists for a track map, keyed and ordered by user."""
    return {uid: extract_activities(tracks[uid], radius, min_duration)
            for uid in sorted(tracks)}


def write_activities(activities_by_user, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "centroid_e", "centroid_n", "start", "end",
                    "n_points"])
        for uid in sorted(activities_by_user):
            for a in activities_by_user[uid]:
                w.writerow([a.user_id, repr(a.centroid_e), repr(a.centroid_n),
                            a.start, a.end, a.n_points])


def read_activities(path):
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            a = Activity(row["user_id"], float(row["centroid_e"]),
                         float(row["centroid_n"]), int(row["start"]),
                         int(row["end"]), int(row["n_points"]))
            out.setdefault(a.user_id, []).append(a)
    for acts in out.values():
        acts.sort(key=lambda a: a.start)
    return out
