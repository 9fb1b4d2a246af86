"""Ground-truth scenario generation for end-to-end validation.

Builds a two-zone geography (one mandatory-order zone, one voluntary-order
zone, plus the derived buffer ring) and populates it with agents whose
stay schedules are constructed so that, with zero noise and zero gaps, the
classification rules provably recover each agent's intended group.

Randomness: every agent draws from its own numpy PCG64 generator seeded by
``SeedSequence(seed).spawn(agent_index)``, so streams are reproducible and
independent of agent count elsewhere in the scenario. Each ping also
carries a survival uniform drawn up front: a ping is dropped at gap
probability g exactly when its uniform is < g, which makes the surviving
sets nested as g grows (monotone data loss across gap levels for a fixed
seed).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd

from .classify import EvacClass, StudyWindow
from .clock import DAY_S, LocalClock, parse_utc
from .home import DEFAULT_CELL_M, cell_center, cell_of
from .projection import utm17n_to_wgs84
from .zones import ZoneClass, load_zonemap

DEFAULT_PING_INTERVAL_S = 300  # 12 pings/hour


class SynthConfigError(ValueError):
    """Scenario request impossible under the configured geography."""


@dataclass
class SynthConfig:
    counts: dict                 # EvacClass value -> number of agents
    ping_interval_s: int = DEFAULT_PING_INTERVAL_S
    noise_sigma: float = 0.0
    gap_prob: float = 0.0
    include_mandatory_zone: bool = True
    include_voluntary_zone: bool = True
    cell_m: float = DEFAULT_CELL_M


@dataclass
class AgentSpec:
    agent_id: str
    true_home: tuple             # (easting, northing)
    home_zone_intent: ZoneClass
    true_class: EvacClass
    schedule: list               # (easting, northing, start, end) stays
    ping_rate: float             # mean pings/hour
    noise_sigma: float
    gap_prob: float
    true_departure: int | None = None


@dataclass
class AgentPings:
    """Columnar ping draw for one agent (before gap filtering)."""
    agent_id: str
    ts: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    acc: np.ndarray
    survival_u: np.ndarray


@dataclass
class Scenario:
    config: SynthConfig
    seed: int
    zonemap: object
    geojson: dict
    orders: list
    census: dict
    agents: list = field(default_factory=list)
    pings: list = field(default_factory=list)   # AgentPings per agent

    @property
    def truth(self):
        return {a.agent_id: a.true_class for a in self.agents}


# ---------------------------------------------------------------------------
# geography


def _square(cx, cy, half):
    return [(cx - half, cy - half), (cx + half, cy - half),
            (cx + half, cy + half), (cx - half, cy + half),
            (cx - half, cy - half)]


def _ring_to_wgs84(ring):
    arr = np.asarray(ring, dtype=np.float64)
    lat, lon = utm17n_to_wgs84(arr[:, 0], arr[:, 1])
    return [[float(lo), float(la)] for la, lo in zip(lat, lon)]


MANDATORY_CENTER = (376000.0, 3042000.0)
VOLUNTARY_CENTER = (406000.0, 3042000.0)
ZONE_HALF_SIDE = 3000.0
FAR_PLACE = (376000.0, 3100000.0)          # far outside zones and buffer

MANDATORY_COUNTY = "county_m"
VOLUNTARY_COUNTY = "county_v"
DEFAULT_CENSUS = {MANDATORY_COUNTY: 10000, VOLUNTARY_COUNTY: 8000}

# order timeline (local EDT)
VOL_ORDER_M = (25, 12, 0)      # Sep 25 12:00, mandatory zone's voluntary order
MAND_ORDER_M = (26, 12, 0)     # Sep 26 12:00, mandatory zone's mandatory order
VOL_ORDER_V = (26, 8, 0)       # Sep 26 08:00, voluntary zone's only order

LANDFALL_UTC = "2022-09-28T19:05:00Z"


def _scenario_geography(config):
    features = []
    orders = []
    if config.include_mandatory_zone:
        features.append({
            "type": "Feature",
            "properties": {"zone_id": "zone_m", "county": MANDATORY_COUNTY},
            "geometry": {"type": "Polygon", "coordinates": [
                _ring_to_wgs84(_square(*MANDATORY_CENTER, ZONE_HALF_SIDE))]},
        })
        orders.append({"zone_id": "zone_m", "level": "voluntary",
                       "time_iso8601_local":
                           f"2022-09-{VOL_ORDER_M[0]:02d}T{VOL_ORDER_M[1]:02d}:00:00",
                       "utc_offset": -4})
        orders.append({"zone_id": "zone_m", "level": "mandatory",
                       "time_iso8601_local":
                           f"2022-09-{MAND_ORDER_M[0]:02d}T{MAND_ORDER_M[1]:02d}:00:00",
                       "utc_offset": -4})
    if config.include_voluntary_zone:
        features.append({
            "type": "Feature",
            "properties": {"zone_id": "zone_v", "county": VOLUNTARY_COUNTY},
            "geometry": {"type": "Polygon", "coordinates": [
                _ring_to_wgs84(_square(*VOLUNTARY_CENTER, ZONE_HALF_SIDE))]},
        })
        orders.append({"zone_id": "zone_v", "level": "voluntary",
                       "time_iso8601_local":
                           f"2022-09-{VOL_ORDER_V[0]:02d}T{VOL_ORDER_V[1]:02d}:00:00",
                       "utc_offset": -4})
    geojson = {"type": "FeatureCollection", "features": features}
    return geojson, orders


def default_study_window():
    clock = LocalClock.from_hours(-4)
    start = clock.day_start(clock.day_of(date(2022, 9, 23)))
    end = clock.day_start(clock.day_of(date(2022, 9, 30)))
    return StudyWindow(start=start, end=end, landfall=parse_utc(LANDFALL_UTC))


# ---------------------------------------------------------------------------
# behavior templates


def _home_slot(cls_value, index, config):
    """Deterministic distinct home cell per agent, inside its intended area.

    Agents are laid out on a 40 m lattice (two grid cells apart) in the
    south-west quadrant of their zone, or on a strip inside the buffer.
    """
    col = index % 50
    row = index // 50
    dx = 40.0 * col
    dy = 40.0 * row
    if cls_value == EvacClass.VOLUNTARY.value:
        if not config.include_voluntary_zone:
            raise SynthConfigError(
                "voluntary_evacuee agents need the voluntary zone")
        cx, cy = VOLUNTARY_CENTER
        base = (cx - ZONE_HALF_SIDE + 500.0, cy - ZONE_HALF_SIDE + 500.0)
    elif cls_value == EvacClass.SHADOW.value:
        if not config.include_mandatory_zone:
            raise SynthConfigError(
                "shadow_evacuee agents need a zone to shadow")
        cx, cy = MANDATORY_CENTER
        # strip 2.5 km east of the zone edge, well inside the 7.5 km ring
        base = (cx + ZONE_HALF_SIDE + 2500.0, cy - ZONE_HALF_SIDE + 500.0)
    else:
        if not config.include_mandatory_zone:
            raise SynthConfigError(
                f"{cls_value} agents need the mandatory zone")
        cx, cy = MANDATORY_CENTER
        base = (cx - ZONE_HALF_SIDE + 500.0, cy - ZONE_HALF_SIDE + 500.0)
    e = base[0] + dx
    n = base[1] + dy
    # snap to a cell center so the truth home is unambiguous
    cell = cell_of(e, n, config.cell_m)
    return cell_center(cell, config.cell_m)


def _day(clock, dom):
    return clock.day_of(date(2022, 9, dom))


def _build_schedule(cls_value, home, clock, config):
    """Stay list plus the intended departure time (None when not leaving).

    Pre-hurricane nights (Sep 1-16) anchor home detection for every agent;
    the hurricane week differs per class.
    """
    night = lambda dom: (clock.local_time(_day(clock, dom), 20),
                         clock.local_time(_day(clock, dom) + 1, 6))
    stays = []
    for dom in range(1, 17):
        s, e = night(dom)
        stays.append((home[0], home[1], s, e))

    far = FAR_PLACE
    dep = None

    if cls_value == EvacClass.UNCATEGORIZED.value:
        return stays, None

    if cls_value == EvacClass.NON_EVACUEE.value:
        for dom in range(23, 30):
            s, e = night(dom)
            stays.append((home[0], home[1], s, e))
        return stays, None

    if cls_value == EvacClass.SELF.value:
        # leave before the earliest order (Sep 25 12:00 in the zone)
        stays.append((home[0], home[1], *night(23)))
        stays.append((home[0], home[1],
                      clock.local_time(_day(clock, 24), 20),
                      clock.local_time(_day(clock, 25), 9)))
        dep = clock.local_time(_day(clock, 25), 9)
        stays.append((far[0], far[1],
                      clock.local_time(_day(clock, 25), 13),
                      clock.local_time(_day(clock, 30), 6)))
        return stays, dep

    if cls_value == EvacClass.VOLUNTARY.value:
        # leave after the voluntary order (Sep 26 08:00)
        stays.append((home[0], home[1], *night(23)))
        stays.append((home[0], home[1], *night(24)))
        stays.append((home[0], home[1],
                      clock.local_time(_day(clock, 25), 20),
                      clock.local_time(_day(clock, 26), 10)))
        dep = clock.local_time(_day(clock, 26), 10)
        stays.append((far[0], far[1],
                      clock.local_time(_day(clock, 26), 14),
                      clock.local_time(_day(clock, 30), 6)))
        return stays, dep

    if cls_value == EvacClass.MANDATORY.value:
        # leave after the mandatory order (Sep 26 12:00)
        stays.append((home[0], home[1], *night(23)))
        stays.append((home[0], home[1], *night(24)))
        stays.append((home[0], home[1],
                      clock.local_time(_day(clock, 25), 20),
                      clock.local_time(_day(clock, 26), 15)))
        dep = clock.local_time(_day(clock, 26), 15)
        stays.append((far[0], far[1],
                      clock.local_time(_day(clock, 26), 19),
                      clock.local_time(_day(clock, 30), 6)))
        return stays, dep

    if cls_value == EvacClass.SHADOW.value:
        # buffer resident leaving after the nearby zone's order
        stays.append((home[0], home[1], *night(23)))
        stays.append((home[0], home[1], *night(24)))
        stays.append((home[0], home[1],
                      clock.local_time(_day(clock, 25), 20),
                      clock.local_time(_day(clock, 26), 13)))
        dep = clock.local_time(_day(clock, 26), 13)
        stays.append((far[0], far[1],
                      clock.local_time(_day(clock, 26), 17),
                      clock.local_time(_day(clock, 30), 6)))
        return stays, dep

    if cls_value == EvacClass.IN_ZONE.value:
        # leaves home but relocates inside the zone before landfall
        inzone = (home[0] + 900.0, home[1] + 900.0)
        stays.append((home[0], home[1], *night(23)))
        stays.append((home[0], home[1], *night(24)))
        stays.append((home[0], home[1],
                      clock.local_time(_day(clock, 25), 20),
                      clock.local_time(_day(clock, 26), 15)))
        dep = clock.local_time(_day(clock, 26), 15)
        stays.append((inzone[0], inzone[1],
                      clock.local_time(_day(clock, 26), 19),
                      clock.local_time(_day(clock, 30), 6)))
        return stays, dep

    raise SynthConfigError(f"unknown class {cls_value!r}")


_INTENT = {
    EvacClass.NON_EVACUEE.value: ZoneClass.MANDATORY,
    EvacClass.UNCATEGORIZED.value: ZoneClass.MANDATORY,
    EvacClass.SELF.value: ZoneClass.MANDATORY,
    EvacClass.MANDATORY.value: ZoneClass.MANDATORY,
    EvacClass.IN_ZONE.value: ZoneClass.MANDATORY,
    EvacClass.VOLUNTARY.value: ZoneClass.VOLUNTARY,
    EvacClass.SHADOW.value: ZoneClass.BUFFER,
}


def _draw_agent_pings(agent, child_seed, interval_s):
    rng = np.random.Generator(np.random.PCG64(child_seed))
    ts_parts, e_parts, n_parts = [], [], []
    for pe, pn, t0, t1 in agent.schedule:
        times = np.arange(t0, t1 + 1, interval_s, dtype=np.int64)
        ts_parts.append(times)
        e_parts.append(np.full(times.shape, pe))
        n_parts.append(np.full(times.shape, pn))
    ts = np.concatenate(ts_parts)
    e = np.concatenate(e_parts)
    n = np.concatenate(n_parts)
    if agent.noise_sigma > 0:
        e = e + rng.normal(0.0, agent.noise_sigma, ts.shape)
        n = n + rng.normal(0.0, agent.noise_sigma, ts.shape)
    else:
        rng.normal(0.0, 1.0, ts.shape)  # keep the draw cursor aligned
        rng.normal(0.0, 1.0, ts.shape)
    survival = rng.random(ts.shape)
    lat, lon = utm17n_to_wgs84(e, n)
    acc = np.where(np.arange(ts.size) % 2 == 0, "high", "medium_high")
    return AgentPings(agent.agent_id, ts, lat, lon,
                      acc.astype(object), survival)


def generate_scenario(config, seed):
    """Deterministic labeled scenario for the given config and seed."""
    clock = LocalClock.from_hours(-4)
    geojson, orders = _scenario_geography(config)
    if not geojson["features"]:
        raise SynthConfigError("no zones enabled")
    zonemap = load_zonemap(geojson, orders)

    agents = []
    index = 0
    class_order = [c.value for c in (
        EvacClass.NON_EVACUEE, EvacClass.SHADOW, EvacClass.SELF,
        EvacClass.VOLUNTARY, EvacClass.MANDATORY, EvacClass.IN_ZONE,
        EvacClass.UNCATEGORIZED)]
    for cls_value in class_order:
        count = int(config.counts.get(cls_value, 0))
        for k in range(count):
            home = _home_slot(cls_value, k, config)
            schedule, dep = _build_schedule(cls_value, home, clock, config)
            agents.append(AgentSpec(
                agent_id=f"a{index:05d}",
                true_home=home,
                home_zone_intent=_INTENT[cls_value],
                true_class=EvacClass(cls_value),
                schedule=schedule,
                ping_rate=3600.0 / config.ping_interval_s,
                noise_sigma=config.noise_sigma,
                gap_prob=config.gap_prob,
                true_departure=dep,
            ))
            index += 1

    root = np.random.SeedSequence(seed)
    children = root.spawn(len(agents))
    pings = [_draw_agent_pings(agent, child, config.ping_interval_s)
             for agent, child in zip(agents, children)]
    return Scenario(config=config, seed=seed, zonemap=zonemap,
                    geojson=geojson, orders=orders,
                    census=dict(DEFAULT_CENSUS), agents=agents, pings=pings)


# ---------------------------------------------------------------------------
# materialization


def iter_ping_rows(scenario, gap_prob=None):
    """Yield (user_id, ts, lat, lon, acc) with the gap filter applied."""
    for ap in scenario.pings:
        g = scenario.config.gap_prob if gap_prob is None else gap_prob
        keep = ap.survival_u >= g
        for i in np.flatnonzero(keep):
            yield (ap.agent_id, int(ap.ts[i]), float(ap.lat[i]),
                   float(ap.lon[i]), str(ap.acc[i]))


def pings_frame(scenario, gap_prob=None):
    """All surviving pings as a DataFrame (fast in-memory ingest path)."""
    g = scenario.config.gap_prob if gap_prob is None else gap_prob
    frames = []
    for ap in scenario.pings:
        keep = ap.survival_u >= g
        frames.append(pd.DataFrame({
            "user_id": np.repeat(ap.agent_id, int(keep.sum())),
            "ts": ap.ts[keep],
            "lat": ap.lat[keep],
            "lon": ap.lon[keep],
            "acc": ap.acc[keep],
        }))
    if not frames:
        return pd.DataFrame(columns=["user_id", "ts", "lat", "lon", "acc"])
    return pd.concat(frames, ignore_index=True)


def write_pings_ndjson(scenario, path, gap_prob=None):
    with open(path, "w", encoding="utf-8") as fh:
        for uid, ts, lat, lon, acc in iter_ping_rows(scenario, gap_prob):
            fh.write(f'{{"user_id":"{uid}","ts":{ts},"lat":{lat!r},'
                     f'"lon":{lon!r},"acc":"{acc}"}}\n')


def write_scenario(scenario, outdir, gap_prob=None):
    """Write pings.ndjson, zones.geojson, orders.json, census.json,
    truth.csv into `outdir`; returns the path map."""
    import os
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "pings": os.path.join(outdir, "pings.ndjson"),
        "zones": os.path.join(outdir, "zones.geojson"),
        "orders": os.path.join(outdir, "orders.json"),
        "census": os.path.join(outdir, "census.json"),
        "truth": os.path.join(outdir, "truth.csv"),
    }
    write_pings_ndjson(scenario, paths["pings"], gap_prob)
    with open(paths["zones"], "w", encoding="utf-8") as fh:
        json.dump(scenario.geojson, fh)
    with open(paths["orders"], "w", encoding="utf-8") as fh:
        json.dump(scenario.orders, fh)
    with open(paths["census"], "w", encoding="utf-8") as fh:
        json.dump(scenario.census, fh)
    with open(paths["truth"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent_id", "true_class", "departure_utc"])
        for a in scenario.agents:
            w.writerow([a.agent_id, a.true_class.value,
                        "" if a.true_departure is None else a.true_departure])
    return paths


def read_truth(path):
    truth = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            truth[row["agent_id"]] = EvacClass(row["true_class"])
    return truth


# ---------------------------------------------------------------------------
# scoring


CLASS_ORDER = (EvacClass.NON_EVACUEE, EvacClass.SHADOW, EvacClass.SELF,
               EvacClass.VOLUNTARY, EvacClass.MANDATORY, EvacClass.IN_ZONE,
               EvacClass.UNCATEGORIZED)


@dataclass
class RecoveryScore:
    matrix: np.ndarray          # rows: true class, cols: inferred class
    accuracy: float
    labels: tuple = CLASS_ORDER

    def is_diagonal(self):
        return bool((self.matrix == np.diag(np.diag(self.matrix))).all())


def score_recovery(truth, outcomes):
    """Confusion matrix of true vs inferred classes.

    `truth` maps agent_id to EvacClass. Users the pipeline lost (filtered
    out before classification) count as uncategorized; an inferred user
    missing from the truth is a hard error.
    """
    inferred = {}
    for o in outcomes:
        uid = o.user_id if hasattr(o, "user_id") else o["user_id"]
        cls = o.evac_class if hasattr(o, "evac_class") else o["evac_class"]
        inferred[uid] = cls
    unknown = set(inferred) - set(truth)
    if unknown:
        raise ValueError(f"inferred users missing from truth: "
                         f"{sorted(unknown)[:5]}")
    idx = {c: i for i, c in enumerate(CLASS_ORDER)}
    matrix = np.zeros((7, 7), dtype=np.int64)
    for uid, true_cls in truth.items():
        got = inferred.get(uid, EvacClass.UNCATEGORIZED)
        matrix[idx[true_cls], idx[got]] += 1
    total = matrix.sum()
    accuracy = float(np.trace(matrix) / total) if total else 0.0
    return RecoveryScore(matrix=matrix, accuracy=accuracy)


# ---------------------------------------------------------------------------
# bulk pings for throughput exercises


def generate_bulk_pings_csv(paths, n_pings, n_users, seed,
                            dup_frac=0.01, low_acc_frac=0.05):
    """Write `n_pings` synthetic pings as CSV spread over `paths` files.

    Vectorized generator for ingest throughput runs: uniform users, one
    month of timestamps, a sprinkle of exact duplicates and filtered
    accuracy classes. Deterministic in (seed, paths order).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    per_file = [n_pings // len(paths)] * len(paths)
    per_file[-1] += n_pings - sum(per_file)
    t_base = 1661990400  # 2022-09-01 00:00 UTC
    id_table = np.array([f"u{i:06d}" for i in range(n_users)], dtype=object)
    for path, count in zip(paths, per_file):
        users = rng.integers(0, n_users, count)
        ts = rng.integers(t_base, t_base + 30 * DAY_S, count)
        lat = rng.uniform(25.0, 30.0, count)
        lon = rng.uniform(-83.0, -80.0, count)
        acc_pick = rng.random(count)
        acc = np.where(acc_pick < low_acc_frac, "other",
                       np.where(acc_pick < 0.5 + low_acc_frac / 2,
                                "high", "medium_high"))
        n_dup = int(count * dup_frac)
        if n_dup:
            src = rng.integers(0, count - n_dup, n_dup)
            dst = np.arange(count - n_dup, count)
            users[dst] = users[src]
            ts[dst] = ts[src]
            lat[dst] = lat[src]
            lon[dst] = lon[src]
        df = pd.DataFrame({
            "user_id": id_table[users],
            "ts": ts, "lat": lat, "lon": lon, "acc": acc,
        })
        df.to_csv(path, index=False, float_format="%.7f")
