"""Aggregation of user outcomes into rates, curves, and diagnostics.

The published rate table divides by the full population including
uncategorized users; the stricter denominator that drops them is available
behind `denominator="categorized"`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .classify import EVACUEE_CLASSES, EvacClass
from .clock import HOUR_S

logger = logging.getLogger(__name__)

DENOMINATOR_ALL = "all"
DENOMINATOR_CATEGORIZED = "categorized"

GLOBAL_SCOPE = "_all"


class UndefinedRateError(ValueError):
    """Rate requested over an empty population."""


class UndefinedCorrelationError(ValueError):
    """Correlation requested without variance or enough points."""


@dataclass(frozen=True)
class GroupCounts:
    uncategorized: int = 0
    non_evacuee: int = 0
    shadow: int = 0
    self_: int = 0
    voluntary: int = 0
    mandatory: int = 0
    in_zone: int = 0

    @property
    def total(self):
        return (self.uncategorized + self.non_evacuee + self.shadow
                + self.self_ + self.voluntary + self.mandatory + self.in_zone)

    @property
    def out_of_zone(self):
        return self.shadow + self.self_ + self.voluntary + self.mandatory

    @property
    def evacuees(self):
        return self.out_of_zone + self.in_zone

    @classmethod
    def from_outcomes(cls, outcomes):
        tally = {c: 0 for c in EvacClass}
        for o in outcomes:
            c = o.evac_class if hasattr(o, "evac_class") else o["evac_class"]
            tally[c] += 1
        return cls(uncategorized=tally[EvacClass.UNCATEGORIZED],
                   non_evacuee=tally[EvacClass.NON_EVACUEE],
                   shadow=tally[EvacClass.SHADOW],
                   self_=tally[EvacClass.SELF],
                   voluntary=tally[EvacClass.VOLUNTARY],
                   mandatory=tally[EvacClass.MANDATORY],
                   in_zone=tally[EvacClass.IN_ZONE])


@dataclass(frozen=True)
class RateReport:
    scope: str
    out_of_zone_rate: float
    overall_rate: float


def rates(counts, denominator=DENOMINATOR_ALL, scope=GLOBAL_SCOPE):
    """Out-of-zone and overall evacuation rates for one population."""
    if counts.total == 0:
        raise UndefinedRateError(f"scope {scope}: no users")
    if denominator == DENOMINATOR_ALL:
        d = counts.total
    elif denominator == DENOMINATOR_CATEGORIZED:
        d = counts.total - counts.uncategorized
        if d == 0:
            raise UndefinedRateError(f"scope {scope}: only uncategorized users")
    else:
        raise ValueError(f"unknown denominator mode {denominator!r}")
    return RateReport(scope=scope,
                      out_of_zone_rate=counts.out_of_zone / d,
                      overall_rate=counts.evacuees / d)


def percent_1dp(fraction):
    """Percentage with one decimal, half-up, as the published tables print."""
    return float(Decimal(fraction * 100).quantize(Decimal("0.1"),
                                                  rounding=ROUND_HALF_UP))


def sampling_rate(inferred_by_region, census):
    """Inferred residents (classified users) over census population.

    Returns one rate per region plus the global ratio under `_all`.
    Census regions with no classified users report 0.0; regions with a
    nonpositive population are excluded with a warning.
    """
    out = {}
    num_total = 0
    pop_total = 0.0
    for region in sorted(set(census) | set(inferred_by_region)):
        pop = census.get(region)
        inferred = int(inferred_by_region.get(region, 0))
        if pop is None:
            logger.warning("region %s has inferred users but no census "
                           "population; excluded", region)
            continue
        if pop <= 0:
            logger.warning("region %s has nonpositive population %s; "
                           "excluded", region, pop)
            continue
        out[region] = inferred / pop
        num_total += inferred
        pop_total += pop
    if pop_total > 0:
        out[GLOBAL_SCOPE] = num_total / pop_total
    return out


def classified_by_region(outcomes):
    """Classified (non-uncategorized) user counts per region."""
    counts = {}
    for o in outcomes:
        cls = o.evac_class if hasattr(o, "evac_class") else o["evac_class"]
        region = o.region if hasattr(o, "region") else o["region"]
        if cls is EvacClass.UNCATEGORIZED:
            continue
        counts[region] = counts.get(region, 0) + 1
    return counts


def resident_population_correlation(pairs):
    """Pearson correlation between inferred residents and population."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise UndefinedCorrelationError("need >= 2 (inferred, population) pairs")
    x = arr[:, 0]
    y = arr[:, 1]
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance in a coordinate")
    return float((dx * dy).sum() / (sx * sy))


@dataclass
class ResponseCurve:
    """Hourly departure histogram per evacuee class.

    bin_starts are UTC epochs aligned to local hour boundaries; counts maps
    each evacuee class to a per-bin integer array.
    """
    bin_starts: np.ndarray
    width_s: int
    counts: dict

    def total(self, cls=None):
        if cls is not None:
            return int(self.counts[cls].sum())
        return int(sum(arr.sum() for arr in self.counts.values()))


def response_curve(outcomes, window, clock, width_s=HOUR_S):
    """Departure-time histogram over the study window, by evacuee class.

    The envelope is hour-aligned and widened when departures fall outside
    [window.start, window.end) (a home stay can end past the window edge).
    """
    deps = [(o.evac_class if hasattr(o, "evac_class") else o["evac_class"],
             o.departure if hasattr(o, "departure") else o["departure"])
            for o in outcomes]
    deps = [(c, d) for c, d in deps if c in EVACUEE_CLASSES and d is not None]

    lo = clock.hour_floor(window.start)
    hi = clock.hour_floor(window.end - 1) + width_s
    if deps:
        dmin = min(d for _, d in deps)
        dmax = max(d for _, d in deps)
        lo = min(lo, clock.hour_floor(dmin))
        hi = max(hi, clock.hour_floor(dmax) + width_s)
    bin_starts = np.arange(lo, hi, width_s, dtype=np.int64)
    counts = {c: np.zeros(len(bin_starts), dtype=np.int64)
              for c in EVACUEE_CLASSES}
    for c, d in deps:
        counts[c][(d - lo) // width_s] += 1
    return ResponseCurve(bin_starts=bin_starts, width_s=width_s,
                         counts=counts)


#: (name, start local day-offset spec): waves are defined in local time as
#: [start, end); the third wave is open-ended.
def default_waves(clock, window):
    """The three published response waves for the default study window.

    wave1: first study day; wave2: noon day 3 .. noon day 4; wave3: from
    noon of the last-but-one day, open-ended.
    """
    d0 = clock.day_index(window.start)
    return [
        ("wave1", clock.local_time(d0), clock.local_time(d0 + 1)),
        ("wave2", clock.local_time(d0 + 3, 12), clock.local_time(d0 + 4, 12)),
        ("wave3", clock.local_time(d0 + 6, 12), None),
    ]


def wave_summary(curve, waves):
    """Evacuee departures per wave window plus the 'other' remainder.

    `waves` is a list of (name, start_epoch, end_epoch_or_None); windows
    are half-open and must not overlap.
    """
    spans = [(name, s, e) for name, s, e in waves]
    for i, (_, s1, e1) in enumerate(spans):
        for name2, s2, e2 in spans[i + 1:]:
            hi1 = float("inf") if e1 is None else e1
            hi2 = float("inf") if e2 is None else e2
            if s1 < hi2 and s2 < hi1:
                raise ValueError(f"wave windows overlap near {name2}")

    totals = {name: 0 for name, _, _ in spans}
    other = 0
    per_bin = sum(arr for arr in curve.counts.values())
    for start, cnt in zip(curve.bin_starts.tolist(), per_bin.tolist()):
        if cnt == 0:
            continue
        hit = None
        for name, s, e in spans:
            if start >= s and (e is None or start < e):
                hit = name
                break
        if hit is None:
            other += cnt
        else:
            totals[hit] += cnt
    totals["other"] = other
    return totals


def write_rates_csv(path, counts_by_scope, denominator=DENOMINATOR_ALL):
    """One row per scope; scopes with an empty population are skipped."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scope", "uncategorized", "non_evacuee", "shadow_evacuee",
                    "self_evacuee", "voluntary_evacuee", "mandatory_evacuee",
                    "in_zone_evacuee", "total", "out_of_zone_rate",
                    "overall_rate", "out_of_zone_pct", "overall_pct"])
        for scope in sorted(counts_by_scope):
            c = counts_by_scope[scope]
            if c.total == 0 or (denominator == DENOMINATOR_CATEGORIZED
                                and c.total == c.uncategorized):
                logger.warning("scope %s has no classifiable users; skipped",
                               scope)
                continue
            r = rates(c, denominator, scope)
            w.writerow([scope, c.uncategorized, c.non_evacuee, c.shadow,
                        c.self_, c.voluntary, c.mandatory, c.in_zone,
                        c.total, repr(r.out_of_zone_rate),
                        repr(r.overall_rate),
                        percent_1dp(r.out_of_zone_rate),
                        percent_1dp(r.overall_rate)])


def write_curve_csv(path, curve, clock):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start_utc", "bin_start_local", "evac_class",
                    "count"])
        for i, start in enumerate(curve.bin_starts.tolist()):
            for cls in EVACUEE_CLASSES:
                w.writerow([start, clock.iso_local(start), cls.value,
                            int(curve.counts[cls][i])])


def write_waves_csv(path, totals, waves, clock):
    ends = {name: e for name, _, e in waves}
    starts = {name: s for name, s, _ in waves}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wave", "start_local", "end_local", "count"])
        for name in [n for n, _, _ in waves] + ["other"]:
            s = starts.get(name)
            e = ends.get(name)
            w.writerow([name,
                        "" if s is None else clock.iso_local(s),
                        "" if e is None else clock.iso_local(e),
                        totals[name]])


def write_sampling_csv(path, inferred_by_region, census, rates_map):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["region", "inferred_residents", "population", "rate"])
        for region in sorted(rates_map):
            if region == GLOBAL_SCOPE:
                continue
            w.writerow([region, inferred_by_region.get(region, 0),
                        census.get(region, ""), repr(rates_map[region])])
        if GLOBAL_SCOPE in rates_map:
            w.writerow([GLOBAL_SCOPE,
                        sum(inferred_by_region.get(r, 0)
                            for r in census if census.get(r, 0) > 0),
                        sum(p for p in census.values() if p > 0),
                        repr(rates_map[GLOBAL_SCOPE])])
