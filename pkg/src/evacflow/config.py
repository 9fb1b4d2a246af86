"""Pipeline configuration: one JSON document, env-var overrides, defaults
equal to the published study parameters.

Override any key with EVACFLOW_<SECTION>__<KEY> (JSON-parsed when
possible, e.g. EVACFLOW_INGEST__MIN_POINTS=100).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import date

from .clock import DAY_S, LocalClock, parse_date, parse_utc

ENV_PREFIX = "EVACFLOW_"


class ConfigError(ValueError):
    def __init__(self, fields):
        self.fields = list(fields)
        super().__init__("invalid config: " + "; ".join(self.fields))


@dataclass
class PathsConfig:
    pings: list = field(default_factory=list)
    zones: str | None = None
    orders: str | None = None
    census: str | None = None
    out: str = "out"


@dataclass
class IngestConfig:
    format: str = "auto"            # ndjson | csv | auto (by extension)
    min_points: int = 150
    accuracy_keep: list = field(default_factory=lambda: ["high", "medium_high"])


@dataclass
class HomeConfig:
    night_start_hour: int = 20
    night_end_hour: int = 6
    min_nights: int = 5
    min_weekend_hours: float = 6.0
    home_window_start: str = "2022-09-01"
    home_window_end: str = "2022-09-22"   # inclusive
    min_active_days: int = 15
    min_points_per_day: int = 10
    grid_m: float = 20.0
    gap_cap_s: int = 21600


@dataclass
class StaypointsConfig:
    radius_m: float = 100.0
    min_duration_s: int = 300


@dataclass
class ZonesConfig:
    buffer_m: float = 7500.0
    chord_tol_m: float = 1.0


@dataclass
class ClassifyConfig:
    window_start: str = "2022-09-23"      # local date, inclusive
    window_end: str = "2022-09-30"        # local date, exclusive
    landfall_utc: str = "2022-09-28T19:05:00Z"
    min_away_nights_zone: int = 1
    min_away_nights_buffer: int = 3
    max_missing_nights: int = 3
    post_departure_horizon_days: int = 4


@dataclass
class MetricsConfig:
    denominator: str = "all"              # all | categorized


@dataclass
class TimeConfig:
    utc_offset_hours: float = -4.0


@dataclass
class SynthSection:
    counts: dict = field(default_factory=dict)
    ping_interval_s: int = 300
    noise_sigma: float = 0.0
    gap_prob: float = 0.0


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    home: HomeConfig = field(default_factory=HomeConfig)
    staypoints: StaypointsConfig = field(default_factory=StaypointsConfig)
    zones: ZonesConfig = field(default_factory=ZonesConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    synth: SynthSection = field(default_factory=SynthSection)
    workers: int = 0                      # 0 -> available cores
    seed: int = 7

    # ---- derived helpers -------------------------------------------------

    def clock(self):
        return LocalClock.from_hours(self.time.utc_offset_hours)

    def study_window(self):
        from .classify import StudyWindow
        clock = self.clock()
        start = clock.day_start(clock.day_of(parse_date(
            self.classify.window_start)))
        end = clock.day_start(clock.day_of(parse_date(
            self.classify.window_end)))
        return StudyWindow(
            start=start, end=end,
            landfall=parse_utc(self.classify.landfall_utc),
            horizon_s=self.classify.post_departure_horizon_days * DAY_S)

    def effective_workers(self):
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def snapshot(self):
        return asdict(self)

    # ---- validation ------------------------------------------------------

    def validate(self):
        errors = []

        def positive(value, name):
            if not (isinstance(value, (int, float)) and value > 0):
                errors.append(f"{name} must be positive, got {value!r}")

        positive(self.ingest.min_points, "ingest.min_points")
        positive(self.home.min_nights, "home.min_nights")
        positive(self.home.min_weekend_hours, "home.min_weekend_hours")
        positive(self.home.min_active_days, "home.min_active_days")
        positive(self.home.min_points_per_day, "home.min_points_per_day")
        positive(self.home.grid_m, "home.grid_m")
        positive(self.home.gap_cap_s, "home.gap_cap_s")
        positive(self.staypoints.radius_m, "staypoints.radius_m")
        positive(self.staypoints.min_duration_s, "staypoints.min_duration_s")
        positive(self.zones.buffer_m, "zones.buffer_m")
        positive(self.zones.chord_tol_m, "zones.chord_tol_m")
        positive(self.classify.min_away_nights_zone,
                 "classify.min_away_nights_zone")
        positive(self.classify.min_away_nights_buffer,
                 "classify.min_away_nights_buffer")
        positive(self.classify.max_missing_nights,
                 "classify.max_missing_nights")
        positive(self.classify.post_departure_horizon_days,
                 "classify.post_departure_horizon_days")

        if self.ingest.format not in ("auto", "ndjson", "csv"):
            errors.append(f"ingest.format must be auto|ndjson|csv, "
                          f"got {self.ingest.format!r}")
        if self.metrics.denominator not in ("all", "categorized"):
            errors.append(f"metrics.denominator must be all|categorized, "
                          f"got {self.metrics.denominator!r}")
        if not (0 <= self.home.night_start_hour <= 23):
            errors.append("home.night_start_hour out of range")
        if not (0 <= self.home.night_end_hour <= 23):
            errors.append("home.night_end_hour out of range")
        if self.workers < 0:
            errors.append("workers must be >= 0")

        def try_date(text, name):
            try:
                return parse_date(text)
            except (TypeError, ValueError):
                errors.append(f"{name} is not an ISO date: {text!r}")
                return None

        h0 = try_date(self.home.home_window_start, "home.home_window_start")
        h1 = try_date(self.home.home_window_end, "home.home_window_end")
        if h0 and h1 and h0 > h1:
            errors.append("home window start after end")
        c0 = try_date(self.classify.window_start, "classify.window_start")
        c1 = try_date(self.classify.window_end, "classify.window_end")
        try:
            landfall = parse_utc(self.classify.landfall_utc)
        except (TypeError, ValueError):
            errors.append(f"classify.landfall_utc is not ISO-8601 UTC: "
                          f"{self.classify.landfall_utc!r}")
            landfall = None
        if c0 and c1 and landfall is not None:
            clock = self.clock()
            start = clock.day_start(clock.day_of(c0))
            end = clock.day_start(clock.day_of(c1))
            if not (start < landfall < end):
                errors.append("classify window must satisfy "
                              "start < landfall < end")
        if errors:
            raise ConfigError(errors)
        return self


_SECTIONS = {
    "paths": PathsConfig,
    "ingest": IngestConfig,
    "home": HomeConfig,
    "staypoints": StaypointsConfig,
    "zones": ZonesConfig,
    "classify": ClassifyConfig,
    "metrics": MetricsConfig,
    "time": TimeConfig,
    "synth": SynthSection,
}


def _build(data):
    cfg = PipelineConfig()
    unknown = []
    for section, payload in data.items():
        if section in ("workers", "seed"):
            setattr(cfg, section, payload)
            continue
        cls = _SECTIONS.get(section)
        if cls is None:
            unknown.append(f"unknown section {section!r}")
            continue
        obj = getattr(cfg, section)
        if not isinstance(payload, dict):
            unknown.append(f"section {section!r} must be an object")
            continue
        for key, value in payload.items():
            if not hasattr(obj, key):
                unknown.append(f"unknown key {section}.{key}")
                continue
            if key == "pings" and isinstance(value, str):
                value = [value]
            setattr(obj, key, value)
    if unknown:
        raise ConfigError(unknown)
    return cfg


def _apply_env(cfg, environ):
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if "__" in rest:
            section, key = rest.split("__", 1)
            obj = getattr(cfg, section, None)
            if obj is None or not hasattr(obj, key):
                raise ConfigError([f"env override targets unknown key "
                                   f"{section}.{key}"])
            if key == "pings" and isinstance(value, str):
                value = [value]
            setattr(obj, key, value)
        elif rest in ("workers", "seed"):
            setattr(cfg, rest, int(value))
    return cfg


def load_config(path=None, environ=None):
    """Load, env-override, and validate the pipeline configuration."""
    data = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError(["config document must be a JSON object"])
    cfg = _build(data)
    _apply_env(cfg, environ if environ is not None else os.environ)
    return cfg.validate()
