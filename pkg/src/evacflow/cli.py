"""Pipeline orchestration: composable subcommands over file artifacts.

Each stage reads its predecessor's artifact files from the output
directory and writes its own, so stages can be rerun and inspected
independently. Artifacts are byte-stable for fixed inputs and config,
regardless of worker count.

Exit codes: 0 success, 2 missing upstream artifact, 3 invalid config,
1 any other failure. Failures print a one-line JSON error to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .classify import ClassifyParams, classify_users, write_outcomes
from .config import ConfigError, load_config
from .clock import parse_date
from .home import detect_homes, read_homes, write_homes
from .ingest import ingest_files, read_tracks, write_tracks
from .metrics import (GLOBAL_SCOPE, GroupCounts, UndefinedCorrelationError,
                      classified_by_region, default_waves,
                      resident_population_correlation, response_curve,
                      sampling_rate, wave_summary, write_curve_csv,
                      write_rates_csv, write_sampling_csv, write_waves_csv)
from .staypoints import extract_all, read_activities, write_activities
from .synth import SynthConfig, generate_scenario, write_scenario
from .zones import load_zonemap
from .classify import read_outcomes

logger = logging.getLogger("evacflow")

STAGES = ("synth", "ingest", "homes", "activities", "classify", "metrics",
          "report")


class MissingArtifactError(FileNotFoundError):
    pass


def _out(cfg, name):
    return os.path.join(cfg.paths.out, name)


def _require(path, stage):
    if path is None or not os.path.exists(path):
        raise MissingArtifactError(
            f"stage {stage}: missing upstream artifact {path!r}")
    return path


def _resolve_input(cfg, key):
    """Configured input path, falling back to the synth stage's output."""
    value = getattr(cfg.paths, key)
    if key == "pings":
        if value:
            return list(value)
        fallback = _out(cfg, os.path.join("synth", "pings.ndjson"))
        return [fallback]
    if value:
        return value
    return _out(cfg, os.path.join("synth", f"{key}.{_EXT[key]}"))


_EXT = {"zones": "geojson", "orders": "json", "census": "json"}


def _detect_format(cfg, paths):
    if cfg.ingest.format != "auto":
        return cfg.ingest.format
    return "csv" if str(paths[0]).endswith(".csv") else "ndjson"


def stage_synth(cfg):
    counts = dict(cfg.synth.counts)
    if not counts:
        raise ValueError("synth stage needs synth.counts in the config")
    scenario = generate_scenario(
        SynthConfig(counts=counts,
                    ping_interval_s=cfg.synth.ping_interval_s,
                    noise_sigma=cfg.synth.noise_sigma,
                    gap_prob=cfg.synth.gap_prob,
                    cell_m=cfg.home.grid_m),
        cfg.seed)
    outdir = _out(cfg, "synth")
    paths = write_scenario(scenario, outdir)
    logger.info("synth: %d agents, %s", len(scenario.agents), outdir)
    return paths


def stage_ingest(cfg):
    paths = [_require(p, "ingest") for p in _resolve_input(cfg, "pings")]
    tracks, report = ingest_files(
        paths, fmt=_detect_format(cfg, paths),
        min_points=cfg.ingest.min_points,
        accuracy_keep=frozenset(cfg.ingest.accuracy_keep),
        workers=cfg.effective_workers())
    os.makedirs(cfg.paths.out, exist_ok=True)
    write_tracks(tracks, _out(cfg, "tracks.ndjson"))
    with open(_out(cfg, "cleaning_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, sort_keys=True, indent=2)
    logger.info("ingest: %d users kept", report.users_kept)


def stage_homes(cfg):
    tracks = read_tracks(_require(_out(cfg, "tracks.ndjson"), "homes"))
    homes = detect_homes(
        tracks,
        parse_date(cfg.home.home_window_start),
        parse_date(cfg.home.home_window_end),
        cfg.clock(),
        min_days=cfg.home.min_active_days,
        min_points_per_day=cfg.home.min_points_per_day,
        night_start_hour=cfg.home.night_start_hour,
        night_end_hour=cfg.home.night_end_hour,
        min_nights=cfg.home.min_nights,
        min_weekend_s=int(cfg.home.min_weekend_hours * 3600),
        cell_m=cfg.home.grid_m,
        gap_cap=cfg.home.gap_cap_s)
    write_homes(homes, _out(cfg, "homes.csv"))
    logger.info("homes: %d users homed", len(homes))


def stage_activities(cfg):
    tracks = read_tracks(_require(_out(cfg, "tracks.ndjson"), "activities"))
    acts = extract_all(tracks, radius=cfg.staypoints.radius_m,
                       min_duration=cfg.staypoints.min_duration_s)
    write_activities(acts, _out(cfg, "activities.csv"))
    logger.info("activities: %d total",
                sum(len(v) for v in acts.values()))


def stage_classify(cfg):
    homes = read_homes(_require(_out(cfg, "homes.csv"), "classify"))
    acts = read_activities(_require(_out(cfg, "activities.csv"), "classify"))
    zonemap = load_zonemap(_require(_resolve_input(cfg, "zones"), "classify"),
                           _require(_resolve_input(cfg, "orders"), "classify"),
                           buffer_m=cfg.zones.buffer_m,
                           chord_tol_m=cfg.zones.chord_tol_m)
    params = ClassifyParams(
        min_away_nights_zone=cfg.classify.min_away_nights_zone,
        min_away_nights_buffer=cfg.classify.min_away_nights_buffer,
        max_missing_nights=cfg.classify.max_missing_nights,
        night_start_hour=cfg.home.night_start_hour,
        night_end_hour=cfg.home.night_end_hour,
        cell_m=cfg.home.grid_m)
    outcomes, outside = classify_users(acts, homes, zonemap,
                                       cfg.study_window(), cfg.clock(),
                                       params)
    write_outcomes(outcomes, _out(cfg, "outcomes.csv"))
    logger.info("classify: %d outcomes, %d homes outside study area",
                len(outcomes), outside)


def stage_metrics(cfg):
    outcomes = read_outcomes(_require(_out(cfg, "outcomes.csv"), "metrics"))
    clock = cfg.clock()
    window = cfg.study_window()

    counts = {GLOBAL_SCOPE: GroupCounts.from_outcomes(outcomes)}
    for region in sorted({o["region"] for o in outcomes}):
        counts[region] = GroupCounts.from_outcomes(
            [o for o in outcomes if o["region"] == region])
    write_rates_csv(_out(cfg, "rates.csv"), counts,
                    denominator=cfg.metrics.denominator)

    curve = response_curve(outcomes, window, clock)
    write_curve_csv(_out(cfg, "curve.csv"), curve, clock)
    waves = default_waves(clock, window)
    write_waves_csv(_out(cfg, "waves.csv"), wave_summary(curve, waves),
                    waves, clock)

    census_path = _resolve_input(cfg, "census")
    if census_path and os.path.exists(census_path):
        with open(census_path, "r", encoding="utf-8") as fh:
            census = json.load(fh)
        inferred = classified_by_region(outcomes)
        rates_map = sampling_rate(inferred, census)
        write_sampling_csv(_out(cfg, "sampling.csv"), inferred, census,
                           rates_map)
        pairs = [(inferred.get(r, 0), pop) for r, pop in sorted(census.items())
                 if pop > 0]
        try:
            corr = resident_population_correlation(pairs)
        except UndefinedCorrelationError:
            corr = None
        with open(_out(cfg, "diagnostics.json"), "w", encoding="utf-8") as fh:
            json.dump({"resident_population_r": corr,
                       "census_regions": len(pairs)}, fh, sort_keys=True,
                      indent=2)
    logger.info("metrics: %d scopes", len(counts))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _count_lines(path):
    with open(path, "rb") as fh:
        return sum(1 for _ in fh)


def stage_report(cfg):
    manifest = {"version": __version__, "config": cfg.snapshot(),
                "inputs": {}, "artifacts": {}}
    for key in ("zones", "orders", "census"):
        path = _resolve_input(cfg, key)
        if path and os.path.exists(path):
            manifest["inputs"][key] = {"path": path, "sha256": _sha256(path)}
    for p in _resolve_input(cfg, "pings"):
        if os.path.exists(p):
            manifest["inputs"].setdefault("pings", []).append(
                {"path": p, "sha256": _sha256(p)})
    for name in ("tracks.ndjson", "cleaning_report.json", "homes.csv",
                 "activities.csv", "outcomes.csv", "rates.csv", "curve.csv",
                 "waves.csv", "sampling.csv"):
        path = _out(cfg, name)
        if os.path.exists(path):
            manifest["artifacts"][name] = {
                "sha256": _sha256(path),
                "records": _count_lines(path),
            }
    with open(_out(cfg, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    logger.info("report: manifest written")


def run(subcommand, cfg):
    """Run one stage or the whole chain; returns the process exit code."""
    os.makedirs(cfg.paths.out, exist_ok=True)
    if subcommand == "all":
        chain = []
        if not cfg.paths.pings and cfg.synth.counts:
            chain.append("synth")
        chain += ["ingest", "homes", "activities", "classify", "metrics",
                  "report"]
    else:
        chain = [subcommand]
    for stage in chain:
        globals()[f"stage_{stage}"](cfg)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="evacflow",
        description="Evacuation-behavior analytics over device GPS pings")
    parser.add_argument("subcommand", choices=STAGES + ("all",))
    parser.add_argument("--config", required=False,
                        help="JSON config file (defaults apply without it)")
    parser.add_argument("--workers", type=int, default=None,
                        help="override config worker count")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
    except ConfigError as exc:
        print(json.dumps({"error": "config", "fields": exc.fields}),
              file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "config", "fields": [str(exc)]}),
              file=sys.stderr)
        return 3

    try:
        return run(args.subcommand, cfg)
    except MissingArtifactError as exc:
        print(json.dumps({"error": "missing_artifact", "detail": str(exc)}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
