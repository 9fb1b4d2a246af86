"""Ping ingestion: parse, validate, deduplicate, filter, sort, project.

Input records carry WGS84 coordinates and a vendor accuracy class; output
is one clean per-user track in UTM 17N meters, time-ordered, with exact
(timestamp, easting, northing) duplicates removed and thin users dropped.

The cleaning core is vectorized and works on factorized user codes so no
per-ping Python objects survive past parsing. Files can be parsed in
worker processes; the merge re-sorts globally (user, time, coordinates),
so results never depend on file order or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .projection import (LAT_MAX_DEG, LAT_MIN_DEG, LON_MAX_DEG, LON_MIN_DEG,
                         wgs84_to_utm17n)

ACCURACY_CLASSES = ("high", "medium_high", "other")
DEFAULT_ACCURACY_KEEP = frozenset({"high", "medium_high"})
DEFAULT_MIN_POINTS = 150

PING_FIELDS = ("user_id", "ts", "lat", "lon", "acc")

TRACK_FORMAT_VERSION = 1


class PingFormatError(ValueError):
    """Unusable ping file (bad header or mostly-malformed content)."""


@dataclass(frozen=True)
class RawPing:
    user_id: str
    ts: int
    lat: float
    lon: float
    acc: str


@dataclass
class ParseReport:
    """Per-file parse outcome: records seen, records rejected, samples."""
    path: str = "<stream>"
    read: int = 0
    malformed: int = 0
    first_errors: list = field(default_factory=list)

    def note_error(self, lineno, msg, max_samples=10):
        self.malformed += 1
        if len(self.first_errors) < max_samples:
            self.first_errors.append(f"line {lineno}: {msg}")


@dataclass
class CleaningReport:
    read: int = 0
    malformed: int = 0
    low_accuracy: int = 0
    duplicates: int = 0
    users_dropped: int = 0
    users_kept: int = 0

    def as_dict(self):
        return {
            "read": self.read,
            "malformed": self.malformed,
            "low_accuracy": self.low_accuracy,
            "duplicates": self.duplicates,
            "users_dropped": self.users_dropped,
            "users_kept": self.users_kept,
        }


@dataclass
class UserTrack:
    """Time-ordered clean pings of one user (UTM 17N meters)."""
    user_id: str
    t: np.ndarray
    e: np.ndarray
    n: np.ndarray

    def __len__(self):
        return self.t.shape[0]


def _validate_record(rec, report, lineno):
    try:
        user_id = str(rec["user_id"])
        ts = int(rec["ts"])
        lat = float(rec["lat"])
        lon = float(rec["lon"])
        acc = str(rec["acc"])
    except (KeyError, TypeError, ValueError) as exc:
        report.note_error(lineno, f"bad or missing field ({exc})")
        return None
    if not user_id:
        report.note_error(lineno, "empty user_id")
        return None
    if ts <= 0:
        report.note_error(lineno, f"non-positive timestamp {ts}")
        return None
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        report.note_error(lineno, f"coordinates out of range ({lat}, {lon})")
        return None
    if acc not in ACCURACY_CLASSES:
        report.note_error(lineno, f"unknown accuracy class {acc!r}")
        return None
    return RawPing(user_id, ts, lat, lon, acc)


def _open_text(source):
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        return open(source, "r", encoding="utf-8", newline=""), str(source), True
    stream = source
    if isinstance(stream, io.BufferedIOBase) or (
            hasattr(stream, "mode") and "b" in getattr(stream, "mode", "")):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    return stream, getattr(stream, "name", "<stream>"), False


def parse_pings(source, fmt="ndjson"):
    """Parse an NDJSON or CSV ping file into RawPing records.

    `source` is a path or a text/binary stream. Malformed records are
    counted and skipped; the file is rejected (PingFormatError) when more
    than half of its records are malformed.

    Returns (pings, ParseReport).
    """
    if fmt not in ("ndjson", "csv"):
        raise ValueError(f"unknown ping format {fmt!r}")
    stream, path, close = _open_text(source)
    report = ParseReport(path=path)
    pings = []
    try:
        if fmt == "ndjson":
            for lineno, line in enumerate(stream, start=1):
                line = line.strip()
                if not line:
                    continue
                report.read += 1
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    report.note_error(lineno, f"invalid JSON ({exc.msg})")
                    continue
                if not isinstance(rec, dict):
                    report.note_error(lineno, "record is not an object")
                    continue
                ping = _validate_record(rec, report, lineno)
                if ping is not None:
                    pings.append(ping)
        else:
            reader = csv.DictReader(stream)
            if reader.fieldnames is None:
                return [], report
            missing = set(PING_FIELDS) - set(reader.fieldnames)
            if missing:
                raise PingFormatError(
                    f"{path}: CSV header missing columns {sorted(missing)}")
            for lineno, rec in enumerate(reader, start=2):
                report.read += 1
                ping = _validate_record(rec, report, lineno)
                if ping is not None:
                    pings.append(ping)
    finally:
        if close:
            stream.close()

    if report.read > 0 and report.malformed * 2 > report.read:
        raise PingFormatError(
            f"{path}: {report.malformed}/{report.read} records malformed")
    return pings, report


# ---------------------------------------------------------------------------
# vectorized cleaning core: rows are (user code, ts, lat/lon or e/n) with a
# small sorted table of user ids per batch


@dataclass
class _Rows:
    codes: np.ndarray     # int64 index into cats, one per surviving row
    cats: np.ndarray      # sorted unique user ids seen in valid input rows
    ts: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    acc: np.ndarray       # int8 index into acc_cats
    acc_cats: tuple


def _rows_from_pings(pings, report):
    n = len(pings)
    report.read += n
    user = np.empty(n, dtype=object)
    ts = np.empty(n, dtype=np.int64)
    lat = np.empty(n, dtype=np.float64)
    lon = np.empty(n, dtype=np.float64)
    acc = np.empty(n, dtype=np.int8)
    acc_index = {a: i for i, a in enumerate(ACCURACY_CLASSES)}
    for i, p in enumerate(pings):
        user[i] = p.user_id
        ts[i] = p.ts
        lat[i] = p.lat
        lon[i] = p.lon
        acc[i] = acc_index[p.acc]
    cats, codes = (np.unique(user, return_inverse=True) if n
                   else (np.empty(0, object), np.empty(0, np.int64)))
    return _Rows(codes.astype(np.int64), cats, ts, lat, lon, acc,
                 ACCURACY_CLASSES)


def _rows_from_frame(df, report):
    """Vectorized validation of a ping DataFrame into _Rows."""
    n = len(df)
    report.read += n
    if n == 0:
        return _Rows(np.empty(0, np.int64), np.empty(0, object),
                     np.empty(0, np.int64), np.empty(0), np.empty(0),
                     np.empty(0, np.int8), ACCURACY_CLASSES)

    ts = pd.to_numeric(df["ts"], errors="coerce")
    lat = pd.to_numeric(df["lat"], errors="coerce")
    lon = pd.to_numeric(df["lon"], errors="coerce")

    user = df["user_id"]
    if not isinstance(user.dtype, pd.CategoricalDtype):
        user = user.astype("category")
    ucats = np.asarray(user.cat.categories.astype(str), dtype=object)
    ucodes = user.cat.codes.to_numpy()
    order = np.argsort(ucats, kind="stable")
    rank = np.empty(len(ucats), dtype=np.int64)
    rank[order] = np.arange(len(ucats))
    cats = ucats[order]
    codes = np.where(ucodes >= 0, rank[ucodes], -1)

    acc = df["acc"]
    if not isinstance(acc.dtype, pd.CategoricalDtype):
        acc = acc.astype("category")
    acats = [str(c) for c in acc.cat.categories]
    acodes = acc.cat.codes.to_numpy()
    acc_map = np.full(len(acats) + 1, -1, dtype=np.int8)
    for i, c in enumerate(acats):
        if c in ACCURACY_CLASSES:
            acc_map[i] = ACCURACY_CLASSES.index(c)
    acc_std = acc_map[acodes]  # -1 for unknown classes or missing

    cat_ok = np.array([isinstance(c, str) and len(c) > 0 for c in cats],
                      dtype=bool)
    ok = (ts.notna().to_numpy() & lat.notna().to_numpy()
          & lon.notna().to_numpy())
    tsv = np.where(ok, ts.to_numpy(dtype=np.float64, na_value=0.0), 0.0)
    latv = lat.to_numpy(dtype=np.float64, na_value=0.0)
    lonv = lon.to_numpy(dtype=np.float64, na_value=0.0)
    ok &= (tsv > 0) & (latv >= -90.0) & (latv <= 90.0) \
        & (lonv >= -180.0) & (lonv <= 180.0) \
        & (codes >= 0) & (acc_std >= 0)
    ok &= np.where(codes >= 0, cat_ok[np.clip(codes, 0, None)], False)
    report.malformed += int(n - ok.sum())

    # keep only user ids that actually appear in valid rows
    seen = np.zeros(len(cats), dtype=bool)
    seen[codes[ok]] = True
    remap = np.cumsum(seen) - 1
    return _Rows(remap[codes[ok]].astype(np.int64), cats[seen],
                 tsv[ok].astype(np.int64), latv[ok], lonv[ok],
                 acc_std[ok], ACCURACY_CLASSES)


def _filter_and_project(rows, accuracy_keep, report):
    """Accuracy + zone-band filters, then projection to UTM."""
    keep_ids = [i for i, c in enumerate(rows.acc_cats) if c in accuracy_keep]
    keep = np.isin(rows.acc, np.asarray(keep_ids, dtype=np.int8))
    report.low_accuracy += int(keep.size - keep.sum())
    codes = rows.codes[keep]
    ts = rows.ts[keep]
    lat = rows.lat[keep]
    lon = rows.lon[keep]

    in_band = ((lon >= LON_MIN_DEG) & (lon <= LON_MAX_DEG)
               & (lat >= LAT_MIN_DEG) & (lat <= LAT_MAX_DEG))
    # zone-band violations are unrepresentable in UTM 17N: count as malformed
    report.malformed += int(in_band.size - in_band.sum())
    codes, ts, lat, lon = (codes[in_band], ts[in_band], lat[in_band],
                           lon[in_band])
    if ts.size == 0:
        return codes, ts, np.empty(0), np.empty(0)
    e, n = wgs84_to_utm17n(lat, lon)
    return codes, ts, e, n


def _assemble_tracks(codes, cats, ts, e, n, min_points, report):
    """Sort, dedupe, threshold: the deterministic merge of the pipeline.

    `cats` must be the sorted table of all user ids seen in valid input
    (users that lost every ping to filtering count as dropped).
    """
    order = np.lexsort((n, e, ts, codes))
    codes, ts, e, n = codes[order], ts[order], e[order], n[order]

    if codes.size:
        same = (np.diff(codes) == 0) & (np.diff(ts) == 0) \
            & (np.diff(e) == 0) & (np.diff(n) == 0)
        keep = np.concatenate(([True], ~same))
    else:
        keep = np.zeros(0, dtype=bool)
    report.duplicates += int(keep.size - keep.sum())
    codes, ts, e, n = codes[keep], ts[keep], e[keep], n[keep]

    counts = np.bincount(codes, minlength=len(cats))
    kept_mask = counts >= min_points
    report.users_kept += int(kept_mask.sum())
    report.users_dropped += int(len(cats) - kept_mask.sum())

    tracks = {}
    bounds = np.concatenate(([0], np.cumsum(counts)))
    for code in np.flatnonzero(kept_mask):
        lo, hi = bounds[code], bounds[code + 1]
        uid = str(cats[code])
        tracks[uid] = UserTrack(uid, ts[lo:hi].copy(), e[lo:hi].copy(),
                                n[lo:hi].copy())
    return tracks


def _part_from_pings(pings, accuracy_keep=DEFAULT_ACCURACY_KEEP):
    """One mergeable part (like a parsed file) from in-memory pings."""
    stats = CleaningReport()
    rows = _rows_from_pings(list(pings), stats)
    codes, ts, e, n = _filter_and_project(rows, accuracy_keep, stats)
    return (codes, rows.cats, ts, e, n,
            stats.read, stats.malformed, stats.low_accuracy)


def _merge_parts(parts, min_points, report):
    """Deterministic merge of independently cleaned parts into tracks.

    The result depends only on the multiset of rows, not on how they were
    chunked into parts.
    """
    for part in parts:
        report.read += part[5]
        report.malformed += part[6]
        report.low_accuracy += part[7]
    cats = np.unique(np.concatenate([p[1] for p in parts])) \
        if parts else np.empty(0, object)
    merged_codes = []
    for codes, local_cats, *_ in parts:
        if len(local_cats) == 0:
            merged_codes.append(codes)
            continue
        remap = np.searchsorted(cats, local_cats)
        merged_codes.append(remap[codes])
    codes = np.concatenate(merged_codes) if parts else np.empty(0, np.int64)
    ts = np.concatenate([p[2] for p in parts]) if parts \
        else np.empty(0, np.int64)
    e = np.concatenate([p[3] for p in parts]) if parts else np.empty(0)
    n = np.concatenate([p[4] for p in parts]) if parts else np.empty(0)
    return _assemble_tracks(codes, cats, ts, e, n, min_points, report)


def clean_tracks(pings, min_points=DEFAULT_MIN_POINTS,
                 accuracy_keep=DEFAULT_ACCURACY_KEEP):
    """Clean a sequence of RawPing into per-user UserTracks.

    Drops low-accuracy pings, projects to UTM 17N, removes exact
    (timestamp, easting, northing) duplicates per user, sorts by timestamp
    (ties broken by coordinates), and drops users with fewer than
    `min_points` remaining. Output is independent of input order.

    Returns (tracks keyed and ordered by user_id, CleaningReport).
    """
    report = CleaningReport()
    tracks = _merge_parts([_part_from_pings(pings, accuracy_keep)],
                          min_points, report)
    return tracks, report


def clean_tracks_frame(df, min_points=DEFAULT_MIN_POINTS,
                       accuracy_keep=DEFAULT_ACCURACY_KEEP):
    """clean_tracks over an in-memory DataFrame with the ping columns."""
    report = CleaningReport()
    parse = ParseReport()
    rows = _rows_from_frame(df, parse)
    report.read = parse.read
    report.malformed = parse.malformed
    codes, ts, e, n = _filter_and_project(rows, accuracy_keep, report)
    tracks = _assemble_tracks(codes, rows.cats, ts, e, n, min_points, report)
    return tracks, report


def _parse_ndjson_arrays(path, report):
    """Streamed NDJSON parse straight into typed lists (no DataFrame)."""
    users, ts, lat, lon, acc = [], [], [], [], []
    acc_index = {a: i for i, a in enumerate(ACCURACY_CLASSES)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            report.read += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                report.note_error(lineno, f"invalid JSON ({exc.msg})")
                continue
            if not isinstance(rec, dict):
                report.note_error(lineno, "record is not an object")
                continue
            ping = _validate_record(rec, report, lineno)
            if ping is None:
                continue
            users.append(ping.user_id)
            ts.append(ping.ts)
            lat.append(ping.lat)
            lon.append(ping.lon)
            acc.append(acc_index[ping.acc])
    user_arr = np.asarray(users, dtype=object)
    cats, codes = (np.unique(user_arr, return_inverse=True) if users
                   else (np.empty(0, object), np.empty(0, np.int64)))
    return _Rows(codes.astype(np.int64), cats,
                 np.asarray(ts, dtype=np.int64),
                 np.asarray(lat, dtype=np.float64),
                 np.asarray(lon, dtype=np.float64),
                 np.asarray(acc, dtype=np.int8), ACCURACY_CLASSES)


def _count_data_lines(path):
    """Physical non-header lines, by newline count (trailing blank lines
    would be slightly overcounted; machine feeds do not produce them)."""
    n = 0
    last = b"\n"
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            n += chunk.count(b"\n")
            last = chunk[-1:]
    if last != b"\n":
        n += 1
    return max(0, n - 1)


def _ingest_one_file(args):
    """Worker: parse + filter + project one file into mergeable arrays."""
    path, fmt, accuracy_keep = args
    parse = ParseReport(path=str(path))
    if fmt == "csv":
        df = pd.read_csv(path, dtype={"user_id": "category",
                                      "acc": "category"},
                         on_bad_lines="skip")
        missing = set(PING_FIELDS) - set(df.columns)
        if missing:
            raise PingFormatError(
                f"{path}: CSV header missing columns {sorted(missing)}")
        rows = _rows_from_frame(df, parse)
        skipped = _count_data_lines(path) - len(df)
        if skipped > 0:
            parse.read += skipped
            parse.malformed += skipped
        del df
    else:
        rows = _parse_ndjson_arrays(path, parse)
    if parse.read > 0 and parse.malformed * 2 > parse.read:
        raise PingFormatError(
            f"{path}: {parse.malformed}/{parse.read} records malformed")
    clean = CleaningReport()
    codes, ts, e, n = _filter_and_project(rows, accuracy_keep, clean)
    return (codes, rows.cats, ts, e, n,
            parse.read, parse.malformed + clean.malformed,
            clean.low_accuracy)


def ingest_files(paths, fmt="ndjson", min_points=DEFAULT_MIN_POINTS,
                 accuracy_keep=DEFAULT_ACCURACY_KEEP, workers=1):
    """Parse, clean, and merge one or more ping files into user tracks.

    Files are parsed independently (in `workers` processes when >1) and
    the results merged deterministically, so the outcome does not depend
    on file order or the worker count.

    Returns (tracks, CleaningReport).
    """
    paths = [str(p) for p in paths]
    jobs = [(p, fmt, frozenset(accuracy_keep)) for p in paths]
    if workers > 1 and len(jobs) > 1:
        with multiprocessing.Pool(min(workers, len(jobs))) as pool:
            parts = pool.map(_ingest_one_file, jobs)
    else:
        parts = [_ingest_one_file(j) for j in jobs]

    report = CleaningReport()
    tracks = _merge_parts(parts, min_points, report)
    return tracks, report


def write_tracks(tracks, path):
    """Write tracks as versioned NDJSON, one user per line, user-sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for uid in sorted(tracks):
            tr = tracks[uid]
            fh.write(json.dumps({
                "v": TRACK_FORMAT_VERSION,
                "user_id": uid,
                "t": tr.t.tolist(),
                "e": tr.e.tolist(),
                "n": tr.n.tolist(),
            }, separators=(",", ":")))
            fh.write("\n")


def read_tracks(path):
    tracks = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("v") != TRACK_FORMAT_VERSION:
                raise ValueError(
                    f"{path}: unsupported track format version {rec.get('v')}")
            uid = rec["user_id"]
            tracks[uid] = UserTrack(
                uid,
                np.asarray(rec["t"], dtype=np.int64),
                np.asarray(rec["e"], dtype=np.float64),
                np.asarray(rec["n"], dtype=np.float64),
            )
    return tracks
