import io
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evacflow.ingest import (PingFormatError, RawPing, clean_tracks,
                             clean_tracks_frame, ingest_files, parse_pings,
                             read_tracks, write_tracks)
from evacflow.projection import utm17n_to_wgs84

GOOD_LINE = '{"user_id":"u1","ts":1663000000,"lat":27.9,"lon":-82.4,"acc":"high"}'


def ndjson_stream(lines):
    return io.StringIO("\n".join(lines) + "\n")


def test_parse_single_record():
    pings, report = parse_pings(ndjson_stream([GOOD_LINE]), "ndjson")
    assert pings == [RawPing("u1", 1663000000, 27.9, -82.4, "high")]
    assert report.read == 1 and report.malformed == 0


def test_parse_out_of_range_latitude_skipped():
    bad = '{"user_id":"u1","ts":1663000000,"lat":91,"lon":-82.4,"acc":"high"}'
    pings, report = parse_pings(ndjson_stream([GOOD_LINE, bad, GOOD_LINE]))
    assert len(pings) == 2
    assert report.malformed == 1


def test_parse_empty_file():
    pings, report = parse_pings(io.StringIO(""))
    assert pings == [] and report.read == 0 and report.malformed == 0


def test_parse_mostly_malformed_is_fatal():
    lines = [GOOD_LINE, "not json", "{broken", "[]"]
    with pytest.raises(PingFormatError):
        parse_pings(ndjson_stream(lines))


def test_parse_csv_roundtrip():
    csv_text = ("user_id,ts,lat,lon,acc\n"
                "u1,1663000000,27.9,-82.4,high\n"
                "u2,1663000001,27.8,-82.3,medium_high\n")
    pings, report = parse_pings(io.StringIO(csv_text), "csv")
    assert [p.user_id for p in pings] == ["u1", "u2"]
    assert report.read == 2


def test_parse_csv_missing_column_fatal():
    with pytest.raises(PingFormatError):
        parse_pings(io.StringIO("user_id,ts,lat,lon\nu1,1,2,3\n"), "csv")


def _grid_pings(uid, count, t0=1663000000, lat=27.9, lon=-82.4, acc="high"):
    return [RawPing(uid, t0 + 60 * i, lat + 1e-5 * i, lon, acc)
            for i in range(count)]


def test_min_points_boundary_kept():
    tracks, report = clean_tracks(_grid_pings("u1", 150))
    assert "u1" in tracks and len(tracks["u1"]) == 150
    assert report.users_kept == 1


def test_below_min_points_dropped():
    tracks, report = clean_tracks(_grid_pings("u1", 149))
    assert tracks == {}
    assert report.users_dropped == 1


def test_reversed_input_identical():
    pings = _grid_pings("u1", 160)
    t1, _ = clean_tracks(pings)
    t2, _ = clean_tracks(list(reversed(pings)))
    assert np.array_equal(t1["u1"].t, t2["u1"].t)
    assert np.array_equal(t1["u1"].e, t2["u1"].e)
    assert np.array_equal(t1["u1"].n, t2["u1"].n)


def test_low_accuracy_dropped():
    pings = _grid_pings("u1", 150) + _grid_pings("u1", 30, t0=1664000000,
                                                 acc="other")
    tracks, report = clean_tracks(pings)
    assert len(tracks["u1"]) == 150
    assert report.low_accuracy == 30


def test_duplicates_collapsed():
    pings = _grid_pings("u1", 150)
    tracks, report = clean_tracks(pings + pings)
    assert len(tracks["u1"]) == 150
    assert report.duplicates == 150


def test_equal_timestamp_coordinate_tiebreak():
    t = 1663000000
    pings = [RawPing("u1", t, 27.9, -82.4 + 1e-4 * k, "high")
             for k in range(160)]
    tracks, _ = clean_tracks(pings)
    tr = tracks["u1"]
    assert np.all(np.diff(tr.t) == 0)
    assert np.all(np.diff(tr.e) > 0)


def test_out_of_zone_band_counted_malformed():
    pings = _grid_pings("u1", 150) + [
        RawPing("u1", 1664100000, 27.9, -120.0, "high")]
    tracks, report = clean_tracks(pings)
    assert len(tracks["u1"]) == 150
    assert report.malformed == 1


ping_strategy = st.builds(
    RawPing,
    user_id=st.sampled_from(["a", "b", "c"]),
    ts=st.integers(min_value=1, max_value=10_000),
    lat=st.floats(min_value=25.0, max_value=30.0),
    lon=st.floats(min_value=-83.0, max_value=-80.0),
    acc=st.sampled_from(["high", "medium_high", "other"]),
)


@settings(max_examples=200, deadline=None)
@given(pings=st.lists(ping_strategy, max_size=60), seed=st.integers(0, 2**31))
def test_permutation_invariance(pings, seed):
    rng = np.random.default_rng(seed)
    perm = list(pings)
    rng.shuffle(perm)
    t1, r1 = clean_tracks(pings, min_points=5)
    t2, r2 = clean_tracks(perm, min_points=5)
    assert list(t1) == list(t2)
    for uid in t1:
        assert np.array_equal(t1[uid].t, t2[uid].t)
        assert np.array_equal(t1[uid].e, t2[uid].e)
        assert np.array_equal(t1[uid].n, t2[uid].n)
    assert r1.as_dict() == r2.as_dict()


@settings(max_examples=200, deadline=None)
@given(pings=st.lists(ping_strategy, max_size=60))
def test_idempotence_on_clean_output(pings):
    min_points = 5
    tracks, _ = clean_tracks(pings, min_points=min_points)
    again = []
    for uid, tr in tracks.items():
        lat, lon = utm17n_to_wgs84(tr.e, tr.n)
        for i in range(len(tr)):
            again.append(RawPing(uid, int(tr.t[i]), float(lat[i]),
                                 float(lon[i]), "high"))
    tracks2, report2 = clean_tracks(again, min_points=min_points)
    assert list(tracks2) == list(tracks)
    assert report2.duplicates == 0
    assert report2.users_dropped == 0
    for uid in tracks:
        assert np.array_equal(tracks2[uid].t, tracks[uid].t)
        assert np.allclose(tracks2[uid].e, tracks[uid].e, atol=1e-6)
        assert np.allclose(tracks2[uid].n, tracks[uid].n, atol=1e-6)


@settings(max_examples=150, deadline=None)
@given(pings=st.lists(ping_strategy, max_size=60))
def test_object_and_frame_paths_agree(pings):
    import pandas as pd
    t1, r1 = clean_tracks(pings, min_points=3)
    df = pd.DataFrame({
        "user_id": [p.user_id for p in pings],
        "ts": [p.ts for p in pings],
        "lat": [p.lat for p in pings],
        "lon": [p.lon for p in pings],
        "acc": [p.acc for p in pings],
    }, columns=["user_id", "ts", "lat", "lon", "acc"])
    t2, r2 = clean_tracks_frame(df, min_points=3)
    assert list(t1) == list(t2)
    for uid in t1:
        assert np.array_equal(t1[uid].t, t2[uid].t)
        assert np.array_equal(t1[uid].e, t2[uid].e)
    assert r1.as_dict() == r2.as_dict()


def _write_ndjson(path, pings):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pings:
            fh.write(json.dumps({"user_id": p.user_id, "ts": p.ts,
                                 "lat": p.lat, "lon": p.lon, "acc": p.acc}))
            fh.write("\n")


def test_multi_file_and_worker_count_invariance(tmp_path):
    rng = np.random.default_rng(11)
    pings = []
    for uid in ("u1", "u2", "u3"):
        for i in range(200):
            pings.append(RawPing(uid, 1663000000 + int(rng.integers(0, 10**6)),
                                 27.5 + float(rng.uniform(0, 1)),
                                 -82.5 + float(rng.uniform(0, 1)), "high"))
    one = tmp_path / "all.ndjson"
    _write_ndjson(one, pings)
    parts = []
    for k in range(3):
        part = tmp_path / f"part{k}.ndjson"
        _write_ndjson(part, pings[k::3])
        parts.append(part)

    t_single, r_single = ingest_files([one], "ndjson")
    t_multi1, r_multi1 = ingest_files(parts, "ndjson", workers=1)
    t_multi3, r_multi3 = ingest_files(parts, "ndjson", workers=3)

    out = {}
    for name, tracks in (("single", t_single), ("multi1", t_multi1),
                         ("multi3", t_multi3)):
        path = tmp_path / f"{name}.tracks"
        write_tracks(tracks, path)
        out[name] = path.read_bytes()
    assert out["single"] == out["multi1"] == out["multi3"]
    assert r_multi1.as_dict() == r_multi3.as_dict()


def test_track_file_roundtrip(tmp_path):
    tracks, _ = clean_tracks(_grid_pings("u1", 150) + _grid_pings("u2", 151))
    path = tmp_path / "tracks.ndjson"
    write_tracks(tracks, path)
    back = read_tracks(path)
    assert list(back) == ["u1", "u2"]
    for uid in tracks:
        assert np.array_equal(back[uid].t, tracks[uid].t)
        assert np.array_equal(back[uid].e, tracks[uid].e)
        assert np.array_equal(back[uid].n, tracks[uid].n)


def test_csv_ingest_counts_bad_lines(tmp_path):
    path = tmp_path / "pings.csv"
    path.write_text("user_id,ts,lat,lon,acc\n"
                    "u1,1663000000,27.9,-82.4,high\n"
                    "u1,notanumber,27.9,-82.4,high\n"
                    "u1,1663000060,91.0,-82.4,high\n"
                    "u1,1663000120,27.9,-82.4,high\n")
    tracks, report = ingest_files([path], "csv", min_points=1)
    assert report.read == 4
    assert report.malformed == 2
    assert len(tracks["u1"]) == 2
