import math

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_track
from evacflow.staypoints import (extract_activities, read_activities,
                                 write_activities)

E0, N0 = 400000.0, 3000000.0


def test_three_close_pings_one_activity():
    tr = make_track("u", [(0, E0, N0), (180, E0 + 6.0, N0 + 8.0),
                          (360, E0 + 3.0, N0 + 4.0)])
    acts = extract_activities(tr)
    assert len(acts) == 1
    a = acts[0]
    assert a.start == 0 and a.end == 360 and a.duration == 360
    assert a.n_points == 3


def test_fast_mover_yields_nothing():
    pts = [(30 * i, E0 + 150.0 * i, N0) for i in range(40)]
    assert extract_activities(make_track("u", pts)) == []


def test_two_stays_with_jump():
    # hand-traced sequential pass: 10 co-located pings over an hour, a 5 km
    # jump closes the first cluster (kept, duration 3600 >= 300), the jump
    # ping seeds the second cluster which also spans an hour and is kept at
    # the end of the pass.
    pts = [(400 * i, E0, N0) for i in range(10)]                 # 0..3600
    pts += [(4000 + 400 * i, E0 + 5000.0, N0) for i in range(10)]  # 4000..7600
    acts = extract_activities(make_track("u", pts))
    assert len(acts) == 2
    assert acts[0].start == 0 and acts[0].end == 3600
    assert acts[0].centroid_e == E0 and acts[0].n_points == 10
    assert acts[1].start == 4000 and acts[1].end == 7600
    assert acts[1].centroid_e == E0 + 5000.0


def test_short_visit_between_stays_discarded():
    pts = [(400 * i, E0, N0) for i in range(10)]
    pts += [(3700, E0 + 5000.0, N0)]                # lone fly-over point
    pts += [(4000 + 400 * i, E0 + 10000.0, N0) for i in range(10)]
    acts = extract_activities(make_track("u", pts))
    assert len(acts) == 2
    assert [a.centroid_e for a in acts] == [E0, E0 + 10000.0]


def test_exact_five_minutes_kept():
    tr = make_track("u", [(0, E0, N0), (300, E0, N0), (301, E0 + 9000.0, N0)])
    acts = extract_activities(tr)
    assert len(acts) == 1
    assert acts[0].duration == 300


def test_just_under_five_minutes_dropped():
    tr = make_track("u", [(0, E0, N0), (299, E0, N0), (301, E0 + 9000.0, N0)])
    assert extract_activities(make_track("u", [(0, E0, N0), (299, E0, N0)])) \
        == []
    assert extract_activities(tr) == []


def test_checkpoint_concatenation_stability():
    first = [(400 * i, E0, N0) for i in range(10)]
    second = [(4000 + 400 * i, E0 + 5000.0, N0) for i in range(10)]
    whole = extract_activities(make_track("u", first + second))
    split = (extract_activities(make_track("u", first))
             + extract_activities(make_track("u", second)))
    assert whole == split


def test_csv_roundtrip(tmp_path):
    pts = [(400 * i, E0 + 0.1 * i, N0 + 0.2 * i) for i in range(10)]
    acts = {"u": extract_activities(make_track("u", pts))}
    path = tmp_path / "acts.csv"
    write_activities(acts, path)
    back = read_activities(path)
    assert back == acts


track_strategy = st.lists(
    st.tuples(st.integers(0, 50_000),
              st.floats(-2000.0, 2000.0),
              st.floats(-2000.0, 2000.0)),
    min_size=1, max_size=80,
).map(lambda pts: sorted(pts, key=lambda p: p[0]))


@settings(max_examples=300, deadline=None)
@given(pts=track_strategy)
def test_duration_and_count_invariants(pts):
    tr = make_track("u", [(t, E0 + de, N0 + dn) for t, de, dn in pts])
    acts = extract_activities(tr)
    assert len(acts) <= len(pts)
    last_start = None
    for a in acts:
        assert a.duration >= 300
        assert a.n_points >= 1
        if last_start is not None:
            assert a.start >= last_start
        last_start = a.start


def _replay_reference(t, e, n, radius=100.0, min_duration=300):
    """Straight-line re-derivation of the sequential pass, kept independent
    of the package implementation; every member must sit under `radius`
    from the centroid as it stood at its insertion moment."""
    acts = []
    cluster = [0]
    for i in range(1, len(t)):
        ce = sum(e[j] for j in cluster) / len(cluster)
        cn = sum(n[j] for j in cluster) / len(cluster)
        if math.hypot(e[i] - ce, n[i] - cn) < radius:
            cluster.append(i)
        else:
            if t[cluster[-1]] - t[cluster[0]] >= min_duration:
                acts.append(cluster)
            cluster = [i]
    if t[cluster[-1]] - t[cluster[0]] >= min_duration:
        acts.append(cluster)
    return acts


@settings(max_examples=300, deadline=None)
@given(pts=track_strategy)
def test_matches_independent_replay(pts):
    tr = make_track("u", [(t, E0 + de, N0 + dn) for t, de, dn in pts])
    got = extract_activities(tr)
    t, e, n = tr.t.tolist(), tr.e.tolist(), tr.n.tolist()
    expected = _replay_reference(t, e, n)
    assert len(got) == len(expected)
    for a, members in zip(got, expected):
        assert a.start == t[members[0]]
        assert a.end == t[members[-1]]
        assert a.n_points == len(members)
        assert math.isclose(a.centroid_e,
                            sum(e[j] for j in members) / len(members),
                            rel_tol=0, abs_tol=1e-6)
        # every member joined while under the insertion radius
        for k, j in enumerate(members[1:], start=1):
            ce = sum(e[m] for m in members[:k]) / k
            cn = sum(n[m] for m in members[:k]) / k
            assert math.hypot(e[j] - ce, n[j] - cn) < 100.0
