import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sucp import data
from sucp.data import (CheckIn, DataError, FriendshipEdgeList, build_interaction_matrix, chronological_split,
                       filter_friendships_by_overlap, ingest, parse_timestamp, preprocess, subsample_training,
                       training_overlap, training_overlaps)

from conftest import DAY, T0, make_log, split_by_part


def write(path, text):
    path.write_text(text)
    return str(path)


# -- ingest ------------------------------------------------------------------

def test_ingest_skips_out_of_range_rows(tmp_path):
    ck = write(tmp_path / "c.tsv", "a\tx\t1.0\t2.0\t100\n"
                                   "a\ty\t200\t2.0\t101\n"
                                   "b\tx\t1.0\t2.0\t102\n"
                                   "b\tz\t3.0\t4.0\t103\n")
    log_, edges = ingest(ck)
    assert len(log_) == 3
    assert log_.skipped == 1
    assert log_.m == 2 and log_.n == 2
    assert len(edges) == 0


def test_ingest_empty_file(tmp_path):
    with pytest.raises(DataError, match="zero valid rows"):
        ingest(write(tmp_path / "c.tsv", ""))


def test_ingest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest(str(tmp_path / "nope.tsv"))


def test_ingest_header_and_iso_times(tmp_path):
    ck = write(tmp_path / "c.csv", "lat,lng,user_id,venue_id,timestamp\n"
                                   "10.0,20.0,u1,v1,2011-01-01T00:00:00Z\n"
                                   "10.5,20.5,u2,v2,2011-01-01 00:00:10\n")
    log_, _ = ingest(ck)
    assert log_.user_ids == ("u1", "u2")
    assert log_.timestamps.tolist() == [T0, T0 + 10]
    assert log_.poi_coords.tolist() == [[10.0, 20.0], [10.5, 20.5]]


def test_ingest_malformed_header(tmp_path):
    with pytest.raises(DataError, match="malformed header"):
        ingest(write(tmp_path / "c.csv", "user,poi,lat\nu,p,1\n"))


def test_ingest_friendships(tmp_path):
    ck = write(tmp_path / "c.tsv", "a\tx\t1\t1\t100\nb\tx\t1\t1\t100\nc\tx\t1\t1\t100\n")
    fr = write(tmp_path / "f.tsv", "a\ta\na\tb\nb\ta\nb\tc\nc\tzzz\nbroken\n")
    _, edges = ingest(ck, fr)
    assert edges.pairs() == {(0, 1), (1, 2)}
    assert edges.skipped == 2


def test_poi_coords_come_from_first_occurrence(tmp_path):
    ck = write(tmp_path / "c.tsv", "a\tx\t1\t1\t100\nb\tx\t1.5\t1\t101\n")
    log_, _ = ingest(ck)
    assert log_.poi_coords.tolist() == [[1.0, 1.0]]
    assert log_.lat.tolist() == [1.0, 1.5]


def test_parse_timestamp():
    assert parse_timestamp("1293840000") == T0
    assert parse_timestamp("2011-01-01T01:00:00+01:00") == T0
    with pytest.raises(ValueError):
        parse_timestamp("yesterday")


@pytest.mark.parametrize("lat,lon,ts", [(91, 0, 1), (0, -181, 1), (0, 0, 0), (0, 0, -5)])
def test_checkin_rejects_bad_values(lat, lon, ts):
    with pytest.raises(ValueError):
        CheckIn("u", "p", lat, lon, ts)


def test_edges_normalized():
    e = FriendshipEdgeList(np.array([[2, 1], [1, 2], [3, 3], [0, 4]]))
    assert e.edges.tolist() == [[0, 4], [1, 2]]


def test_log_iterates_checkins():
    log_ = make_log([("a", "p0", T0), ("b", "p1", T0 + 1)])
    got = list(log_)
    assert got[1] == CheckIn("b", "p1", 0.0, 0.01, T0 + 1)


# -- preprocess --------------------------------------------------------------

def _random_log(rng, m=12, n=8, c=80):
    rows = [(f"u{rng.integers(m)}", f"p{rng.integers(n)}", T0 + rng.integers(0, 10**6)) for _ in range(c)]
    return make_log(rows)


def test_preprocess_noop_thresholds():
    log_ = _random_log(np.random.default_rng(0))
    e = FriendshipEdgeList(np.array([[0, 1]]))
    out, oe = preprocess(log_, e, 1, 1)
    assert out is log_ and oe is e


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 6))
def test_preprocess_reaches_fixed_point(seed, mu, mp):
    rng = np.random.default_rng(seed)
    log_ = _random_log(rng)
    e = FriendshipEdgeList(rng.integers(0, log_.m, size=(10, 2)))
    try:
        out, oe = preprocess(log_, e, mu, mp)
    except DataError:
        return
    assert out.user_counts().min() >= mu
    assert out.poi_counts().min() >= mp
    assert (oe.edges < out.m).all()
    # surviving edges connect the same ids as before
    before = {(log_.user_ids[a], log_.user_ids[b]) for a, b in e.edges}
    after = {(out.user_ids[a], out.user_ids[b]) for a, b in oe.edges}
    assert after <= before


# -- split ---------------------------------------------------------------------

def _one_user(c):
    return make_log([("u", f"p{k}", T0 + k * DAY) for k in range(c)])


@pytest.mark.parametrize("c,expected", [(10, (7, 1, 2)), (4, (3, 1, 0)), (1, (1, 0, 0)), (20, (14, 2, 4))])
def test_split_sizes(c, expected):
    s = chronological_split(_one_user(c), 0.7, 0.1)
    assert (len(s.train), len(s.valid), len(s.test)) == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_split_is_chronological_per_user(seed):
    log_ = _random_log(np.random.default_rng(seed), c=120)
    s = chronological_split(log_)
    assert len(s.train) + len(s.valid) + len(s.test) == len(log_)
    for u in range(log_.m):
        tr = s.train.timestamps[s.train.users == u]
        va = s.valid.timestamps[s.valid.users == u]
        te = s.test.timestamps[s.test.users == u]
        if len(tr) and len(va):
            assert tr.max() <= va.min()
        if len(va) and len(te):
            assert va.max() <= te.min()
        if len(tr) and len(te):
            assert tr.max() <= te.min()
        c = (log_.users == u).sum()
        assert len(tr) == min(c, math.ceil(round(0.7 * c, 9)))


# -- training overlap ------------------------------------------------------------

def test_overlap_cutoff_is_earlier_training_end():
    jan = lambda d: T0 + (d - 1) * DAY  # noqa: E731
    rows = [("u1", "p0", jan(1), "train"), ("u1", "p0", jan(46), "train"),   # 2011-02-15
            ("u1", "p0", jan(60), "test"), ("u1", "p0", jan(70), "test"),
            ("u2", "p0", jan(10), "train"), ("u2", "p0", jan(40), "train"),
            ("u2", "p0", jan(108), "train"),                                  # 2011-04-18
            ("u2", "p0", jan(120), "test")]
    s = split_by_part(rows)
    # before 2011-02-15 inclusive: u1 has 2, u2 has 2, out of 8
    assert training_overlap(0, 1, s) == pytest.approx(4 / 8)


def test_overlap_full_when_everything_precedes_cutoff():
    rows = [("a", "p0", T0 + k, "train") for k in range(3)] + [("b", "p0", T0 + k, "train") for k in range(3)]
    assert training_overlap(0, 1, split_by_part(rows)) == 1.0


def test_overlap_late_joiner():
    rows = ([("a", "p0", T0 + k * DAY, "train") for k in range(7)]
            + [("a", "p0", T0 + (7 + k) * DAY, "test") for k in range(3)]
            + [("b", "p0", T0 + (50 + k) * DAY, "train") for k in range(7)]
            + [("b", "p0", T0 + (60 + k) * DAY, "test") for k in range(3)])
    s = split_by_part(rows)
    # cutoff is a's last training day; a contributes 7, b contributes 0, out of 20
    assert training_overlap(0, 1, s) == pytest.approx(7 / 20)


def _three_pairs():
    rows = []
    for pair, n_train in enumerate((2, 6, 9)):  # overlaps 0.2, 0.6, 0.9
        for u in (f"a{pair}", f"b{pair}"):
            rows += [(u, "p0", T0 + k * DAY, "train" if k < n_train else "test") for k in range(10)]
    edges = FriendshipEdgeList(np.array([[0, 1], [2, 3], [4, 5]]))
    return split_by_part(rows), edges


def test_filter_by_overlap():
    s, e = _three_pairs()
    np.testing.assert_allclose(training_overlaps(e, s), [0.2, 0.6, 0.9])
    assert filter_friendships_by_overlap(e, s, 0.0) is e
    assert filter_friendships_by_overlap(e, s, 0.5).pairs() == {(2, 3), (4, 5)}
    assert len(filter_friendships_by_overlap(e, s, 1.0)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_filter_monotone_in_threshold(seed):
    rng = np.random.default_rng(seed)
    s = chronological_split(_random_log(rng, c=150))
    e = FriendshipEdgeList(rng.integers(0, s.m, size=(25, 2)))
    counts = [len(filter_friendships_by_overlap(e, s, t / 10)) for t in range(11)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    kept = [filter_friendships_by_overlap(e, s, t / 10).pairs() for t in range(11)]
    assert all(b <= a for a, b in zip(kept, kept[1:]))


# -- subsampling and matrix ------------------------------------------------------

def test_subsample_counts_and_determinism():
    s = chronological_split(_one_user(15))
    assert len(s.train) == 11
    assert subsample_training(s, 1.0, 0) is s
    a = subsample_training(s, 0.4, 3)
    b = subsample_training(s, 0.4, 3)
    assert len(a.train) == 5
    assert a.train.timestamps.tobytes() == b.train.timestamps.tobytes()
    assert a.test is s.test


def test_subsample_ten_keeps_four():
    s = split_by_part([("u", f"p{k}", T0 + k, "train") for k in range(10)] + [("u", "p0", T0 + 99, "test")])
    assert len(subsample_training(s, 0.4, 0).train) == 4


def test_interaction_matrix():
    log_ = make_log([("u", "p0", T0), ("u", "p0", T0 + 1), ("u", "p0", T0 + 2), ("v", "p1", T0)])
    R = build_interaction_matrix(log_)
    assert R.nnz == 2
    assert R.csr[0, 0] == 3
    assert R.total() == len(log_)
    assert R.sparsity == pytest.approx(0.5)
    assert R.visited(1).tolist() == [1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_interaction_matrix_conserves_checkins(seed):
    log_ = _random_log(np.random.default_rng(seed))
    R = build_interaction_matrix(log_)
    assert R.total() == len(log_)
    assert (R.csr.data > 0).all()
    rn = R.row_normalized()
    np.testing.assert_allclose(np.asarray(rn.sum(axis=1)).ravel(), 1.0)


def test_manifest_roundtrip(tmp_path):
    p = str(tmp_path / "m.txt")
    data.write_manifest(p, {"users": 3, "sparsity": "0.5"})
    assert data.read_manifest(p) == {"users": "3", "sparsity": "0.5"}
    assert not os.path.exists(p + ".tmp")
