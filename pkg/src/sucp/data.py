"""Check-in ingestion, preprocessing, chronological splitting and friendship filtering.

Logs are columnar: every ``CheckInLog`` holds parallel numpy arrays of user
index, POI index, coordinates and timestamps.  The three parts of a split
share one user/POI index so matrices built from them line up.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

_USER_KEYS = {"user", "user_id", "userid", "uid"}
_POI_KEYS = {"poi", "poi_id", "location", "location_id", "locid", "lid", "venue", "venue_id", "business_id"}
_LAT_KEYS = {"lat", "latitude"}
_LON_KEYS = {"lon", "lng", "long", "longitude"}
_TIME_KEYS = {"timestamp", "time", "ts", "checkin_time", "check-in time", "datetime", "date"}
_ALL_KEYS = _USER_KEYS | _POI_KEYS | _LAT_KEYS | _LON_KEYS | _TIME_KEYS


class DataError(ValueError):
    """Raised for unusable input data."""


@dataclass(frozen=True)
class CheckIn:
    user_id: str
    poi_id: str
    lat: float
    lon: float
    timestamp: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")
        if not self.timestamp > 0:
            raise ValueError(f"timestamp must be positive: {self.timestamp}")


@dataclass(frozen=True, eq=False)
class CheckInLog:
    """Columnar check-in log with dense user/POI indices.

    ``users``/``pois`` index into ``user_ids``/``poi_ids``; ``poi_coords`` is
    ``(n, 2)`` lat/lon per POI index.  ``skipped`` counts rejected input rows.
    """

    users: np.ndarray
    pois: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    timestamps: np.ndarray
    user_ids: tuple
    poi_ids: tuple
    poi_coords: np.ndarray
    skipped: int = 0
    _user_index: dict = field(default=None, repr=False)
    _poi_index: dict = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("users", "pois", "lat", "lon", "timestamps"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        self.poi_coords.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.user_ids)

    @property
    def n(self) -> int:
        return len(self.poi_ids)

    def __len__(self) -> int:
        return len(self.users)

    @property
    def user_index(self) -> dict:
        if self._user_index is None:
            object.__setattr__(self, "_user_index", {u: i for i, u in enumerate(self.user_ids)})
        return self._user_index

    @property
    def poi_index(self) -> dict:
        if self._poi_index is None:
            object.__setattr__(self, "_poi_index", {p: i for i, p in enumerate(self.poi_ids)})
        return self._poi_index

    def __iter__(self) -> Iterator[CheckIn]:
        for k in range(len(self)):
            yield CheckIn(
                self.user_ids[self.users[k]],
                self.poi_ids[self.pois[k]],
                float(self.lat[k]),
                float(self.lon[k]),
                float(self.timestamps[k]),
            )

    def subset(self, mask_or_idx) -> "CheckInLog":
        """Rows selected by a boolean mask or index array; indices are kept."""
        sel = np.asarray(mask_or_idx)
        return CheckInLog(
            self.users[sel].copy(),
            self.pois[sel].copy(),
            self.lat[sel].copy(),
            self.lon[sel].copy(),
            self.timestamps[sel].copy(),
            self.user_ids,
            self.poi_ids,
            self.poi_coords,
            _user_index=self._user_index,
            _poi_index=self._poi_index,
        )

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.m)

    def poi_counts(self) -> np.ndarray:
        return np.bincount(self.pois, minlength=self.n)

    def rows_by_user(self) -> list[np.ndarray]:
        """Row positions of each user's check-ins, in input order."""
        order = np.argsort(self.users, kind="stable")
        bounds = np.searchsorted(self.users[order], np.arange(self.m + 1))
        return [order[bounds[u]:bounds[u + 1]] for u in range(self.m)]


@dataclass(frozen=True, eq=False)
class FriendshipEdgeList:
    """Undirected friendships as an ``(E, 2)`` array of user indices with ``a < b``."""

    edges: np.ndarray
    skipped: int = 0

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if len(e) else e
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    def __len__(self) -> int:
        return len(self.edges)

    def pairs(self) -> set:
        return {(int(a), int(b)) for a, b in self.edges}

    def adjacency(self, m: int) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix over ``m`` users."""
        if len(self.edges) == 0:
            return sp.csr_matrix((m, m))
        a, b = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([a, b])
        cols = np.concatenate([b, a])
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))


@dataclass(frozen=True)
class DatasetSplit:
    train: CheckInLog
    valid: CheckInLog
    test: CheckInLog

    @property
    def m(self) -> int:
        return self.train.m

    @property
    def n(self) -> int:
        return self.train.n


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Sparse user x POI check-in counts."""

    csr: sp.csr_matrix

    @property
    def shape(self) -> tuple:
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def sparsity(self) -> float:
        m, n = self.csr.shape
        return 1.0 - self.csr.nnz / float(m * n)

    def total(self) -> float:
        return float(self.csr.sum())

    def visited(self, u: int) -> np.ndarray:
        """POI indices in L_u."""
        return self.csr.indices[self.csr.indptr[u]:self.csr.indptr[u + 1]]

    def row_normalized(self) -> sp.csr_matrix:
        """Each user's row divided by its sum; empty rows stay empty."""
        sums = np.asarray(self.csr.sum(axis=1)).ravel()
        inv = np.divide(1.0, sums, out=np.zeros_like(sums, dtype=float), where=sums > 0)
        return sp.csr_matrix(sp.diags(inv) @ self.csr)

    def poi_totals(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=0)).ravel()

    def __getitem__(self, key):
        return self.csr[key]


# --------------------------------------------------------------------------
# ingestion

def parse_timestamp(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _sniff_delimiter(line: str) -> str:
    return "\t" if line.count("\t") >= line.count(",") and "\t" in line else ","


def _read_rows(path: str) -> Iterator[list[str]]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            return
        delim = _sniff_delimiter(first)
        fh.seek(0)
        for row in csv.reader(fh, delimiter=delim):
            if row and any(c.strip() for c in row):
                yield [c.strip() for c in row]


def _checkin_columns(header: list[str]) -> tuple | None:
    """Column positions (user, poi, lat, lon, time) if ``header`` is a header row."""
    keys = [h.lower() for h in header]
    named = [k in _ALL_KEYS for k in keys]
    if not any(named):
        return None
    cols = []
    for group in (_USER_KEYS, _POI_KEYS, _LAT_KEYS, _LON_KEYS, _TIME_KEYS):
        hit = [i for i, k in enumerate(keys) if k in group]
        if not hit:
            raise DataError(f"malformed header: {header!r}")
        cols.append(hit[0])
    return tuple(cols)


def ingest(checkin_path: str, friendship_path: str | None = None) -> tuple[CheckInLog, FriendshipEdgeList]:
    """Read a check-in file and an optional friendship file.

    Check-in rows are ``user, poi, lat, lon, time`` (epoch seconds or ISO
    8601) unless a header row names the columns.  Invalid rows are skipped and
    counted in ``CheckInLog.skipped``.
    """
    cols = (0, 1, 2, 3, 4)
    user_index: dict = {}
    poi_index: dict = {}
    poi_coords: list = []
    users, pois, lats, lons, times = [], [], [], [], []
    skipped = 0
    for k, row in enumerate(_read_rows(checkin_path)):
        if k == 0:
            hdr = _checkin_columns(row)
            if hdr is not None:
                cols = hdr
                continue
        try:
            u, p = row[cols[0]], row[cols[1]]
            c = CheckIn(u, p, float(row[cols[2]]), float(row[cols[3]]), parse_timestamp(row[cols[4]]))
            if not (u and p) or not (math.isfinite(c.lat) and math.isfinite(c.lon)):
                raise ValueError("empty id or non-finite coordinate")
        except (IndexError, ValueError):
            skipped += 1
            continue
        ui = user_index.setdefault(u, len(user_index))
        pi = poi_index.get(p)
        if pi is None:
            pi = poi_index[p] = len(poi_index)
            poi_coords.append((c.lat, c.lon))
        users.append(ui)
        pois.append(pi)
        lats.append(c.lat)
        lons.append(c.lon)
        times.append(c.timestamp)
    if not users:
        raise DataError(f"zero valid rows in {checkin_path}")
    if skipped:
        log.warning("skipped %d invalid check-in rows in %s", skipped, checkin_path)
    ck = CheckInLog(
        np.array(users, dtype=np.int64),
        np.array(pois, dtype=np.int64),
        np.array(lats, dtype=float),
        np.array(lons, dtype=float),
        np.array(times, dtype=float),
        tuple(user_index),
        tuple(poi_index),
        np.array(poi_coords, dtype=float).reshape(-1, 2),
        skipped=skipped,
    )

    edges = []
    fskipped = 0
    if friendship_path is not None:
        for k, row in enumerate(_read_rows(friendship_path)):
            if len(row) < 2:
                fskipped += 1
                continue
            a, b = user_index.get(row[0]), user_index.get(row[1])
            if a is None or b is None:
                if k == 0 and row[0].lower() in _USER_KEYS | {"user1", "user_a", "u1"}:
                    continue
                fskipped += 1
                continue
            if a != b:
                edges.append((a, b))
    return ck, FriendshipEdgeList(np.array(edges, dtype=np.int64).reshape(-1, 2), skipped=fskipped)


def reindex(log_: CheckInLog, keep_rows: np.ndarray) -> tuple[CheckInLog, np.ndarray]:
    """Keep ``keep_rows`` and compact user/POI indices.

    Returns the new log and an old->new user map (-1 for dropped users).
    """
    users = log_.users[keep_rows]
    pois = log_.pois[keep_rows]
    kept_u = np.unique(users)
    kept_p = np.unique(pois)
    umap = np.full(log_.m, -1, dtype=np.int64)
    umap[kept_u] = np.arange(len(kept_u))
    pmap = np.full(log_.n, -1, dtype=np.int64)
    pmap[kept_p] = np.arange(len(kept_p))
    new = CheckInLog(
        umap[users],
        pmap[pois],
        log_.lat[keep_rows].copy(),
        log_.lon[keep_rows].copy(),
        log_.timestamps[keep_rows].copy(),
        tuple(log_.user_ids[i] for i in kept_u),
        tuple(log_.poi_ids[i] for i in kept_p),
        log_.poi_coords[kept_p].copy(),
        skipped=log_.skipped,
    )
    return new, umap


def remap_edges(edges: FriendshipEdgeList, umap: np.ndarray) -> FriendshipEdgeList:
    if len(edges) == 0:
        return FriendshipEdgeList(edges.edges, skipped=edges.skipped)
    e = umap[edges.edges]
    e = e[(e >= 0).all(axis=1)]
    return FriendshipEdgeList(e, skipped=edges.skipped)


def preprocess(log_: CheckInLog, edges: FriendshipEdgeList,
               min_user_checkins: int = 15, min_poi_checkins: int = 10) -> tuple[CheckInLog, FriendshipEdgeList]:
    """Drop sparse users and POIs until both thresholds hold simultaneously."""
    if min_user_checkins < 1 or min_poi_checkins < 1:
        raise ValueError("thresholds must be >= 1")
    keep = np.ones(len(log_), dtype=bool)
    while True:
        uc = np.bincount(log_.users[keep], minlength=log_.m)
        pc = np.bincount(log_.pois[keep], minlength=log_.n)
        bad = keep & ((uc[log_.users] < min_user_checkins) | (pc[log_.pois] < min_poi_checkins))
        if not bad.any():
            break
        keep &= ~bad
    if not keep.any():
        raise DataError("preprocessing removed all check-ins")
    if keep.all():
        return log_, edges
    new, umap = reindex(log_, np.flatnonzero(keep))
    return new, remap_edges(edges, umap)


# --------------------------------------------------------------------------
# splitting

def _ceil_count(frac: float, c: int) -> int:
    # guard against 0.7 * 10 = 7.000000000000001
    return int(math.ceil(round(frac * c, 9)))


def chronological_order(log_: CheckInLog) -> list[np.ndarray]:
    """Per user, row positions sorted by (timestamp, POI index, input order)."""
    out = []
    for rows in log_.rows_by_user():
        order = np.lexsort((rows, log_.pois[rows], log_.timestamps[rows]))
        out.append(rows[order])
    return out


def chronological_split(log_: CheckInLog, train_frac: float = 0.7, valid_frac: float = 0.1) -> DatasetSplit:
    """Per-user chronological split: earliest check-ins train, latest test.

    Train and valid sizes are ceilings of their fractions; test takes the
    remainder, so short histories can leave test (or valid) empty.
    """
    if not (0 < train_frac and 0 <= valid_frac and train_frac + valid_frac < 1):
        raise ValueError("need 0 < train_frac, 0 <= valid_frac, train_frac + valid_frac < 1")
    parts = ([], [], [])
    short = 0
    for rows in chronological_order(log_):
        c = len(rows)
        if c == 0:
            continue
        n_tr = min(c, _ceil_count(train_frac, c))
        n_va = min(c - n_tr, _ceil_count(valid_frac, c))
        if c - n_tr - n_va == 0 or (valid_frac > 0 and n_va == 0):
            short += 1
        parts[0].append(rows[:n_tr])
        parts[1].append(rows[n_tr:n_tr + n_va])
        parts[2].append(rows[n_tr + n_va:])
    if short:
        log.warning("%d users too short for a nonempty part in every split", short)
    train, valid, test = (log_.subset(np.concatenate(p).astype(np.int64)) for p in parts)
    return DatasetSplit(train, valid, test)


def _user_times(log_: CheckInLog) -> list[np.ndarray]:
    return [np.sort(log_.timestamps[r]) for r in log_.rows_by_user()]


class _OverlapIndex:
    """Per-user sorted timestamps for fast training-overlap queries."""

    def __init__(self, split: DatasetSplit):
        tr = _user_times(split.train)
        allt = [np.sort(np.concatenate(ts)) for ts in zip(tr, _user_times(split.valid), _user_times(split.test))]
        self.train_end = np.array([t[-1] if len(t) else -np.inf for t in tr])
        self.all_times = allt

    def overlap(self, u1: int, u2: int) -> float:
        t1, t2 = self.all_times[u1], self.all_times[u2]
        total = len(t1) + len(t2)
        if total == 0 or len(t1) == 0 or len(t2) == 0:
            return 0.0
        cutoff = min(self.train_end[u1], self.train_end[u2])
        before = np.searchsorted(t1, cutoff, side="right") + np.searchsorted(t2, cutoff, side="right")
        return float(before) / total


def training_overlap(u1: int, u2: int, split: DatasetSplit) -> float:
    """Share of two users' check-ins dated no later than the earlier training end."""
    return _OverlapIndex(split).overlap(u1, u2)


def training_overlaps(edges: FriendshipEdgeList, split: DatasetSplit) -> np.ndarray:
    idx = _OverlapIndex(split)
    return np.array([idx.overlap(int(a), int(b)) for a, b in edges.edges], dtype=float)


def filter_friendships_by_overlap(edges: FriendshipEdgeList, split: DatasetSplit,
                                  threshold: float) -> FriendshipEdgeList:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    if threshold == 0.0 or len(edges) == 0:
        return edges
    ov = training_overlaps(edges, split)
    return FriendshipEdgeList(edges.edges[ov >= threshold], skipped=edges.skipped)


def subsample_training(split: DatasetSplit, fraction: float, seed: int = 0) -> DatasetSplit:
    """Keep ``ceil(fraction * c)`` random training check-ins per user."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return split
    rng = np.random.default_rng(seed)
    kept = []
    for rows in split.train.rows_by_user():
        c = len(rows)
        if c == 0:
            continue
        k = _ceil_count(fraction, c)
        kept.append(np.sort(rng.choice(rows, size=k, replace=False)))
    train = split.train.subset(np.sort(np.concatenate(kept)))
    return DatasetSplit(train, split.valid, split.test)


def build_interaction_matrix(log_: CheckInLog) -> InteractionMatrix:
    if len(log_) == 0 and log_.m == 0:
        raise DataError("empty log")
    data = np.ones(len(log_), dtype=float)
    csr = sp.csr_matrix((data, (log_.users, log_.pois)), shape=(log_.m, log_.n))
    csr.sum_duplicates()
    csr.sort_indices()
    return InteractionMatrix(csr)


def write_manifest(path: str, items: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for k in sorted(items):
            fh.write(f"{k} = {items[k]}\n")
    os.replace(tmp, path)


def read_manifest(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def write_checkins(path: str, rows: Sequence[tuple]) -> None:
    """Write ``(user, poi, lat, lon, epoch)`` rows as tab-separated text."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, p, la, lo, t in rows:
            fh.write(f"{u}\t{p}\t{la:.6f}\t{lo:.6f}\t{int(t)}\n")


def write_friendships(path: str, pairs: Sequence[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in pairs:
            fh.write(f"{a}\t{b}\n")
