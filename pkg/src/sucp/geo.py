"""Activity centers and the distance-weighted temporal-center score."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .data import CheckInLog

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90 <= self.lat <= 90 and -180 <= self.lon <= 180):
            raise ValueError(f"invalid coordinate ({self.lat}, {self.lon})")


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km; broadcasts over numpy arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


@dataclass(frozen=True)
class TemporalState:
    """A set of (weekday, hour) cells; weekday 0 is Monday, times are UTC."""

    name: str
    days: frozenset = frozenset(range(7))
    hours: tuple = (0, 24)

    def cells(self) -> set:
        h0, h1 = self.hours
        hrs = range(h0, h1) if h0 < h1 else list(range(h0, 24)) + list(range(0, h1))
        return {(d, h) for d in self.days for h in hrs}


WEEKDAY_WEEKEND = (
    TemporalState("weekday", frozenset(range(5))),
    TemporalState("weekend", frozenset({5, 6})),
)
SINGLE_STATE = (TemporalState("all"),)


def parse_states(text: str) -> tuple:
    """Parse ``name:days[:h0-h1];...`` e.g. ``weekday:0-4;weekend:5-6``."""
    states = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = chunk.split(":")
        name = parts[0]
        days = frozenset(range(7))
        hours = (0, 24)
        if len(parts) > 1 and parts[1]:
            days = frozenset(_parse_range(parts[1], 7))
        if len(parts) > 2 and parts[2]:
            h0, h1 = parts[2].split("-")
            hours = (int(h0), int(h1))
        states.append(TemporalState(name, days, hours))
    return tuple(states)


def _parse_range(text: str, top: int) -> list:
    out = []
    for piece in text.split(","):
        if "-" in piece:
            a, b = piece.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(piece))
    if any(not 0 <= x < top for x in out):
        raise ValueError(f"value out of range in {text!r}")
    return out


def format_states(states) -> str:
    return ";".join(
        f"{s.name}:{','.join(str(d) for d in sorted(s.days))}:{s.hours[0]}-{s.hours[1]}" for s in states
    )


def validate_states(states) -> None:
    """Reject state sets that overlap or leave some (day, hour) uncovered."""
    if not states:
        raise ValueError("no temporal states")
    seen: set = set()
    for s in states:
        c = s.cells()
        if seen & c:
            raise ValueError(f"temporal state {s.name!r} overlaps another state")
        seen |= c
    if len(seen) != 7 * 24:
        raise ValueError("temporal states do not cover every weekday/hour")
    if len({s.name for s in states}) != len(states):
        raise ValueError("duplicate temporal state names")


@dataclass(frozen=True)
class GeoConfig:
    d_km: float = 15.0
    epsilon_km: float = 0.1
    states: tuple = WEEKDAY_WEEKEND
    top_center_only: bool = False

    def __post_init__(self):
        if not (self.d_km > 0 and self.epsilon_km > 0 and self.epsilon_km < self.d_km):
            raise ValueError("need 0 < epsilon_km < d_km")
        validate_states(self.states)

    def state_table(self) -> np.ndarray:
        """``(7, 24)`` array mapping (weekday, hour) to state id."""
        tab = np.full((7, 24), -1, dtype=np.int64)
        for i, s in enumerate(self.states):
            for d, h in s.cells():
                tab[d, h] = i
        return tab


def assign_temporal_state(ts: float, cfg: GeoConfig) -> int:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    return int(cfg.state_table()[dt.weekday(), dt.hour])


def assign_states(timestamps: np.ndarray, cfg: GeoConfig) -> np.ndarray:
    """Vectorized ``assign_temporal_state``."""
    t = np.asarray(timestamps, dtype=np.int64)
    days = t // 86400
    weekday = (days + 3) % 7  # 1970-01-01 was a Thursday
    hour = (t % 86400) // 3600
    return cfg.state_table()[weekday, hour]


@dataclass(frozen=True)
class ActivityCenter:
    centroid: GeoPoint
    member_pois: frozenset
    freq: int
    state: int


@dataclass(frozen=True)
class ActivityCenterSet:
    user: int
    centers: tuple
    seeds: dict = field(default_factory=dict)  # state -> most frequent POI

    def by_state(self, state: int) -> list:
        return [c for c in self.centers if c.state == state]

    def arrays(self) -> tuple:
        """``(lat, lon, share)`` with each center's frequency share within its state."""
        if not self.centers:
            z = np.zeros(0)
            return z, z, z
        lat = np.array([c.centroid.lat for c in self.centers])
        lon = np.array([c.centroid.lon for c in self.centers])
        freq = np.array([c.freq for c in self.centers], dtype=float)
        st = np.array([c.state for c in self.centers])
        tot = np.zeros(st.max() + 1)
        np.add.at(tot, st, freq)
        return lat, lon, freq / tot[st]


def greedy_centers(pois: np.ndarray, freqs: np.ndarray, coords: np.ndarray, d_km: float,
                   state: int = 0, top_only: bool = False) -> list:
    """Frequency-greedy clustering of one user's visited POIs within one state."""
    order = np.lexsort((pois, -freqs))
    pois, freqs = pois[order], freqs[order]
    lat, lon = coords[pois, 0], coords[pois, 1]
    unassigned = np.ones(len(pois), dtype=bool)
    centers = []
    for i in range(len(pois)):
        if not unassigned[i]:
            continue
        near = unassigned & (haversine_km(lat[i], lon[i], lat, lon) <= d_km)
        near[i] = True
        unassigned &= ~near
        f = freqs[near].astype(float)
        centroid = GeoPoint(float(np.dot(f, lat[near]) / f.sum()), float(np.dot(f, lon[near]) / f.sum()))
        centers.append(ActivityCenter(centroid, frozenset(int(p) for p in pois[near]), int(f.sum()), state))
        if top_only:
            break
    return centers


def find_activity_centers(u: int, train: CheckInLog, cfg: GeoConfig) -> ActivityCenterSet:
    rows = np.flatnonzero(train.users == u)
    return _centers_for_rows(u, rows, train, assign_states(train.timestamps[rows], cfg) if len(rows) else
                             np.zeros(0, dtype=np.int64), cfg)


def _centers_for_rows(u, rows, train, states, cfg) -> ActivityCenterSet:
    centers, seeds = [], {}
    for s in range(len(cfg.states)):
        p = train.pois[rows[states == s]]
        if len(p) == 0:
            continue
        pois, freqs = np.unique(p, return_counts=True)
        cs = greedy_centers(pois, freqs, train.poi_coords, cfg.d_km, s, cfg.top_center_only)
        seeds[s] = int(pois[np.lexsort((pois, -freqs))[0]])
        centers.extend(cs)
    return ActivityCenterSet(u, tuple(centers), seeds)


def find_all_centers(train: CheckInLog, cfg: GeoConfig) -> list:
    states = assign_states(train.timestamps, cfg)
    return [_centers_for_rows(u, rows, train, states[rows], cfg) for u, rows in enumerate(train.rows_by_user())]


def tc_row(centers: ActivityCenterSet, poi_coords: np.ndarray, cfg: GeoConfig) -> np.ndarray:
    """Temporal-center score of every POI for one user."""
    lat, lon, share = centers.arrays()
    if len(share) == 0:
        return np.zeros(len(poi_coords))
    dist = haversine_km(lat[:, None], lon[:, None], poi_coords[None, :, 0], poi_coords[None, :, 1])
    return (share[:, None] / np.maximum(dist, cfg.epsilon_km)).sum(axis=0)


def temporal_center_score(u: int, l: int, centers: ActivityCenterSet, poi_coords: np.ndarray,
                          cfg: GeoConfig) -> float:
    lat, lon, share = centers.arrays()
    if len(share) == 0:
        return 0.0
    dist = haversine_km(lat, lon, poi_coords[l, 0], poi_coords[l, 1])
    return float((share / np.maximum(dist, cfg.epsilon_km)).sum())


def tc_block(users, all_centers: list, poi_coords: np.ndarray, cfg: GeoConfig) -> np.ndarray:
    return np.vstack([tc_row(all_centers[u], poi_coords, cfg) for u in users])


def export_centers(path: str, all_centers: list, user_ids, cfg: GeoConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cs in all_centers:
            for c in cs.centers:
                fh.write(f"{user_ids[cs.user]}\t{cfg.states[c.state].name}\t"
                         f"{c.centroid.lat:.6f}\t{c.centroid.lon:.6f}\t{c.freq}\n")
