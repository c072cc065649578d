"""Synthetic LBSN corpora with planted geo-social structure.

Users live in regions, belong to small friend groups that share a pool of
POIs, and revisit a handful of personal POIs.  Later check-ins of a user
tend to hit group POIs that friends visited earlier, which is the signal the
social component is meant to exploit.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import write_checkins, write_friendships

DAY = 86400.0
EPOCH0 = 1262304000.0  # 2010-01-01


@dataclass(frozen=True)
class CorpusSpec:
    n_users: int = 200
    users_per_region: int = 67
    pois_per_region: int = 150
    group_size: tuple = (4, 7)
    group_pois: int = 12
    personal_pois: int = 6
    checkins: tuple = (40, 80)
    p_personal: float = 0.45
    p_group: float = 0.4
    group_edge_prob: float = 0.85
    noise_edges_per_user: float = 0.1
    late_joiner_frac: float = 0.05
    poi_spread_deg: float = 0.05
    seed: int = 0


GOWALLA_LIKE = CorpusSpec(n_users=5628, users_per_region=30, pois_per_region=170, group_pois=25,
                          personal_pois=15, checkins=(60, 160))


def make_corpus(spec: CorpusSpec = CorpusSpec()) -> tuple[list, list]:
    """Return ``(checkin_rows, friend_pairs)`` with string ids and epoch times."""
    rng = np.random.default_rng(spec.seed)
    n_regions = max(1, int(np.ceil(spec.n_users / spec.users_per_region)))
    centers = np.column_stack([rng.uniform(-50, 60, n_regions), rng.uniform(-170, 170, n_regions)])
    n_poi = n_regions * spec.pois_per_region
    poi_region = np.repeat(np.arange(n_regions), spec.pois_per_region)
    poi_xy = centers[poi_region] + rng.normal(0, spec.poi_spread_deg, size=(n_poi, 2))
    poi_xy[:, 0] = np.clip(poi_xy[:, 0], -89.9, 89.9)
    poi_xy[:, 1] = np.clip(poi_xy[:, 1], -179.9, 179.9)
    pop = 1.0 / np.arange(1, spec.pois_per_region + 1) ** 0.8
    pop /= pop.sum()

    user_region = np.sort(rng.integers(0, n_regions, spec.n_users))
    rows, pairs = [], []
    for r in range(n_regions):
        members = np.flatnonzero(user_region == r)
        region_pois = np.flatnonzero(poi_region == r)
        i = 0
        while i < len(members):
            size = int(rng.integers(spec.group_size[0], spec.group_size[1] + 1))
            group = members[i:i + size]
            i += size
            gpois = rng.choice(region_pois, size=min(spec.group_pois, len(region_pois)), replace=False, p=pop)
            g_start = EPOCH0 + rng.uniform(0, 60) * DAY
            for a in range(len(group)):
                for b in range(a + 1, len(group)):
                    if rng.random() < spec.group_edge_prob:
                        pairs.append((f"u{group[a]}", f"u{group[b]}"))
            for u in group:
                personal = rng.choice(region_pois, size=min(spec.personal_pois, len(region_pois)),
                                      replace=False, p=pop)
                c = int(rng.integers(spec.checkins[0], spec.checkins[1] + 1))
                start = g_start + rng.uniform(0, 10) * DAY
                if rng.random() < spec.late_joiner_frac:
                    start += 400 * DAY
                times = np.sort(start + rng.uniform(0, 300 * DAY, c))
                src = rng.random(c)
                for t, s in zip(times, src):
                    if s < spec.p_personal:
                        p = rng.choice(personal)
                    elif s < spec.p_personal + spec.p_group:
                        p = rng.choice(gpois)
                    else:
                        p = rng.choice(region_pois, p=pop)
                    rows.append((f"u{u}", f"p{p}", poi_xy[p, 0], poi_xy[p, 1], t))
    n_noise = int(spec.noise_edges_per_user * spec.n_users)
    for _ in range(n_noise):
        a, b = rng.integers(0, spec.n_users, 2)
        if a != b:
            pairs.append((f"u{a}", f"u{b}"))
    return rows, pairs


def write_corpus(directory: str, spec: CorpusSpec = CorpusSpec()) -> tuple[str, str]:
    os.makedirs(directory, exist_ok=True)
    rows, pairs = make_corpus(spec)
    ck = os.path.join(directory, "checkins.tsv")
    fr = os.path.join(directory, "friendships.tsv")
    write_checkins(ck, rows)
    write_friendships(fr, pairs)
    return ck, fr
