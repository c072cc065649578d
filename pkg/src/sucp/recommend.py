"""Score fusion, top-N ranking and the popularity baseline."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import InteractionMatrix

VARIANTS = ("full", "no_social")


@dataclass(frozen=True)
class FusionConfig:
    epsilon: float = 1e-9
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class Recommendation:
    user: int
    pois: np.ndarray
    scores: np.ndarray
    short: bool = False

    def __len__(self) -> int:
        return len(self.pois)

    def __iter__(self):
        return iter(zip(self.pois.tolist(), self.scores.tolist()))


def fuse_scores(S, TC, Z, cfg: FusionConfig = FusionConfig()):
    """Product of smoothed factors; ``no_social`` drops the social factor."""
    eps = cfg.epsilon
    out = (np.asarray(TC) + eps) * (np.asarray(Z) + eps)
    if cfg.variant == "full":
        out = out * (np.asarray(S) + eps)
    return out if np.ndim(out) else float(out)


def rank_row(scores: np.ndarray, candidates: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Top ``n`` candidate indices by descending score, ties by ascending index."""
    idx = np.flatnonzero(candidates)
    if len(idx) == 0:
        return idx, np.zeros(0)
    s = scores[idx]
    if len(idx) > n:
        kth = np.partition(s, len(s) - n)[len(s) - n]
        keep = s >= kth
        idx, s = idx[keep], s[keep]
    order = np.lexsort((idx, -s))[:n]
    return idx[order], s[order]


def recommend_top_n(u: int, scores: np.ndarray, candidates: np.ndarray, n: int) -> Recommendation:
    pois, sc = rank_row(np.asarray(scores, dtype=float), np.asarray(candidates, dtype=bool), n)
    return Recommendation(u, pois, sc, short=len(pois) < n)


def candidate_mask(R: InteractionMatrix, u: int) -> np.ndarray:
    """Training POIs the user has not visited."""
    mask = R.poi_totals() > 0
    mask[R.visited(u)] = False
    return mask


def top_popular(R: InteractionMatrix, u: int, n: int) -> Recommendation:
    return recommend_top_n(u, R.poi_totals(), candidate_mask(R, u), n)


def write_recommendations(path: str, recs, user_ids, poi_ids) -> None:
    """``user  rank  poi  score`` lines, one per recommended POI."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in recs:
            for rank, (p, s) in enumerate(rec, start=1):
                fh.write(f"{user_ids[rec.user]}\t{rank}\t{poi_ids[p]}\t{s:.10g}\n")
    os.replace(tmp, path)
