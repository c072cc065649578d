"""End-to-end recommender objects built from a training log."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import geo, mf, social
from .data import CheckInLog, FriendshipEdgeList, InteractionMatrix, build_interaction_matrix
from .recommend import FusionConfig, Recommendation, fuse_scores, rank_row

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    beta: float = 0.7
    min_common: int = 1
    ppr: social.PPRParams = field(default_factory=social.PPRParams)
    geo: geo.GeoConfig = field(default_factory=geo.GeoConfig)
    mf: mf.MFConfig = field(default_factory=mf.MFConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    block_size: int = 128


@dataclass(frozen=True, eq=False)
class PreferenceModel:
    """Static factors plus the aggregated temporal preference matrix."""

    static: mf.FactorModel
    rhat: mf.PreferenceMatrix

    @classmethod
    def fit(cls, train: CheckInLog, R: InteractionMatrix, cfg: ModelConfig) -> "PreferenceModel":
        static = mf.train_mf(R, cfg.mf, name="static")
        temporal = mf.train_temporal(mf.split_temporal(train, cfg.geo), cfg.mf)
        return cls(static, mf.aggregate_temporal(temporal))

    def block(self, users) -> np.ndarray:
        return mf.preference_block(users, self.static, self.rhat)


class Recommender:
    """Shared ranking loop; subclasses provide ``score_block``."""

    R: InteractionMatrix
    block_size: int = 128

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def n(self) -> int:
        return self.R.shape[1]

    def candidates_block(self, users) -> np.ndarray:
        users = np.asarray(users)
        mask = np.repeat((self.R.poi_totals() > 0)[None, :], len(users), axis=0)
        sub = self.R.csr[users]
        mask[np.repeat(np.arange(len(users)), np.diff(sub.indptr)), sub.indices] = False
        return mask

    def score_block(self, users) -> np.ndarray:
        raise NotImplementedError

    def recommend(self, users, n: int) -> list[Recommendation]:
        users = np.asarray(users, dtype=np.int64)
        out = []
        for s in range(0, len(users), self.block_size):
            blk = users[s:s + self.block_size]
            scores = self.score_block(blk)
            cand = self.candidates_block(blk)
            for i, u in enumerate(blk):
                pois, sc = rank_row(scores[i], cand[i], n)
                out.append(Recommendation(int(u), pois, sc, short=len(pois) < n))
        return out


class TopPopular(Recommender):
    name = "TopPopular"

    def __init__(self, R: InteractionMatrix, block_size: int = 512):
        self.R = R
        self.block_size = block_size
        self._pop = R.poi_totals()

    @classmethod
    def fit(cls, train: CheckInLog, edges=None, cfg=None) -> "TopPopular":
        return cls(build_interaction_matrix(train))

    def score_block(self, users) -> np.ndarray:
        return np.repeat(self._pop[None, :], len(users), axis=0)


class SUCP(Recommender):
    """Social x temporal-center x preference product recommender."""

    def __init__(self, R: InteractionMatrix, poi_coords: np.ndarray, cfg: ModelConfig,
                 prefs: PreferenceModel, centers: list, graph: social.SocialGraph | None,
                 edges: FriendshipEdgeList | None = None):
        self.R = R
        self.poi_coords = poi_coords
        self.cfg = cfg
        self.prefs = prefs
        self.centers = centers
        self.graph = graph
        self.edges = edges
        self.block_size = cfg.block_size
        self._NM = R.row_normalized()

    @property
    def name(self) -> str:
        return "SUCP" if self.cfg.fusion.variant == "full" else "SUCP-NoSocial"

    @classmethod
    def fit(cls, train: CheckInLog, edges: FriendshipEdgeList, cfg: ModelConfig = ModelConfig(),
            prefs: PreferenceModel | None = None, centers: list | None = None) -> "SUCP":
        """Train every component; ``prefs``/``centers`` may be reused from another fit on the same train log."""
        R = build_interaction_matrix(train)
        if prefs is None:
            prefs = PreferenceModel.fit(train, R, cfg)
        if centers is None:
            centers = geo.find_all_centers(train, cfg.geo)
        graph = None
        if cfg.fusion.variant == "full":
            graph = social.build_social_graph(R, edges, cfg.beta, cfg.min_common)
        return cls(R, train.poi_coords, cfg, prefs, centers, graph, edges)

    def variant(self, variant: str) -> "SUCP":
        cfg = replace(self.cfg, fusion=replace(self.cfg.fusion, variant=variant))
        graph = self.graph if variant == "full" else None
        if variant == "full" and graph is None:
            graph = social.build_social_graph(self.R, self.edges, cfg.beta, cfg.min_common)
        return SUCP(self.R, self.poi_coords, cfg, self.prefs, self.centers, graph, self.edges)

    def with_social(self, edges: FriendshipEdgeList | None = None, beta: float | None = None) -> "SUCP":
        """Same preferences and centers, rebuilt social graph."""
        edges = self.edges if edges is None else edges
        cfg = self.cfg if beta is None else replace(self.cfg, beta=beta)
        graph = None
        if cfg.fusion.variant == "full":
            graph = social.build_social_graph(self.R, edges, cfg.beta, cfg.min_common)
        return SUCP(self.R, self.poi_coords, cfg, self.prefs, self.centers, graph, edges)

    def components_block(self, users) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
        users = np.asarray(users, dtype=np.int64)
        S = None
        if self.graph is not None:
            S = social.social_score_block(users, self.graph, self.R, self.cfg.ppr, self._NM)
        TC = geo.tc_block(users, self.centers, self.poi_coords, self.cfg.geo)
        Z = self.prefs.block(users)
        return S, TC, Z

    def score_block(self, users) -> np.ndarray:
        S, TC, Z = self.components_block(users)
        return fuse_scores(0.0 if S is None else S, TC, Z, self.cfg.fusion)


class PreferenceOnly(Recommender):
    """Ranks by the static x temporal MF preference alone (check-in frequencies only)."""

    name = "MF-Preference"

    def __init__(self, R: InteractionMatrix, prefs: PreferenceModel, block_size: int = 128):
        self.R = R
        self.prefs = prefs
        self.block_size = block_size

    @classmethod
    def fit(cls, train: CheckInLog, edges=None, cfg: ModelConfig = ModelConfig()) -> "PreferenceOnly":
        R = build_interaction_matrix(train)
        return cls(R, PreferenceModel.fit(train, R, cfg), cfg.block_size)

    def score_block(self, users) -> np.ndarray:
        return self.prefs.block(users)
