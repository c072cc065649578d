"""Cached pipeline stages shared by the CLI and the experiment scripts.

Every artifact is keyed by a hash of the config keys it depends on, so e.g.
changing ``social.beta`` rebuilds the social graph but reuses the MF factors.
"""
from __future__ import annotations

import hashlib
import logging
import os
import pickle
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from . import data, geo, mf, social
from .config import RunConfig
from .model import SUCP, PreferenceModel, TopPopular

log = logging.getLogger(__name__)

DATA_KEYS = ("data.", "preprocess.", "split.")
TRAIN_KEYS = DATA_KEYS + ("eval.train_fraction", "seed")


def atomic_write_bytes(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _file_fingerprint(path: str | None) -> str:
    if not path:
        return "-"
    st = os.stat(path)
    return f"{os.path.abspath(path)}:{st.st_size}:{st.st_mtime_ns}"


@dataclass
class Prepared:
    split: data.DatasetSplit
    edges: data.FriendshipEdgeList
    manifest: dict


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.cache = cfg.cache_dir
        self.hits: list[str] = []
        self.misses: list[str] = []
        self._mem: dict = {}

    # -- keys ----------------------------------------------------------------

    def data_key(self) -> str:
        fp = _file_fingerprint(self.cfg.checkins) + "|" + _file_fingerprint(self.cfg.friendships)
        return self.cfg.digest(DATA_KEYS, fp)

    def _key(self, prefixes) -> str:
        return self.cfg.digest(TRAIN_KEYS + tuple(prefixes), self.data_key())

    def prefs_key(self) -> str:
        return self._key(("mf.", "geo.states"))

    def centers_key(self) -> str:
        return self._key(("geo.",))

    def graph_key(self) -> str:
        return self._key(("social.",))

    def bundle_key(self) -> str:
        return self._key(("mf.", "geo.", "social.", "ppr.", "fusion."))

    # -- cache ---------------------------------------------------------------

    def _path(self, kind: str, key: str, ext: str = "pkl") -> str:
        return os.path.join(self.cache, f"{kind}-{key}.{ext}")

    def _cached(self, kind: str, key: str, build):
        mem_key = (kind, key)
        if mem_key in self._mem:
            return self._mem[mem_key]
        path = self._path(kind, key)
        if os.path.exists(path):
            with open(path, "rb") as fh:
                obj = pickle.load(fh)
            self.hits.append(kind)
            log.info("%s: cache hit (%s)", kind, key)
        else:
            log.info("%s: computing (%s)", kind, key)
            obj = build()
            atomic_write_bytes(path, pickle.dumps(obj, protocol=pickle.HIGHEST_PROTOCOL))
            self.misses.append(kind)
        self._mem[mem_key] = obj
        return obj

    # -- stages --------------------------------------------------------------

    def prepare(self) -> Prepared:
        if not self.cfg.checkins:
            raise data.DataError("data.checkins is not set")
        return self._cached("data", self.data_key(), self._build_data)

    def _build_data(self) -> Prepared:
        cfg = self.cfg
        raw, edges = data.ingest(cfg.checkins, cfg.friendships)
        log_, edges = data.preprocess(raw, edges, cfg.min_user_checkins, cfg.min_poi_checkins)
        split = data.chronological_split(log_, cfg.train_frac, cfg.valid_frac)
        R = data.build_interaction_matrix(split.train)
        manifest = {
            "checkins_path": cfg.checkins,
            "friendships_path": cfg.friendships or "",
            "raw.checkins": len(raw),
            "raw.users": raw.m,
            "raw.pois": raw.n,
            "raw.skipped_rows": raw.skipped,
            "min_user_checkins": cfg.min_user_checkins,
            "min_poi_checkins": cfg.min_poi_checkins,
            "users": log_.m,
            "pois": log_.n,
            "checkins": len(log_),
            "social_links": len(edges),
            "sparsity": f"{1 - data.build_interaction_matrix(log_).nnz / (log_.m * log_.n):.6f}",
            "train_frac": cfg.train_frac,
            "valid_frac": cfg.valid_frac,
            "train.checkins": len(split.train),
            "valid.checkins": len(split.valid),
            "test.checkins": len(split.test),
            "train.sparsity": f"{R.sparsity:.6f}",
            "seed": cfg.seed,
            "data_key": self.data_key(),
        }
        return Prepared(split, edges, manifest)

    def training_split(self) -> data.DatasetSplit:
        split = self.prepare().split
        if self.cfg.train_fraction < 1.0:
            return data.subsample_training(split, self.cfg.train_fraction, self.cfg.seed)
        return split

    def edges(self) -> data.FriendshipEdgeList:
        p = self.prepare()
        return data.filter_friendships_by_overlap(p.edges, p.split, self.cfg.overlap_threshold)

    def interaction(self) -> data.InteractionMatrix:
        return data.build_interaction_matrix(self.training_split().train)

    def prefs(self) -> PreferenceModel:
        def build():
            train = self.training_split().train
            return PreferenceModel.fit(train, data.build_interaction_matrix(train), self.cfg.model)
        return self._cached("prefs", self.prefs_key(), build)

    def centers(self) -> list:
        return self._cached("centers", self.centers_key(),
                            lambda: geo.find_all_centers(self.training_split().train, self.cfg.model.geo))

    def graph(self) -> social.SocialGraph:
        m = self.cfg.model
        return self._cached("graph", self.graph_key(),
                            lambda: social.build_social_graph(self.interaction(), self.edges(), m.beta, m.min_common))

    def model(self, variant: str | None = None) -> SUCP:
        cfg = self.cfg.model
        if variant is not None:
            cfg = replace(cfg, fusion=replace(cfg.fusion, variant=variant))
        train = self.training_split().train
        graph = self.graph() if cfg.fusion.variant == "full" else None
        return SUCP(data.build_interaction_matrix(train), train.poi_coords, cfg, self.prefs(),
                    self.centers(), graph, self.edges())

    def top_popular(self) -> TopPopular:
        return TopPopular(self.interaction())

    def train(self) -> dict:
        """Build every model component and write the bundle description."""
        prefs = self.prefs()
        centers = self.centers()
        graph = self.graph() if self.cfg.model.fusion.variant == "full" else None
        d = hashlib.sha256()
        for mo in (prefs.static,) + prefs.rhat.models:
            d.update(np.ascontiguousarray(mo.U).tobytes())
            d.update(np.ascontiguousarray(mo.L).tobytes())
        for cs in centers:
            for c in cs.centers:
                d.update(repr((cs.user, c.state, c.freq, c.centroid.lat, c.centroid.lon)).encode())
        if graph is not None:
            d.update(graph.P.data.tobytes())
            d.update(graph.P.indices.tobytes())
        bundle = {
            "bundle_key": self.bundle_key(),
            "content_digest": d.hexdigest()[:16],
            "static_models": 1,
            "temporal_models": len(prefs.rhat.models),
            "temporal_states": ",".join(s.name for s in self.cfg.model.geo.states),
            "static_final_loss": f"{prefs.static.final_loss:.6g}",
            "activity_centers": sum(len(c.centers) for c in centers),
            "social_graph": "skipped" if graph is None else f"{graph.P.nnz} edges",
            "friendship_edges": len(self.edges()),
            "variant": self.cfg.model.fusion.variant,
        }
        fdir = os.path.join(self.cache, f"factors-{self.prefs_key()}")
        if not os.path.isdir(fdir):
            os.makedirs(fdir, exist_ok=True)
            mf.save_factors(os.path.join(fdir, "static.npz"), prefs.static)
            for i, mo in enumerate(prefs.rhat.models):
                mf.save_factors(os.path.join(fdir, f"temporal-{i}.npz"), mo)
        atomic_write_text(self._path("bundle", self.bundle_key(), "txt"),
                          "".join(f"{k} = {bundle[k]}\n" for k in sorted(bundle)))
        return bundle


def write_social_scores(path: str, model: SUCP, users, user_ids, poi_ids) -> None:
    """``user  poi  score`` lines of nonzero social scores."""
    lines = []
    users = np.asarray(users, dtype=np.int64)
    for s in range(0, len(users), model.block_size):
        blk = users[s:s + model.block_size]
        S = social.social_score_block(blk, model.graph, model.R, model.cfg.ppr)
        for i, u in enumerate(blk):
            for l in np.flatnonzero(S[i]):
                lines.append(f"{user_ids[u]}\t{poi_ids[l]}\t{S[i, l]:.10g}\n")
    atomic_write_text(path, "".join(lines))
