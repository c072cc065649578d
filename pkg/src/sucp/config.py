"""Run configuration: ``key = value`` files with dotted keys.

Example::

    data.checkins = gowalla/checkins.tsv
    data.friendships = gowalla/friends.tsv
    social.beta = 0.7
    geo.states = weekday:0-4;weekend:5-6
    mf.k = 30
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace

from .geo import GeoConfig, format_states, parse_states
from .mf import MFConfig
from .model import ModelConfig
from .recommend import FusionConfig
from .social import PPRParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    checkins: str | None = None
    friendships: str | None = None
    min_user_checkins: int = 15
    min_poi_checkins: int = 10
    train_frac: float = 0.7
    valid_frac: float = 0.1
    overlap_threshold: float = 0.7
    train_fraction: float = 1.0
    ns: tuple = (10, 20)
    seed: int = 0
    cache_dir: str = ".sucp-cache"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.min_user_checkins < 1 or self.min_poi_checkins < 1:
            raise ConfigError("preprocess thresholds must be >= 1")
        if not (0 < self.train_frac and 0 <= self.valid_frac and self.train_frac + self.valid_frac < 1):
            raise ConfigError("split fractions must satisfy 0 < train, 0 <= valid, train + valid < 1")
        if not 0 <= self.overlap_threshold <= 1:
            raise ConfigError("social.overlap_threshold must lie in [0, 1]")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("eval.train_fraction must lie in (0, 1]")
        if not self.ns or any(n < 1 for n in self.ns):
            raise ConfigError("eval.ns must list positive integers")
        if not 0 <= self.model.beta <= 1:
            raise ConfigError("social.beta must lie in [0, 1]")

    # -- flat view ---------------------------------------------------------

    def flat(self) -> dict:
        m = self.model
        out = {
            "data.checkins": self.checkins or "",
            "data.friendships": self.friendships or "",
            "preprocess.min_user_checkins": self.min_user_checkins,
            "preprocess.min_poi_checkins": self.min_poi_checkins,
            "split.train": self.train_frac,
            "split.valid": self.valid_frac,
            "social.beta": m.beta,
            "social.min_common": m.min_common,
            "social.overlap_threshold": self.overlap_threshold,
            "ppr.damping": m.ppr.damping,
            "ppr.tol": m.ppr.tol,
            "ppr.max_iter": m.ppr.max_iter,
            "ppr.top_t": m.ppr.top_t if m.ppr.top_t is not None else "none",
            "geo.d_km": m.geo.d_km,
            "geo.epsilon_km": m.geo.epsilon_km,
            "geo.states": format_states(m.geo.states),
            "geo.top_center_only": m.geo.top_center_only,
            "mf.k": m.mf.k,
            "mf.learning_rate": m.mf.learning_rate,
            "mf.reg_lambda": m.mf.reg_lambda,
            "mf.epochs": m.mf.epochs,
            "mf.init_scale": m.mf.init_scale,
            "fusion.epsilon": m.fusion.epsilon,
            "fusion.variant": m.fusion.variant,
            "eval.ns": ",".join(str(n) for n in self.ns),
            "eval.train_fraction": self.train_fraction,
            "seed": self.seed,
            "cache_dir": self.cache_dir,
            "model.block_size": m.block_size,
        }
        return {k: str(v) for k, v in out.items()}

    def canonical(self, prefixes=None) -> str:
        """Sorted ``key = value`` lines, optionally limited to key prefixes."""
        items = self.flat()
        if prefixes is not None:
            items = {k: v for k, v in items.items() if k.startswith(tuple(prefixes))}
        return "\n".join(f"{k} = {items[k]}" for k in sorted(items))

    def digest(self, prefixes=None, extra: str = "") -> str:
        return hashlib.sha256((self.canonical(prefixes) + extra).encode()).hexdigest()[:16]


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def from_flat(items: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from dotted keys; unknown keys are rejected."""
    cfg = base or RunConfig()
    flat = cfg.flat()
    unknown = set(items) - set(flat)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    flat.update({k: str(v) for k, v in items.items()})
    g = lambda k: flat[k]  # noqa: E731
    try:
        top_t = g("ppr.top_t")
        model = ModelConfig(
            beta=float(g("social.beta")),
            min_common=int(g("social.min_common")),
            ppr=PPRParams(float(g("ppr.damping")), float(g("ppr.tol")), int(g("ppr.max_iter")),
                          None if top_t.lower() in ("none", "0", "") else int(top_t)),
            geo=GeoConfig(float(g("geo.d_km")), float(g("geo.epsilon_km")), parse_states(g("geo.states")),
                          _bool(g("geo.top_center_only"))),
            mf=MFConfig(int(g("mf.k")), float(g("mf.learning_rate")), float(g("mf.reg_lambda")),
                        int(g("mf.epochs")), int(g("seed")), float(g("mf.init_scale"))),
            fusion=FusionConfig(float(g("fusion.epsilon")), g("fusion.variant")),
            block_size=int(g("model.block_size")),
        )
        return RunConfig(
            checkins=g("data.checkins") or None,
            friendships=g("data.friendships") or None,
            min_user_checkins=int(g("preprocess.min_user_checkins")),
            min_poi_checkins=int(g("preprocess.min_poi_checkins")),
            train_frac=float(g("split.train")),
            valid_frac=float(g("split.valid")),
            overlap_threshold=float(g("social.overlap_threshold")),
            train_fraction=float(g("eval.train_fraction")),
            ns=tuple(int(x) for x in g("eval.ns").split(",") if x.strip()),
            seed=int(g("seed")),
            cache_dir=g("cache_dir"),
            model=model,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_text(text: str) -> dict:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        items[k.strip()] = v.strip()
    return items


def load(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Read a config file; relative data paths resolve against the file's directory."""
    items = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            items = parse_text(fh.read())
        root = os.path.dirname(os.path.abspath(path))
        for key in ("data.checkins", "data.friendships", "cache_dir"):
            if items.get(key) and not os.path.isabs(items[key]):
                items[key] = os.path.join(root, items[key])
    items.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_flat(items)


def dump(cfg: RunConfig) -> str:
    return cfg.canonical() + "\n"


def with_model(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, model=replace(cfg.model, **kw))

