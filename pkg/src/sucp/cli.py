"""Command line entry point: ``sucp <command> --config run.conf``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import config as config_mod
from . import data, evaluate, geo, social
from .pipeline import Pipeline, atomic_write_text, write_social_scores
from .recommend import write_recommendations

log = logging.getLogger("sucp")

DEFAULT_VALUES = {
    "beta": [round(0.1 * i, 1) for i in range(11)],
    "train_fraction": [0.4, 0.6, 0.8],
    "overlap_threshold": [round(0.1 * i, 1) for i in range(11)],
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=["full", "no_social"])
    p.add_argument("--beta", type=float)
    p.add_argument("--overlap-threshold", type=float)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="sucp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="ingest, preprocess and split the data")
    sub.add_parser("train", parents=[common], help="train MF models, social graph and activity centers")
    r = sub.add_parser("recommend", parents=[common], help="write top-N lists")
    r.add_argument("--users", default="all", help="comma separated user ids or 'all'")
    r.add_argument("-n", "--top", type=int, default=10)
    r.add_argument("--dump-social", metavar="PATH", help="also write per-user social scores")
    sub.add_parser("evaluate", parents=[common], help="test-set metrics against the baselines")
    e = sub.add_parser("experiment", parents=[common], help="sweep one setting")
    e.add_argument("axis", choices=evaluate.AXES)
    e.add_argument("--values", help="comma separated axis values")
    e.add_argument("--part", choices=["test", "valid"], default="test")
    e.add_argument("--baselines", action="store_true", help="also evaluate NoSocial, TopPopular and MF-only")
    sub.add_parser("analyze-social", parents=[common],
                   help="friend similarity and activity-center distance statistics")
    return ap


def load_config(args) -> config_mod.RunConfig:
    overrides = {
        "seed": args.seed,
        "fusion.variant": args.variant,
        "social.beta": args.beta,
        "social.overlap_threshold": args.overlap_threshold,
        "eval.train_fraction": args.train_fraction,
    }
    for item in args.set:
        if "=" not in item:
            raise config_mod.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    return config_mod.load(args.config, overrides)


def _out(args, name: str) -> str:
    d = args.out or "."
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, name)


def cmd_prepare(args, pipe: Pipeline) -> int:
    prepared = pipe.prepare()
    path = _out(args, "manifest.txt")
    data.write_manifest(path, {**prepared.manifest, "config_hash": pipe.cfg.digest()})
    print(f"prepared {prepared.manifest['users']} users, {prepared.manifest['pois']} POIs, "
          f"{prepared.manifest['checkins']} check-ins ({'cache hit' if 'data' in pipe.hits else 'computed'})")
    print(f"manifest: {path}")
    return 0


def cmd_train(args, pipe: Pipeline) -> int:
    bundle = pipe.train()
    path = _out(args, "bundle.txt")
    atomic_write_text(path, "".join(f"{k} = {bundle[k]}\n" for k in sorted(bundle)))
    print(f"bundle {bundle['bundle_key']} digest {bundle['content_digest']}: "
          f"{bundle['static_models']} static + {bundle['temporal_models']} temporal models, "
          f"social graph {bundle['social_graph']}")
    return 0


def cmd_recommend(args, pipe: Pipeline) -> int:
    split = pipe.training_split()
    train = split.train
    if args.users == "all":
        users = np.arange(train.m)
    else:
        ids = [u.strip() for u in args.users.split(",") if u.strip()]
        missing = [u for u in ids if u not in train.user_index]
        if missing:
            raise KeyError(f"unknown user id(s): {', '.join(missing)}")
        users = np.array([train.user_index[u] for u in ids], dtype=np.int64)
    model = pipe.model()
    recs = model.recommend(users, args.top)
    path = _out(args, "recommendations.tsv")
    write_recommendations(path, recs, train.user_ids, train.poi_ids)
    short = sum(r.short for r in recs)
    print(f"wrote {len(recs)} lists to {path}" + (f" ({short} shorter than {args.top})" if short else ""))
    if args.dump_social:
        if model.graph is None:
            raise ValueError("--dump-social needs the full variant")
        write_social_scores(args.dump_social, model, users, train.user_ids, train.poi_ids)
    return 0


def cmd_evaluate(args, pipe: Pipeline) -> int:
    cfg = pipe.cfg
    split = pipe.prepare().split
    fp = cfg.digest()
    primary = pipe.model()
    systems = [primary]
    if cfg.model.fusion.variant == "full":
        systems.append(pipe.model("no_social"))
    systems.append(pipe.top_popular())
    reports = [evaluate.evaluate(s, split, cfg.ns, fingerprint=fp) for s in systems]
    lines, kv = [reports[0].table().splitlines()[0]], []
    for r in reports:
        lines.append(r.table().splitlines()[1])
        kv.extend(r.key_values())
    lines.append("")
    lines.append(f"users evaluated: {reports[0].n_users}, skipped (no new test POIs): {reports[0].n_skipped}")
    for other in reports[1:]:
        for m in evaluate.METRICS:
            for n in cfg.ns:
                t = evaluate.compare(reports[0], other, m, n)
                flag = " degenerate" if t.degenerate else ""
                lines.append(f"{reports[0].system} vs {other.system} {m}@{n}: t={t.t:.3f} p={t.p:.3g}{flag}")
                kv.append(f"ttest system={reports[0].system} other={other.system} metric={m} N={n} "
                          f"t={t.t:.6g} p={t.p:.6g} df={t.df}")
    table = "\n".join(lines) + "\n"
    atomic_write_text(_out(args, "report.txt"), table)
    atomic_write_text(_out(args, "report.kv"), "\n".join(kv) + "\n")
    print(table, end="")
    return 0


def cmd_experiment(args, pipe: Pipeline) -> int:
    cfg = pipe.cfg
    values = DEFAULT_VALUES[args.axis] if not args.values else [float(v) for v in args.values.split(",")]
    prepared = pipe.prepare()
    grid = evaluate.run_experiment(args.axis, values, prepared.split, prepared.edges, cfg.model, cfg.ns,
                                   overlap_threshold=cfg.overlap_threshold, seed=cfg.seed,
                                   baselines=args.baselines, part=args.part)
    rows = grid.rows()
    path = _out(args, f"grid-{args.axis}.txt")
    atomic_write_text(path, "\n".join(rows) + "\n")
    print("\n".join(rows))
    if args.axis == "beta" and args.part == "valid":
        n = max(cfg.ns)
        ok = [c for c in grid.cells if c.report is not None]
        best = max(ok, key=lambda c: (c.report.mean("recall", n), -c.value))
        print(f"selected beta={best.value:g} (validation recall@{n}={best.report.mean('recall', n):.4f})")
    print(f"{len(grid.cells)} cells written to {path}")
    return 1 if any(c.error for c in grid.cells) else 0


def cmd_analyze_social(args, pipe: Pipeline) -> int:
    edges = pipe.prepare().edges
    R = pipe.interaction()
    lines = []
    if len(edges):
        lines.append(f"friendship links: {len(edges)}")
        lines.append(f"average friend similarity (train): {social.average_friend_similarity(R, edges):.4f}")
        filtered = pipe.edges()
        lines.append(f"links kept at overlap threshold {pipe.cfg.overlap_threshold:g}: {len(filtered)}")
        centers = pipe.centers()
        coords = []
        for cs in centers:
            top = max(cs.centers, key=lambda c: c.freq) if cs.centers else None
            coords.append((np.nan, np.nan) if top is None else (top.centroid.lat, top.centroid.lon))
        coords = np.array(coords)
        a, b = edges.edges[:, 0], edges.edges[:, 1]
        dist = geo.haversine_km(coords[a, 0], coords[a, 1], coords[b, 0], coords[b, 1])
        Q = social._unit_profiles(R)
        sims = np.asarray(Q[a].multiply(Q[b]).sum(axis=1)).ravel()
        ok = np.isfinite(dist)
        lines.append(f"median distance between friends' main centers: {np.median(dist[ok]):.1f} km")
        lines.append("distance bucket (km)      pairs  mean similarity")
        for lo, hi in [(0, 10), (10, 50), (50, 200), (200, 1000), (1000, np.inf)]:
            sel = ok & (dist >= lo) & (dist < hi)
            if sel.any():
                lines.append(f"[{lo:>6g}, {hi:>6g})   {sel.sum():>10d}  {sims[sel].mean():.4f}")
    else:
        lines.append("no friendship links")
    text = "\n".join(lines) + "\n"
    atomic_write_text(_out(args, "social-analysis.txt"), text)
    print(text, end="")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "analyze-social": cmd_analyze_social,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        pipe = Pipeline(load_config(args))
        return COMMANDS[args.command](args, pipe)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
