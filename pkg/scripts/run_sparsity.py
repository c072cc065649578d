"""Training-fraction sweep with all baselines, reporting relative drops from full data.

    python scripts/run_sparsity.py --seeds 0 1 2
"""
import argparse
import os
import tempfile
from dataclasses import replace

import numpy as np

from sucp.config import RunConfig
from sucp.evaluate import run_experiment
from sucp.pipeline import Pipeline
from sucp.synthetic import CorpusSpec, write_corpus

FRACTIONS = (0.4, 0.6, 0.8, 1.0)
SYSTEMS = ("SUCP", "SUCP-NoSocial", "TopPopular", "MF-Preference")


def drops(workdir: str, seed: int) -> dict:
    ck, fr = write_corpus(os.path.join(workdir, f"s{seed}"), replace(CorpusSpec(), seed=seed))
    cfg = RunConfig(checkins=ck, friendships=fr, seed=seed, cache_dir=os.path.join(workdir, "cache"))
    p = Pipeline(cfg).prepare()
    grid = run_experiment("train_fraction", FRACTIONS, p.split, p.edges, cfg.model, (10, 20),
                          overlap_threshold=cfg.overlap_threshold, seed=seed, baselines=True)
    for row in grid.rows():
        print(f"seed={seed} {row}")
    full = grid.cells[-1]
    out = {}
    for cell in grid.cells[:-1]:
        for name in SYSTEMS:
            a = full.report if name == "SUCP" else full.extra[name]
            b = cell.report if name == "SUCP" else cell.extra[name]
            for metric in ("recall", "ndcg"):
                base = a.mean(metric, 20)
                out[(cell.value, name, metric)] = (base - b.mean(metric, 20)) / base if base else np.nan
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as d:
        results = [drops(d, s) for s in args.seeds]
    print("\nrelative drop at @20 vs full training data (mean over seeds)")
    print(f"{'fraction':<9}{'system':<15}{'recall':>8}{'ndcg':>8}")
    for f in FRACTIONS[:-1]:
        for name in SYSTEMS:
            r = np.mean([res[(f, name, 'recall')] for res in results])
            g = np.mean([res[(f, name, 'ndcg')] for res in results])
            print(f"{f:<9g}{name:<15}{r:>8.3f}{g:>8.3f}")


if __name__ == "__main__":
    main()
