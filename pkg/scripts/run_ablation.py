"""SUCP vs SUCP-NoSocial vs TopPopular on synthetic corpora over several seeds.

    python scripts/run_ablation.py --seeds 0 1 2
"""
import argparse
import os
import tempfile
from dataclasses import replace

from sucp.config import RunConfig
from sucp.evaluate import compare, evaluate
from sucp.pipeline import Pipeline
from sucp.synthetic import CorpusSpec, write_corpus


def run_seed(workdir: str, seed: int, n_users: int) -> list[str]:
    ck, fr = write_corpus(os.path.join(workdir, f"s{seed}"), replace(CorpusSpec(), seed=seed, n_users=n_users))
    pipe = Pipeline(RunConfig(checkins=ck, friendships=fr, seed=seed, cache_dir=os.path.join(workdir, "cache")))
    split = pipe.prepare().split
    reps = [evaluate(s, split, (10, 20)) for s in (pipe.model(), pipe.model("no_social"), pipe.top_popular())]
    out = [f"seed={seed} " + r.table().splitlines()[1] for r in reps]
    for other in reps[1:]:
        t = compare(reps[0], other, "precision", 10)
        out.append(f"seed={seed} SUCP vs {other.system} P@10: t={t.t:.2f} p={t.p:.2e}")
    r10 = reps[2].mean("recall", 10) / reps[0].mean("recall", 10)
    out.append(f"seed={seed} TopPopular/SUCP Recall@10 ratio {r10:.3f}")
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--users", type=int, default=200)
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as d:
        for seed in args.seeds:
            print("\n".join(run_seed(d, seed, args.users)))


if __name__ == "__main__":
    main()
