"""Time ``sucp prepare``, ``train`` and ``evaluate`` on a fresh synthetic corpus.

    python scripts/time_pipeline.py --users 1000
    python scripts/time_pipeline.py --users 5628
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import replace

from sucp.synthetic import GOWALLA_LIKE, write_corpus


def run_stages(workdir: str, users: int, seed: int = 0) -> dict:
    """Generate a Gowalla-like corpus, run the three stages via the CLI, return wall times."""
    data = os.path.join(workdir, "data")
    write_corpus(data, replace(GOWALLA_LIKE, n_users=users, seed=seed))
    conf = os.path.join(workdir, "run.conf")
    with open(conf, "w") as fh:
        fh.write("data.checkins = data/checkins.tsv\ndata.friendships = data/friendships.tsv\n"
                 "cache_dir = cache\n")
    times = {}
    for stage in ("prepare", "train", "evaluate"):
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-m", "sucp.cli", stage, "--config", conf,
                        "--out", os.path.join(workdir, "out")], check=True, stdout=subprocess.DEVNULL)
        times[stage] = time.perf_counter() - t0
    times["total"] = sum(times.values())
    return times


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--users", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--keep", help="work directory to keep instead of a temp dir")
    args = ap.parse_args()
    if args.keep:
        os.makedirs(args.keep, exist_ok=True)
        times = run_stages(args.keep, args.users, args.seed)
    else:
        with tempfile.TemporaryDirectory() as d:
            times = run_stages(d, args.users, args.seed)
    for k, v in times.items():
        print(f"{k:<9} {v:8.1f} s")


if __name__ == "__main__":
    main()
