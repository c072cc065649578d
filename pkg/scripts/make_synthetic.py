"""Write a synthetic check-in corpus: ``python scripts/make_synthetic.py out/ --users 1000 --gowalla-like``."""
import argparse
from dataclasses import replace

from sucp.synthetic import GOWALLA_LIKE, CorpusSpec, write_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--users", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gowalla-like", action="store_true", help="many small regions, Gowalla-sized activity")
    args = ap.parse_args()
    spec = GOWALLA_LIKE if args.gowalla_like else CorpusSpec()
    spec = replace(spec, seed=args.seed, **({"n_users": args.users} if args.users else {}))
    ck, fr = write_corpus(args.out, spec)
    print(ck)
    print(fr)


if __name__ == "__main__":
    main()
