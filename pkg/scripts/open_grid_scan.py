#!/usr/bin/env python3
"""Train on the open 5x5 grid per seed, then rank-compare neural and exact empowerment."""
import argparse
from pathlib import Path

from empowerd.experiments import dump_results, oracle_agreement, run_jobs


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", default="runs/open_grid")
    args = p.parse_args()

    results = run_jobs(oracle_agreement,
                       [dict(seed=s, total_steps=args.steps, out_dir=args.out) for s in args.seeds], args.jobs)
    for r in results:
        print(f"seed {r.seed}: spearman {r.spearman:.3f}, corners {r.low_mean:.3f}, "
              f"interior {r.high_mean:.3f}, {r.seconds / 60:.1f} min")
    print(f"wrote {dump_results(results, Path(args.out) / 'summary.json')}")


if __name__ == "__main__":
    main()
