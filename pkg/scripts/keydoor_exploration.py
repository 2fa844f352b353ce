#!/usr/bin/env python3
"""Key/door exploration: empowerment-driven agent against the extrinsic-only baseline."""
import argparse
from pathlib import Path

from empowerd.experiments import dump_results, exploration_run, run_jobs


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--modes", nargs="+", default=["empowerment", "none"], choices=["empowerment", "none"])
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", default="runs/keydoor")
    args = p.parse_args()

    jobs = [dict(seed=s, intrinsic=m, total_steps=args.steps, out_dir=args.out)
            for m in args.modes for s in args.seeds]
    results = run_jobs(exploration_run, jobs, args.jobs)
    for r in results:
        print(f"{r.intrinsic:12s} seed {r.seed}: goal rate (last 100) {r.success_last100:.2f}, "
              f"{r.episodes} episodes, first success {r.first_success_episode}, {r.seconds / 60:.1f} min")
    print(f"wrote {dump_results(results, Path(args.out) / 'summary.json')}")


if __name__ == "__main__":
    main()
