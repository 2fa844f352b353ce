"""Multi-seed experiment drivers shared by the acceptance suite and scripts/."""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .config import RunConfig
from .trainer import empowerment_scan, train, write_scan_csv


@dataclass
class AgreementResult:
    seed: int
    spearman: float
    low_mean: float  # mean estimate over the lowest-empowerment states
    high_mean: float
    states: int
    seconds: float

    @property
    def ordered(self) -> bool:
        return self.low_mean < self.high_mean


@dataclass
class ExplorationResult:
    seed: int
    intrinsic: str
    success_last100: float
    episodes: int
    first_success_episode: int | None
    seconds: float


def rank_agreement(oracle, estimate) -> float:
    oracle, estimate = np.asarray(oracle), np.asarray(estimate)
    if np.ptp(oracle) == 0 or np.ptp(estimate) == 0:
        return float("nan")
    return float(spearmanr(oracle, estimate).statistic)


def oracle_agreement(seed: int, total_steps: int = 100_000, out_dir=None, **overrides) -> AgreementResult:
    """Train on the open grid, then compare per-state DV estimates to exact empowerment."""
    t0 = time.perf_counter()
    cfg = RunConfig(env="open5x5", total_steps=total_steps, seed=seed, **overrides)
    out = Path(out_dir) / f"open5x5_seed{seed}" if out_dir else None
    summary = train(cfg, out)
    rows = empowerment_scan(summary.learner, "open5x5", seed=seed)
    if out is not None:
        write_scan_csv(rows, out / "scan.csv")
    oracle = np.array([r.oracle_nats for r in rows])
    est = np.array([r.estimate_nats for r in rows])
    low = np.isclose(oracle, oracle.min(), atol=1e-6)
    return AgreementResult(seed, rank_agreement(oracle, est), float(est[low].mean()), float(est[~low].mean()),
                           len(rows), time.perf_counter() - t0)


def exploration_run(seed: int, intrinsic: str = "empowerment", total_steps: int = 200_000, out_dir=None,
                    **overrides) -> ExplorationResult:
    """One key/door training run; success is measured over the final 100 training episodes."""
    t0 = time.perf_counter()
    cfg = RunConfig(env="keydoor", total_steps=total_steps, seed=seed, intrinsic=intrinsic, **overrides)
    out = Path(out_dir) / f"keydoor_{intrinsic}_seed{seed}" if out_dir else None
    summary = train(cfg, out)
    wins = [i for i, r in enumerate(summary.episode_returns) if r > 0]
    return ExplorationResult(seed, intrinsic, summary.success_rate(100), summary.episodes,
                             wins[0] if wins else None, time.perf_counter() - t0)


def _call(job):
    fn, kwargs = job
    return fn(**kwargs)


def run_jobs(fn, kwargs_list, jobs: int | None = None) -> list:
    """Run ``fn(**kw)`` for each kw, in worker processes when more than one core is available."""
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(kwargs_list) <= 1:
        return [fn(**kw) for kw in kwargs_list]
    with ProcessPoolExecutor(max_workers=min(jobs, len(kwargs_list))) as pool:
        return list(pool.map(_call, [(fn, kw) for kw in kwargs_list]))


def dump_results(results, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([asdict(r) for r in results], indent=2))
    return path
