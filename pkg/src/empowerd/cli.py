"""Command-line entry point: ``empowerd <train|eval|scan|mi-bench|ba|plot>``.

Results go to stdout as ``key=value`` lines; diagnostics go to stderr.
Exit status: 0 success, 1 invalid input, 2 numeric fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import parse_config
from .errors import EmpowerdError, InvalidInput, NumericFault

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
NATS_PER_BIT = math.log(2.0)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInput(message)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("EMPOWERD_OUT") or "runs")


def _emit(**pairs):
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.6f}"
        print(f"{k}={v}")


def _train_one(config, out: Path):
    from .trainer import train

    summary = train(config, out)
    return {
        "seed": config.seed,
        "episodes": summary.episodes,
        "updates": summary.updates,
        "success_rate_last100": summary.success_rate(100),
        "metrics": str(summary.metrics_path),
        "checkpoint": str(summary.checkpoint_dir),
    }


def cmd_train(args) -> int:
    config = parse_config(args.config, args.overrides)
    out = _out_dir(args)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        configs = [(config.replace(seed=s), out / f"seed_{s}") for s in seeds]
        with ProcessPoolExecutor(max_workers=args.jobs or len(configs)) as pool:
            results = list(pool.map(_train_one, *zip(*configs)))
    else:
        results = [_train_one(config, out)]
    for r in results:
        _emit(**r)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .trainer import Learner, evaluate

    learner = Learner.load(args.checkpoint)
    res = evaluate(learner, args.env or learner.config.env, episodes=args.episodes)
    _emit(success_rate=res.success_rate, mean_return=res.mean_return, episodes=args.episodes)
    return EXIT_OK


def cmd_scan(args) -> int:
    from scipy.stats import spearmanr

    from .trainer import Learner, empowerment_scan

    learner = Learner.load(args.checkpoint)
    out_csv = Path(args.csv) if args.csv else _out_dir(args) / "scan.csv"
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    rows = empowerment_scan(learner, args.env or learner.config.env, seed=args.seed, out_csv=out_csv)
    oracle = np.array([r.oracle_nats for r in rows])
    est = np.array([r.estimate_nats for r in rows])
    rho = spearmanr(oracle, est).statistic if np.ptp(oracle) > 0 and np.ptp(est) > 0 else float("nan")
    _emit(states=len(rows), spearman=float(rho), csv=str(out_csv))
    return EXIT_OK


def cmd_mi_bench(args) -> int:
    from .bench import gaussian_mi_benchmark

    rhos = [float(r) for r in args.rho.split(",")]
    for rho in rhos:
        print(f"training statistics network, rho={rho}", file=sys.stderr)
        res = gaussian_mi_benchmark(rho, steps=args.steps, batch_size=args.batch, seed=args.seed)
        _emit(rho=rho, estimate_nats=res.estimate, analytic_nats=res.true_mi, error_nats=res.error)
    return EXIT_OK


def _load_channel(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"channel file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"malformed JSON in {path}: {exc}") from exc
    rows = doc["channel"] if isinstance(doc, dict) and "channel" in doc else doc
    try:
        return np.array(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"channel must be a matrix of numbers: {exc}") from exc


def cmd_ba(args) -> int:
    from .oracle import TabularMdp, blahut_arimoto, empowerment_map

    scale = 1.0 / NATS_PER_BIT if args.bits else 1.0
    unit = "bits" if args.bits else "nats"
    if args.mdp:
        values = empowerment_map(TabularMdp.from_json(args.mdp), tol=args.tol)
        for s, v in enumerate(values):
            print(f"state={s} empowerment_{unit}={v * scale:.6f}")
        return EXIT_OK
    if not args.channel:
        raise InvalidInput("ba needs --channel or --mdp")
    res = blahut_arimoto(_load_channel(args.channel), tol=args.tol, max_iters=args.max_iters)
    print(f"capacity_{unit}={res.capacity_nats * scale:.6f}")
    print("optimal_source=" + ",".join(f"{p:.6f}" for p in res.optimal_source))
    print(f"iterations={res.iterations}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plot import plot_metrics

    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    out = Path(args.svg) if args.svg else Path(args.metrics).with_suffix(".svg")
    plot_metrics(args.metrics, columns, out, title=args.title or "")
    _emit(svg=str(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="empowerd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run the joint training loop")
    t.add_argument("--config", help="flat TOML run config")
    t.add_argument("--out", help="output directory (default $EMPOWERD_OUT or ./runs)")
    t.add_argument("--seeds", help="comma-separated seeds, run as parallel processes")
    t.add_argument("--jobs", type=int, help="worker processes for --seeds")
    t.add_argument("overrides", nargs="*", help="key=value config overrides")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", help="environment (default: the one it was trained on)")
    e.add_argument("--episodes", type=int, default=100)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("scan", help="oracle vs neural empowerment per state")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--env")
    s.add_argument("--csv", help="output CSV path")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_scan)

    m = sub.add_parser("mi-bench", help="Gaussian MINE benchmark against the analytic MI")
    m.add_argument("--rho", default="0.5", help="correlation(s), comma separated")
    m.add_argument("--steps", type=int, default=20_000)
    m.add_argument("--batch", type=int, default=64)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_mi_bench)

    b = sub.add_parser("ba", help="Blahut-Arimoto capacity of a channel or MDP")
    b.add_argument("--channel", help='JSON matrix, or {"channel": matrix}')
    b.add_argument("--mdp", help="TabularMdp JSON document")
    b.add_argument("--tol", type=float, default=1e-9)
    b.add_argument("--max-iters", type=int, default=10_000)
    b.add_argument("--bits", action="store_true", help="report bits instead of nats")
    b.set_defaults(func=cmd_ba)

    pl = sub.add_parser("plot", help="SVG line chart of metrics columns")
    pl.add_argument("--metrics", required=True)
    pl.add_argument("--columns", default="dv_bound_nats")
    pl.add_argument("--svg", help="output path (default: alongside the CSV)")
    pl.add_argument("--title")
    pl.set_defaults(func=cmd_plot)
    return p


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EmpowerdError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
