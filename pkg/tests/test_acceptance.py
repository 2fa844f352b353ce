"""Acceptance criteria 1-8, each at its stated tolerance and runtime budget."""
import math
import time

import numpy as np
import pytest

from empowerd.agent import Batch, DqnAgent, ReplayBuffer, Transition, clip_extrinsic
from empowerd.bench import gaussian_mi_benchmark
from empowerd.config import RunConfig
from empowerd.dynamics import ForwardModel
from empowerd.envs import OPEN_5X5, GridRooms
from empowerd.experiments import exploration_run, oracle_agreement, run_jobs
from empowerd.mine import StatisticsNetwork, intrinsic_rewards
from empowerd.nn import AdamState, DenseNet
from empowerd.oracle import blahut_arimoto, empowerment_map
from empowerd.trainer import train
from test_nn import max_gradient_error

SEEDS = (0, 1, 2)
LN3, LN4 = math.log(3), math.log(4)


def test_criterion_1_gradients(report):
    t0 = time.perf_counter()
    worst = max(max_gradient_error(np.random.default_rng(seed)) for seed in range(100))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10
    report(1, ok, f"100 random nets, worst relative error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_blahut_arimoto(report):
    t0 = time.perf_counter()
    bsc = blahut_arimoto([[0.9, 0.1], [0.1, 0.9]]).capacity_nats
    noiseless = blahut_arimoto(np.eye(4)).capacity_nats
    flat = blahut_arimoto(np.tile([0.3, 0.7], (2, 1))).capacity_nats
    elapsed = time.perf_counter() - t0
    ok = (abs(bsc - 0.368064) <= 1e-6 and abs(noiseless - LN4) <= 1e-9 and abs(flat) <= 1e-12
          and elapsed < 1)
    report(2, ok, f"BSC {bsc:.7f}, noiseless {noiseless:.10f}, identical rows {flat:.1e}, {elapsed:.3f}s")
    assert ok


MI_TARGETS = [(0.2, 0.020411), (0.5, 0.143841), (0.8, 0.510826), (0.0, 0.0)]


@pytest.mark.slow
def test_criterion_3_mine_gaussian(report):
    details, ok = [], True
    for rho, target in MI_TARGETS:
        t0 = time.perf_counter()
        res = gaussian_mi_benchmark(rho, steps=20_000, batch_size=64, seed=0)
        elapsed = time.perf_counter() - t0
        assert res.true_mi == pytest.approx(target, abs=1e-6)
        good = abs(res.estimate - target) <= 0.05 and elapsed < 180
        ok &= good
        details.append(f"rho={rho}: {res.estimate:.4f} vs {target:.6f} ({elapsed:.0f}s)")
    report(3, ok, "; ".join(details))
    assert ok


def test_criterion_4_oracle_map(report):
    t0 = time.perf_counter()
    env = GridRooms(OPEN_5X5, require_goal=False)
    mdp = env.to_tabular()
    values = empowerment_map(mdp)
    elapsed = time.perf_counter() - t0
    corners = {(1, 1), (1, 5), (5, 1), (5, 5)}
    expected = np.array([LN3 if (r, c) in corners else LN4 for r, c, _ in mdp.labels])
    err = float(np.max(np.abs(values - expected)))
    ok = len(values) == 25 and err <= 1e-6 and elapsed < 1
    report(4, ok, f"25 states, max deviation {err:.1e}, {elapsed:.3f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_neural_vs_oracle(report, tmp_path_factory):
    out = tmp_path_factory.mktemp("criterion5")
    results = run_jobs(oracle_agreement, [dict(seed=s, total_steps=100_000, out_dir=out) for s in SEEDS])
    rank_ok = all(r.spearman >= 0.8 for r in results)
    order_ok = all(r.ordered for r in results)
    time_ok = all(r.seconds < 15 * 60 for r in results)
    detail = "; ".join(f"seed {r.seed}: spearman {r.spearman:.3f}, corner {r.low_mean:.3f} < interior "
                       f"{r.high_mean:.3f} {'yes' if r.ordered else 'no'} ({r.seconds / 60:.1f} min)"
                       for r in results)
    report(5, rank_ok and order_ok and time_ok, detail)
    assert order_ok, "corner estimates must sit below interior estimates"
    assert time_ok
    assert rank_ok, "Spearman >= 0.8 on every seed"


@pytest.mark.slow
def test_criterion_6_exploration(report, tmp_path_factory):
    out = tmp_path_factory.mktemp("criterion6")
    jobs = [dict(seed=s, intrinsic=mode, total_steps=200_000, out_dir=out)
            for mode in ("empowerment", "none") for s in SEEDS]
    results = run_jobs(exploration_run, jobs)
    emp = [r for r in results if r.intrinsic == "empowerment"]
    ext = [r for r in results if r.intrinsic == "none"]
    emp_ok = all(r.success_last100 >= 0.8 for r in emp)
    ext_ok = all(r.success_last100 == 0.0 for r in ext)
    time_ok = all(r.seconds < 30 * 60 for r in results)
    detail = ("empowerment " + ", ".join(f"{r.success_last100:.2f}" for r in emp)
              + " (need >= 0.80); extrinsic-only " + ", ".join(f"{r.success_last100:.2f}" for r in ext)
              + " (need 0.00); slowest run " + f"{max(r.seconds for r in results) / 60:.1f} min")
    report(6, emp_ok and ext_ok and time_ok, detail)
    assert emp_ok, "empowerment agent must reach the goal in >= 80% of its last 100 episodes"
    assert ext_ok, "extrinsic-only agent must never reach the goal in its last 100 episodes"
    assert time_ok


def test_criterion_7_contracts(report):
    t0 = time.perf_counter()
    checks = {}
    checks["clip(5) = 1"] = clip_extrinsic(5.0) == 1.0
    checks["clip idempotent"] = all(clip_extrinsic(clip_extrinsic(x)) == clip_extrinsic(x)
                                    for x in (-3.0, -1.0, -0.3, 0.0, 0.7, 1.0, 9.0))

    net = DenseNet([2, 3], [np.array([[0.0, 0.1], [0.0, 0.2], [0.0, 0.9]])], [np.zeros(3)])
    agent = DqnAgent(net, net.copy(), AdamState.for_net(net, 1e-4), gamma=0.99)
    agent.target_net.weights[0][2, 1] = 2.0
    checks["terminal target = reward"] = agent.double_q_target(
        Transition(np.array([1.0, 0.0]), 0, np.array([0.0, 1.0]), 1.0, True)) == 1.0
    checks["y = 2.98"] = abs(agent.double_q_target(
        Transition(np.array([1.0, 0.0]), 0, np.array([0.0, 1.0]), 1.0, False)) - 2.98) < 1e-12

    buf = ReplayBuffer(3)
    for i in range(4):
        buf.push(Transition(np.array([float(i)]), 0, np.array([0.0]), 0.0, False))
    checks["FIFO eviction at capacity 3"] = len(buf) == 3 and [buf[j].obs[0] for j in range(3)] == [1.0, 2.0, 3.0]

    rng = np.random.default_rng(0)
    q = DqnAgent.create(2, 2, rng, hidden=(3,), sync_period=2000)
    batch = Batch.from_transitions([Transition(np.ones(2), 0, np.ones(2), 0.0, False)])
    due = []
    for _ in range(2000):
        q.td_update(batch)
        due.append(q.sync_due)
    checks["sync at exactly 2000 updates"] = due.index(True) == 1999 and sum(due) == 1

    summary = train(RunConfig(env="open5x5", total_steps=999, hidden_width=16))
    checks["no updates before warmup 1000"] = summary.updates == 0 and summary.buffer_length == 999

    zero = DenseNet.zeros([4, 4, 1])
    zero.biases[-1][0] = 3.0
    T = StatisticsNetwork(zero, AdamState.for_net(zero, 1e-3))
    checks["constant statistic bound = 0"] = T.bound(rng.normal(size=(8, 4)), rng.normal(size=(8, 4))).bound_nats == 0.0

    T = StatisticsNetwork.for_transitions(4, 4, rng, hidden=(8,))
    f = ForwardModel.create(4, 4, rng, hidden=(8,))
    r = intrinsic_rewards(T, f, rng.normal(size=(200, 4)), rng.integers(4, size=200), rng.normal(size=(200, 4)),
                          rng.dirichlet(np.ones(4), size=200), 0.1, rng)
    checks["intrinsic reward >= 0"] = bool(np.all(r >= 0))

    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and elapsed < 5
    report(7, ok, f"{len(checks) - len(failed)}/{len(checks)} contracts hold, {elapsed:.1f}s"
           + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


@pytest.mark.slow
def test_criterion_8_reproducibility(report, tmp_path):
    cfg = RunConfig(total_steps=10_000, seed=3)
    t0 = time.perf_counter()
    train(cfg, tmp_path / "a")
    elapsed = time.perf_counter() - t0
    train(cfg, tmp_path / "b")
    same = (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    ok = same and elapsed < 60
    report(8, ok, f"metrics byte-identical: {same}, 10k-step run {elapsed:.1f}s")
    assert ok
