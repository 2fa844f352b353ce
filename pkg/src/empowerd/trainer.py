"""Joint training loop for the Q-network, forward model and statistics network."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import mine
from .agent import Batch, DqnAgent, ReplayBuffer, Transition, clip_extrinsic
from .config import RunConfig
from .dynamics import ForwardModel, check_distribution, sample_actions
from .encoder import RandomEncoder
from .envs import GridRooms, make_env
from .errors import InvalidInput, NumericFault
from .nn import AdamState, load_snapshot, save_snapshot
from .oracle import exact_empowerment

log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "episode", "episodic_extrinsic_return", "mean_intrinsic_reward",
                  "dv_bound_nats", "dynamics_loss", "td_loss", "epsilon")
SCAN_HEADER = ("state_id", "row", "col", "has_key", "oracle_nats", "estimate_nats")
CHECKPOINT_VERSION = 1
SCAN_JOINT_DRAWS = 32


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class MetricsRow:
    step: int
    episode: int
    episodic_extrinsic_return: float
    mean_intrinsic_reward: float
    dv_bound_nats: float
    dynamics_loss: float
    td_loss: float
    epsilon: float

    def csv_line(self) -> str:
        return ",".join(_fmt(getattr(self, k)) for k in METRICS_HEADER) + "\n"


@dataclass
class Learner:
    """Everything that gets trained (plus the fixed encoder)."""

    config: RunConfig
    encoder: RandomEncoder
    forward_model: ForwardModel
    statistics: mine.StatisticsNetwork
    agent: DqnAgent

    @classmethod
    def build(cls, config: RunConfig, obs_dim: int, action_count: int, seed_seq: np.random.SeedSequence):
        enc_seed, f_seq, t_seq, q_seq = seed_seq.spawn(4)
        hidden = (config.hidden_width, config.hidden_width)
        encoder = RandomEncoder(obs_dim, int(enc_seed.generate_state(1, np.uint64)[0]), config.encoder_dim)
        f = ForwardModel.create(config.encoder_dim, action_count, np.random.default_rng(f_seq),
                                hidden=hidden, learning_rate=config.lr_dynamics)
        t = mine.StatisticsNetwork.for_transitions(
            config.encoder_dim, action_count, np.random.default_rng(t_seq), hidden=hidden,
            learning_rate=config.lr_statistics, ema_rate=config.ema_rate,
            ema_correction=config.ema_correction)
        agent = DqnAgent.create(obs_dim, action_count, np.random.default_rng(q_seq), hidden=hidden,
                                learning_rate=config.lr_policy, gamma=config.gamma,
                                sync_period=config.sync_period, epsilon=config.epsilon_start,
                                grad_clamp=config.grad_clamp)
        return cls(config, encoder, f, t, agent)

    @property
    def action_count(self) -> int:
        return self.agent.action_count

    @property
    def obs_dim(self) -> int:
        return self.encoder.obs_dim

    def training_joint_successors(self, enc_next, actions, predictions) -> np.ndarray:
        """Successor encodings for T's joint training rows.

        Defaults to ``f(e(s), a)`` so both sides of the bound come from the same
        channel; with observed successors T learns to spot f's error instead.
        """
        if self.config.train_joint == "model":
            return predictions[np.arange(predictions.shape[0]), actions]
        return enc_next

    def intrinsic_for(self, batch: Batch, rng: np.random.Generator, probs=None, predictions=None) -> np.ndarray:
        """Pointwise DV estimates for a batch under the current behaviour policy (unscaled)."""
        cfg = self.config
        es, en = self.encoder.encode(batch.obs), self.encoder.encode(batch.next_obs)
        if cfg.marginal_mode == "shuffle":
            return shuffled_pointwise_estimates(self.statistics, es, batch.actions, en,
                                                self.action_count, cfg.marginal_samples, rng)
        if probs is None:
            probs = self.agent.policy_probs(batch.obs)
        return mine.pointwise_estimates(self.statistics, self.forward_model, es, batch.actions, en,
                                        probs, cfg.marginal_samples, rng, predictions=predictions)

    def update_cycle(self, batch: Batch, rng: np.random.Generator) -> dict:
        """f step, then T step, then reward refresh, then Q step, then sync if due."""
        cfg = self.config
        stats = {}
        q_cache = None
        if cfg.intrinsic == "empowerment":
            f, a = self.forward_model, self.action_count
            es, en = self.encoder.encode(batch.obs), self.encoder.encode(batch.next_obs)
            stats["dynamics_loss"] = f.update(es, batch.actions, en)
            # Q is untouched until td_update, so its forward pass on obs serves both
            q_obs, q_cache = self.agent.online_net.forward_cached(batch.obs)
            probs = self.agent.probs_from_q(q_obs)
            preds = None
            if cfg.marginal_mode == "model":
                preds = f.predict_all(es)
                joint = mine.pack(es, batch.actions, self.training_joint_successors(en, batch.actions, preds), a)
                marginal = mine.model_marginal_rows(f, es, batch.actions, probs, rng, predictions=preds)
            else:
                joint = mine.pack(es, batch.actions, en, a)
                marginal = mine.shuffled_marginal_rows(es, batch.actions, en, a, rng)
            stats["dv_bound"] = self.statistics.update(joint, marginal).bound_nats
            est = self.intrinsic_for(batch, rng, probs=probs, predictions=preds)
            batch.intrinsic = cfg.beta * np.maximum(est, 0.0)
            stats["mean_intrinsic"] = float(batch.intrinsic.mean())
        stats["td_loss"] = self.agent.td_update(batch, cache=q_cache)
        if self.agent.sync_due:
            self.agent.sync_target()
            stats["synced"] = True
        return stats

    # -- persistence ------------------------------------------------------

    def save(self, directory, extra: dict | None = None) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_snapshot(self.agent.online_net, d / "q_online.empw")
        save_snapshot(self.agent.target_net, d / "q_target.empw")
        save_snapshot(self.forward_model.net, d / "forward.empw")
        save_snapshot(self.statistics.net, d / "statistics.empw")
        save_snapshot(self.encoder.as_net(), d / "encoder.empw")
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "obs_dim": self.obs_dim,
            "action_count": self.action_count,
            "encoder_seed": self.encoder.seed,
            "epsilon": self.agent.epsilon,
            "td_updates": self.agent.td_updates,
            "steps_since_sync": self.agent.steps_since_sync,
            "log_ema_denominator": self.statistics.log_ema_denominator,
            "ema_steps": self.statistics.ema_steps,
            **(extra or {}),
        }
        (d / "checkpoint.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory) -> "Learner":
        d = Path(directory)
        meta_path = d / "checkpoint.json"
        if not meta_path.exists():
            raise InvalidInput(f"no checkpoint.json in {d}")
        meta = json.loads(meta_path.read_text())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise InvalidInput("unsupported checkpoint version")
        config = RunConfig(**meta["config"])
        encoder = RandomEncoder(meta["obs_dim"], meta["encoder_seed"], config.encoder_dim)
        stored = load_snapshot(d / "encoder.empw")
        if not np.array_equal(stored.weights[0], encoder.projection):
            raise InvalidInput("encoder snapshot does not match its seed")
        f_net = load_snapshot(d / "forward.empw")
        t_net = load_snapshot(d / "statistics.empw")
        q_net = load_snapshot(d / "q_online.empw")
        q_target = load_snapshot(d / "q_target.empw")
        a = meta["action_count"]
        f = ForwardModel(f_net, AdamState.for_net(f_net, config.lr_dynamics), config.encoder_dim, a)
        t = mine.StatisticsNetwork(t_net, AdamState.for_net(t_net, config.lr_statistics),
                                   log_ema_denominator=meta["log_ema_denominator"], ema_rate=config.ema_rate,
                                   ema_correction=config.ema_correction, ema_steps=meta["ema_steps"])
        agent = DqnAgent(q_net, q_target, AdamState.for_net(q_net, config.lr_policy), gamma=config.gamma,
                         sync_period=config.sync_period, epsilon=meta["epsilon"],
                         steps_since_sync=meta["steps_since_sync"], td_updates=meta["td_updates"],
                         grad_clamp=config.grad_clamp)
        return cls(config, encoder, f, t, agent)


def shuffled_pointwise_estimates(T, enc_s, actions, enc_next, action_count, k, rng) -> np.ndarray:
    """Model-free variant: marginal successors are drawn from the other batch rows."""
    b = enc_s.shape[0]
    idx = rng.integers(b, size=(b, k))
    rows = mine.pack(np.repeat(enc_s, k, axis=0), np.repeat(actions, k), enc_next[idx.ravel()], action_count)
    t_marg = T.value(rows).reshape(b, k)
    t_joint = T.value(mine.pack(enc_s, actions, enc_next, action_count))
    return t_joint - mine.log_mean_exp(t_marg, axis=1)


@dataclass
class RunSummary:
    steps: int
    updates: int
    episodes: int
    episode_returns: list[float]
    buffer_length: int
    final_metrics: MetricsRow | None
    metrics_path: Path | None = None
    checkpoint_dir: Path | None = None
    learner: Learner | None = field(default=None, repr=False)

    def success_rate(self, last: int = 100) -> float:
        tail = self.episode_returns[-last:]
        return float(np.mean([r > 0 for r in tail])) if tail else 0.0


def train(config: RunConfig, out_dir=None) -> RunSummary:
    """Run the interleaved act / f / T / reward / Q loop for ``config.total_steps`` env steps."""
    cfg = config
    root = np.random.SeedSequence(cfg.seed)
    env_seq, learner_seq, act_seq, sample_seq, mine_seq = root.spawn(5)
    env = make_env(cfg.env, max_steps=cfg.max_episode_steps, slip=cfg.slip,
                   seed=int(env_seq.generate_state(1)[0]))
    learner = Learner.build(cfg, env.obs_dim, env.action_count, learner_seq)
    agent = learner.agent
    act_rng = np.random.default_rng(act_seq)
    sample_rng = np.random.default_rng(sample_seq)
    mine_rng = np.random.default_rng(mine_seq)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    empowerment = cfg.intrinsic == "empowerment"

    out = Path(out_dir) if out_dir is not None else None
    metrics_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        metrics_file = open(out / "metrics.csv", "w", newline="")
        metrics_file.write(",".join(METRICS_HEADER) + "\n")

    episode_returns: list[float] = []
    updates = 0
    last = {"dv": math.nan, "dyn": math.nan, "td": math.nan}
    intrinsic_acc: list[float] = []
    row = None
    obs = env.reset()
    ep_return = 0.0

    try:
        for step in range(1, cfg.total_steps + 1):
            agent.epsilon = cfg.epsilon_at(step - 1)
            action = agent.select_action(obs, act_rng)
            next_obs, reward, terminal = env.step(action)
            buffer.push(Transition(obs, action, next_obs, clip_extrinsic(reward), terminal))
            ep_return += reward
            if env.done:
                episode_returns.append(ep_return)
                obs, ep_return = env.reset(), 0.0
            else:
                obs = next_obs

            if step >= cfg.warmup_steps:
                for _ in range(cfg.inner_loop_m):
                    stats = learner.update_cycle(buffer.sample(cfg.batch_size, sample_rng), mine_rng)
                    updates += 1
                    last["td"] = stats["td_loss"]
                    if empowerment:
                        last["dyn"], last["dv"] = stats["dynamics_loss"], stats["dv_bound"]
                        intrinsic_acc.append(stats["mean_intrinsic"])

            if step % cfg.metrics_every == 0:
                row = MetricsRow(
                    step=step,
                    episode=len(episode_returns),
                    episodic_extrinsic_return=episode_returns[-1] if episode_returns else math.nan,
                    mean_intrinsic_reward=float(np.mean(intrinsic_acc)) if intrinsic_acc else (0.0 if not empowerment else math.nan),
                    dv_bound_nats=last["dv"],
                    dynamics_loss=last["dyn"],
                    td_loss=last["td"],
                    epsilon=agent.epsilon,
                )
                intrinsic_acc.clear()
                if metrics_file is not None:
                    metrics_file.write(row.csv_line())
                    metrics_file.flush()
                if step % (cfg.metrics_every * 100) == 0:
                    recent = episode_returns[-100:]
                    log.info("step %d episodes %d success(last100) %.2f dv %.3f",
                             step, len(episode_returns), np.mean(recent) if recent else 0.0, last["dv"])
    except NumericFault:
        if out is not None:
            learner.save(out / "fault_checkpoint", {"fault_step": step})
        raise
    finally:
        if metrics_file is not None:
            metrics_file.close()

    ckpt = None
    if out is not None:
        ckpt = learner.save(out / "checkpoint", {"steps": cfg.total_steps, "updates": updates})
    return RunSummary(cfg.total_steps, updates, len(episode_returns), episode_returns, len(buffer),
                      row, out / "metrics.csv" if out else None, ckpt, learner)


def _as_learner(checkpoint) -> Learner:
    if isinstance(checkpoint, Learner):
        return checkpoint
    return Learner.load(checkpoint)


@dataclass
class EvalResult:
    success_rate: float
    mean_return: float
    returns: list[float]


def evaluate(checkpoint, env_spec: str | GridRooms, episodes: int = 100, max_steps: int | None = None) -> EvalResult:
    """Greedy rollouts of a checkpoint's (or learner's) Q-network."""
    learner = _as_learner(checkpoint)
    env = env_spec if isinstance(env_spec, GridRooms) else make_env(
        env_spec, max_steps=max_steps or learner.config.max_episode_steps, slip=learner.config.slip,
        seed=learner.config.seed)
    if env.action_count != learner.action_count or env.obs_dim != learner.obs_dim:
        raise InvalidInput("checkpoint does not match the environment's action count / observation size")
    returns = []
    for _ in range(episodes):
        obs, total = env.reset(), 0.0
        while not env.done:
            obs, r, _ = env.step(learner.agent.greedy(obs))
            total += r
        returns.append(total)
    return EvalResult(float(np.mean([r > 0 for r in returns])), float(np.mean(returns)), returns)


@dataclass
class ScanRow:
    state_id: int
    row: int
    col: int
    has_key: bool
    oracle_nats: float
    estimate_nats: float


def empowerment_scan(checkpoint, env_spec: str | GridRooms, draws: int = SCAN_JOINT_DRAWS,
                     seed: int = 0, out_csv=None) -> list[ScanRow]:
    """Exact empowerment next to the mean pointwise DV estimate for every non-terminal state.

    Each state's estimate averages ``draws`` joint samples, each scored against
    ``marginal_samples`` model marginals, with actions from the behaviour policy
    at the checkpoint's epsilon.
    """
    learner = _as_learner(checkpoint)
    cfg = learner.config
    env = env_spec if isinstance(env_spec, GridRooms) else make_env(env_spec, slip=cfg.slip)
    if env.action_count != learner.action_count or env.obs_dim != learner.obs_dim:
        raise InvalidInput("checkpoint does not match the environment's action count / observation size")
    mdp = env.to_tabular()
    rng = np.random.default_rng(seed)
    a = env.action_count
    rows: list[ScanRow] = []
    for sid, (r, c, k) in enumerate(mdp.labels):
        if mdp.terminal[sid]:
            continue
        obs = env.observe((r, c), k)
        probs = learner.agent.policy_probs(obs)
        acts = sample_actions(probs, draws, rng)[0]
        succ = [rng.choice(mdp.state_count, p=mdp.transition[sid, act]) for act in acts]
        next_obs = np.array([env.observe(mdp.labels[s][:2], mdp.labels[s][2]) for s in succ])
        batch = Batch(np.repeat(obs[None, :], draws, axis=0), acts, next_obs,
                      np.zeros(draws), np.zeros(draws, dtype=bool), np.zeros(draws))
        est = learner.intrinsic_for(batch, rng)
        rows.append(ScanRow(sid, r, c, bool(k), exact_empowerment(mdp, sid), float(np.mean(est))))
    if out_csv is not None:
        write_scan_csv(rows, out_csv)
    return rows


def write_scan_csv(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for row in rows:
            w.writerow([row.state_id, row.row, row.col, int(row.has_key), repr(row.oracle_nats), repr(row.estimate_nats)])
    return path
