"""Double DQN with a uniform replay buffer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, InvalidState, NumericFault
from .nn import AdamState, DenseNet, adam_step

POLICY_LR = 1e-4
GAMMA = 0.99
SYNC_PERIOD = 2000
BUFFER_CAPACITY = 1_000_000
HIDDEN = (128, 128)


def clip_extrinsic(r):
    return np.clip(r, -1.0, 1.0) if np.ndim(r) else min(1.0, max(-1.0, float(r)))


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    next_obs: np.ndarray
    extrinsic_reward: float
    terminal: bool
    intrinsic_reward: float = 0.0

    def __post_init__(self):
        if self.intrinsic_reward < 0:
            raise InvalidInput("intrinsic reward must be non-negative")


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    extrinsic: np.ndarray
    terminal: np.ndarray
    intrinsic: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        return cls(
            np.array([t.obs for t in transitions], dtype=np.float64),
            np.array([t.action for t in transitions], dtype=np.int64),
            np.array([t.next_obs for t in transitions], dtype=np.float64),
            np.array([t.extrinsic_reward for t in transitions], dtype=np.float64),
            np.array([t.terminal for t in transitions], dtype=bool),
            np.array([t.intrinsic_reward for t in transitions], dtype=np.float64),
        )

    def transitions(self) -> list[Transition]:
        return [
            Transition(self.obs[i], int(self.actions[i]), self.next_obs[i], float(self.extrinsic[i]),
                       bool(self.terminal[i]), float(self.intrinsic[i]))
            for i in range(len(self))
        ]


class ReplayBuffer:
    """FIFO ring buffer backed by numpy arrays that grow on demand up to ``capacity``."""

    def __init__(self, capacity: int = BUFFER_CAPACITY):
        if capacity <= 0:
            raise InvalidInput("capacity must be positive")
        self.capacity = capacity
        self.cursor = 0
        self._size = 0
        self._obs = self._next = None
        self._actions = np.zeros(0, dtype=np.int64)
        self._extrinsic = np.zeros(0)
        self._terminal = np.zeros(0, dtype=bool)

    def __len__(self) -> int:
        return self._size

    def _grow(self, obs_dim: int):
        old = 0 if self._obs is None else self._obs.shape[0]
        new = min(self.capacity, max(1024, 2 * old))
        if self._obs is None:
            self._obs = np.zeros((new, obs_dim))
            self._next = np.zeros((new, obs_dim))
        else:
            self._obs = np.resize(self._obs, (new, obs_dim))
            self._next = np.resize(self._next, (new, obs_dim))
        self._actions = np.resize(self._actions, new)
        self._extrinsic = np.resize(self._extrinsic, new)
        self._terminal = np.resize(self._terminal, new)

    def push(self, t: Transition) -> None:
        obs = np.asarray(t.obs, dtype=np.float64)
        if self._obs is None or (self._size < self.capacity and self.cursor >= self._obs.shape[0]):
            self._grow(obs.shape[0])
        i = self.cursor
        self._obs[i] = obs
        self._next[i] = t.next_obs
        self._actions[i] = t.action
        self._extrinsic[i] = t.extrinsic_reward
        self._terminal[i] = t.terminal
        self.cursor = (self.cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slot(self, i: int) -> int:
        # logical index 0 is the oldest stored transition
        start = self.cursor if self._size == self.capacity else 0
        return (start + i) % self.capacity

    def __getitem__(self, i: int) -> Transition:
        if not -self._size <= i < self._size:
            raise IndexError(i)
        j = self._slot(i % self._size)
        return Transition(self._obs[j].copy(), int(self._actions[j]), self._next[j].copy(),
                          float(self._extrinsic[j]), bool(self._terminal[j]))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement."""
        if batch_size <= 0 or batch_size > self._size:
            raise InvalidState(f"cannot sample {batch_size} from a buffer holding {self._size}")
        idx = rng.integers(self._size, size=batch_size)
        return Batch(self._obs[idx], self._actions[idx], self._next[idx], self._extrinsic[idx],
                     self._terminal[idx], np.zeros(batch_size))


@dataclass
class DqnAgent:
    online_net: DenseNet
    target_net: DenseNet
    opt: AdamState
    gamma: float = GAMMA
    sync_period: int = SYNC_PERIOD
    epsilon: float = 1.0
    steps_since_sync: int = 0
    td_updates: int = 0
    grad_clamp: str = "seed"

    def __post_init__(self):
        if self.target_net.layer_sizes != self.online_net.layer_sizes:
            raise InvalidInput("target and online nets must share a shape")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInput("gamma must lie in [0, 1]")
        if self.grad_clamp not in ("seed", "params"):
            raise InvalidInput(f"unknown grad_clamp mode {self.grad_clamp!r}")

    @classmethod
    def create(cls, obs_dim: int, action_count: int, rng: np.random.Generator, hidden=HIDDEN,
               learning_rate: float = POLICY_LR, **kwargs) -> "DqnAgent":
        net = DenseNet.create([obs_dim, *hidden, action_count], rng)
        return cls(net, net.copy(), AdamState.for_net(net, learning_rate), **kwargs)

    @property
    def action_count(self) -> int:
        return self.online_net.output_size

    def q_values(self, obs) -> np.ndarray:
        return self.online_net.forward(obs)

    def greedy(self, obs) -> np.ndarray | int:
        # np.argmax breaks ties toward the lowest index
        q = self.q_values(obs)
        return int(np.argmax(q)) if q.ndim == 1 else np.argmax(q, axis=1)

    def select_action(self, obs, rng: np.random.Generator) -> int:
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidInput("epsilon must lie in [0, 1]")
        if rng.random() < self.epsilon:
            return int(rng.integers(self.action_count))
        return self.greedy(obs)

    def policy_probs(self, obs, epsilon: float | None = None) -> np.ndarray:
        """Epsilon-greedy action probabilities for a batch of observations."""
        return self.probs_from_q(self.q_values(np.atleast_2d(obs)), epsilon)

    def probs_from_q(self, q: np.ndarray, epsilon: float | None = None) -> np.ndarray:
        eps = self.epsilon if epsilon is None else epsilon
        greedy = np.argmax(q, axis=1)
        a = self.action_count
        probs = np.full((greedy.shape[0], a), eps / a)
        probs[np.arange(greedy.shape[0]), greedy] += 1.0 - eps
        return probs

    def targets(self, batch: Batch) -> np.ndarray:
        """Double-Q targets: online net picks the next action, target net scores it."""
        r = clip_extrinsic(batch.extrinsic) + batch.intrinsic
        a_star = np.argmax(self.online_net.forward(batch.next_obs), axis=1)
        q_next = self.target_net.forward(batch.next_obs)[np.arange(len(batch)), a_star]
        return np.where(batch.terminal, r, r + self.gamma * q_next)

    def double_q_target(self, t: Transition) -> float:
        return float(self.targets(Batch.from_transitions([t]))[0])

    def td_update(self, batch: Batch, cache: list[np.ndarray] | None = None) -> float:
        """One Adam step on mean squared TD error; returns the pre-update loss.

        In ``seed`` mode the residual fed to backprop at each chosen Q-value is
        clamped to [-1, 1]; in ``params`` mode the parameter gradients are.
        ``cache`` may hold ``online_net.forward_cached(batch.obs)[1]`` from the
        current parameters.
        """
        n = len(batch)
        if n == 0:
            raise InvalidInput("empty batch")
        y = self.targets(batch)
        if cache is None:
            q, cache = self.online_net.forward_cached(batch.obs)
        else:
            q = cache[-1]
        rows = np.arange(n)
        resid = q[rows, batch.actions] - y
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss):
            raise NumericFault("non-finite TD loss")
        seed = np.zeros_like(q)
        if self.grad_clamp == "seed":
            seed[rows, batch.actions] = np.clip(resid, -1.0, 1.0) / n
        else:
            seed[rows, batch.actions] = resid / n
        grads, _ = self.online_net.backward(batch.obs, seed, cache=cache, input_grad=False)
        if self.grad_clamp == "params":
            for g in grads.arrays():
                np.clip(g, -1.0, 1.0, out=g)
        adam_step(self.online_net, self.opt, grads)
        self.steps_since_sync += 1
        self.td_updates += 1
        return loss

    @property
    def sync_due(self) -> bool:
        return self.steps_since_sync >= self.sync_period

    def sync_target(self) -> None:
        self.target_net.load_from(self.online_net)
        self.steps_since_sync = 0
