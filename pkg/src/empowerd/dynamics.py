"""Forward model ``f(e(s), a) -> e(s')`` over encoded states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericFault
from .nn import AdamState, DenseNet, adam_step

DYNAMICS_LR = 1e-2
HIDDEN = (128, 128)


def one_hot(actions, action_count: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.int64)
    if np.any(actions < 0) or np.any(actions >= action_count):
        raise InvalidInput(f"action out of range [0, {action_count})")
    out = np.zeros(actions.shape + (action_count,))
    np.put_along_axis(out, actions[..., None], 1.0, axis=-1)
    return out


def check_distribution(probs, action_count: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[-1] != action_count:
        raise InvalidInput(f"distribution has {probs.shape[-1]} entries, expected {action_count}")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > 1e-9):
        raise InvalidInput("action distribution must be non-negative and sum to 1")
    return probs


def sample_actions(probs: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` actions for each row of ``probs`` (shape ``(B, A)``) -> ``(B, k)``."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    u = rng.random((probs.shape[0], k))
    return (u[:, :, None] >= cdf[:, None, :]).sum(axis=-1)


@dataclass
class ForwardModel:
    net: DenseNet
    opt: AdamState
    feature_dim: int
    action_count: int

    @classmethod
    def create(cls, feature_dim: int, action_count: int, rng: np.random.Generator,
               hidden=HIDDEN, learning_rate: float = DYNAMICS_LR) -> "ForwardModel":
        net = DenseNet.create([feature_dim + action_count, *hidden, feature_dim], rng)
        return cls(net, AdamState.for_net(net, learning_rate), feature_dim, action_count)

    def _inputs(self, enc_s, actions) -> np.ndarray:
        enc_s = np.atleast_2d(np.asarray(enc_s, dtype=np.float64))
        if enc_s.shape[1] != self.feature_dim:
            raise InvalidInput(f"encoding has {enc_s.shape[1]} dims, expected {self.feature_dim}")
        return np.concatenate([enc_s, one_hot(np.atleast_1d(actions), self.action_count)], axis=1)

    def predict_next(self, enc_s, action) -> np.ndarray:
        """Predicted next encoding; batched if ``enc_s`` is 2-D."""
        single = np.ndim(enc_s) == 1
        out = self.net.forward(self._inputs(enc_s, action))
        return out[0] if single else out

    def predict_all(self, enc_s) -> np.ndarray:
        """Predictions for every action: ``(B, A, feature_dim)``."""
        enc_s = np.atleast_2d(np.asarray(enc_s, dtype=np.float64))
        if enc_s.shape[1] != self.feature_dim:
            raise InvalidInput(f"encoding has {enc_s.shape[1]} dims, expected {self.feature_dim}")
        # the state part of the first layer is shared by all actions
        state_part = self.net.partial_preactivation(enc_s, 0)
        action_part = self.net.partial_preactivation(np.eye(self.action_count), self.feature_dim)
        return self.net.finish_forward(state_part[:, None, :] + action_part[None, :, :])

    def loss(self, enc_s, actions, enc_next) -> float:
        pred = self.net.forward(self._inputs(enc_s, actions))
        return float(np.mean(np.sum((pred - np.atleast_2d(enc_next)) ** 2, axis=1)))

    def update(self, enc_s, actions, enc_next) -> float:
        """One Adam step on mean squared L2 error; returns the pre-update loss."""
        x = self._inputs(enc_s, actions)
        target = np.atleast_2d(np.asarray(enc_next, dtype=np.float64))
        if target.shape[0] == 0:
            raise InvalidInput("empty batch")
        pred, cache = self.net.forward_cached(x)
        resid = pred - target
        loss = float(np.mean(np.sum(resid**2, axis=1)))
        if not np.isfinite(loss):
            raise NumericFault("non-finite dynamics loss")
        grads, _ = self.net.backward(x, 2.0 * resid / x.shape[0], cache=cache, input_grad=False)
        adam_step(self.net, self.opt, grads)
        return loss

    def sample_marginal_next(self, enc_s, action_probs, rng: np.random.Generator) -> np.ndarray:
        """Draw an action from ``action_probs`` and return its predicted successor."""
        probs = check_distribution(action_probs, self.action_count)
        action = int(sample_actions(probs[None, :], 1, rng)[0, 0])
        return self.predict_next(enc_s, action)

