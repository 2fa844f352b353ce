"""Donsker-Varadhan mutual information estimation (MINE) and the intrinsic reward.

The statistics network scores packed ``(e(s), one_hot(a), e(s'))`` rows. Joint
rows pair an action with its successor (the trainer feeds T ``f(e(s), a)``
here by default; rewards always score the observed one); marginal rows keep
the action but swap the successor for ``f(e(s), a~)`` with ``a~`` drawn independently from the
behaviour policy, which samples ``pi(a|s) p(s'|s)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ForwardModel, check_distribution, one_hot, sample_actions
from .errors import InvalidInput, NumericFault
from .nn import AdamState, DenseNet, adam_step

STATISTICS_LR = 1e-3
HIDDEN = (128, 128)
EMA_RATE = 0.01
MARGINAL_SAMPLES = 16
BETA = 0.1


@dataclass(frozen=True)
class DvEstimate:
    bound_nats: float
    joint_term: float
    log_marginal_term: float

    @classmethod
    def from_terms(cls, joint_term: float, log_marginal_term: float) -> "DvEstimate":
        return cls(joint_term - log_marginal_term, joint_term, log_marginal_term)


def log_mean_exp(values, axis=None):
    """``log(mean(exp(values)))`` with max subtraction."""
    v = np.asarray(values, dtype=np.float64)
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.mean(np.exp(v - m), axis=axis, keepdims=True))
    return out.item() if axis is None else np.squeeze(out, axis=axis)


def pack(enc_s, actions, enc_next, action_count: int) -> np.ndarray:
    """Concatenate encodings and one-hot actions into statistics-network rows."""
    enc_s = np.atleast_2d(enc_s)
    enc_next = np.atleast_2d(enc_next)
    return np.concatenate([enc_s, one_hot(np.atleast_1d(actions), action_count), enc_next], axis=1)


@dataclass
class StatisticsNetwork:
    net: DenseNet
    opt: AdamState
    log_ema_denominator: float = 0.0  # kept in log space so a drifting T level cannot overflow
    ema_rate: float = EMA_RATE
    ema_correction: bool = True
    ema_steps: int = 0

    @classmethod
    def create(cls, input_dim: int, rng: np.random.Generator, hidden=HIDDEN,
               learning_rate: float = STATISTICS_LR, **kwargs) -> "StatisticsNetwork":
        net = DenseNet.create([input_dim, *hidden, 1], rng)
        return cls(net, AdamState.for_net(net, learning_rate), **kwargs)

    @classmethod
    def for_transitions(cls, feature_dim: int, action_count: int, rng, **kwargs) -> "StatisticsNetwork":
        return cls.create(2 * feature_dim + action_count, rng, **kwargs)

    def __post_init__(self):
        if self.net.output_size != 1:
            raise InvalidInput("statistics network must have a scalar output")
        if not 0.0 < self.ema_rate < 1.0:
            raise InvalidInput("ema_rate must lie in (0, 1)")

    @property
    def ema_denominator(self) -> float:
        return float(np.exp(self.log_ema_denominator))

    def value(self, rows) -> np.ndarray:
        """T for each packed row; a scalar for a single row."""
        out = self.net.forward(rows)
        return out[..., 0] if out.ndim == 2 else out[0]

    def statistic(self, enc_s, action, enc_next, action_count: int) -> float:
        return float(self.value(pack(enc_s, action, enc_next, action_count))[0])

    def bound(self, joint, marginal) -> DvEstimate:
        joint, marginal = np.atleast_2d(joint), np.atleast_2d(marginal)
        if joint.shape[0] == 0 or marginal.shape[0] == 0:
            raise InvalidInput("DV bound needs non-empty joint and marginal batches")
        return DvEstimate.from_terms(float(np.mean(self.value(joint))), log_mean_exp(self.value(marginal)))

    def update(self, joint, marginal) -> DvEstimate:
        """One Adam ascent step on the DV bound; returns the pre-update estimate."""
        joint, marginal = np.atleast_2d(joint), np.atleast_2d(marginal)
        nj, nm = joint.shape[0], marginal.shape[0]
        if nj == 0 or nm == 0:
            raise InvalidInput("DV bound needs non-empty joint and marginal batches")
        rows = np.concatenate([joint, marginal], axis=0)
        out, cache = self.net.forward_cached(rows)
        t = out[:, 0]
        t_joint, t_marg = t[:nj], t[nj:]
        est = DvEstimate.from_terms(float(np.mean(t_joint)), log_mean_exp(t_marg))
        if not np.isfinite(est.bound_nats):
            raise NumericFault("non-finite DV bound")

        log_batch = est.log_marginal_term
        if self.ema_correction:
            if self.ema_steps == 0:
                self.log_ema_denominator = log_batch
            else:
                self.log_ema_denominator = float(np.logaddexp(np.log1p(-self.ema_rate) + self.log_ema_denominator,
                                                              np.log(self.ema_rate) + log_batch))
            self.ema_steps += 1
            log_denominator = self.log_ema_denominator
        else:
            log_denominator = log_batch
        if not np.isfinite(log_denominator):
            raise NumericFault("marginal denominator is not a positive finite number")

        # seeds are d(-bound)/dT, since Adam descends
        seed = np.empty((nj + nm, 1))
        seed[:nj, 0] = -1.0 / nj
        seed[nj:, 0] = np.exp(t_marg - log_denominator) / nm
        grads, _ = self.net.backward(rows, seed, cache=cache, input_grad=False)
        adam_step(self.net, self.opt, grads)
        return est


def pointwise_estimates(T: StatisticsNetwork, f: ForwardModel, enc_s, actions, enc_next,
                        policy_probs, k: int, rng: np.random.Generator,
                        predictions: np.ndarray | None = None) -> np.ndarray:
    """Single-joint-sample DV estimate per transition with ``k`` model marginals.

    Each estimate is ``T(s, a, e(s')) - log mean_j exp T(s, a, f(e(s), a~_j))``
    with ``a~_j ~ policy_probs[i]``. ``predictions`` may carry a precomputed
    ``f.predict_all(enc_s)``.
    """
    enc_s = np.atleast_2d(enc_s)
    enc_next = np.atleast_2d(enc_next)
    actions = np.atleast_1d(actions)
    a = f.action_count
    probs = check_distribution(np.atleast_2d(policy_probs), a)
    if k <= 0:
        raise InvalidInput("need at least one marginal sample")
    # f and T are deterministic, so evaluate every candidate action once and
    # gather by the drawn indices.
    if predictions is None:
        predictions = f.predict_all(enc_s)
    net, d = T.net, enc_s.shape[1]
    if enc_next.shape != enc_s.shape or net.input_size != 2 * d + a:
        raise InvalidInput("encodings do not match the statistics network input")
    # (e(s), a) is shared by the joint row and every candidate row
    head = net.partial_preactivation(np.concatenate([enc_s, one_hot(actions, a)], axis=1), 0)
    t_candidates = net.finish_forward(head[:, None, :] + net.partial_preactivation(predictions, d + a))[..., 0]
    t_joint = net.finish_forward(head + net.partial_preactivation(enc_next, d + a))[:, 0]
    draws = sample_actions(probs, k, rng)
    t_marg = np.take_along_axis(t_candidates, draws, axis=1)
    est = t_joint - log_mean_exp(t_marg, axis=1)
    if not np.all(np.isfinite(est)):
        raise NumericFault("non-finite pointwise DV estimate")
    return est


def intrinsic_rewards(T, f, enc_s, actions, enc_next, policy_probs, beta: float, rng,
                      k: int = MARGINAL_SAMPLES) -> np.ndarray:
    """``beta * max(0, estimate)`` for a batch of transitions."""
    if beta < 0:
        raise InvalidInput("beta must be non-negative")
    est = pointwise_estimates(T, f, enc_s, actions, enc_next, policy_probs, k, rng)
    return beta * np.maximum(est, 0.0)


def intrinsic_reward(T, f, enc_s, action, enc_next, policy_probs, beta: float, rng,
                     k: int = MARGINAL_SAMPLES) -> float:
    return float(intrinsic_rewards(T, f, enc_s, [action], enc_next, np.atleast_2d(policy_probs), beta, rng, k)[0])


def model_marginal_rows(f: ForwardModel, enc_s, actions, policy_probs, rng,
                        predictions: np.ndarray | None = None) -> np.ndarray:
    """One marginal row per transition: real action, successor from a resampled action."""
    enc_s = np.atleast_2d(enc_s)
    probs = check_distribution(np.atleast_2d(policy_probs), f.action_count)
    resampled = sample_actions(probs, 1, rng)[:, 0]
    if predictions is None:
        succ = f.predict_next(enc_s, resampled)
    else:
        succ = predictions[np.arange(enc_s.shape[0]), resampled]
    return pack(enc_s, actions, succ, f.action_count)


def shuffled_marginal_rows(enc_s, actions, enc_next, action_count: int, rng) -> np.ndarray:
    """Model-free baseline: successors permuted across the batch."""
    perm = rng.permutation(np.atleast_2d(enc_next).shape[0])
    return pack(enc_s, actions, np.atleast_2d(enc_next)[perm], action_count)
