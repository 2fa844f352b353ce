"""Exact one-step empowerment for tabular MDPs via Blahut-Arimoto."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 10_000


@dataclass
class TabularMdp:
    """Explicit transition tensor ``transition[s, a, s']``.

    ``labels`` optionally names each state (e.g. ``(row, col, has_key)``).
    """

    transition: np.ndarray
    terminal: np.ndarray
    labels: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        t = self.transition
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise InvalidInput(f"transition tensor must be [S, A, S], got {t.shape}")
        if self.terminal.shape != (t.shape[0],):
            raise InvalidInput("terminal flags must have one entry per state")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=2) - 1.0) > 1e-12):
            raise InvalidInput("every transition row must be a probability distribution")
        for s in np.flatnonzero(self.terminal):
            if np.any(t[s, :, s] != 1.0):
                raise InvalidInput(f"terminal state {s} must self-loop with probability 1")

    @property
    def state_count(self) -> int:
        return self.transition.shape[0]

    @property
    def action_count(self) -> int:
        return self.transition.shape[1]

    @classmethod
    def from_json(cls, source) -> "TabularMdp":
        """Load ``{"states", "actions", "transitions", "terminal"}`` from a path or dict."""
        if isinstance(source, (str, Path)):
            source = json.loads(Path(source).read_text())
        try:
            mdp = cls(np.array(source["transitions"], dtype=np.float64), source["terminal"])
            states, actions = int(source["states"]), int(source["actions"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed MDP document: {exc}") from exc
        if (mdp.state_count, mdp.action_count) != (states, actions):
            raise InvalidInput("declared states/actions do not match the transition tensor")
        return mdp

    def to_json(self) -> dict:
        return {
            "states": self.state_count,
            "actions": self.action_count,
            "transitions": self.transition.tolist(),
            "terminal": self.terminal.tolist(),
        }


@dataclass
class CapacityResult:
    capacity_nats: float
    optimal_source: np.ndarray
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)


def blahut_arimoto(channel, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> CapacityResult:
    """Capacity (nats) of a discrete memoryless channel ``p(y|x)``, rows indexed by x.

    Stops once ``I(source; channel)`` improves by less than ``tol`` in one
    iteration; ``iterations == max_iters`` signals non-convergence.
    """
    w = np.asarray(channel, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] == 0 or w.shape[1] == 0:
        raise InvalidInput("channel must be a non-empty 2-D matrix")
    if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9) or not np.all(np.isfinite(w)):
        raise InvalidInput("channel rows must be probability distributions")
    if tol <= 0:
        raise InvalidInput("tol must be positive")

    n_in = w.shape[0]
    source = np.full(n_in, 1.0 / n_in)
    positive = w > 0
    logw = np.where(positive, np.log(np.where(positive, w, 1.0)), 0.0)

    history: list[float] = []
    previous = -np.inf
    iterations = max_iters
    for it in range(1, max_iters + 1):
        out = source @ w
        logout = np.log(np.where(out > 0, out, 1.0))
        # per-input divergence D(w_x || out)
        div = np.where(positive, w * (logw - logout[None, :]), 0.0).sum(axis=1)
        lower = float(source @ div)
        history.append(lower)
        if lower - previous < tol:
            iterations = it
            break
        previous = lower
        weights = source * np.exp(div - div.max())
        source = weights / weights.sum()

    capacity = max(history[-1], 0.0)
    return CapacityResult(capacity, source, iterations, history)


def exact_empowerment(mdp: TabularMdp, state: int, tol: float = DEFAULT_TOL) -> float:
    if not 0 <= state < mdp.state_count:
        raise InvalidInput(f"state {state} out of range")
    if mdp.terminal[state]:
        return 0.0
    return blahut_arimoto(mdp.transition[state], tol=tol).capacity_nats


def empowerment_map(mdp: TabularMdp, tol: float = DEFAULT_TOL) -> np.ndarray:
    return np.array([exact_empowerment(mdp, s, tol) for s in range(mdp.state_count)])


def chain_mdp(length: int = 3) -> TabularMdp:
    """Left/right walk on a line whose two end states are absorbing."""
    if length < 1:
        raise InvalidInput("chain length must be positive")
    t = np.zeros((length, 2, length))
    terminal = np.zeros(length, dtype=bool)
    for s in range(length):
        if s in (0, length - 1):
            terminal[s] = True
            t[s, :, s] = 1.0
        else:
            t[s, 0, s - 1] = 1.0
            t[s, 1, s + 1] = 1.0
    return TabularMdp(t, terminal, labels=list(range(length)))
