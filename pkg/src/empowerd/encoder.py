"""Fixed random linear feature map used as the state representation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .nn import DenseNet

DEFAULT_OUT_DIM = 64


@dataclass(frozen=True)
class RandomEncoder:
    obs_dim: int
    seed: int
    out_dim: int = DEFAULT_OUT_DIM
    projection: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.obs_dim <= 0 or self.out_dim <= 0:
            raise InvalidInput("encoder dimensions must be positive")
        rng = np.random.default_rng(self.seed)
        proj = rng.normal(0.0, 1.0 / np.sqrt(self.obs_dim), size=(self.out_dim, self.obs_dim))
        proj.setflags(write=False)
        object.__setattr__(self, "projection", proj)

    def encode(self, obs) -> np.ndarray:
        """Project one observation ``(obs_dim,)`` or a batch ``(B, obs_dim)``."""
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.obs_dim or obs.ndim not in (1, 2):
            raise InvalidInput(f"observation shape {obs.shape} does not match obs_dim {self.obs_dim}")
        return obs @ self.projection.T

    __call__ = encode

    def as_net(self) -> DenseNet:
        """The projection as a bias-free single-layer net, for snapshotting."""
        return DenseNet([self.obs_dim, self.out_dim], [np.array(self.projection)], [np.zeros(self.out_dim)])
