"""Run configuration and strict flat-TOML parsing."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import InvalidConfig

INTRINSIC_MODES = ("empowerment", "none")
MARGINAL_MODES = ("model", "shuffle")
TRAIN_JOINTS = ("model", "observed")
GRAD_CLAMP_MODES = ("seed", "params")


@dataclass(frozen=True)
class RunConfig:
    env: str = "keydoor"
    max_episode_steps: int = 500
    slip: float = 0.0
    total_steps: int = 200_000
    warmup_steps: int = 1000
    batch_size: int = 64
    inner_loop_m: int = 1
    lr_dynamics: float = 1e-2
    lr_statistics: float = 1e-3
    lr_policy: float = 1e-4
    gamma: float = 0.99
    beta: float = 0.1
    sync_period: int = 2000
    buffer_capacity: int = 100_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.1
    encoder_dim: int = 64
    hidden_width: int = 128
    marginal_samples: int = 16
    ema_rate: float = 0.01
    ema_correction: bool = True
    marginal_mode: str = "model"
    train_joint: str = "model"  # successor in T's joint training rows; model-marginal mode only
    grad_clamp: str = "seed"
    intrinsic: str = "empowerment"
    seed: int = 0
    metrics_every: int = 100

    def __post_init__(self):
        for name, expected in _field_types().items():
            value = getattr(self, name)
            if expected is float and isinstance(value, int) and not isinstance(value, bool):
                object.__setattr__(self, name, float(value))
            elif not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
                raise InvalidConfig(f"{name}: expected {expected.__name__}, got {type(value).__name__}")
        self.validate()

    def validate(self):
        if self.warmup_steps < self.batch_size:
            raise InvalidConfig("warmup_steps must be at least batch_size")
        for name in ("lr_dynamics", "lr_statistics", "lr_policy"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name}: learning rates must be positive")
        for name in ("batch_size", "inner_loop_m", "sync_period", "buffer_capacity",
                     "encoder_dim", "hidden_width", "marginal_samples", "metrics_every", "max_episode_steps"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name}: must be positive")
        if self.total_steps < 0:
            raise InvalidConfig("total_steps: must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidConfig("gamma: must lie in [0, 1]")
        if self.beta < 0:
            raise InvalidConfig("beta: must be non-negative")
        if not 0.0 < self.ema_rate < 1.0:
            raise InvalidConfig("ema_rate: must lie in (0, 1)")
        for name in ("epsilon_start", "epsilon_end", "epsilon_decay_fraction", "slip"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name}: must lie in [0, 1]")
        for name, allowed in (("intrinsic", INTRINSIC_MODES), ("marginal_mode", MARGINAL_MODES),
                              ("train_joint", TRAIN_JOINTS),
                              ("grad_clamp", GRAD_CLAMP_MODES)):
            if getattr(self, name) not in allowed:
                raise InvalidConfig(f"{name}: must be one of {allowed}")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def epsilon_at(self, step: int) -> float:
        """Linear decay over the first ``epsilon_decay_fraction`` of training, then flat."""
        horizon = self.epsilon_decay_fraction * self.total_steps
        if horizon <= 0 or step >= horizon:
            return self.epsilon_end
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * step / horizon


def _field_types() -> dict[str, type]:
    names = {"int": int, "float": float, "str": str, "bool": bool}
    return {f.name: (f.type if isinstance(f.type, type) else names[f.type]) for f in fields(RunConfig)}


def _coerce_override(key: str, raw: str, kind: type):
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw.replace("_", ""))
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise InvalidConfig(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(path=None, overrides=()) -> RunConfig:
    """Read a flat TOML file (or nothing) and apply ``key=value`` overrides."""
    types = _field_types()
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InvalidConfig(f"config file not found: {path}")
        try:
            doc = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfig(f"malformed TOML in {path}: {exc}") from exc
        for key, value in doc.items():
            if isinstance(value, (dict, list)):
                raise InvalidConfig(f"{key}: nested tables and arrays are not allowed")
            if key not in types:
                raise InvalidConfig(f"unknown config key {key!r}")
            values[key] = value
    for item in overrides:
        if "=" not in item:
            raise InvalidConfig(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in types:
            raise InvalidConfig(f"unknown config key {key!r}")
        values[key] = _coerce_override(key, raw.strip(), types[key])
    return RunConfig(**values)
