"""Small deterministic gridworlds and a Gaussian MI benchmark source."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, InvalidInput, InvalidState
from .oracle import TabularMdp

WALL, FLOOR, KEY, DOOR, GOAL, START = "#", ".", "K", "D", "G", "S"
ACTIONS = ("up", "down", "left", "right")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

OPEN_5X5 = """\
#######
#.....#
#.....#
#..S..#
#.....#
#.....#
#######"""

# Two 5x7 rooms joined by a door in the dividing wall. The key sits in the far
# corner of room one, away from the door; the goal is in the far corner of
# room two.
KEY_DOOR = """\
#################
#K......#.......#
#.......#.......#
#......SD.......#
#.......#.......#
#.......#......G#
#################"""

BUILTIN_LAYOUTS = {"open5x5": OPEN_5X5, "keydoor": KEY_DOOR}


def parse_layout(text: str) -> np.ndarray:
    rows = [line.rstrip("\r") for line in text.strip("\n").split("\n")]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise InvalidConfig("layout rows must be non-empty and of equal length")
    grid = np.array([list(r) for r in rows])
    unknown = set(grid.ravel()) - {WALL, FLOOR, KEY, DOOR, GOAL, START}
    if unknown:
        raise InvalidConfig(f"unknown layout characters: {sorted(unknown)}")
    return grid


class GridRooms:
    """Key/door/goal gridworld with one-hot observations.

    The observation is a one-hot over every layout cell (walls included)
    followed by a single has-key bit. Reaching a goal gives reward 1 and ends
    the episode; hitting ``max_steps`` truncates it without a terminal flag.
    """

    action_count = len(ACTIONS)

    def __init__(self, layout: str, max_steps: int = 500, slip: float = 0.0,
                 require_goal: bool = True, seed: int | None = None):
        self.grid = parse_layout(layout)
        self.layout = layout
        starts = np.argwhere(self.grid == START)
        if len(starts) != 1:
            raise InvalidConfig("layout needs exactly one start cell 'S'")
        if require_goal and not np.any(self.grid == GOAL):
            raise InvalidConfig("layout has no goal cell 'G'")
        if not 0.0 <= slip <= 1.0:
            raise InvalidConfig("slip must lie in [0, 1]")
        if max_steps <= 0:
            raise InvalidConfig("max_steps must be positive")
        self._check_enclosed()
        self.start = (int(starts[0][0]), int(starts[0][1]))
        self.max_steps = max_steps
        self.slip = slip
        self.rng = np.random.default_rng(seed)
        self.has_key_cells = bool(np.any(self.grid == KEY))
        self.rows, self.cols = self.grid.shape
        self.open_cells = [tuple(map(int, rc)) for rc in np.argwhere(self.grid != WALL)]
        self._index = {lab: i for i, lab in enumerate(self.state_labels())}
        self.reset()

    @classmethod
    def from_file(cls, path, **kwargs) -> "GridRooms":
        path = Path(path)
        if not path.exists():
            raise InvalidConfig(f"layout file not found: {path}")
        return cls(path.read_text(), **kwargs)

    def _check_enclosed(self):
        g = self.grid
        border = np.concatenate([g[0], g[-1], g[:, 0], g[:, -1]])
        if np.any(border != WALL):
            raise InvalidConfig("layout must be enclosed by walls")

    @property
    def obs_dim(self) -> int:
        return self.rows * self.cols + 1

    @property
    def cell_count(self) -> int:
        return self.rows * self.cols

    # -- dynamics ---------------------------------------------------------

    def move(self, pos: tuple[int, int], has_key: bool, action: int):
        """Deterministic successor ``(pos', has_key', reward, terminal)``."""
        if not 0 <= action < self.action_count:
            raise InvalidInput(f"action {action} out of range")
        dr, dc = MOVES[action]
        r, c = pos[0] + dr, pos[1] + dc
        cell = self.grid[r, c]
        if cell == WALL or (cell == DOOR and not has_key):
            r, c = pos
            cell = self.grid[r, c]
        if cell == KEY:
            has_key = True
        if cell == GOAL:
            return (r, c), has_key, 1.0, True
        return (r, c), has_key, 0.0, False

    def observe(self, pos=None, has_key=None) -> np.ndarray:
        pos = self.pos if pos is None else pos
        has_key = self.has_key if has_key is None else has_key
        obs = np.zeros(self.obs_dim)
        obs[pos[0] * self.cols + pos[1]] = 1.0
        obs[-1] = 1.0 if has_key else 0.0
        return obs

    def reset(self) -> np.ndarray:
        self.pos = self.start
        self.has_key = False
        self.step_count = 0
        self.terminal = False
        self.truncated = False
        return self.observe()

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated

    def step(self, action: int):
        if self.done:
            raise InvalidState("episode has finished; call reset()")
        action = int(action)
        if self.slip > 0.0 and self.rng.random() < self.slip:
            action = int(self.rng.integers(self.action_count))
        self.pos, self.has_key, reward, self.terminal = self.move(self.pos, self.has_key, action)
        self.step_count += 1
        if not self.terminal and self.step_count >= self.max_steps:
            self.truncated = True
        return self.observe(), reward, self.terminal

    # -- tabular export ---------------------------------------------------

    def state_labels(self) -> list[tuple[int, int, bool]]:
        flags = (False, True) if self.has_key_cells else (False,)
        return [(r, c, k) for k in flags for (r, c) in self.open_cells]

    def state_index(self, pos=None, has_key=None) -> int:
        pos = self.pos if pos is None else pos
        has_key = self.has_key if has_key is None else has_key
        if not self.has_key_cells:
            has_key = False
        return self._index[(pos[0], pos[1], bool(has_key))]

    def to_tabular(self) -> TabularMdp:
        labels = self.state_labels()
        n, a = len(labels), self.action_count
        det = np.zeros((n, a, n))
        terminal = np.zeros(n, dtype=bool)
        for i, (r, c, k) in enumerate(labels):
            if self.grid[r, c] == GOAL:
                terminal[i] = True
                det[i, :, i] = 1.0
                continue
            for act in range(a):
                pos, key, _, _ = self.move((r, c), k, act)
                det[i, act, self.state_index(pos, key)] = 1.0
        if self.slip > 0.0:
            mixed = (1.0 - self.slip) * det + self.slip * det.mean(axis=1, keepdims=True)
            det = np.where(terminal[:, None, None], det, mixed)
            # renormalise away rounding so rows sum to one exactly
            det /= det.sum(axis=2, keepdims=True)
        return TabularMdp(det, terminal, labels=labels)


def make_env(spec: str, max_steps: int = 500, slip: float = 0.0, seed: int | None = None) -> GridRooms:
    """Build a gridworld from a builtin name or a path to an ASCII layout file."""
    if spec in BUILTIN_LAYOUTS:
        return GridRooms(BUILTIN_LAYOUTS[spec], max_steps=max_steps, slip=slip,
                         require_goal=(spec != "open5x5"), seed=seed)
    path = Path(spec)
    if not path.exists():
        raise InvalidConfig(f"unknown environment {spec!r} (not a builtin and no such layout file)")
    text = path.read_text()
    return GridRooms(text, max_steps=max_steps, slip=slip, require_goal=GOAL in text, seed=seed)


@dataclass
class GaussianPairSource:
    """Bivariate standard normal pairs with correlation ``rho``."""

    rho: float
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise InvalidConfig("rho must satisfy |rho| < 1")
        self.rng = np.random.default_rng(self.seed)

    @property
    def true_mi(self) -> float:
        return -0.5 * np.log1p(-self.rho**2)

    def sample(self, n: int) -> np.ndarray:
        """``(n, 2)`` array of (x, y) pairs."""
        if n <= 0:
            raise InvalidInput("n must be positive")
        x = self.rng.standard_normal(n)
        noise = self.rng.standard_normal(n)
        y = self.rho * x + np.sqrt(1.0 - self.rho**2) * noise
        return np.stack([x, y], axis=1)
