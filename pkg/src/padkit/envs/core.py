"""PointReach (continuous 2-d reaching) and GridMaze (discrete top-down maze).

Both render RGB frames procedurally, keep a stack of the last ``k`` frames and
run fixed-horizon episodes.  Shifts change rendering only, except the
``dynamics`` shift, which changes the transition only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from padkit.envs import render as R
from padkit.envs.shift import (
    TABLE_SIZE,
    ShiftSpec,
    check_shift_for_kind,
    palette_for,
)
from padkit.numcore import ConfigurationError, UsageError

KINDS = ("PointReach", "GridMaze")
DEFAULT_HORIZON = {"PointReach": 100, "GridMaze": 200}


@dataclass(frozen=True)
class EnvConfig:
    render_size: int = 48
    frame_stack: int = 3
    horizon: Optional[int] = None
    action_repeat: int = 1
    margin: int = 8
    gain: float = 0.05
    friction: float = 1.0
    min_start_distance: float = 0.2

    def horizon_for(self, kind: str) -> int:
        return self.horizon if self.horizon is not None else DEFAULT_HORIZON[kind]


@dataclass
class Transition:
    s_t: np.ndarray
    a_t: np.ndarray
    r_t: float
    s_t1: np.ndarray
    done: bool


class EnvInstance:
    kind = ""

    def __init__(self, shift: ShiftSpec, config: EnvConfig, seed: int, horizon: Optional[int] = None):
        check_shift_for_kind(self.kind, shift)
        self.shift = shift
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.horizon = horizon if horizon is not None else config.horizon_for(self.kind)
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        self.size = config.render_size
        self.reset()

    # -- episode control
    def reset(self, shift: Optional[ShiftSpec] = None) -> np.ndarray:
        """Start a new episode; ``shift`` swaps the visual/dynamics shift first."""
        if shift is not None and shift != self.shift:
            check_shift_for_kind(self.kind, shift)
            self.shift = shift
            self._shift_changed()
        self.step_index = 0
        self._init_state()
        frame = self.render()
        self.frames = [frame] * self.config.frame_stack
        return self.observation()

    @property
    def done(self) -> bool:
        return self.step_index >= self.horizon

    def observation(self) -> np.ndarray:
        return np.concatenate(self.frames, axis=0)

    def step(self, action):
        if self.done:
            raise UsageError("step called after the episode ended; call reset()")
        reward = 0.0
        for _ in range(self.config.action_repeat):
            reward += self._transition(action)
        self.step_index += 1
        self.frames = self.frames[1:] + [self.render()]
        return self.observation(), float(reward), self.done

    # -- per kind
    def _shift_changed(self) -> None:
        pass

    def _init_state(self) -> None:
        raise NotImplementedError

    def _transition(self, action) -> float:
        raise NotImplementedError

    def render(self) -> np.ndarray:
        raise NotImplementedError

    def success(self) -> bool:
        raise NotImplementedError


class PointReach(EnvInstance):
    """Point mass steered toward a goal; reward is minus the distance to the goal."""

    kind = "PointReach"
    action_dim = 2

    def _init_state(self) -> None:
        while True:
            pos = self.rng.uniform(0.0, 1.0, size=2)
            goal = self.rng.uniform(0.0, 1.0, size=2)
            if np.linalg.norm(pos - goal) >= self.config.min_start_distance:
                break
        self.pos, self.goal = pos, goal
        if self.shift.mode == "distractors":
            drng = np.random.default_rng(self.shift.distractor_seed)
            n = self.shift.distractor_count
            self._d_pos = drng.uniform(0.0, 1.0, size=(n, 2))
            self._d_vel = drng.uniform(-0.02, 0.02, size=(n, 2))
            self._d_rad = drng.uniform(0.04, 0.08, size=n)
            self._d_col = drng.uniform(0.05, 0.95, size=(n, 3))
            self._d_square = drng.random(n) < 0.5

    def _transition(self, action) -> float:
        a = np.asarray(action, dtype=np.float64).reshape(2)
        if np.any(np.abs(a) > 1 + 1e-6) or not np.all(np.isfinite(a)):
            raise ValueError(f"PointReach action must lie in [-1, 1]^2, got {a}")
        s = self.shift
        scale = self.config.gain * self.config.friction
        if s.mode == "dynamics":
            scale *= s.gain_factor * s.friction_factor
            a = a + s.mount_offset
        self.pos = np.clip(self.pos + scale * a, 0.0, 1.0)
        return -float(np.linalg.norm(self.pos - self.goal))

    def distance(self) -> float:
        return float(np.linalg.norm(self.pos - self.goal))

    def success(self) -> bool:
        return self.distance() < 0.05

    def to_pixels(self, p) -> tuple[float, float]:
        m = self.config.margin
        span = self.size - 2 * m
        return m + p[0] * span, m + p[1] * span

    def render(self) -> np.ndarray:
        size = self.size
        bg, goal_c, agent_c = palette_for(self.shift)
        if self.shift.mode == "video_bg":
            frame = R.plaid(size, bg, self.step_index, self.shift.animation_seed, self.shift.phase_rate)
        else:
            frame = R.flat(bg, size)
        if self.shift.mode == "distractors":
            for i in range(len(self._d_pos)):
                p = self._d_pos[i] + self._d_vel[i] * self.step_index
                p = 1.0 - np.abs(np.mod(p, 2.0) - 1.0)  # reflect into [0, 1]
                cx, cy = self.to_pixels(p)
                r = self._d_rad[i] * size
                mask = R.square_mask(size, cx, cy, r) if self._d_square[i] else R.disc_mask(size, cx, cy, r)
                R.paint(frame, mask, self._d_col[i])
        R.blend(frame, R.disc_coverage(size, *self.to_pixels(self.goal), 0.05 * size), goal_c)
        R.blend(frame, R.disc_coverage(size, *self.to_pixels(self.pos), 0.06 * size), agent_c)
        return R.quantize(frame)


MAZE_SIZE = 7
MAZE_WALLS = frozenset(
    [(r, c) for r in range(MAZE_SIZE) for c in range(MAZE_SIZE) if r in (0, MAZE_SIZE - 1) or c in (0, MAZE_SIZE - 1)]
    + [(2, 2), (2, 4), (4, 2), (4, 3)]
)
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # up, right, down, left
PELLET_REWARD = 1.0
LANTERN_REWARD = -1.0
LIVING_REWARD = -0.01
PELLET_COLOR = (0.15, 0.85, 0.2)
LANTERN_COLOR = (0.95, 0.75, 0.1)
AGENT_COLOR = (0.15, 0.3, 0.95)


class GridMaze(EnvInstance):
    """7x7 maze: collect pellets (+1), avoid lanterns (-1), pay a living cost."""

    kind = "GridMaze"
    action_dim = 4
    n_pellets = 4
    n_lanterns = 3

    def _init_state(self) -> None:
        free = [(r, c) for r in range(MAZE_SIZE) for c in range(MAZE_SIZE) if (r, c) not in MAZE_WALLS]
        idx = self.rng.permutation(len(free))[: 1 + self.n_pellets + self.n_lanterns]
        cells = [free[i] for i in idx]
        self.agent = cells[0]
        self.pellets = set(cells[1 : 1 + self.n_pellets])
        self.lanterns = frozenset(cells[1 + self.n_pellets :])
        if not hasattr(self, "_background"):
            self._background = self._static_background()

    def _shift_changed(self) -> None:
        self._background = self._static_background()

    def _static_background(self) -> np.ndarray:
        size = self.size
        s = self.shift
        wall_id = s.wall_texture_id if s.mode == "texture" else 0
        floor_id = s.floor_texture_id if s.mode == "texture" else 0
        wall = R.texture(wall_id, 1, size, MAZE_SIZE)
        floor = R.texture(floor_id, 2, size, MAZE_SIZE)
        cell = (np.arange(size) * MAZE_SIZE) // size
        is_wall = np.zeros((size, size), dtype=bool)
        for r, c in MAZE_WALLS:
            is_wall |= (cell[:, None] == r) & (cell[None, :] == c)
        return np.where(is_wall[None], wall, floor)

    def _transition(self, action) -> float:
        a = int(np.asarray(action).reshape(()))
        if not 0 <= a < 4:
            raise ValueError(f"GridMaze action must be 0..3, got {action}")
        dr, dc = MOVES[a]
        nxt = (self.agent[0] + dr, self.agent[1] + dc)
        if nxt not in MAZE_WALLS:
            self.agent = nxt
        reward = LIVING_REWARD
        if self.agent in self.pellets:
            self.pellets.discard(self.agent)
            reward += PELLET_REWARD
        elif self.agent in self.lanterns:
            reward += LANTERN_REWARD
        return reward

    def success(self) -> bool:
        return not self.pellets

    def _cell_center(self, cell) -> tuple[float, float]:
        k = self.size / MAZE_SIZE
        return (cell[1] + 0.5) * k, (cell[0] + 0.5) * k

    def render(self) -> np.ndarray:
        frame = self._background.copy()
        r = 0.33 * self.size / MAZE_SIZE
        for cell in sorted(self.lanterns):
            R.paint(frame, R.square_mask(self.size, *self._cell_center(cell), r), LANTERN_COLOR)
        for cell in sorted(self.pellets):
            R.paint(frame, R.disc_mask(self.size, *self._cell_center(cell), r), PELLET_COLOR)
        R.paint(frame, R.disc_mask(self.size, *self._cell_center(self.agent), 1.2 * r), AGENT_COLOR)
        frame = R.quantize(frame)
        if self.shift.mode == "lighting":
            frame = np.clip(frame * np.float32(self.shift.brightness), 0.0, 1.0).astype(np.float32)
        return frame


ENV_CLASSES = {"PointReach": PointReach, "GridMaze": GridMaze}


def make(kind: str, shift: ShiftSpec | str | None = None, config: EnvConfig | None = None, seed: int = 0, horizon: Optional[int] = None) -> EnvInstance:
    if kind not in ENV_CLASSES:
        raise ConfigurationError(f"unknown environment kind {kind!r}")
    if shift is None:
        shift = ShiftSpec()
    elif isinstance(shift, str):
        shift = ShiftSpec.parse(shift)
    return ENV_CLASSES[kind](shift, config or EnvConfig(), seed, horizon)


def action_space(kind: str) -> tuple[str, int]:
    return ("continuous", 2) if kind == "PointReach" else ("discrete", 4)


DR_WALL_TEXTURES = 7
DR_FLOOR_TEXTURES = 8


def sample_randomization(kind: str, rng: np.random.Generator, table_size: int = TABLE_SIZE) -> ShiftSpec:
    """Training-time randomisation: a color palette (PointReach) or texture pair (GridMaze).

    ``table_size`` restricts draws to the first entries of the training table;
    with ``table_size=0`` the draw collapses to the base palette.
    """
    if kind == "PointReach":
        if table_size == 0:
            return ShiftSpec(mode="colors", table="base")
        return ShiftSpec(mode="colors", table="train", color_set_index=int(rng.integers(table_size)))
    if kind == "GridMaze":
        if table_size == 0:
            return ShiftSpec(mode="texture")
        return ShiftSpec(
            mode="texture",
            wall_texture_id=int(rng.integers(DR_WALL_TEXTURES)),
            floor_texture_id=int(rng.integers(DR_FLOOR_TEXTURES)),
        )
    raise ConfigurationError(f"unknown environment kind {kind!r}")
