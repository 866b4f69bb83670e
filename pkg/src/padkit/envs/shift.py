"""Declarative test-environment perturbations and the fixed color tables."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from padkit.numcore import ConfigurationError

MODES = ("none", "colors", "video_bg", "distractors", "texture", "lighting", "dynamics")

MODE_FIELDS = {
    "none": (),
    "colors": ("color_set_index", "table"),
    "video_bg": ("animation_seed", "phase_rate"),
    "distractors": ("distractor_count", "distractor_seed"),
    "texture": ("wall_texture_id", "floor_texture_id"),
    "lighting": ("brightness",),
    "dynamics": ("gain_factor", "friction_factor", "mount_offset"),
}

POINTREACH_MODES = ("none", "colors", "video_bg", "distractors", "dynamics")
GRIDMAZE_MODES = ("none", "texture", "lighting")

TABLES = ("test", "train", "base")


@dataclass(frozen=True)
class ShiftSpec:
    mode: str = "none"
    color_set_index: int = 0
    table: str = "test"
    animation_seed: int = 0
    phase_rate: float = 0.2
    distractor_count: int = 3
    distractor_seed: int = 0
    wall_texture_id: int = 0
    floor_texture_id: int = 0
    brightness: float = 1.0
    gain_factor: float = 1.0
    friction_factor: float = 1.0
    mount_offset: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown shift mode {self.mode!r}")
        if not 0 <= self.color_set_index < TABLE_SIZE:
            raise ConfigurationError("color_set_index must be in 0..99")
        if self.table not in TABLES:
            raise ConfigurationError(f"unknown color table {self.table!r}")
        if not 0 < self.brightness <= 1:
            raise ConfigurationError("brightness must lie in (0, 1]")
        if self.distractor_count < 0:
            raise ConfigurationError("distractor_count must be non-negative")
        if self.wall_texture_id < 0 or self.floor_texture_id < 0:
            raise ConfigurationError("texture ids must be non-negative")

    def to_text(self) -> str:
        keys = MODE_FIELDS[self.mode]
        if not keys:
            return self.mode
        return self.mode + ":" + ",".join(f"{k}={getattr(self, k)!r}".replace("'", "") for k in keys)

    def __str__(self) -> str:
        return self.to_text()

    @classmethod
    def parse(cls, text: str) -> "ShiftSpec":
        """Inverse of :meth:`to_text`; ``mode`` or ``mode:key=val,key=val``."""
        text = text.strip()
        mode, _, rest = text.partition(":")
        if mode not in MODES:
            raise ConfigurationError(f"unknown shift mode {mode!r}")
        kwargs: dict = {"mode": mode}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, val = item.partition("=")
            key = key.strip()
            if not eq or key not in MODE_FIELDS[mode]:
                raise ConfigurationError(f"key {key!r} is not valid for shift mode {mode!r}")
            kind = types[key]
            try:
                kwargs[key] = int(val) if kind == "int" else float(val) if kind == "float" else val.strip()
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {key}: {val!r}") from exc
        return cls(**kwargs)


# ------------------------------------------------------------------ color tables
TABLE_SIZE = 100
ROLES = ("background", "goal", "agent")
BASE_PALETTE = np.array(
    [
        [0.28, 0.30, 0.32],  # background
        [0.72, 0.30, 0.28],  # goal
        [0.70, 0.70, 0.72],  # agent
    ]
)
TEST_STD = 0.15
TRAIN_VARIANCE_FRACTION = 0.5
TEST_TABLE_SEED = 7001
TRAIN_TABLE_SEED = 3001


def generate_color_table(seed: int, std: float) -> np.ndarray:
    """100 palettes ``(100, 3 roles, 3 channels)`` around :data:`BASE_PALETTE`.

    Deviations are uniform, then standardised per (role, channel) so the
    table's spread is exactly ``std``; uniform tails keep every value inside
    [0, 1] without clipping.
    """
    rng = np.random.default_rng(seed)
    dev = rng.uniform(-1.0, 1.0, size=(TABLE_SIZE, 3, 3))
    dev -= dev.mean(axis=0)
    dev /= dev.std(axis=0)
    table = BASE_PALETTE + std * dev
    if table.min() < 0 or table.max() > 1:
        raise ConfigurationError("palette table leaves [0, 1]; lower the spread")
    return np.round(table, 6)


def format_color_table(table: np.ndarray) -> str:
    lines = []
    for entry in table:
        lines.append(" ".join(",".join(f"{c:.6f}" for c in rgb) for rgb in entry))
    return "\n".join(lines) + "\n"


def parse_color_table(text: str) -> np.ndarray:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([[float(c) for c in trip.split(",")] for trip in line.split()])
    table = np.array(rows, dtype=np.float64)
    if table.shape != (TABLE_SIZE, 3, 3):
        raise ConfigurationError(f"color table has shape {table.shape}, expected (100, 3, 3)")
    return table


@lru_cache(maxsize=None)
def color_table(which: str) -> np.ndarray:
    """Stored ``test`` or ``train`` table, read from package data."""
    if which not in ("test", "train"):
        raise ConfigurationError(f"unknown color table {which!r}")
    text = resources.files("padkit.envs").joinpath(f"data/colors_{which}.txt").read_text()
    table = parse_color_table(text)
    table.setflags(write=False)
    return table


def palette_for(spec: ShiftSpec) -> np.ndarray:
    """(3 roles, RGB) colors for a PointReach render under ``spec``."""
    if spec.mode != "colors" or spec.table == "base":
        return BASE_PALETTE
    return color_table(spec.table)[spec.color_set_index]


def check_shift_for_kind(kind: str, spec: ShiftSpec) -> None:
    allowed = POINTREACH_MODES if kind == "PointReach" else GRIDMAZE_MODES
    if spec.mode not in allowed:
        raise ConfigurationError(f"shift mode {spec.mode!r} is not available for {kind}")
