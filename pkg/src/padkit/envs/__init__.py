"""Procedurally rendered pixel environments with controllable distribution shift."""

from padkit.envs.core import (
    DEFAULT_HORIZON,
    KINDS,
    EnvConfig,
    EnvInstance,
    GridMaze,
    PointReach,
    Transition,
    action_space,
    make,
    sample_randomization,
)
from padkit.envs.shift import ShiftSpec, color_table, palette_for

__all__ = [
    "DEFAULT_HORIZON",
    "KINDS",
    "EnvConfig",
    "EnvInstance",
    "GridMaze",
    "PointReach",
    "ShiftSpec",
    "Transition",
    "action_space",
    "color_table",
    "make",
    "palette_for",
    "sample_randomization",
]
