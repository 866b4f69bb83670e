"""Reward-driven learners: SAC (continuous), A2C (discrete), and replay."""

from padkit.rlalgos.a2c import A2cConfig, Rollout, a2c_loss, a2c_update, clip_grad_norm, collect_rollout, n_step_returns
from padkit.rlalgos.replay import Batch, ReplayBuffer
from padkit.rlalgos.sac import SAC, SacConfig, sac_update, soft_update

__all__ = [
    "A2cConfig",
    "Batch",
    "ReplayBuffer",
    "Rollout",
    "SAC",
    "SacConfig",
    "a2c_loss",
    "a2c_update",
    "clip_grad_norm",
    "collect_rollout",
    "n_step_returns",
    "sac_update",
    "soft_update",
]
