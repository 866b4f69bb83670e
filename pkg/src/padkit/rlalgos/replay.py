from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from padkit.numcore import UsageError


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)


class ReplayBuffer:
    """FIFO ring of transitions with uniform sampling (with replacement).

    Frames are stored as uint8.  Consecutive stacks share all but their newest
    frame, so only ``s_t`` and the newest frame of ``s_{t+1}`` are kept.
    """

    def __init__(self, capacity: int, obs_shape: tuple, action_shape: tuple = (), action_dtype=np.float32, frame_channels: int = 3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs_shape = tuple(obs_shape)
        self.frame_channels = frame_channels
        self.obs = np.zeros((capacity,) + self.obs_shape, dtype=np.uint8)
        self.next_frame = np.zeros((capacity, frame_channels) + self.obs_shape[1:], dtype=np.uint8)
        self.actions = np.zeros((capacity,) + tuple(action_shape), dtype=action_dtype)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=np.float32)
        self.size = 0
        self.write_index = 0

    def __len__(self) -> int:
        return self.size

    @staticmethod
    def _to_u8(x: np.ndarray) -> np.ndarray:
        return np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)

    def push(self, s_t, a_t, r_t, s_t1, done) -> None:
        c = self.frame_channels
        if s_t.shape != self.obs_shape or s_t1.shape != self.obs_shape:
            raise ValueError(f"observation shape must be {self.obs_shape}")
        if not np.array_equal(s_t1[:-c], s_t[c:]):
            raise ValueError("s_t1 is not the frame-shifted successor of s_t")
        i = self.write_index
        self.obs[i] = self._to_u8(s_t)
        self.next_frame[i] = self._to_u8(s_t1[-c:])
        self.actions[i] = a_t
        self.rewards[i] = r_t
        self.dones[i] = float(done)
        self.write_index = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_transition(self, t) -> None:
        self.push(t.s_t, t.a_t, t.r_t, t.s_t1, t.done)

    def _gather(self, idx: np.ndarray) -> Batch:
        c = self.frame_channels
        obs = self.obs[idx]
        nxt = np.concatenate([obs[:, c:], self.next_frame[idx]], axis=1)
        # exact inverse of render quantisation: both sides round k/255 once
        scale = np.float32(255.0)
        return Batch(
            obs=obs.astype(np.float32) / scale,
            actions=self.actions[idx].copy(),
            rewards=self.rewards[idx].copy(),
            next_obs=nxt.astype(np.float32) / scale,
            dones=self.dones[idx].copy(),
        )

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise UsageError("cannot sample from an empty replay buffer")
        return self._gather(rng.integers(0, self.size, size=n))

    def ordered(self) -> Batch:
        """All stored transitions, oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.capacity) + self.write_index) % self.capacity
        return self._gather(idx)
