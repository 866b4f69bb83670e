"""Self-supervised objectives on top of the shared encoder, plus crop augmentation.

Two tasks are supported: inverse dynamics (predict ``a_t`` from the encodings of
``s_t`` and ``s_{t+1}``) and rotation prediction (classify which of four
quarter turns was applied).  Forward-dynamics prediction in feature space is
deliberately absent: an encoder that maps every state to one constant vector
solves it with zero loss, so it carries no signal for adaptation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from padkit import numcore as nc
from padkit import policynet as pn
from padkit.numcore import DimensionError, Tensor, UsageError


@dataclass(frozen=True)
class CropRule:
    source_size: int
    target_size: int
    policy: str = "random"

    def __post_init__(self):
        if self.target_size > self.source_size:
            raise DimensionError("crop target larger than source")
        if self.policy not in ("random", "center"):
            raise ValueError(f"unknown crop policy {self.policy!r}")

    @property
    def max_offset(self) -> int:
        return self.source_size - self.target_size


def _check_size(obs: np.ndarray, source: int) -> None:
    if obs.shape[-1] != source or obs.shape[-2] != source:
        raise DimensionError(f"expected spatial size {source}, got {obs.shape[-2:]}")


def crop_at(obs: np.ndarray, top: int, left: int, size: int) -> np.ndarray:
    return obs[..., top : top + size, left : left + size]


def random_crop(obs: np.ndarray, rule: CropRule, rng: np.random.Generator, return_offsets: bool = False):
    """Crop one stacked observation ``(C, H, W)``; every frame shares the offsets."""
    _check_size(obs, rule.source_size)
    top, left = rng.integers(0, rule.max_offset + 1, size=2)
    out = np.ascontiguousarray(crop_at(obs, top, left, rule.target_size))
    return (out, (int(top), int(left))) if return_offsets else out


def random_crop_batch(obs: np.ndarray, target_size: int, rng: np.random.Generator, return_offsets: bool = False):
    """Independent offsets per row of ``(N, C, H, W)``, shared across channels of a row."""
    n, c, h, w = obs.shape
    if h != w:
        raise DimensionError("random_crop_batch expects square frames")
    rule = CropRule(h, target_size)
    offs = rng.integers(0, rule.max_offset + 1, size=(n, 2))
    out = np.empty((n, c, target_size, target_size), dtype=obs.dtype)
    for i, (top, left) in enumerate(offs):
        out[i] = obs[i, :, top : top + target_size, left : left + target_size]
    return (out, offs) if return_offsets else out


def center_crop(obs: np.ndarray, target_size: int) -> np.ndarray:
    """Deterministic centred window with ``floor((source - target) / 2)`` offsets."""
    h, w = obs.shape[-2:]
    if h < target_size or w < target_size:
        raise DimensionError(f"cannot centre-crop {obs.shape[-2:]} to {target_size}")
    top, left = (h - target_size) // 2, (w - target_size) // 2
    return np.ascontiguousarray(crop_at(obs, top, left, target_size))


def rotate(frame: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Counter-clockwise rotation by ``90 * quarter_turns`` degrees of the last two axes."""
    if frame.shape[-1] != frame.shape[-2]:
        raise DimensionError(f"rotation needs square frames, got {frame.shape[-2:]}")
    return np.ascontiguousarray(np.rot90(frame, int(quarter_turns) % 4, axes=(-2, -1)))


@dataclass
class SslBatch:
    task: str
    obs_t: Optional[np.ndarray] = None
    actions: Optional[np.ndarray] = None
    obs_t1: Optional[np.ndarray] = None
    obs: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.obs_t) if self.task == "idm" else len(self.obs)


def make_ssl_batch(
    task: str,
    batch_size: int,
    rng: np.random.Generator,
    crop_size: int,
    replay=None,
    latest=None,
) -> Optional[SslBatch]:
    """Build an augmented batch either from a replay buffer or from the latest sample.

    ``latest`` is ``(s_t, a_t, s_t1)`` for inverse dynamics and a single
    observation (or ``None``) for rotation.  At deployment every row is an
    independently cropped copy of that one sample.  Returns ``None`` when
    inverse dynamics is requested before any transition exists.
    """
    if task == "idm":
        if replay is not None:
            sample = replay.sample(batch_size, rng)
            obs_t, actions, obs_t1 = sample.obs, sample.actions, sample.next_obs
        else:
            if latest is None:
                return None
            s_t, a_t, s_t1 = latest
            obs_t = np.broadcast_to(s_t, (batch_size,) + s_t.shape)
            obs_t1 = np.broadcast_to(s_t1, (batch_size,) + s_t1.shape)
            actions = np.repeat(np.asarray(a_t)[None], batch_size, axis=0)
        return SslBatch(
            "idm",
            obs_t=random_crop_batch(obs_t, crop_size, rng),
            actions=actions,
            obs_t1=random_crop_batch(obs_t1, crop_size, rng),
        )
    if task == "rotation":
        if replay is not None:
            obs = replay.sample(batch_size, rng).obs
        else:
            if latest is None:
                return None
            obs = np.asarray(latest)
            if obs.ndim == 3:
                obs = np.broadcast_to(obs, (batch_size,) + obs.shape)
        crops = random_crop_batch(obs, crop_size, rng)
        labels = rng.integers(0, 4, size=len(crops))
        return SslBatch("rotation", obs=rotate_batch(crops, labels), labels=labels)
    raise ValueError(f"unknown ssl task {task!r}")


def rotate_batch(obs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    out = np.empty_like(obs)
    for k in range(4):
        sel = labels == k
        if np.any(sel):
            out[sel] = np.rot90(obs[sel], k, axes=(-2, -1))
    return out


# ----------------------------------------------------------------------- losses
def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(len(labels)), np.asarray(labels, dtype=int)] = 1
    picked = nc.sum(nc.mul(nc.log_softmax(logits, axis=1), onehot), axis=1)
    return nc.neg(nc.mean(picked))


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = nc.sub(pred, np.asarray(target, dtype=pred.dtype).reshape(pred.shape))
    return nc.mean(nc.square(diff))


def idm_loss(batch: SslBatch, params, cfg: pn.NetworkConfig) -> Tensor:
    if batch is None or len(batch) == 0:
        raise UsageError("idm_loss needs a non-empty batch")
    f_t = pn.encode(batch.obs_t, params, cfg)
    f_t1 = pn.encode(batch.obs_t1, params, cfg)
    pred = pn.predict_inverse(f_t, f_t1, params, cfg)
    if cfg.action_space == pn.DISCRETE:
        return cross_entropy(pred, batch.actions)
    return mse(pred, batch.actions)


def rotation_loss(batch: SslBatch, params, cfg: pn.NetworkConfig) -> Tensor:
    if batch is None or len(batch) == 0:
        raise UsageError("rotation_loss needs a non-empty batch")
    logits = pn.predict_rotation(pn.encode(batch.obs, params, cfg), params, cfg)
    return cross_entropy(logits, batch.labels)


def ssl_loss(batch: SslBatch, params, cfg: pn.NetworkConfig) -> Tensor:
    return idm_loss(batch, params, cfg) if batch.task == "idm" else rotation_loss(batch, params, cfg)


def rotation_accuracy(obs: np.ndarray, params, cfg: pn.NetworkConfig, rng: np.random.Generator, chunk: int = 64) -> float:
    """Held-out accuracy on centre-cropped observations under random quarter turns."""
    correct = 0
    crops = center_crop(obs, cfg.crop_size)
    labels = rng.integers(0, 4, size=len(crops))
    rotated = rotate_batch(crops, labels)
    for i in range(0, len(rotated), chunk):
        logits = pn.predict_rotation(pn.encode(rotated[i : i + chunk], params, cfg), params, cfg)
        correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[i : i + chunk]))
    return correct / len(rotated)
