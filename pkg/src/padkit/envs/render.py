"""Software rasterisation for the two environments.  Frames are ``(3, H, W)`` float32."""

from __future__ import annotations

import numpy as np


def quantize(frame: np.ndarray) -> np.ndarray:
    """Snap to 8-bit levels so replay storage as uint8 is lossless."""
    return (np.round(np.clip(frame, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def flat(color, size: int) -> np.ndarray:
    frame = np.empty((3, size, size), dtype=np.float64)
    frame[:] = np.asarray(color, dtype=np.float64).reshape(3, 1, 1)
    return frame


def disc_mask(size: int, cx: float, cy: float, radius: float) -> np.ndarray:
    """Pixels whose centres lie within ``radius`` of ``(cx, cy)`` (pixel units)."""
    c = np.arange(size) + 0.5
    return (c[None, :] - cx) ** 2 + (c[:, None] - cy) ** 2 <= radius * radius


def disc_coverage(size: int, cx: float, cy: float, radius: float) -> np.ndarray:
    """Anti-aliased disc: approximate per-pixel coverage in [0, 1].

    Sub-pixel motion changes edge intensities, so small displacements stay
    visible after quantisation.
    """
    c = np.arange(size) + 0.5
    d = np.sqrt((c[None, :] - cx) ** 2 + (c[:, None] - cy) ** 2)
    return np.clip(radius + 0.5 - d, 0.0, 1.0)


def square_mask(size: int, cx: float, cy: float, half: float) -> np.ndarray:
    c = np.arange(size) + 0.5
    return (np.abs(c[None, :] - cx) <= half) & (np.abs(c[:, None] - cy) <= half)


def paint(frame: np.ndarray, mask: np.ndarray, color) -> None:
    frame[:, mask] = np.asarray(color, dtype=np.float64).reshape(3, 1)


def blend(frame: np.ndarray, alpha: np.ndarray, color) -> None:
    """``frame <- (1 - alpha) frame + alpha color`` in place."""
    col = np.asarray(color, dtype=np.float64).reshape(3, 1, 1)
    frame += alpha[None] * (col - frame)


def plaid(size: int, base, t: int, seed: int, phase_rate: float, amplitude: float = 0.3) -> np.ndarray:
    """Animated background ``base + A sin(wx x + phi_t) sin(wy y + phi'_t)`` per channel."""
    rng = np.random.default_rng(seed)
    wx = rng.uniform(2.0, 6.0, size=3) * 2 * np.pi
    wy = rng.uniform(2.0, 6.0, size=3) * 2 * np.pi
    phi0 = rng.uniform(0, 2 * np.pi, size=(2, 3))
    u = (np.arange(size) + 0.5) / size
    out = np.empty((3, size, size))
    for ch in range(3):
        px = np.sin(wx[ch] * u + phi0[0, ch] + phase_rate * t)
        py = np.sin(wy[ch] * u + phi0[1, ch] - 0.7 * phase_rate * t)
        out[ch] = base[ch] + amplitude * py[:, None] * px[None, :]
    return np.clip(out, 0.0, 1.0)


def _hash_unit(a: np.ndarray) -> np.ndarray:
    """Integer hash to [0, 1) (xorshift-multiply, 32-bit)."""
    x = a.astype(np.uint64) & np.uint64(0xFFFFFFFF)
    x ^= x >> np.uint64(16)
    x = (x * np.uint64(0x7FEB352D)) & np.uint64(0xFFFFFFFF)
    x ^= x >> np.uint64(15)
    x = (x * np.uint64(0x846CA68B)) & np.uint64(0xFFFFFFFF)
    x ^= x >> np.uint64(16)
    return x.astype(np.float64) / 4294967296.0


def texture_color(texture_id: int, salt: int) -> np.ndarray:
    return 0.2 + 0.6 * _hash_unit(np.array([texture_id * 3 + k + salt * 7919 for k in range(3)]))


def texture(texture_id: int, salt: int, size: int, cells: int) -> np.ndarray:
    """Per-cell hash-noise texture keyed by ``texture_id``: base color plus blocky noise."""
    base = texture_color(texture_id, salt)
    y, x = np.mgrid[0:size, 0:size]
    grain = 1 + (texture_id % 3)  # noise block edge in pixels
    key = (texture_id * 1_000_003 + salt * 7_654_321) + (y // grain) * 4099 + (x // grain)
    noise = _hash_unit(key) - 0.5
    # per-cell offset so neighbouring cells differ
    cy, cx = (y * cells) // size, (x * cells) // size
    cell_noise = _hash_unit(key * 0 + (texture_id * 97 + salt * 13 + cy * 31 + cx) + 17) - 0.5
    amp = 0.12 + 0.1 * _hash_unit(np.array([texture_id + 5 * salt]))[0]
    out = base[:, None, None] + amp * noise[None] + 0.08 * cell_noise[None]
    return np.clip(out, 0.0, 1.0)
