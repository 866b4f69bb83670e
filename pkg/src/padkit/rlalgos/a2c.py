"""Synchronous advantage actor-critic for the discrete maze.

Actors are stepped one after another in a single process; each contributes a
rollout of at most ``rollout_length`` steps that never crosses an episode
boundary.  The policy acts on centre crops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from padkit import numcore as nc
from padkit import policynet as pn
from padkit.numcore import Tensor, UsageError
from padkit.ssl import center_crop


@dataclass
class A2cConfig:
    discount: float = 0.99
    actor_count: int = 8
    rollout_length: int = 5
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        if self.actor_count < 1 or self.rollout_length < 1:
            raise ValueError("actor_count and rollout_length must be >= 1")


@dataclass
class Rollout:
    obs: np.ndarray  # (T, C, H, W) full-size frames
    actions: np.ndarray  # (T,) int
    rewards: np.ndarray  # (T,)
    last_obs: np.ndarray  # observation after the final step
    terminal: bool  # episode ended on the final step: no bootstrap

    def __len__(self) -> int:
        return len(self.actions)


def n_step_returns(rewards, bootstrap: float, discount: float) -> np.ndarray:
    """``G_t = r_t + g r_{t+1} + ... + g^{T-t} V(s_T)``, computed backwards in float64."""
    out = np.empty(len(rewards), dtype=np.float64)
    g = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        g = float(rewards[t]) + discount * g
        out[t] = g
    return out


def collect_rollout(env, obs, params, net: pn.NetworkConfig, length: int, rng: np.random.Generator):
    """Step ``env`` from ``obs`` with sampled actions, stopping early at episode end.

    The caller resets the environment when ``rollout.terminal`` is set.
    """
    frames, actions, rewards = [], [], []
    done = False
    for _ in range(length):
        feats = pn.encode(center_crop(obs[None], net.crop_size), params, net)
        a = int(pn.act(feats, params, net, mode="sample", rng=rng)[0])
        nxt, r, done = env.step(a)
        frames.append(obs)
        actions.append(a)
        rewards.append(r)
        obs = nxt
        if done:
            break
    return Rollout(np.stack(frames), np.asarray(actions), np.asarray(rewards, dtype=np.float32), obs, done)


def _values(obs: np.ndarray, params, net) -> np.ndarray:
    feats = pn.encode(center_crop(obs, net.crop_size), params, net)
    return pn.action_distribution(feats, params, net).value.data


def a2c_loss(rollouts: list[Rollout], params, net: pn.NetworkConfig, cfg: A2cConfig) -> tuple[Tensor, dict]:
    """Policy-gradient + value regression - entropy bonus over all rollouts."""
    if not rollouts or any(len(r) == 0 for r in rollouts):
        raise UsageError("a2c needs non-empty rollouts")
    boot_obs = np.stack([r.last_obs for r in rollouts])
    boot = _values(boot_obs, params, net)
    returns = np.concatenate(
        [n_step_returns(r.rewards, 0.0 if r.terminal else boot[i], cfg.discount) for i, r in enumerate(rollouts)]
    ).astype(np.float32)
    obs = np.concatenate([r.obs for r in rollouts])
    actions = np.concatenate([r.actions for r in rollouts]).astype(int)

    feats = pn.encode(center_crop(obs, net.crop_size), params, net)
    dist = pn.action_distribution(feats, params, net)
    logp = nc.log_softmax(dist.logits, axis=1)
    onehot = np.zeros(logp.shape, dtype=logp.dtype)
    onehot[np.arange(len(actions)), actions] = 1
    logp_a = nc.sum(nc.mul(logp, onehot), axis=1)
    adv = (returns - dist.value.data).astype(np.float32)

    pg = nc.neg(nc.mean(nc.mul(logp_a, adv)))
    value_loss = nc.mean(nc.square(nc.sub(dist.value, returns)))
    entropy = nc.neg(nc.mean(nc.sum(nc.mul(nc.exp(logp), logp), axis=1)))
    loss = nc.sub(nc.add(pg, nc.mul(value_loss, cfg.value_coef)), nc.mul(entropy, cfg.entropy_coef))
    record = {
        "policy_loss": pg.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "return_mean": float(returns.mean()),
    }
    return loss, record


def clip_grad_norm(params: dict, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64))) for p in params.values() if p.grad is not None)))
    if max_norm > 0 and total > max_norm:
        scale = np.float32(max_norm / (total + 1e-6))
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def trainable(params: pn.PolicyParams, with_ssl: bool = False) -> dict:
    out = {**params.theta_e, **params.theta_a}
    if with_ssl:
        out.update(params.theta_s)
    return out


def a2c_update(rollouts: list[Rollout], params: pn.PolicyParams, net: pn.NetworkConfig, cfg: A2cConfig, optimizer: nc.Adam, extra_loss=None) -> dict:
    """One synchronous update; ``extra_loss`` (a callable returning a Tensor) is added as-is."""
    optimizer.zero_grad()
    loss, record = a2c_loss(rollouts, params, net, cfg)
    if extra_loss is not None:
        extra = extra_loss()
        record["ssl_loss"] = extra.item()
        loss = nc.add(loss, extra)
    loss.backward()
    record["grad_norm"] = clip_grad_norm(optimizer.params, cfg.max_grad_norm)
    optimizer.step()
    return record
