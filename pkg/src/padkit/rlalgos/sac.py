"""Soft actor-critic from pixels.

The critic trains the shared encoder; the actor reads detached features, so
policy gradients never reach ``theta_e``.  Both critics, the target copies and
the temperature live in ``theta_a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from padkit import numcore as nc
from padkit import policynet as pn
from padkit.numcore import Adam, Tensor
from padkit.rlalgos.replay import ReplayBuffer
from padkit.ssl import random_crop_batch


@dataclass
class SacConfig:
    discount: float = 0.99
    critic_count: int = 2
    tau: float = 0.01
    encoder_tau: float = 0.05
    target_update_interval: int = 2
    actor_update_interval: int = 1
    learning_rate: float = 1e-3
    alpha_learning_rate: float = 1e-4
    alpha_beta1: float = 0.5
    batch_size: int = 128
    # treat the horizon as terminal when bootstrapping; off for time-limit truncation
    mask_done: bool = False

    def __post_init__(self):
        # 0 is allowed: it turns the critic into an immediate-reward regressor
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")
        if not 0 < self.tau <= 1 or not 0 < self.encoder_tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.critic_count != 2:
            raise ValueError("only twin critics are supported")


def encoder_params(params: pn.PolicyParams) -> dict:
    return dict(params.theta_e)


def critic_params(params: pn.PolicyParams) -> dict:
    return {k: v for k, v in params.theta_a.items() if k.startswith("critic.")}


def actor_params(params: pn.PolicyParams) -> dict:
    return {k: v for k, v in params.theta_a.items() if k.startswith("actor.")}


def soft_update(params: pn.PolicyParams, tau: float, encoder_tau: float) -> None:
    """Move target copies toward the online critic/encoder by an EMA step."""
    for name, tgt in params.theta_a.items():
        if name.startswith("critic_target."):
            src, t = params.theta_a["critic." + name[len("critic_target."):]], tau
        elif name.startswith("encoder_target."):
            src, t = params.theta_e["encoder." + name[len("encoder_target."):]], encoder_tau
        else:
            continue
        if t == 1.0:
            tgt.data = src.data.copy()
        else:
            tgt.data = (t * src.data + (1 - t) * tgt.data).astype(tgt.dtype)


class SAC:
    def __init__(self, params: pn.PolicyParams, net: pn.NetworkConfig, cfg: SacConfig):
        self.params = params
        self.net = net
        self.cfg = cfg
        lr = cfg.learning_rate
        self.critic_opt = Adam({**encoder_params(params), **critic_params(params)}, lr=lr)
        self.actor_opt = Adam(actor_params(params), lr=lr)
        self.alpha_opt = Adam({"log_alpha": params.theta_a["log_alpha"]}, lr=cfg.alpha_learning_rate, betas=(cfg.alpha_beta1, 0.999))
        self.target_entropy = -float(net.action_dim)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.params.theta_a["log_alpha"].data))

    def critic_target(self, rewards, next_obs, dones, rng) -> np.ndarray:
        """Entropy-regularised backup ``r + gamma * (min Q' - alpha log pi)``."""
        p, net, cfg = self.params, self.net, self.cfg
        rewards = np.asarray(rewards, dtype=np.float32)
        if cfg.discount == 0:
            return rewards.copy()
        f_next = pn.encode(next_obs, p, net)
        dist = pn.action_distribution(f_next, p, net)
        a_next, logp_next = pn.sample_squashed(dist, rng)
        f_next_t = pn.encode(next_obs, p.all(), net, prefix="encoder_target")
        q1, q2 = pn.critic(f_next_t, a_next.data, p, net, prefix="critic_target")
        v = np.minimum(q1.data, q2.data) - np.float32(self.alpha) * logp_next.data
        notdone = 1.0 - np.asarray(dones, dtype=np.float32) if cfg.mask_done else 1.0
        return (rewards + np.float32(cfg.discount) * notdone * v).astype(np.float32)

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict | None:
        """One critic, actor and temperature step on a random-cropped replay batch."""
        cfg, net = self.cfg, self.net
        if len(buffer) < min(cfg.batch_size, buffer.capacity):
            return None
        batch = buffer.sample(cfg.batch_size, rng)
        obs = random_crop_batch(batch.obs, net.crop_size, rng)
        next_obs = random_crop_batch(batch.next_obs, net.crop_size, rng)
        return self.update_on(obs, batch.actions, batch.rewards, next_obs, batch.dones, rng)

    def update_on(self, obs, actions, rewards, next_obs, dones, rng) -> dict:
        cfg, net, p = self.cfg, self.net, self.params
        target = self.critic_target(rewards, next_obs, dones, rng)

        self.critic_opt.zero_grad()
        feats = pn.encode(obs, p, net)
        q1, q2 = pn.critic(feats, actions, p, net)
        critic_loss = nc.add(nc.mean(nc.square(nc.sub(q1, target))), nc.mean(nc.square(nc.sub(q2, target))))
        critic_loss.backward()
        self.critic_opt.step()
        record = {"critic_loss": critic_loss.item(), "q1_mean": float(q1.data.mean())}

        if self.updates % cfg.actor_update_interval == 0:
            record.update(self._actor_and_alpha(feats.detach(), rng))
        self.updates += 1
        if self.updates % cfg.target_update_interval == 0:
            soft_update(p, cfg.tau, cfg.encoder_tau)
        return record

    def _actor_and_alpha(self, feats: Tensor, rng) -> dict:
        p, net = self.params, self.net
        self.actor_opt.zero_grad()
        dist = pn.action_distribution(feats, p, net)
        action, logp = pn.sample_squashed(dist, rng)
        q1, q2 = pn.critic(feats, action, p, net)
        actor_loss = nc.mean(nc.sub(nc.mul(logp, self.alpha), nc.minimum(q1, q2)))
        actor_loss.backward()
        self.actor_opt.step()
        for t in critic_params(p).values():
            t.grad = None

        self.alpha_opt.zero_grad()
        log_alpha = p.theta_a["log_alpha"]
        weight = float(np.mean(logp.data + self.target_entropy))
        alpha_loss = nc.mul(log_alpha, -weight)
        alpha_loss.backward()
        self.alpha_opt.step()
        return {
            "actor_loss": actor_loss.item(),
            "alpha_loss": alpha_loss.item(),
            "alpha": self.alpha,
            "entropy": -float(np.mean(logp.data)),
        }


def sac_update(buffer: ReplayBuffer, learner: SAC, rng: np.random.Generator) -> dict | None:
    """Functional entry point; ``None`` signals that the buffer is still too small."""
    return learner.update(buffer, rng)
