"""Joint training (RL objective + alpha * self-supervised loss) and
reward-free adaptation at deployment.

Deployment updates only the encoder and the self-supervised head, one
gradient step per environment step, from augmented copies of the most recent
sample.  The reward head ``theta_a`` is never touched after training.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from padkit import envs
from padkit import numcore as nc
from padkit import policynet as pn
from padkit import ssl
from padkit.numcore import AdamState, ConfigurationError, Tensor
from padkit.rlalgos import SAC, A2cConfig, ReplayBuffer, SacConfig, a2c_update, collect_rollout
from padkit.rlalgos.a2c import Rollout, trainable

DEPLOY_MODES = ("frozen", "pad", "pad_fixed_head", "offline_pad", "blind")
UPDATING_MODES = ("pad", "pad_fixed_head", "offline_pad")


# ------------------------------------------------------------------- configs
@dataclass
class TrainConfig:
    total_steps: int = 6000
    ssl_task: str = "idm"
    ssl_coef: float = 1.0
    ssl_update_interval: int = 2
    ssl_batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    init_steps: int = 1000
    replay_capacity: int = 20_000
    eval_interval: int = 2000
    eval_episodes: int = 5
    table_size: int = 100
    finetune_updates: int = 500
    sac: SacConfig = field(default_factory=lambda: SacConfig(batch_size=32))
    a2c: A2cConfig = field(default_factory=A2cConfig)

    def __post_init__(self):
        if self.ssl_coef < 0:
            raise ConfigurationError("ssl_coef must be >= 0")
        if self.ssl_update_interval < 1 or self.eval_interval < 1:
            raise ConfigurationError("intervals must be >= 1")
        if self.total_steps < 1 or self.ssl_batch_size < 1:
            raise ConfigurationError("total_steps and ssl_batch_size must be >= 1")
        if self.ssl_task not in ("idm", "rotation", "none"):
            raise ConfigurationError(f"unknown ssl task {self.ssl_task!r}")


@dataclass
class DeployConfig:
    mode: str = "pad"
    test_batch_size: int = 32
    test_learning_rate: float = 1e-3
    steps_per_update: int = 1
    episodes: int = 10
    horizon_multiplier: int = 1
    fresh_optimizer: bool = True
    action_mode: str = "mean"

    def __post_init__(self):
        if self.mode not in DEPLOY_MODES:
            raise ConfigurationError(f"unknown deploy mode {self.mode!r}")
        if self.steps_per_update != 1:
            raise ConfigurationError("exactly one update per environment step is supported")
        if self.test_batch_size < 1 or self.episodes < 1 or self.horizon_multiplier < 1:
            raise ConfigurationError("test_batch_size, episodes and horizon_multiplier must be >= 1")
        if self.test_learning_rate <= 0:
            raise ConfigurationError("test_learning_rate must be positive")


@dataclass
class EpisodeTrace:
    rewards: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    ssl_losses: list = field(default_factory=list)  # None on steps without an update
    drift: list = field(default_factory=list)  # ||theta_e(t) - theta_e(0)|| after each step
    success: bool = False

    @property
    def episode_return(self) -> float:
        return float(np.sum(self.rewards, dtype=np.float64))

    @property
    def steps(self) -> int:
        return len(self.rewards)

    @property
    def update_count(self) -> int:
        return sum(x is not None for x in self.ssl_losses)


@dataclass
class TrainResult:
    params: pn.PolicyParams
    net: pn.NetworkConfig
    curve: list  # dicts: step, eval_return, episodes
    episode_returns: list
    ssl_state: Optional[AdamState] = None
    shifts_used: list = field(default_factory=list)


# ---------------------------------------------------------------- factories
@dataclass(frozen=True)
class EnvFactory:
    """Callable ``(seed, shift) -> EnvInstance`` for one environment kind."""

    kind: str
    config: envs.EnvConfig = envs.EnvConfig()
    horizon: Optional[int] = None

    def __call__(self, seed: int, shift=None):
        return envs.make(self.kind, shift, self.config, seed=seed, horizon=self.horizon)


def network_for(kind: str, algo: str, ssl_task: str, **overrides) -> pn.NetworkConfig:
    space, dim = envs.action_space(kind)
    if (algo == "sac") != (space == pn.CONTINUOUS):
        raise ConfigurationError(f"{algo} cannot drive {kind} ({space} actions)")
    return pn.desk_profile(action_dim=dim, action_space=space, algo=algo, ssl_task=ssl_task, **overrides)


def _check_compat(factory: EnvFactory, algo: str, cfg: TrainConfig, net: pn.NetworkConfig) -> None:
    space, dim = envs.action_space(factory.kind)
    if algo not in ("sac", "a2c"):
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    if net.algo != algo or net.action_space != space or net.action_dim != dim:
        raise ConfigurationError(f"network ({net.algo}, {net.action_space}) does not fit {algo} on {factory.kind}")
    if net.ssl_task != cfg.ssl_task:
        raise ConfigurationError(f"network head is {net.ssl_task!r} but training asks for {cfg.ssl_task!r}")
    if net.render_size != factory.config.render_size or net.frame_stack != factory.config.frame_stack:
        raise ConfigurationError("network and environment disagree on frame geometry")


def _theta_e_flat(params: pn.PolicyParams) -> np.ndarray:
    return np.concatenate([t.data.ravel() for _, t in sorted(params.theta_e.items())]).astype(np.float64)


def policy_action(obs, params, net, mode: str = "mean", rng=None):
    feats = pn.encode(ssl.center_crop(obs[None], net.crop_size), params, net)
    a = pn.act(feats, params, net, mode=mode, rng=rng)[0]
    return int(a) if net.action_space == pn.DISCRETE else a


def rollout_return(params, net, env, mode: str = "mean", rng=None) -> float:
    obs, total, done = env.reset(), 0.0, False
    while not done:
        obs, r, done = env.step(policy_action(obs, params, net, mode, rng))
        total += r
    return total


def eval_seed(seed: int, episode: int) -> int:
    """Environment seeds for evaluation, disjoint from training seeds."""
    return 1_000_003 + 7919 * seed + episode


# ------------------------------------------------------------------ training
def train_joint(env_factory: EnvFactory, algo: str, cfg: TrainConfig, net: Optional[pn.NetworkConfig] = None, *, dr: bool = False) -> TrainResult:
    """Optimise J + alpha * L; ``dr`` resamples a training shift every episode."""
    net = net or network_for(env_factory.kind, algo, cfg.ssl_task, render_size=env_factory.config.render_size)
    _check_compat(env_factory, algo, cfg, net)
    if algo == "sac":
        return _train_sac(env_factory, cfg, net, dr)
    return _train_a2c(env_factory, cfg, net, dr)


def step_budget(cfg: TrainConfig, algo: str, dr: bool) -> int:
    """Navigation under randomisation trains for twice the usual budget."""
    return cfg.total_steps * (2 if dr and algo == "a2c" else 1)


def train_domain_randomization(env_factory: EnvFactory, algo: str, cfg: TrainConfig, net: Optional[pn.NetworkConfig] = None) -> TrainResult:
    return train_joint(env_factory, algo, cfg, net, dr=True)


class _ShiftSampler:
    def __init__(self, kind: str, seed: int, table_size: int, enabled: bool):
        self.kind, self.table_size, self.enabled = kind, table_size, enabled
        self.rng = np.random.default_rng([seed, 1])
        self.used: list = []

    def next(self):
        if not self.enabled:
            return None
        spec = envs.sample_randomization(self.kind, self.rng, self.table_size)
        self.used.append(spec)
        return spec


def _evaluate_curve(params, net, factory, cfg, step, curve):
    rets = [rollout_return(params, net, factory(eval_seed(cfg.seed, i))) for i in range(cfg.eval_episodes)]
    curve.append({"step": step, "eval_return": float(np.mean(rets))})


def _train_sac(factory, cfg: TrainConfig, net, dr: bool) -> TrainResult:
    params = pn.build(net, cfg.seed)
    sac_cfg = replace(cfg.sac, learning_rate=cfg.learning_rate)
    learner = SAC(params, net, sac_cfg)
    use_ssl = cfg.ssl_task != "none" and cfg.ssl_coef > 0
    ssl_opt = nc.Adam({**params.theta_e, **params.theta_s}, lr=cfg.learning_rate) if use_ssl else None
    rng = np.random.default_rng([cfg.seed, 2])
    sampler = _ShiftSampler(factory.kind, cfg.seed, cfg.table_size, dr)

    env = factory(cfg.seed, sampler.next())
    obs = env.observation()
    buf = ReplayBuffer(cfg.replay_capacity, obs.shape, (net.action_dim,), frame_channels=3)
    curve, returns, ep_ret = [], [], 0.0
    total = step_budget(cfg, "sac", dr)
    for t in range(total):
        if t < cfg.init_steps:
            action = rng.uniform(-1.0, 1.0, size=net.action_dim).astype(np.float32)
        else:
            action = policy_action(obs, params, net, "sample", rng).astype(np.float32)
        nxt, r, done = env.step(action)
        buf.push(obs, action, r, nxt, done)
        obs, ep_ret = nxt, ep_ret + r
        if t >= cfg.init_steps:
            learner.update(buf, rng)
            if use_ssl and t % cfg.ssl_update_interval == 0:
                batch = ssl.make_ssl_batch(cfg.ssl_task, cfg.ssl_batch_size, rng, net.crop_size, replay=buf)
                ssl_opt.zero_grad()
                nc.mul(ssl.ssl_loss(batch, params, net), cfg.ssl_coef).backward()
                ssl_opt.step()
        if done:
            returns.append(ep_ret)
            ep_ret = 0.0
            obs = env.reset(sampler.next())
        if (t + 1) % cfg.eval_interval == 0:
            _evaluate_curve(params, net, factory, cfg, t + 1, curve)
    state = ssl_opt.state.clone() if ssl_opt else None
    return TrainResult(params, net, curve, returns, state, sampler.used)


def _train_a2c(factory, cfg: TrainConfig, net, dr: bool) -> TrainResult:
    a2c_cfg = cfg.a2c
    params = pn.build(net, cfg.seed)
    use_ssl = cfg.ssl_task != "none" and cfg.ssl_coef > 0
    opt = nc.Adam(trainable(params, with_ssl=use_ssl), lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 2])
    sampler = _ShiftSampler(factory.kind, cfg.seed, cfg.table_size, dr)
    actors = [factory(1000 * cfg.seed + i, sampler.next()) for i in range(a2c_cfg.actor_count)]
    obs = [a.observation() for a in actors]
    ep_ret = [0.0] * len(actors)
    curve, returns = [], []
    total = step_budget(cfg, "a2c", dr)
    steps, next_eval = 0, cfg.eval_interval
    while steps < total:
        rollouts: list[Rollout] = []
        for i, env in enumerate(actors):
            roll = collect_rollout(env, obs[i], params, net, a2c_cfg.rollout_length, rng)
            rollouts.append(roll)
            steps += len(roll)
            ep_ret[i] += float(np.sum(roll.rewards))
            obs[i] = roll.last_obs
            if roll.terminal:
                returns.append(ep_ret[i])
                ep_ret[i] = 0.0
                obs[i] = env.reset(sampler.next())
        extra = None
        if use_ssl:
            frames = np.concatenate([r.obs for r in rollouts])

            def extra():
                batch = ssl.make_ssl_batch(cfg.ssl_task, len(frames), rng, net.crop_size, latest=frames) if cfg.ssl_task == "rotation" else _idm_from_rollouts(rollouts, rng, net)
                return nc.mul(ssl.ssl_loss(batch, params, net), cfg.ssl_coef)

        a2c_update(rollouts, params, net, a2c_cfg, opt, extra)
        if steps >= next_eval:
            _evaluate_curve(params, net, factory, cfg, steps, curve)
            next_eval += cfg.eval_interval
    return TrainResult(params, net, curve, returns, opt.state.clone() if use_ssl else None, sampler.used)


def _idm_from_rollouts(rollouts, rng, net) -> ssl.SslBatch:
    s_t, a_t, s_t1 = [], [], []
    for r in rollouts:
        nxt = np.concatenate([r.obs[1:], r.last_obs[None]])
        s_t.append(r.obs)
        s_t1.append(nxt)
        a_t.append(r.actions)
    s_t, s_t1 = np.concatenate(s_t), np.concatenate(s_t1)
    return ssl.SslBatch(
        "idm",
        obs_t=ssl.random_crop_batch(s_t, net.crop_size, rng),
        actions=np.concatenate(a_t),
        obs_t1=ssl.random_crop_batch(s_t1, net.crop_size, rng),
    )


# ---------------------------------------------------------------- deployment
def deploy_parameters(params: pn.PolicyParams, mode: str) -> dict:
    """Parameters a deployment update may touch in ``mode``."""
    if mode == "pad_fixed_head":
        return dict(params.theta_e)
    if mode in UPDATING_MODES:
        return {**params.theta_e, **params.theta_s}
    return {}


def pad_update(params, net, task: str, latest, optimizer: nc.Adam, batch_size: int, rng) -> Optional[float]:
    """One self-supervised gradient step from augmented copies of ``latest``."""
    batch = ssl.make_ssl_batch(task, batch_size, rng, net.crop_size, latest=latest)
    if batch is None:
        return None
    optimizer.zero_grad()
    loss = ssl.ssl_loss(batch, params, net)
    loss.backward()
    # the loss also reaches theta_s; with a fixed head those grads are simply dropped
    for name, t in params.theta_s.items():
        if name not in optimizer.params:
            t.grad = None
    optimizer.step()
    return loss.item()


def deploy(params: pn.PolicyParams, env, cfg: DeployConfig, rng: np.random.Generator, net: pn.NetworkConfig, optimizer_state: Optional[AdamState] = None) -> EpisodeTrace:
    """Run one episode, adapting ``params`` in place according to ``cfg.mode``.

    With ``horizon_multiplier > 1`` the episode simply runs that many times
    longer without a reset.  For inverse dynamics the update follows each
    step (it needs ``s_{t+1}``); for rotation it precedes each action.
    """
    task = net.ssl_task
    updating = cfg.mode in UPDATING_MODES
    if updating and (task == "none" or not params.theta_s):
        raise ConfigurationError(f"mode {cfg.mode!r} needs a self-supervised head")
    base_horizon = getattr(env, "base_horizon", env.horizon)
    env.base_horizon = base_horizon
    env.horizon = base_horizon * cfg.horizon_multiplier

    theta_e0 = _theta_e_flat(params)
    origin = params.snapshot() if cfg.mode == "offline_pad" else None
    lr = cfg.test_learning_rate

    def new_optimizer():
        opt = nc.Adam(deploy_parameters(params, cfg.mode), lr=lr)
        if optimizer_state is not None and not cfg.fresh_optimizer:
            st = optimizer_state.clone()
            st.learning_rate = lr
            st.m = {k: v for k, v in st.m.items() if k in opt.params}
            st.v = {k: v for k, v in st.v.items() if k in opt.params}
            opt.state = st
        return opt

    opt = new_optimizer() if updating else None

    def update(latest) -> Optional[float]:
        nonlocal opt
        if cfg.mode == "offline_pad":
            params.restore(origin)  # forget the previous step's update
            opt = new_optimizer()
        return pad_update(params, net, task, latest, opt, cfg.test_batch_size, rng)

    trace = EpisodeTrace()
    obs = env.reset()
    done = False
    while not done:
        loss = None
        if updating and task == "rotation":
            loss = update(obs)
        seen = np.zeros_like(obs) if cfg.mode == "blind" else obs
        action = policy_action(seen, params, net, cfg.action_mode, rng)
        nxt, r, done = env.step(action)
        if updating and task == "idm":
            loss = update((obs, np.asarray(action, dtype=np.float32) if net.action_space == pn.CONTINUOUS else action, nxt))
        trace.rewards.append(r)
        trace.actions.append(action)
        trace.ssl_losses.append(loss)
        trace.drift.append(float(np.linalg.norm(_theta_e_flat(params) - theta_e0)))
        obs = nxt
    if origin is not None:
        params.restore(origin)
    trace.success = bool(env.success())
    return trace


def evaluate(params: pn.PolicyParams, env_factory: EnvFactory, shift, cfg: DeployConfig, seed: int, net: pn.NetworkConfig, optimizer_state=None) -> list[EpisodeTrace]:
    """``cfg.episodes`` deployments, each from a fresh copy of ``params``."""
    traces = []
    for ep in range(cfg.episodes):
        env = env_factory(eval_seed(seed, ep), shift)
        rng = np.random.default_rng([seed, ep, 7])
        traces.append(deploy(params.clone(), env, cfg, rng, net, optimizer_state))
    return traces


# -------------------------------------------------------------- fine-tuning
def finetune_with_rewards(params: pn.PolicyParams, env, episode_budget: int, cfg: TrainConfig, net: pn.NetworkConfig, rng: np.random.Generator) -> tuple[pn.PolicyParams, int]:
    """Reward-using baseline: collect ``episode_budget`` episodes, then fine-tune.

    Collection acts with the frozen policy (sampled actions).  Returns the
    fine-tuned copy and the number of episodes actually collected.
    """
    if episode_budget < 1:
        raise ConfigurationError("episode_budget must be >= 1")
    before = params.clone()
    transitions = []
    for _ in range(episode_budget):
        obs, done, episode = env.reset(), False, []
        while not done:
            a = policy_action(obs, params, net, "sample", rng)
            nxt, r, done = env.step(a)
            episode.append((obs, a, r, nxt, done))
            obs = nxt
        transitions.append(episode)
    assert pn.params_equal(before, params), "collection must not change parameters"

    tuned = params.clone()
    if net.algo == "sac":
        learner = SAC(tuned, net, replace(cfg.sac, learning_rate=cfg.learning_rate))
        n = sum(len(e) for e in transitions)
        buf = ReplayBuffer(max(n, 1), transitions[0][0][0].shape, (net.action_dim,))
        for ep in transitions:
            for s, a, r, s1, d in ep:
                buf.push(s, a, r, s1, d)
        learner.cfg = replace(learner.cfg, batch_size=min(learner.cfg.batch_size, n))
        for _ in range(cfg.finetune_updates):
            learner.update(buf, rng)
    else:
        opt = nc.Adam(trainable(tuned), lr=cfg.learning_rate)
        chunks = []
        for ep in transitions:
            for i in range(0, len(ep), cfg.a2c.rollout_length):
                part = ep[i : i + cfg.a2c.rollout_length]
                chunks.append(Rollout(np.stack([p[0] for p in part]), np.asarray([p[1] for p in part]), np.asarray([p[2] for p in part], dtype=np.float32), part[-1][3], part[-1][4]))
        for u in range(cfg.finetune_updates):
            pick = rng.integers(0, len(chunks), size=min(cfg.a2c.actor_count, len(chunks)))
            a2c_update([chunks[i] for i in pick], tuned, net, cfg.a2c, opt)
    return tuned, len(transitions)


def config_dict(cfg) -> dict:
    return asdict(cfg)
