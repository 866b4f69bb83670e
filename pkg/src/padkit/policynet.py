"""Shared encoder with a reward head and a self-supervised head.

The parameter dictionary is split three ways: ``theta_e`` (convolutional
encoder), ``theta_a`` (everything that serves the RL objective: actor, critics,
their target copies, the SAC temperature) and ``theta_s`` (self-supervised
head).  The reward head and the self-supervised head share one architecture
(a few 3x3 convs followed by dense layers) and differ only in input channels
and output width.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Optional

import numpy as np

from padkit import numcore as nc
from padkit.numcore import ConfigurationError, DimensionError, Tensor

CONTINUOUS = "continuous"
DISCRETE = "discrete"
ROTATION_CLASSES = 4


@dataclass
class NetworkConfig:
    frame_stack: int = 3
    render_size: int = 48
    crop_size: int = 40
    encoder_conv_layers: int = 4
    encoder_downsample: int = 2
    head_conv_layers: int = 2
    head_fc_layers: int = 2
    filters: int = 16
    hidden: int = 256
    action_dim: int = 2
    action_space: str = CONTINUOUS
    algo: str = "sac"
    ssl_task: str = "idm"
    log_std_min: float = -10.0
    log_std_max: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if f.type == "int" and getattr(self, f.name) < (0 if f.name == "encoder_downsample" else 1):
                raise ConfigurationError(f"{f.name} must be positive")
        if self.crop_size >= self.render_size:
            raise ConfigurationError("crop_size must be smaller than render_size")
        if self.encoder_downsample > self.encoder_conv_layers:
            raise ConfigurationError("encoder_downsample exceeds encoder_conv_layers")
        if self.action_space not in (CONTINUOUS, DISCRETE):
            raise ConfigurationError(f"unknown action space {self.action_space!r}")
        if self.algo not in ("sac", "a2c"):
            raise ConfigurationError(f"unknown algorithm {self.algo!r}")
        if self.ssl_task not in ("idm", "rotation", "none"):
            raise ConfigurationError(f"unknown ssl task {self.ssl_task!r}")
        if self.algo == "sac" and self.action_space != CONTINUOUS:
            raise ConfigurationError("sac needs a continuous action space")
        if self.algo == "a2c" and self.action_space != DISCRETE:
            raise ConfigurationError("a2c needs a discrete action space")
        self.feature_shape()  # validates geometry

    @property
    def in_channels(self) -> int:
        return 3 * self.frame_stack

    def encoder_geometry(self) -> list[tuple[int, int, int]]:
        """(kernel, stride, padding) per encoder conv."""
        return [(4, 2, 1)] * self.encoder_downsample + [(3, 1, 1)] * (
            self.encoder_conv_layers - self.encoder_downsample
        )

    def head_geometry(self) -> list[tuple[int, int, int]]:
        return [(3, 1, 0)] * self.head_conv_layers

    def feature_shape(self) -> tuple[int, int, int]:
        size = self.crop_size
        for k, s, p in self.encoder_geometry():
            size = nc.conv_output_size(size, k, s, p)
        return (self.filters, size, size)

    def head_flat_size(self) -> int:
        size = self.feature_shape()[1]
        for k, s, p in self.head_geometry():
            size = nc.conv_output_size(size, k, s, p)
        return self.filters * size * size

    def to_dict(self) -> dict:
        return asdict(self)


def desk_profile(**overrides) -> NetworkConfig:
    return NetworkConfig(**overrides)


def canonical_profile(task: str = "control", **overrides) -> NetworkConfig:
    """Full-size network: 100 px frames cropped to 84, 32 filters, 1024 hidden."""
    base = dict(
        render_size=100,
        crop_size=84,
        encoder_conv_layers=8 if task == "control" else 6,
        encoder_downsample=2,
        head_conv_layers=3,
        head_fc_layers=4,
        filters=32,
        hidden=1024,
    )
    if task == "navigation":
        base.update(action_dim=4, action_space=DISCRETE, algo="a2c", ssl_task="rotation")
    base.update(overrides)
    return NetworkConfig(**base)


@dataclass
class PolicyParams:
    theta_e: dict = field(default_factory=dict)
    theta_a: dict = field(default_factory=dict)
    theta_s: dict = field(default_factory=dict)

    def all(self) -> dict:
        out = {}
        for part in (self.theta_e, self.theta_a, self.theta_s):
            out.update(part)
        return out

    def __getitem__(self, name: str) -> Tensor:
        for part in (self.theta_e, self.theta_a, self.theta_s):
            if name in part:
                return part[name]
        raise KeyError(name)

    def partition(self) -> dict[str, list[str]]:
        return {
            "theta_e": sorted(self.theta_e),
            "theta_a": sorted(self.theta_a),
            "theta_s": sorted(self.theta_s),
        }

    def check_partition(self) -> None:
        e, a, s = set(self.theta_e), set(self.theta_a), set(self.theta_s)
        if e & a or e & s or a & s:
            raise ConfigurationError("parameter partition overlaps")

    def clone(self) -> "PolicyParams":
        def cp(d):
            return {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, dtype=v.dtype, name=k) for k, v in d.items()}

        return PolicyParams(cp(self.theta_e), cp(self.theta_a), cp(self.theta_s))

    def snapshot(self) -> dict[str, np.ndarray]:
        """Name -> array references; valid because optimizers replace arrays."""
        return {k: v.data for k, v in self.all().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in self.all().items():
            v.data = snap[k]
            v.grad = None

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.all().items())


def params_equal(a: PolicyParams | dict, b: PolicyParams | dict) -> bool:
    """Bit-exact comparison of two parameter sets (or partitions)."""
    da = a.all() if isinstance(a, PolicyParams) else a
    db = b.all() if isinstance(b, PolicyParams) else b
    if da.keys() != db.keys():
        return False
    return all(np.array_equal(da[k].data, db[k].data) and da[k].dtype == db[k].dtype for k in da)


# --------------------------------------------------------------------- building
def _conv_param(rng, name, cin, cout, k, out: dict):
    fan_in = cin * k * k
    w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
    out[f"{name}.weight"] = Tensor(w, requires_grad=True, name=f"{name}.weight")
    out[f"{name}.bias"] = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.bias")


def _dense_param(rng, name, din, dout, out: dict, gain: float = math.sqrt(2.0)):
    w = rng.normal(0.0, gain / math.sqrt(din), size=(din, dout))
    out[f"{name}.weight"] = Tensor(w, requires_grad=True, name=f"{name}.weight")
    out[f"{name}.bias"] = Tensor(np.zeros(dout), requires_grad=True, name=f"{name}.bias")


def _head_params(rng, prefix, cfg: NetworkConfig, in_channels: int, out_dim: int, out: dict, extra_in: int = 0):
    cin = in_channels
    for i, (k, _, _) in enumerate(cfg.head_geometry()):
        _conv_param(rng, f"{prefix}.conv{i}", cin, cfg.filters, k, out)
        cin = cfg.filters
    _fc_stack(rng, prefix, cfg, cfg.head_flat_size() + extra_in, out_dim, out)


def _fc_stack(rng, prefix, cfg: NetworkConfig, din: int, out_dim: int, out: dict):
    for i in range(cfg.head_fc_layers):
        last = i == cfg.head_fc_layers - 1
        dout = out_dim if last else cfg.hidden
        _dense_param(rng, f"{prefix}.fc{i}", din, dout, out, gain=0.1 if last else math.sqrt(2.0))
        din = dout


def _copy_params(src: dict, old_prefix: str, new_prefix: str, out: dict) -> None:
    for k, v in list(src.items()):
        if k.startswith(old_prefix + "."):
            name = new_prefix + k[len(old_prefix):]
            out[name] = Tensor(v.data.copy(), requires_grad=False, name=name)


def ssl_output_dim(cfg: NetworkConfig) -> int:
    if cfg.ssl_task == "rotation":
        return ROTATION_CLASSES
    return cfg.action_dim


def build(cfg: NetworkConfig, seed: int) -> PolicyParams:
    """Deterministically initialise all parameters for ``cfg``."""
    rng = np.random.default_rng(seed)
    theta_e: dict = {}
    cin = cfg.in_channels
    for i, (k, _, _) in enumerate(cfg.encoder_geometry()):
        _conv_param(rng, f"encoder.conv{i}", cin, cfg.filters, k, theta_e)
        cin = cfg.filters

    theta_a: dict = {}
    if cfg.algo == "sac":
        _head_params(rng, "actor", cfg, cfg.filters, 2 * cfg.action_dim, theta_a)
        for i, (k, _, _) in enumerate(cfg.head_geometry()):
            _conv_param(rng, f"critic.conv{i}", cfg.filters, cfg.filters, k, theta_a)
        for q in ("q1", "q2"):
            _fc_stack(rng, f"critic.{q}", cfg, cfg.head_flat_size() + cfg.action_dim, 1, theta_a)
        _copy_params(theta_a, "critic", "critic_target", theta_a)
        _copy_params(theta_e, "encoder", "encoder_target", theta_a)
        theta_a["log_alpha"] = Tensor(np.array(math.log(0.1)), requires_grad=True, name="log_alpha")
    else:
        # logits for each action plus one value output
        _head_params(rng, "actor", cfg, cfg.filters, cfg.action_dim + 1, theta_a)

    theta_s: dict = {}
    if cfg.ssl_task != "none":
        in_ch = 2 * cfg.filters if cfg.ssl_task == "idm" else cfg.filters
        _head_params(rng, "ssl", cfg, in_ch, ssl_output_dim(cfg), theta_s)

    params = PolicyParams(theta_e, theta_a, theta_s)
    params.check_partition()
    return params


# ---------------------------------------------------------------------- forward
def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    # float64 inputs stay float64 so gradient checks can run end to end
    return Tensor(x, dtype=np.float64 if np.asarray(x).dtype == np.float64 else None)


def encode(obs, params: PolicyParams | dict, cfg: NetworkConfig, prefix: str = "encoder") -> Tensor:
    """Feature map ``(N, filters, s, s)`` of a cropped observation batch."""
    x = _as_tensor(obs)
    expect = (cfg.in_channels, cfg.crop_size, cfg.crop_size)
    if x.data.ndim != 4 or tuple(x.shape[1:]) != expect:
        raise DimensionError(f"encoder expects (N, {expect}), got {x.shape}")
    p = params.all() if isinstance(params, PolicyParams) else params
    for i, (_, s, pad) in enumerate(cfg.encoder_geometry()):
        x = nc.relu(nc.conv2d(x, p[f"{prefix}.conv{i}.weight"], p[f"{prefix}.conv{i}.bias"], s, pad))
    return x


def _head_trunk(x: Tensor, p: dict, prefix: str, cfg: NetworkConfig) -> Tensor:
    for i, (_, s, pad) in enumerate(cfg.head_geometry()):
        x = nc.relu(nc.conv2d(x, p[f"{prefix}.conv{i}.weight"], p[f"{prefix}.conv{i}.bias"], s, pad))
    return nc.flatten(x)


def _fc_forward(x: Tensor, p: dict, prefix: str, cfg: NetworkConfig) -> Tensor:
    for i in range(cfg.head_fc_layers):
        x = nc.dense(x, p[f"{prefix}.fc{i}.weight"], p[f"{prefix}.fc{i}.bias"])
        if i < cfg.head_fc_layers - 1:
            x = nc.relu(x)
    return x


def head_forward(x: Tensor, p: dict, prefix: str, cfg: NetworkConfig) -> Tensor:
    return _fc_forward(_head_trunk(x, p, prefix, cfg), p, prefix, cfg)


@dataclass
class ActionDistribution:
    mean: Optional[Tensor] = None
    log_std: Optional[Tensor] = None
    logits: Optional[Tensor] = None
    value: Optional[Tensor] = None

    @property
    def discrete(self) -> bool:
        return self.logits is not None


def action_distribution(features: Tensor, params: PolicyParams | dict, cfg: NetworkConfig) -> ActionDistribution:
    p = params.all() if isinstance(params, PolicyParams) else params
    out = head_forward(features, p, "actor", cfg)
    a = cfg.action_dim
    if cfg.action_space == DISCRETE:
        return ActionDistribution(logits=nc.columns(out, 0, a), value=nc.reshape(nc.columns(out, a, a + 1), (-1,)))
    mean = nc.columns(out, 0, a)
    raw = nc.tanh(nc.columns(out, a, 2 * a))
    lo, hi = cfg.log_std_min, cfg.log_std_max
    log_std = nc.add(nc.mul(raw, 0.5 * (hi - lo)), lo + 0.5 * (hi - lo))
    return ActionDistribution(mean=mean, log_std=log_std)


def sample_squashed(dist: ActionDistribution, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """Reparameterised tanh-Gaussian sample and its log-density, both differentiable."""
    eps = rng.standard_normal(dist.mean.shape).astype(dist.mean.dtype)
    std = nc.exp(dist.log_std)
    u = nc.add(dist.mean, nc.mul(std, eps))
    action = nc.tanh(u)
    log_gauss = nc.sub(nc.neg(dist.log_std), (0.5 * eps * eps + 0.5 * math.log(2 * math.pi)).astype(eps.dtype))
    squash = nc.log(nc.add(nc.neg(nc.square(action)), 1.0 + 1e-6))
    log_prob = nc.sum(nc.sub(log_gauss, squash), axis=1)
    return action, log_prob


def act(features: Tensor, params: PolicyParams | dict, cfg: NetworkConfig, mode: str = "mean", rng: np.random.Generator | None = None):
    """Action for each row of ``features``: float array in [-1, 1] or int indices."""
    dist = action_distribution(features.detach() if features.requires_grad else features, params, cfg)
    if dist.discrete:
        logits = dist.logits.data.astype(np.float64)
        if mode == "mean":
            return np.argmax(logits, axis=1)
        if rng is None:
            raise ValueError("sampling needs an rng")
        z = logits - logits.max(axis=1, keepdims=True)
        prob = np.exp(z)
        prob /= prob.sum(axis=1, keepdims=True)
        u = rng.random(len(prob))[:, None]
        return np.minimum((np.cumsum(prob, axis=1) < u).sum(axis=1), cfg.action_dim - 1)
    if mode == "mean":
        return np.tanh(dist.mean.data)
    if rng is None:
        raise ValueError("sampling needs an rng")
    eps = rng.standard_normal(dist.mean.shape).astype(dist.mean.dtype)
    return np.tanh(dist.mean.data + np.exp(dist.log_std.data) * eps)


def critic(features: Tensor, action, params: PolicyParams | dict, cfg: NetworkConfig, prefix: str = "critic") -> tuple[Tensor, Tensor]:
    """Twin Q-values ``(N,)`` for feature maps and actions."""
    p = params.all() if isinstance(params, PolicyParams) else params
    trunk = _head_trunk(features, p, prefix, cfg)
    a = _as_tensor(action) if not isinstance(action, Tensor) else action
    if a.dtype != trunk.dtype:
        a = Tensor(a.data, dtype=trunk.dtype)
    x = nc.concat([trunk, a], axis=1)
    q1 = _fc_forward(x, p, f"{prefix}.q1", cfg)
    q2 = _fc_forward(x, p, f"{prefix}.q2", cfg)
    return nc.reshape(q1, (-1,)), nc.reshape(q2, (-1,))


def predict_inverse(features_t: Tensor, features_t1: Tensor, params: PolicyParams | dict, cfg: NetworkConfig) -> Tensor:
    """Action (continuous) or action logits (discrete) explaining ``t -> t+1``."""
    if features_t.shape != features_t1.shape:
        raise DimensionError(f"feature maps differ: {features_t.shape} vs {features_t1.shape}")
    p = params.all() if isinstance(params, PolicyParams) else params
    return head_forward(nc.concat([features_t, features_t1], axis=1), p, "ssl", cfg)


def predict_rotation(features: Tensor, params: PolicyParams | dict, cfg: NetworkConfig) -> Tensor:
    p = params.all() if isinstance(params, PolicyParams) else params
    return head_forward(features, p, "ssl", cfg)
