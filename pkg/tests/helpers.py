"""Miniature configurations shared by the unit tests."""

from padkit import envs
from padkit import policynet as pn
from padkit.padloop import TrainConfig
from padkit.rlalgos import A2cConfig, SacConfig

# criterion label -> verdict line, filled by test_acceptance and echoed in the summary
ACCEPTANCE: dict = {}

# 12px frames, 8px crops: small enough for finite differences and fast loops
TINY_ENV = envs.EnvConfig(render_size=12, frame_stack=2, margin=2)


def tiny_net(algo="sac", ssl_task="idm", **kw) -> pn.NetworkConfig:
    space, dim = ("continuous", 2) if algo == "sac" else ("discrete", 4)
    base = dict(
        frame_stack=TINY_ENV.frame_stack,
        render_size=TINY_ENV.render_size,
        crop_size=8,
        encoder_conv_layers=2,
        encoder_downsample=1,
        head_conv_layers=1,
        head_fc_layers=2,
        filters=4,
        hidden=16,
        action_dim=dim,
        action_space=space,
        algo=algo,
        ssl_task=ssl_task,
    )
    base.update(kw)
    return pn.NetworkConfig(**base)


def tiny_train(algo="sac", **kw) -> TrainConfig:
    base = dict(
        total_steps=60,
        ssl_task="idm" if algo == "sac" else "rotation",
        ssl_update_interval=2 if algo == "sac" else 1,
        ssl_batch_size=4,
        init_steps=20,
        replay_capacity=200,
        eval_interval=30,
        eval_episodes=1,
        finetune_updates=5,
        sac=SacConfig(batch_size=8),
        a2c=A2cConfig(actor_count=2, rollout_length=5),
    )
    base.update(kw)
    return TrainConfig(**base)


# ------------------------------------------------------------ gradient cases
import numpy as np  # noqa: E402

from padkit import numcore as nc  # noqa: E402


def _away_from_zero(x, gap=0.05):
    return np.where(np.abs(x) < gap, np.sign(x + 1e-12) * gap, x)


def _weighted(out, seed):
    # contract with fixed random weights so no gradient entry is trivially uniform
    w = np.random.default_rng(seed).normal(size=out.shape)
    return nc.sum(nc.mul(out, w))


def gradient_cases():
    """``name -> (fn, make_inputs(rng))`` covering every differentiable op."""
    n = lambda r, *s: r.normal(size=s)  # noqa: E731
    return {
        "add": (lambda a, b: _weighted(nc.add(a, b), 1), lambda r: [n(r, 3, 4), n(r, 3, 4)]),
        "sub": (lambda a, b: _weighted(nc.sub(a, b), 2), lambda r: [n(r, 3, 4), n(r, 3, 4)]),
        "mul": (lambda a, b: _weighted(nc.mul(a, b), 3), lambda r: [n(r, 2, 5), n(r, 2, 5)]),
        "neg": (lambda a: _weighted(nc.neg(a), 4), lambda r: [n(r, 6)]),
        "scale_by": (lambda a, s: _weighted(nc.scale_by(a, s), 5), lambda r: [n(r, 3, 3), n(r, 1)]),
        "exp": (lambda a: _weighted(nc.exp(a), 6), lambda r: [n(r, 4, 3)]),
        "log": (lambda a: _weighted(nc.log(a), 7), lambda r: [r.uniform(0.5, 2.0, size=(4, 3))]),
        "square": (lambda a: _weighted(nc.square(a), 8), lambda r: [n(r, 5)]),
        "minimum": (
            lambda a, b: _weighted(nc.minimum(a, b), 9),
            lambda r: (lambda a: [a, a + _away_from_zero(n(r, 3, 4), 0.1)])(n(r, 3, 4)),
        ),
        "sum_axis": (lambda a: _weighted(nc.sum(a, axis=1), 10), lambda r: [n(r, 3, 4)]),
        "mean": (lambda a: _weighted(nc.mean(a, axis=0), 11), lambda r: [n(r, 3, 4)]),
        "reshape": (lambda a: _weighted(nc.reshape(a, (4, 3)), 12), lambda r: [n(r, 2, 6)]),
        "flatten": (lambda a: _weighted(nc.flatten(a), 13), lambda r: [n(r, 2, 2, 3)]),
        "columns": (lambda a: _weighted(nc.columns(a, 1, 3), 14), lambda r: [n(r, 3, 5)]),
        "concat": (lambda a, b: _weighted(nc.concat([a, b], axis=1), 15), lambda r: [n(r, 2, 3), n(r, 2, 2)]),
        "relu": (lambda a: _weighted(nc.relu(a), 16), lambda r: [_away_from_zero(n(r, 4, 4))]),
        "tanh": (lambda a: _weighted(nc.tanh(a), 17), lambda r: [n(r, 4, 4)]),
        "softmax": (lambda a: _weighted(nc.softmax(a, axis=1), 18), lambda r: [n(r, 3, 4)]),
        "log_softmax": (lambda a: _weighted(nc.log_softmax(a, axis=1), 19), lambda r: [n(r, 3, 4)]),
        "dense": (lambda x, w, b: _weighted(nc.dense(x, w, b), 20), lambda r: [n(r, 3, 4), n(r, 4, 2), n(r, 2)]),
        "conv2d_s1p0": (
            lambda x, k, b: _weighted(nc.conv2d(x, k, b, 1, 0), 21),
            lambda r: [n(r, 2, 2, 5, 5), n(r, 3, 2, 3, 3), n(r, 3)],
        ),
        "conv2d_s2p1": (
            lambda x, k, b: _weighted(nc.conv2d(x, k, b, 2, 1), 22),
            lambda r: [n(r, 1, 2, 6, 6), n(r, 2, 2, 4, 4), n(r, 2)],
        ),
    }
