import numpy as np
import pytest

from padkit import numcore as nc
from padkit import padloop as pl
from padkit import policynet as pn
from padkit.numcore import ConfigurationError

from helpers import TINY_ENV, tiny_net, tiny_train

POINT = pl.EnvFactory("PointReach", TINY_ENV, horizon=10)
MAZE = pl.EnvFactory("GridMaze", TINY_ENV, horizon=10)


@pytest.fixture(scope="module")
def sac_run():
    return pl.train_joint(POINT, "sac", tiny_train("sac"), tiny_net("sac", "idm"))


@pytest.fixture(scope="module")
def a2c_run():
    return pl.train_joint(MAZE, "a2c", tiny_train("a2c"), tiny_net("a2c", "rotation"))


# ------------------------------------------------------------------ training
def test_zero_coefficient_matches_plain_rl():
    with_head = pl.train_joint(POINT, "sac", tiny_train("sac", ssl_coef=0.0), tiny_net("sac", "idm"))
    plain = pl.train_joint(POINT, "sac", tiny_train("sac", ssl_task="none"), tiny_net("sac", "none"))
    assert pn.params_equal(with_head.params.theta_e, plain.params.theta_e)
    assert pn.params_equal(with_head.params.theta_a, plain.params.theta_a)
    assert pn.params_equal(with_head.params.theta_s, pn.build(tiny_net("sac", "idm"), 0).theta_s)
    assert with_head.episode_returns == plain.episode_returns


def test_zero_coefficient_a2c_leaves_ssl_head():
    res = pl.train_joint(MAZE, "a2c", tiny_train("a2c", ssl_coef=0.0), tiny_net("a2c", "rotation"))
    assert pn.params_equal(res.params.theta_s, pn.build(tiny_net("a2c", "rotation"), 0).theta_s)


@pytest.mark.parametrize("algo", ["sac", "a2c"])
def test_joint_training_moves_every_partition(algo, sac_run, a2c_run):
    res = sac_run if algo == "sac" else a2c_run
    init = pn.build(res.net, 0)
    assert not pn.params_equal(res.params.theta_e, init.theta_e)
    assert not pn.params_equal(res.params.theta_s, init.theta_s)
    assert res.ssl_state is not None
    assert [c["step"] for c in res.curve] == ([30, 60] if algo == "sac" else [30, 60])


def test_training_is_deterministic(sac_run):
    again = pl.train_joint(POINT, "sac", tiny_train("sac"), tiny_net("sac", "idm"))
    assert pn.params_equal(sac_run.params, again.params)
    assert sac_run.curve == again.curve and sac_run.episode_returns == again.episode_returns


def test_domain_randomization_draws_train_table():
    res = pl.train_domain_randomization(POINT, "sac", tiny_train("sac"), tiny_net("sac", "idm"))
    assert len(res.shifts_used) >= 6  # one per episode
    assert all(s.table == "train" and s.color_set_index < 100 for s in res.shifts_used)
    base = pl.train_domain_randomization(POINT, "sac", tiny_train("sac", table_size=0), tiny_net("sac", "idm"))
    assert all(s.table == "base" for s in base.shifts_used)
    no_dr = pl.train_joint(POINT, "sac", tiny_train("sac"), tiny_net("sac", "idm"))
    assert no_dr.shifts_used == []


def test_step_budget():
    cfg = tiny_train("a2c")
    assert pl.step_budget(cfg, "a2c", dr=True) == 2 * cfg.total_steps
    assert pl.step_budget(cfg, "a2c", dr=False) == cfg.total_steps
    assert pl.step_budget(cfg, "sac", dr=True) == cfg.total_steps


def test_navigation_dr_runs_twice_as_long():
    res = pl.train_domain_randomization(MAZE, "a2c", tiny_train("a2c"), tiny_net("a2c", "rotation"))
    assert res.curve[-1]["step"] == 120


def test_training_config_errors():
    with pytest.raises(ConfigurationError):
        pl.TrainConfig(ssl_coef=-0.1)
    with pytest.raises(ConfigurationError):
        pl.TrainConfig(ssl_task="jigsaw")
    with pytest.raises(ConfigurationError):
        pl.TrainConfig(total_steps=0)
    with pytest.raises(ConfigurationError):
        pl.train_joint(MAZE, "sac", tiny_train("sac"))
    with pytest.raises(ConfigurationError):
        pl.train_joint(POINT, "sac", tiny_train("sac"), tiny_net("sac", "rotation"))
    with pytest.raises(ConfigurationError):
        pl.train_joint(POINT, "ppo", tiny_train("sac"), tiny_net("sac", "idm"))


def test_eval_seeds_disjoint_from_training():
    train = {s for s in range(10)} | {1000 * s + i for s in range(10) for i in range(16)}
    ev = {pl.eval_seed(s, e) for s in range(10) for e in range(100)}
    assert not train & ev
    assert len(ev) == 1000


# ---------------------------------------------------------------- deployment
def _deploy(res, factory, mode, seed=0, **kw):
    params = res.params.clone()
    trace = pl.deploy(params, factory(pl.eval_seed(0, seed)), pl.DeployConfig(mode=mode, **kw), np.random.default_rng(seed), res.net)
    return params, trace


@pytest.mark.parametrize("mode", ["frozen", "blind"])
def test_non_updating_modes_leave_params(sac_run, mode):
    params, trace = _deploy(sac_run, POINT, mode)
    assert pn.params_equal(params, sac_run.params)
    assert trace.update_count == 0 and all(d == 0 for d in trace.drift)
    assert trace.steps == 10


def test_blind_acts_on_zero_observations(sac_run):
    _, trace = _deploy(sac_run, POINT, "blind")
    env = POINT(0)
    z = pl.policy_action(np.zeros_like(env.reset()), sac_run.params, sac_run.net)
    for a in trace.actions:
        np.testing.assert_array_equal(a, z)


@pytest.mark.parametrize("res_name,factory", [("sac_run", POINT), ("a2c_run", MAZE)])
def test_pad_updates_encoder_and_head_only(request, res_name, factory):
    res = request.getfixturevalue(res_name)
    params, trace = _deploy(res, factory, "pad")
    assert trace.update_count == trace.steps == 10
    assert all(l is not None and np.isfinite(l) for l in trace.ssl_losses)
    assert pn.params_equal(params.theta_a, res.params.theta_a)
    assert not pn.params_equal(params.theta_e, res.params.theta_e)
    assert not pn.params_equal(params.theta_s, res.params.theta_s)
    assert trace.drift[-1] > 0


def test_fixed_head_leaves_ssl_head(sac_run):
    params, trace = _deploy(sac_run, POINT, "pad_fixed_head")
    assert trace.update_count == 10
    assert pn.params_equal(params.theta_s, sac_run.params.theta_s)
    assert pn.params_equal(params.theta_a, sac_run.params.theta_a)
    assert not pn.params_equal(params.theta_e, sac_run.params.theta_e)


def test_offline_pad_restores_after_each_step(a2c_run):
    params, trace = _deploy(a2c_run, MAZE, "offline_pad")
    assert pn.params_equal(params, a2c_run.params)
    assert trace.update_count == 10
    # each step sees exactly one update away from the trained weights, never an accumulation
    _, online = _deploy(a2c_run, MAZE, "pad")
    assert max(trace.drift) < online.drift[-1]
    assert trace.drift[0] == pytest.approx(online.drift[0])


def test_single_update_replays_bit_exact(sac_run):
    factory = pl.EnvFactory("PointReach", TINY_ENV, horizon=1)
    params, trace = _deploy(sac_run, factory, "pad", test_learning_rate=3e-4)

    ref = sac_run.params.clone()
    env = factory(pl.eval_seed(0, 0))
    rng = np.random.default_rng(0)
    obs = env.reset()
    a = pl.policy_action(obs, ref, sac_run.net, "mean", rng)
    nxt, _, _ = env.step(a)
    opt = nc.Adam(pl.deploy_parameters(ref, "pad"), lr=3e-4)
    loss = pl.pad_update(ref, sac_run.net, "idm", (obs, a.astype(np.float32), nxt), opt, 32, rng)
    assert loss == trace.ssl_losses[0]
    assert pn.params_equal(ref, params)


def test_deploy_is_deterministic(sac_run):
    p1, t1 = _deploy(sac_run, POINT, "pad", seed=3)
    p2, t2 = _deploy(sac_run, POINT, "pad", seed=3)
    assert pn.params_equal(p1, p2)
    assert t1.rewards == t2.rewards and t1.ssl_losses == t2.ssl_losses


@pytest.mark.parametrize("mult", [1, 3])
def test_horizon_multiplier(sac_run, mult):
    _, trace = _deploy(sac_run, POINT, "pad", horizon_multiplier=mult)
    assert trace.steps == 10 * mult == trace.update_count


def test_evaluate_uses_fresh_copies(sac_run):
    cfg = pl.DeployConfig(mode="pad", episodes=2)
    before = sac_run.params.clone()
    traces = pl.evaluate(sac_run.params, POINT, None, cfg, 0, sac_run.net)
    assert len(traces) == 2 and pn.params_equal(before, sac_run.params)
    again = pl.evaluate(sac_run.params, POINT, None, cfg, 0, sac_run.net)
    assert [t.rewards for t in traces] == [t.rewards for t in again]


def test_warm_optimizer_state(sac_run):
    cfg = pl.DeployConfig(mode="pad", fresh_optimizer=False, episodes=1)
    t = pl.evaluate(sac_run.params, POINT, None, cfg, 0, sac_run.net, sac_run.ssl_state)
    assert t[0].update_count == 10


def test_deploy_config_errors(sac_run):
    for kw in (dict(mode="online"), dict(steps_per_update=2), dict(test_batch_size=0), dict(test_learning_rate=0.0), dict(horizon_multiplier=0)):
        with pytest.raises(ConfigurationError):
            pl.DeployConfig(**kw)
    plain = pl.train_joint(POINT, "sac", tiny_train("sac", ssl_task="none", total_steps=25), tiny_net("sac", "none"))
    with pytest.raises(ConfigurationError):
        _deploy(plain, POINT, "pad")


# --------------------------------------------------------------- fine-tuning
@pytest.mark.parametrize("res_name,factory,algo", [("sac_run", POINT, "sac"), ("a2c_run", MAZE, "a2c")])
def test_finetune_budget_exact(request, res_name, factory, algo):
    res = request.getfixturevalue(res_name)
    before = res.params.clone()
    tuned, used = pl.finetune_with_rewards(res.params, factory(5), 3, tiny_train(algo), res.net, np.random.default_rng(0))
    assert used == 3
    assert pn.params_equal(before, res.params)
    assert not pn.params_equal(tuned.theta_a, res.params.theta_a)
    assert pn.params_equal(tuned.theta_s, res.params.theta_s)


def test_finetune_needs_an_episode(sac_run):
    with pytest.raises(ConfigurationError):
        pl.finetune_with_rewards(sac_run.params, POINT(0), 0, tiny_train("sac"), sac_run.net, np.random.default_rng(0))
