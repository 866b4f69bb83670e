import dataclasses
import json
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from padkit import padloop as pl
from padkit import policynet as pn
from padkit.bench import checkpoint as ckpt
from padkit.bench import cli
from padkit.bench import config as rc
from padkit.bench import matrix as mx
from padkit.bench.report import EvalReport, Row, aggregate, format_table, relative_improvement
from padkit.numcore import ConfigurationError

from helpers import TINY_ENV, tiny_net, tiny_train


def tiny_run(kind="PointReach", **deploy) -> rc.RunConfig:
    algo = "sac" if kind == "PointReach" else "a2c"
    ssl_task = "idm" if algo == "sac" else "rotation"
    env = dataclasses.replace(TINY_ENV, horizon=10)
    return rc.RunConfig(
        kind=kind, algo=algo, env=env, net=tiny_net(algo, ssl_task), train=tiny_train(algo),
        deploy=pl.DeployConfig(episodes=1, **deploy),
    ).validate()


# -------------------------------------------------------------------- config
def test_for_task_defaults_consistent():
    for kind in ("PointReach", "GridMaze"):
        cfg = rc.RunConfig.for_task(kind).validate()
        assert cfg.net.ssl_task == cfg.train.ssl_task
        assert rc.parse(rc.serialize(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(["PointReach", "GridMaze"]),
    steps=st.integers(1, 10**6),
    coef=st.floats(0, 10, allow_nan=False),
    lr=st.floats(1e-7, 1.0, allow_nan=False),
    seed=st.integers(0, 2**31 - 1),
    dr=st.booleans(),
    mode=st.sampled_from(pl.DEPLOY_MODES),
    horizon=st.one_of(st.none(), st.integers(1, 500)),
)
def test_config_round_trip(kind, steps, coef, lr, seed, dr, mode, horizon):
    cfg = rc.RunConfig.for_task(kind)
    cfg = dataclasses.replace(
        cfg,
        dr=dr,
        env=dataclasses.replace(cfg.env, horizon=horizon),
        train=dataclasses.replace(cfg.train, total_steps=steps, ssl_coef=coef, learning_rate=lr, seed=seed),
        deploy=dataclasses.replace(cfg.deploy, mode=mode),
    )
    text = rc.serialize(cfg)
    back = rc.parse(text)
    assert back == cfg
    assert rc.serialize(back) == text
    assert back.digest() == cfg.digest()


def test_unknown_key_named():
    with pytest.raises(rc.ConfigKeyError) as err:
        rc.parse("kind=PointReach\ntrain.learning_rte=0.1\n")
    assert err.value.key == "train.learning_rte"
    assert "train.learning_rte" in str(err.value)


def test_bad_values_rejected():
    with pytest.raises(rc.ConfigKeyError):
        rc.parse("train.total_steps=many")
    with pytest.raises(ConfigurationError):
        rc.parse("train.ssl_coef=-1")
    with pytest.raises(ConfigurationError):
        rc.parse("deploy.mode=online")
    with pytest.raises(ConfigurationError):
        rc.parse("no equals sign")
    with pytest.raises(ConfigurationError):
        rc.parse("kind=GridMaze\nalgo=sac")


def test_partial_config_and_overrides():
    cfg = rc.parse("kind=GridMaze\n# comment\n\ntrain.seed=4\n")
    assert cfg.algo == "a2c" and cfg.train.ssl_task == "rotation" and cfg.train.seed == 4
    over = cfg.with_overrides(**{"train.total_steps": 10, "dr": True})
    assert over.train.total_steps == 10 and over.dr and over.train.seed == 4
    moved = cfg.retarget("PointReach")
    assert moved.algo == "sac" and moved.net.action_space == pn.CONTINUOUS


# ---------------------------------------------------------------- checkpoint
@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    run = tiny_run()
    res = pl.train_joint(pl.EnvFactory(run.kind, run.env), run.algo, run.train, run.net)
    path = tmp_path_factory.mktemp("ck") / "a.padc"
    ckpt.save(res.params, run, path)
    return res, run, path


def test_checkpoint_round_trip_byte_identical(trained, tmp_path):
    res, run, path = trained
    params, cfg = ckpt.load(path)
    assert pn.params_equal(params, res.params)
    assert cfg == run
    for part in ckpt.PARTS:
        assert list(getattr(params, part)) == list(getattr(res.params, part))
    again = tmp_path / "b.padc"
    ckpt.save(params, cfg, again)
    assert again.read_bytes() == path.read_bytes()


def test_checkpoint_frozen_flags(trained):
    params, _ = ckpt.load(trained[2])
    for name, t in params.theta_a.items():
        assert t.requires_grad == (not name.startswith(("critic_target.", "encoder_target.")))
    assert any(n.startswith("critic_target.") for n in params.theta_a)


def test_checkpoint_corruption_detected(trained, tmp_path):
    blob = bytearray(trained[2].read_bytes())
    for pos in (5, len(blob) // 2, len(blob) - 10):
        bad = bytearray(blob)
        bad[pos] ^= 0x01
        with pytest.raises(ckpt.IntegrityError):
            ckpt.decode(bytes(bad))
    with pytest.raises(ckpt.IntegrityError):
        ckpt.decode(bytes(blob[: len(blob) // 3]))
    with pytest.raises(ckpt.IntegrityError):
        ckpt.decode(b"nope" + bytes(blob[4:]))


def test_checkpoint_version_rejected(trained):
    blob = bytearray(trained[2].read_bytes())
    body = blob[:-4]
    body[4:8] = struct.pack("<I", ckpt.FORMAT_VERSION + 1)
    forged = bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with pytest.raises(ckpt.VersionError):
        ckpt.decode(forged)


def test_checkpoint_records_partition(trained):
    res, run, _ = trained
    text = ckpt.config_snapshot(res.params, run)
    lines = dict(line.split("=", 1) for line in text.splitlines() if line.startswith("partition."))
    assert lines["partition.theta_s"].split(",") == list(res.params.theta_s)
    assert set(lines["partition.theta_e"].split(",")) == set(res.params.theta_e)


# -------------------------------------------------------------------- report
def _rows():
    rows = []
    for method, base in (("frozen", -10.0), ("pad", -8.0)):
        for seed in range(3):
            for ep in range(2):
                rows.append(Row(method, "PointReach", "colors:color_set_index=1", seed, ep, base + seed + 0.5 * ep, ep == 1))
    return rows


def test_aggregates_recomputable_from_rows():
    rep = EvalReport(rows=_rows())
    aggs = {a.method: a for a in rep.aggregates()}
    for method in ("frozen", "pad"):
        seed_means = [np.mean([r.ret for r in rep.rows if r.method == method and r.seed == s]) for s in range(3)]
        assert aggs[method].mean == pytest.approx(np.mean(seed_means))
        assert aggs[method].std == pytest.approx(np.std(seed_means))
        assert aggs[method].seeds == 3 and aggs[method].success_rate == 0.5


def test_report_serialisation_round_trip():
    rep = EvalReport(rows=_rows())
    rep.curves[("pad", "x")] = {0: np.array([1.0, 2.0])}
    assert EvalReport.from_csv(rep.to_csv()).rows == rep.rows
    back = EvalReport.from_json(rep.to_json())
    assert back.rows == rep.rows
    np.testing.assert_array_equal(back.curves[("pad", "x")][0], [1.0, 2.0])
    assert aggregate(back.rows) == rep.aggregates()


def test_table_marks_best():
    text = format_table(EvalReport(rows=_rows()))
    lines = text.splitlines()
    assert lines[0].split()[0] == "method"
    pad = next(line for line in lines if line.startswith("pad"))
    frozen = next(line for line in lines if line.startswith("frozen"))
    assert pad.endswith("*") and "*" not in frozen


def test_relative_improvement():
    rep = EvalReport()
    rep.curves[("pad", "s")] = {0: np.array([-1.0, -2.0]), 1: np.array([-3.0, -1.0])}
    rep.curves[("frozen", "s")] = {0: np.array([-2.0, -2.0]), 1: np.array([-2.0, -4.0])}
    np.testing.assert_allclose(relative_improvement(rep, "s"), [(0.5 - 0.5) / 2, (0 + 0.75) / 2])
    assert relative_improvement(rep, "missing") is None


# -------------------------------------------------------------------- matrix
def test_matrix_counts_and_failures(trained):
    _, _, path = trained
    cfg = mx.MatrixConfig(
        kind="PointReach", methods=["frozen", "pad"], shifts=["colors:color_set_index=2"], seeds=[0, 1, 2],
        checkpoints={0: path, 1: path, 2: path}, episodes=1,
    )
    rep = mx.run_matrix(cfg, workers=1)
    assert len(rep.rows) == 6 and len(rep.aggregates()) == 2 and not rep.failures
    assert set(rep.curves) == {("frozen", "colors:color_set_index=2"), ("pad", "colors:color_set_index=2")}

    broken = dataclasses.replace(cfg, methods=["frozen", "dr"], seeds=[0])
    rep = mx.run_matrix(broken, workers=1)
    assert len(rep.rows) == 1 and len(rep.failures) == 1 and rep.failures[0]["method"] == "dr"


def test_matrix_finetune_cell(trained):
    _, _, path = trained
    cfg = mx.MatrixConfig(kind="PointReach", methods=["finetune-2"], shifts=["none"], seeds=[0], checkpoints={0: path}, episodes=1)
    rep = mx.run_matrix(cfg)
    assert len(rep.rows) == 1 and not rep.failures


def test_method_parsing():
    assert mx.parse_method("finetune-5") == ("finetune", 5)
    assert mx.parse_method("pad") == ("pad", 0)
    for bad in ("finetune-0", "magic"):
        with pytest.raises(ConfigurationError):
            mx.parse_method(bad)


def test_matrix_config_text(trained):
    text = f"kind=PointReach\nmethods=frozen,pad\nshifts=none;video:video_index=1\nseeds=0\ncheckpoint.0={trained[2]}\ndeploy.test_learning_rate=0.01\n"
    cfg = mx.parse_matrix_config(text)
    assert cfg.shifts == ["none", "video:video_index=1"] and cfg.deploy.test_learning_rate == 0.01
    with pytest.raises(rc.ConfigKeyError):
        mx.parse_matrix_config(text + "colour=red\n")
    with pytest.raises(ConfigurationError):
        mx.parse_matrix_config(text.replace("seeds=0", "seeds=0,1"))


# ----------------------------------------------------------------------- cli
def test_cli_end_to_end(tmp_path, capsys):
    conf = tmp_path / "run.cfg"
    conf.write_text(rc.serialize(tiny_run()))
    a, b = tmp_path / "a.padc", tmp_path / "b.padc"
    for out in (a, b):
        assert cli.main(["train", "--config", str(conf), "--seed", "1", "--steps", "30", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.padc.curve.csv").read_text().startswith("step,eval_return\n")

    csv_path = tmp_path / "dep.csv"
    for mode in ("frozen", "pad"):
        assert cli.main(["deploy", "--ckpt", str(a), "--mode", mode, "--episodes", "2", "--shift", "colors:color_set_index=3", "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "method,env_kind,shift,seed,episode_index,return,success" and len(lines) == 5
    traces = [json.loads(x) for x in (tmp_path / "dep.csv.traces.jsonl").read_text().splitlines()]
    assert len(traces) == 4 and all(len(t["rewards"]) == 10 for t in traces)

    mconf = tmp_path / "m.cfg"
    mconf.write_text(f"kind=PointReach\nmethods=frozen,pad\nshifts=none\nseeds=0\ncheckpoint.0={a}\nepisodes=1\n")
    assert cli.main(["matrix", "--config", str(mconf), "--out", str(tmp_path / "mat")]) == 0
    capsys.readouterr()
    assert cli.main(["report", "--in", str(tmp_path / "mat" / "report.json"), "--relative", "none"]) == 0
    out = capsys.readouterr().out
    assert "step,relative_improvement" in out and "frozen" in out
    assert cli.main(["report", "--in", str(csv_path)]) == 0


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.nonsense=1\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "x.padc")]) == 2
    assert "train.nonsense" in capsys.readouterr().err
    junk = tmp_path / "junk.padc"
    junk.write_bytes(b"PADC" + bytes(20))
    assert cli.main(["deploy", "--ckpt", str(junk), "--out", str(tmp_path / "o.csv")]) == 2
    assert "IntegrityError" in capsys.readouterr().err
