"""``padkit`` command line: train, deploy, matrix, report."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

from padkit import padloop as pl
from padkit.bench import checkpoint as ckpt
from padkit.bench import config as rc
from padkit.bench import matrix as mx
from padkit.bench.report import EvalReport, Row, relative_improvement
from padkit.envs import ShiftSpec
from padkit.numcore import ConfigurationError


def _train(args) -> int:
    if args.config:
        cfg = rc.load(args.config).retarget(args.env, args.algo, args.ssl)
    else:
        cfg = rc.RunConfig.for_task(args.env or "PointReach", args.algo, args.ssl)
    updates = {"train.seed": args.seed, "dr": bool(args.dr)}
    if args.steps is not None:
        updates["train.total_steps"] = args.steps
    cfg = cfg.with_overrides(**updates)

    out_dir = os.path.dirname(os.path.abspath(args.out))
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"cannot write to {out_dir}")
    factory = pl.EnvFactory(cfg.kind, cfg.env)
    fn = pl.train_domain_randomization if cfg.dr else pl.train_joint
    result = fn(factory, cfg.algo, cfg.train, cfg.net)
    digest = ckpt.save(result.params, cfg, args.out)
    with open(args.out + ".curve.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "eval_return"])
        for point in result.curve:
            w.writerow([point["step"], repr(point["eval_return"])])
    print(f"wrote {args.out} sha256={digest}")
    return 0


def _deploy(args) -> int:
    params, cfg = ckpt.load(args.ckpt)
    kind = args.env or cfg.kind
    if kind != cfg.kind:
        raise ConfigurationError(f"checkpoint was trained on {cfg.kind}, not {kind}")
    spec = None if args.shift in (None, "", "none") else ShiftSpec.parse(args.shift)
    dcfg = replace(
        cfg.deploy,
        mode=args.mode,
        episodes=args.episodes,
        horizon_multiplier=args.horizon_mult,
        **({"test_learning_rate": args.lr} if args.lr else {}),
    )
    factory = pl.EnvFactory(kind, cfg.env)
    traces = pl.evaluate(params, factory, spec, dcfg, args.seed, cfg.net)
    shift_text = "none" if spec is None else spec.to_text()
    rows = [Row(args.mode, kind, shift_text, args.seed, i, t.episode_return, t.success) for i, t in enumerate(traces)]

    rep = EvalReport(rows=rows)
    fresh = not os.path.exists(args.out)
    with open(args.out, "a", encoding="utf-8") as fh:
        text = rep.to_csv()
        fh.write(text if fresh else text.split("\n", 1)[1])
    with open(args.out + ".traces.jsonl", "a", encoding="utf-8") as fh:
        for i, t in enumerate(traces):
            fh.write(json.dumps({
                "mode": args.mode, "shift": shift_text, "seed": args.seed, "episode_index": i,
                "rewards": t.rewards, "ssl_losses": t.ssl_losses, "drift": t.drift,
            }) + "\n")
    for r in rows:
        print(f"{r.method} {r.shift} seed={r.seed} ep={r.episode_index} return={r.ret:.3f} success={int(r.success)}")
    return 0


def _matrix(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        mcfg = mx.parse_matrix_config(fh.read())
    report = mx.run_matrix(mcfg, workers=args.workers)
    paths = mx.write_outputs(report, args.out)
    print(report.table(), end="")
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 1 if report.failures else 0


def _report(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    rep = EvalReport.from_json(text) if args.input.endswith(".json") else EvalReport.from_csv(text)
    print(rep.table(), end="")
    if args.relative:
        series = relative_improvement(rep, args.relative)
        if series is None:
            print(f"no pad/frozen curves for shift {args.relative!r}")
        else:
            print("step,relative_improvement")
            for i, v in enumerate(series):
                print(f"{i},{v:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="padkit", description="Policy adaptation during deployment, desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy and write a checkpoint")
    t.add_argument("--config", help="key=value run configuration file")
    t.add_argument("--env", choices=("PointReach", "GridMaze"))
    t.add_argument("--algo", choices=("sac", "a2c"))
    t.add_argument("--ssl", choices=("idm", "rotation", "none"))
    t.add_argument("--dr", action="store_true", help="domain randomisation during training")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--steps", type=int, help="override train.total_steps")
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_train)

    d = sub.add_parser("deploy", help="evaluate a checkpoint under one deployment mode")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--env", choices=("PointReach", "GridMaze"))
    d.add_argument("--shift", default="none", help='e.g. "colors:color_set_index=7"')
    d.add_argument("--mode", default="pad", choices=pl.DEPLOY_MODES)
    d.add_argument("--episodes", type=int, default=10)
    d.add_argument("--horizon-mult", type=int, default=1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--lr", type=float, help="override the deployment learning rate")
    d.add_argument("--out", required=True, help="CSV report to append to")
    d.set_defaults(fn=_deploy)

    m = sub.add_parser("matrix", help="run a method x shift x seed matrix")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True, help="output directory")
    m.add_argument("--workers", type=int, help="defaults to PAD_NUM_WORKERS or 1")
    m.set_defaults(fn=_matrix)

    r = sub.add_parser("report", help="print the table for a saved report")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--relative", metavar="SHIFT", help="also print pad-vs-frozen relative improvement")
    r.set_defaults(fn=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, ckpt.IntegrityError, ckpt.VersionError, OSError, ValueError) as exc:
        print(f"padkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
