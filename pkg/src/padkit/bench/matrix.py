"""Method x shift x seed evaluation matrix.

Methods are deployment modes (``frozen``, ``pad``, ``offline_pad``,
``pad_fixed_head``, ``blind``), ``dr`` (a domain-randomised checkpoint
deployed frozen) and ``finetune-K`` (reward-based fine-tuning on K target
episodes, then frozen deployment).  Every cell loads its own checkpoint copy,
so cells cannot interfere; a failing cell is recorded and the rest continue.
"""

from __future__ import annotations

import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from padkit import padloop as pl
from padkit.bench import checkpoint as ckpt
from padkit.bench.report import EvalReport, Row
from padkit.numcore import ConfigurationError

DEPLOY_METHODS = pl.DEPLOY_MODES


@dataclass
class MatrixConfig:
    kind: str
    methods: list
    shifts: list  # ShiftSpec text forms; "none" for the training env
    seeds: list
    checkpoints: dict  # seed -> path
    dr_checkpoints: dict = field(default_factory=dict)
    episodes: int = 10
    horizon_multiplier: int = 1
    deploy: pl.DeployConfig | None = None  # None: use the checkpoint's deploy section
    finetune: pl.TrainConfig | None = None

    def cells(self) -> list[tuple[str, str, int]]:
        return [(m, s, seed) for m in self.methods for s in self.shifts for seed in self.seeds]


def parse_method(method: str) -> tuple[str, int]:
    if method in DEPLOY_METHODS or method == "dr":
        return method, 0
    if method.startswith("finetune-"):
        k = int(method.split("-", 1)[1])
        if k < 1:
            raise ConfigurationError("finetune budget must be >= 1")
        return "finetune", k
    raise ConfigurationError(f"unknown method {method!r}")


def num_workers() -> int:
    try:
        return max(1, int(os.environ.get("PAD_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def run_cell(cfg: MatrixConfig, method: str, shift: str, seed: int):
    """Evaluate one cell; returns (rows, mean per-step reward curve)."""
    base, budget = parse_method(method)
    if base == "dr":
        if seed not in cfg.dr_checkpoints:
            raise ConfigurationError(f"no domain-randomised checkpoint for seed {seed}")
        path = cfg.dr_checkpoints[seed]
    else:
        path = cfg.checkpoints[seed]
    params, run = ckpt.load(path)
    factory = pl.EnvFactory(cfg.kind, run.env)
    spec = None if shift == "none" else shift
    mode = base if base in DEPLOY_METHODS else "frozen"
    dcfg = replace(cfg.deploy or run.deploy, mode=mode, episodes=cfg.episodes, horizon_multiplier=cfg.horizon_multiplier)
    if base == "finetune":
        tcfg = cfg.finetune or run.train
        env = factory(pl.eval_seed(seed, 10_000), spec)
        params, _ = pl.finetune_with_rewards(params, env, budget, tcfg, run.net, np.random.default_rng([seed, budget, 11]))
    traces = pl.evaluate(params, factory, spec, dcfg, seed, run.net)
    rows = [Row(method, cfg.kind, shift, seed, i, t.episode_return, t.success) for i, t in enumerate(traces)]
    curve = np.mean([t.rewards for t in traces], axis=0)
    return rows, curve


def _cell_job(args):
    cfg, method, shift, seed = args
    try:
        return method, shift, seed, run_cell(cfg, method, shift, seed), None
    except Exception as exc:  # recorded, the matrix carries on
        return method, shift, seed, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def run_matrix(cfg: MatrixConfig, workers: int | None = None) -> EvalReport:
    for m in cfg.methods:
        parse_method(m)
    jobs = [(cfg, m, s, seed) for m, s, seed in cfg.cells()]
    workers = workers or num_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]

    report = EvalReport()
    report.provenance = {
        "checkpoints": {str(s): ckpt.file_digest(p) for s, p in sorted(cfg.checkpoints.items())},
        "dr_checkpoints": {str(s): ckpt.file_digest(p) for s, p in sorted(cfg.dr_checkpoints.items())},
        "episodes": cfg.episodes,
        "horizon_multiplier": cfg.horizon_multiplier,
    }
    # assembled in cell order regardless of completion order
    for method, shift, seed, out, err in results:
        if err is not None:
            report.failures.append({"method": method, "shift": shift, "seed": seed, "error": err})
            continue
        rows, curve = out
        for r in rows:
            report.add(r)
        report.curves.setdefault((method, shift), {})[seed] = curve
    return report


def write_outputs(report: EvalReport, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "report.csv"),
        "json": os.path.join(out_dir, "report.json"),
        "table": os.path.join(out_dir, "table.txt"),
    }
    with open(paths["csv"], "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    with open(paths["json"], "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(paths["table"], "w", encoding="utf-8") as fh:
        fh.write(report.table())
    return paths


# --------------------------------------------------------- text form
def parse_matrix_config(text: str) -> MatrixConfig:
    """``key=value`` lines: kind, methods (comma list), shifts (``;`` list),
    seeds, episodes, horizon_multiplier, checkpoint.<seed>, dr_checkpoint.<seed>,
    deploy.<field>."""
    from padkit.bench.config import ConfigKeyError, _coerce, parse_items

    items = parse_items(text)
    kw: dict = {"checkpoints": {}, "dr_checkpoints": {}}
    deploy = pl.DeployConfig()
    dkw = {}
    for k, v in items:
        if k == "kind":
            kw["kind"] = v
        elif k == "methods":
            kw["methods"] = [m.strip() for m in v.split(",") if m.strip()]
        elif k == "shifts":
            kw["shifts"] = [s.strip() for s in v.split(";") if s.strip()]
        elif k == "seeds":
            kw["seeds"] = [int(s) for s in v.split(",") if s.strip()]
        elif k in ("episodes", "horizon_multiplier"):
            kw[k] = int(v)
        elif k.startswith("checkpoint."):
            kw["checkpoints"][int(k.split(".", 1)[1])] = v
        elif k.startswith("dr_checkpoint."):
            kw["dr_checkpoints"][int(k.split(".", 1)[1])] = v
        elif k.startswith("deploy.") and hasattr(deploy, k[7:]):
            dkw[k[7:]] = _coerce(k, v, getattr(deploy, k[7:]), False)
        else:
            raise ConfigKeyError(k)
    for req in ("kind", "methods", "shifts", "seeds"):
        if req not in kw:
            raise ConfigKeyError(req, "missing matrix key")
    missing = [s for s in kw["seeds"] if s not in kw["checkpoints"]]
    if missing:
        raise ConfigurationError(f"no checkpoint for seeds {missing}")
    if dkw:
        kw["deploy"] = replace(deploy, **dkw)
    return MatrixConfig(**kw)
