"""Evaluation report: per-episode rows, per-cell aggregates, CSV/JSON/text output.

Aggregates are computed from rows only: for every (method, env_kind, shift)
the per-seed mean return is taken over episodes, then mean and population
standard deviation over seeds.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

CSV_COLUMNS = ("method", "env_kind", "shift", "seed", "episode_index", "return", "success")


@dataclass(frozen=True)
class Row:
    method: str
    env_kind: str
    shift: str
    seed: int
    episode_index: int
    ret: float
    success: bool

    def as_csv(self) -> list:
        return [self.method, self.env_kind, self.shift, self.seed, self.episode_index, repr(float(self.ret)), int(self.success)]


@dataclass(frozen=True)
class Aggregate:
    method: str
    env_kind: str
    shift: str
    mean: float
    std: float
    seeds: int
    success_rate: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)  # dicts: method, shift, seed, error
    # (method, shift) -> {seed: per-step reward averaged over episodes}
    curves: dict = field(default_factory=dict)

    def add(self, row: Row) -> None:
        self.rows.append(row)

    def aggregates(self) -> list[Aggregate]:
        return aggregate(self.rows)

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def shifts(self) -> list[str]:
        return list(dict.fromkeys(r.shift for r in self.rows))

    # -- serialisation
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": [dict(zip(CSV_COLUMNS, [r.method, r.env_kind, r.shift, r.seed, r.episode_index, r.ret, r.success])) for r in self.rows],
                "aggregates": [asdict(a) for a in self.aggregates()],
                "provenance": self.provenance,
                "failures": self.failures,
                "curves": [
                    {"method": m, "shift": s, "seed": seed, "rewards": list(map(float, c))}
                    for (m, s), per_seed in self.curves.items()
                    for seed, c in sorted(per_seed.items())
                ],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        rep = cls(provenance=d.get("provenance", {}), failures=d.get("failures", []))
        for r in d["rows"]:
            rep.add(Row(r["method"], r["env_kind"], r["shift"], int(r["seed"]), int(r["episode_index"]), float(r["return"]), bool(r["success"])))
        for c in d.get("curves", []):
            rep.curves.setdefault((c["method"], c["shift"]), {})[int(c["seed"])] = np.asarray(c["rewards"])
        return rep

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rep = cls()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for m, k, s, seed, ep, ret, ok in reader:
            rep.add(Row(m, k, s, int(seed), int(ep), float(ret), bool(int(ok))))
        return rep

    def table(self) -> str:
        return format_table(self)


def aggregate(rows: list[Row]) -> list[Aggregate]:
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.method, r.env_kind, r.shift), {}).setdefault(r.seed, []).append(r)
    out = []
    for (m, k, s), per_seed in cells.items():
        seed_means = np.array([np.mean([x.ret for x in rs]) for _, rs in sorted(per_seed.items())])
        succ = np.mean([x.success for rs in per_seed.values() for x in rs])
        out.append(Aggregate(m, k, s, float(np.mean(seed_means)), float(np.std(seed_means)), len(seed_means), float(succ)))
    return out


def format_table(report: EvalReport) -> str:
    """Methods as rows, shifts as columns; ``*`` marks the best mean per shift."""
    aggs = {(a.method, a.shift): a for a in report.aggregates()}
    methods, shifts = report.methods(), report.shifts()
    best = {}
    for s in shifts:
        cands = [(aggs[(m, s)].mean, m) for m in methods if (m, s) in aggs]
        if cands:
            best[s] = max(cands)[1]
    cells = [["method"] + shifts]
    for m in methods:
        line = [m]
        for s in shifts:
            a = aggs.get((m, s))
            line.append("-" if a is None else f"{a.mean:.2f}±{a.std:.2f}" + ("*" if best.get(s) == m else ""))
        cells.append(line)
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells)
    if report.failures:
        text += f"\n{len(report.failures)} cell(s) failed"
    return text + "\n"


def relative_improvement(report: EvalReport, shift: str, method: str = "pad", baseline: str = "frozen") -> Optional[np.ndarray]:
    """Per-step ``mean_seeds (r_method - r_base) / |r_base|``; ``None`` if curves are missing."""
    a = report.curves.get((method, shift))
    b = report.curves.get((baseline, shift))
    if not a or not b:
        return None
    seeds = sorted(set(a) & set(b))
    if not seeds:
        return None
    n = min(min(len(a[s]) for s in seeds), min(len(b[s]) for s in seeds))
    ratios = [(np.asarray(a[s][:n]) - b[s][:n]) / np.maximum(np.abs(b[s][:n]), 1e-8) for s in seeds]
    return np.mean(ratios, axis=0)
