"""Benchmark grids and their CSV/report artifacts.

Two built-in suites: "square" (M = N = K from 16 to 1024) and
"deepbench" (selected skinny fully-connected shapes from the Baidu
DeepBench collection, which stress the padding path since N gets padded
to the array dimension).  A suite run compares the tuned best against
the CISC-style baseline for every (workload, accelerator-config) cell
and writes one CSV per series with the header `workload,gops`, plus a
machine-readable full report.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .accel import AcceleratorConfig, load_config
from .schedule import Workload
from .tuner import compare_baseline


@dataclass(frozen=True)
class BenchWorkload:
    label: str          # x-axis id in the CSVs (size or DeepBench row id)
    workload: Workload


@dataclass(frozen=True)
class BenchmarkSuite:
    name: str
    workloads: tuple[BenchWorkload, ...]
    configs: tuple[tuple[str, AcceleratorConfig], ...]
    exhaustive_cap: int = 512
    guided_budget: int = 256
    seed: int = 0

    def __post_init__(self):
        if not self.workloads:
            raise ValueError("suite has no workloads")
        if not self.configs:
            raise ValueError("suite has no configs")


SQUARE_SIZES = (16, 32, 64, 128, 256, 512, 1024)

# Selected Baidu DeepBench dense-layer rows: id -> (M, N, K)
DEEPBENCH_ROWS = {
    15: (64, 1, 1216),
    49: (128, 1, 1024),
    63: (512, 1, 512),
    73: (512, 2, 512),
    84: (1024, 4, 512),
}

DESK_SQUARE_MAX = 512  # default cap; --full lifts it


def default_configs() -> tuple[tuple[str, AcceleratorConfig], ...]:
    return (("nol2", load_config("gemmini16_nol2")),
            ("l2", load_config("gemmini16_l2")))


def builtin_suites(configs=None, *, full: bool = False, max_square: int = 0,
                   seed: int = 0) -> dict[str, BenchmarkSuite]:
    """The shipped suites, against the shipped config pair by default.

    max_square (if nonzero) further restricts the square suite, for
    quick runs; --full lifts the desk-scale cap instead.
    """
    cfgs = tuple(configs) if configs is not None else default_configs()
    cap = DESK_SQUARE_MAX if not full else max(SQUARE_SIZES)
    if max_square:
        cap = min(cap, max_square)
    sizes = tuple(s for s in SQUARE_SIZES if s <= cap)
    square = BenchmarkSuite(
        name="square",
        workloads=tuple(BenchWorkload(str(s), Workload(s, s, s)) for s in sizes),
        configs=cfgs, seed=seed)
    deepbench = BenchmarkSuite(
        name="deepbench",
        workloads=tuple(BenchWorkload(str(i), Workload(*dims))
                        for i, dims in sorted(DEEPBENCH_ROWS.items())),
        configs=cfgs, seed=seed)
    return {"square": square, "deepbench": deepbench}


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


@dataclass
class SuiteResult:
    suite: str
    cells: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "cells": self.cells}


def run_suite(suite: BenchmarkSuite, out_dir: str | Path,
              parallelism: int = 1,
              progress=lambda msg: None) -> SuiteResult:
    """Run every (workload, config) cell; write CSVs and the report.

    CSV series: {tuned,baseline} x config label, one file each, rows
    `<workload id>,<gops>`.  Rows are flushed as they are produced so
    partial results survive a failure.  The report also flags every
    cell where the baseline won.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = SuiteResult(suite.name)
    files = {}
    try:
        for kind in ("tuned", "baseline"):
            for label, _ in suite.configs:
                path = out / f"{suite.name}_{kind}_{_slug(label)}.csv"
                f = open(path, "w")
                f.write("workload,gops\n")
                f.flush()
                files[(kind, label)] = f
        for cfg_label, cfg in suite.configs:
            for bw in suite.workloads:
                progress(f"{suite.name}: workload {bw.label} [{cfg_label}]")
                cmp = compare_baseline(
                    bw.workload, cfg, exhaustive_cap=suite.exhaustive_cap,
                    guided_budget=suite.guided_budget, seed=suite.seed,
                    parallelism=parallelism)
                cell = {
                    "workload": bw.label,
                    "dims": [bw.workload.m, bw.workload.n, bw.workload.k],
                    "config": cfg_label,
                    "strategy": cmp.strategy,
                    "tuned_cycles": cmp.tuned.cycles,
                    "tuned_gops": cmp.tuned.gops,
                    "tuned_schedule": cmp.tuned.params.to_dict(),
                    "baseline_cycles": cmp.cisc_cycles,
                    "baseline_gops": cmp.cisc_gops,
                    "baseline_schedule": cmp.baseline_schedule.to_dict(),
                    "baseline_wins": cmp.baseline_wins,
                    "trials": len(cmp.tuned_history),
                }
                result.cells.append(cell)
                for kind, gops in (("tuned", cmp.tuned.gops),
                                   ("baseline", cmp.cisc_gops)):
                    f = files[(kind, cfg_label)]
                    f.write(f"{bw.label},{gops:.6f}\n")
                    f.flush()
    finally:
        for f in files.values():
            f.close()
    (out / f"{suite.name}_report.json").write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    return result


def render_report(result: SuiteResult) -> str:
    """Text table of a suite result, flagging baseline wins."""
    lines = [f"suite: {result.suite}"]
    header = (f"{'workload':>10} {'config':>6} {'strategy':>12} "
              f"{'tuned GOPs':>11} {'cisc GOPs':>10} {'winner':>8}")
    lines.append(header)
    lines.append("-" * len(header))
    for c in result.cells:
        winner = "cisc" if c["baseline_wins"] else "tuned"
        lines.append(
            f"{c['workload']:>10} {c['config']:>6} {c['strategy']:>12} "
            f"{c['tuned_gops']:>11.3f} {c['baseline_gops']:>10.3f} {winner:>8}")
    wins = [c for c in result.cells if c["baseline_wins"]]
    if wins:
        lines.append("")
        lines.append("cells where the CISC baseline won:")
        for c in wins:
            lines.append(f"  workload {c['workload']} [{c['config']}]: "
                         f"baseline {c['baseline_cycles']} cycles vs tuned "
                         f"{c['tuned_cycles']}")
    return "\n".join(lines) + "\n"


def load_report(path: str | Path) -> SuiteResult:
    data = json.loads(Path(path).read_text())
    return SuiteResult(data["suite"], data["cells"])
