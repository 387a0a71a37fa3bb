"""Command-line interface.

Subcommands:
  enumerate   print the schedule-space size, optionally dump the points
  codegen     lower a workload + schedule to a trace file
  simulate    run a trace (or workload + schedule) on the machine model
  tune        search the space; write history and the best schedule
  bench       run / report the built-in benchmark suites
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .accel import load_config
from .bench import builtin_suites, load_report, render_report, run_suite
from .codegen import (DramLayout, build_dram_image, generate_cisc_baseline,
                      generate_trace)
from .isa import Dataflow, check_legality, parse_trace, render_trace
from .quant import make_random_problem
from .schedule import (BufferMode, ScheduleParams, Workload, enumerate_valid,
                       pad_workload)
from .sim import timed_execute
from .tuner import TuningJob, measurement_problem, tune


def _add_workload(p):
    p.add_argument("--workload", nargs=3, type=int, metavar=("M", "N", "K"),
                   required=True)


def _add_config(p):
    p.add_argument("--config", default="gemmini16_l2",
                   help="config file path or preset name (default: gemmini16_l2)")


def _workload(args) -> Workload:
    return Workload(*args.workload)


def _load_schedule(path: str) -> ScheduleParams:
    return ScheduleParams.from_dict(json.loads(Path(path).read_text()))


def cmd_enumerate(args) -> int:
    cfg = load_config(args.config)
    w = pad_workload(_workload(args), cfg)
    space = enumerate_valid(w, cfg)
    print(f"{len(space)} valid schedules for padded workload "
          f"({w.m}, {w.n}, {w.k})")
    if args.dump:
        with open(args.dump, "w") as f:
            for p in space:
                f.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")
        print(f"wrote {args.dump}")
    return 0


def cmd_codegen(args) -> int:
    cfg = load_config(args.config)
    w = _workload(args)
    problem = measurement_problem(w)
    if args.baseline:
        prog = generate_cisc_baseline(w, problem, cfg)
    else:
        if not args.schedule:
            print("codegen: --schedule FILE is required unless --baseline",
                  file=sys.stderr)
            return 2
        prog = generate_trace(w, _load_schedule(args.schedule), problem, cfg)
    violations = check_legality(prog.trace, cfg)
    if violations:
        for v in violations:
            print(f"illegal: {v}", file=sys.stderr)
        return 1
    text = render_trace(prog.trace)
    if args.emit_trace:
        Path(args.emit_trace).write_text(text)
        print(f"wrote {args.emit_trace} ({len(prog.trace)} instructions)")
    else:
        print(text, end="")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.trace:
        trace = parse_trace(Path(args.trace).read_text())
        if "workload" not in trace.metadata:
            print("simulate: trace file lacks workload metadata", file=sys.stderr)
            return 2
        m, n, k = trace.metadata["workload"]
        w = Workload(m, n, k)
    else:
        if not (args.workload and args.schedule):
            print("simulate: need --trace or (--workload and --schedule)",
                  file=sys.stderr)
            return 2
        w = _workload(args)
        prog = generate_trace(w, _load_schedule(args.schedule),
                              measurement_problem(w), cfg)
        trace = prog.trace
    rng = np.random.default_rng(args.seed)
    problem = make_random_problem(w.m, w.n, w.k, rng)
    from .codegen import DramLayout
    layout = DramLayout.from_dict(trace.metadata["layout"])
    image = build_dram_image(problem, layout)
    timeline: list | None = [] if args.timeline else None
    report = timed_execute(trace, image, cfg, timeline=timeline)
    out = report.summary()
    out["workload"] = [w.m, w.n, w.k]
    print(json.dumps(out, indent=2, sort_keys=True))
    if args.timeline:
        with open(args.timeline, "w") as f:
            f.write("index,category,issue,busy_end,complete\n")
            for row in timeline:
                f.write(",".join(str(x) for x in row) + "\n")
        print(f"wrote {args.timeline}", file=sys.stderr)
    return 0


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    job = TuningJob(workload=_workload(args), cfg=cfg, strategy=args.strategy,
                    budget=args.budget, early_stop=args.early_stop,
                    seed=args.seed, parallelism=args.parallelism)
    result = tune(job)
    if args.history:
        with open(args.history, "w") as f:
            for rec in result.history:
                f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    if args.best_out:
        Path(args.best_out).write_text(
            json.dumps(result.best.params.to_dict(), indent=2, sort_keys=True)
            + "\n")
    print(f"trials: {len(result.history)}")
    print(f"best cycles: {result.best.cycles}  gops: {result.best.gops:.3f}")
    print(json.dumps(result.best.params.to_dict(), sort_keys=True))
    return 0


def cmd_bench_run(args) -> int:
    configs = None
    if args.config:
        configs = tuple((Path(c).stem, load_config(c)) for c in args.config)
    suites = builtin_suites(configs, full=args.full,
                            max_square=args.max_size, seed=args.seed)
    if args.suite not in suites:
        print(f"unknown suite {args.suite!r}; have {sorted(suites)}",
              file=sys.stderr)
        return 2
    result = run_suite(suites[args.suite], args.out,
                       parallelism=args.parallelism,
                       progress=lambda m: print(m, file=sys.stderr))
    print(render_report(result), end="")
    return 0


def cmd_bench_report(args) -> int:
    print(render_report(load_report(args.report)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gemmtuner", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="count / dump the schedule space")
    _add_workload(p)
    _add_config(p)
    p.add_argument("--dump", help="write all points as JSON lines")
    p.set_defaults(fn=cmd_enumerate)

    p = sub.add_parser("codegen", help="lower a schedule to a trace")
    _add_workload(p)
    _add_config(p)
    p.add_argument("--schedule", help="schedule JSON file (from tune)")
    p.add_argument("--baseline", action="store_true",
                   help="emit the CISC-style baseline instead")
    p.add_argument("--emit-trace", help="output trace file")
    p.set_defaults(fn=cmd_codegen)

    p = sub.add_parser("simulate", help="run a trace on the machine model")
    _add_config(p)
    p.add_argument("--trace", help="trace file from codegen --emit-trace")
    p.add_argument("--workload", nargs=3, type=int, metavar=("M", "N", "K"))
    p.add_argument("--schedule", help="schedule JSON file")
    p.add_argument("--seed", type=int, default=0, help="operand seed")
    p.add_argument("--timeline", help="write per-instruction timing CSV")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("tune", help="search the schedule space")
    _add_workload(p)
    _add_config(p)
    p.add_argument("--strategy", default="model_guided",
                   choices=("exhaustive", "random", "model_guided"))
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--early-stop", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--history", help="write history as JSON lines")
    p.add_argument("--best-out", help="write the best schedule JSON")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("bench", help="benchmark suites")
    bsub = p.add_subparsers(dest="bench_command", required=True)
    pr = bsub.add_parser("run", help="run a suite")
    pr.add_argument("--suite", required=True)
    pr.add_argument("--config", action="append",
                    help="config file (repeatable; default: both presets)")
    pr.add_argument("--out", required=True)
    pr.add_argument("--full", action="store_true",
                    help="run the full grids (square up to 1024)")
    pr.add_argument("--max-size", type=int, default=0,
                    help="restrict the square suite to sizes <= this")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--parallelism", type=int, default=1)
    pr.set_defaults(fn=cmd_bench_run)
    pp = bsub.add_parser("report", help="render a written report")
    pp.add_argument("report", help="path to <suite>_report.json")
    pp.set_defaults(fn=cmd_bench_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
