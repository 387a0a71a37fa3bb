"""Search the schedule space for minimum simulated cycles.

Three strategies: exhaustive (every point, in enumeration order),
random (uniform without replacement), and model_guided (a trainable
cost surrogate proposes the most promising unmeasured candidates, with
epsilon-greedy exploration).  Every measurement lowers the schedule and
replays it on the timing model; measurements are pure, so batches can
run in parallel worker processes.  Results are deterministic for a
fixed (job, seed).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accel import AcceleratorConfig, validate_config
from .codegen import generate_trace, generate_cisc_baseline, baseline_params
from .quant import QuantizedGemmProblem, make_random_problem
from .schedule import (Workload, ScheduleParams, BufferMode, pad_workload,
                       enumerate_valid, scratchpad_footprint,
                       accumulator_footprint)
from .sim import SimReport, timed_execute, count_ops
from .isa import Dataflow

EPSILON = 0.05          # exploration rate of the guided proposer
MIN_FIT_SAMPLES = 8     # random warmup before the surrogate kicks in


@dataclass(frozen=True)
class TuningJob:
    """One tuning request.

    budget=None means no measurement cap (exhaustive visits the whole
    space).  early_stop bounds the number of consecutive non-improving
    trials after the last improvement.
    """

    workload: Workload
    cfg: AcceleratorConfig
    strategy: str = "model_guided"
    budget: int | None = None
    early_stop: int = 500
    seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.strategy not in ("exhaustive", "random", "model_guided"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.early_stop < 1:
            raise ValueError("early_stop must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class TuningRecord:
    params: ScheduleParams
    cycles: int
    gops: float
    trial_index: int
    timestamp: float = field(compare=False, default=0.0)

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "cycles": self.cycles,
                "gops": self.gops, "trial_index": self.trial_index,
                "timestamp": self.timestamp}


@dataclass
class TuneResult:
    best: TuningRecord
    history: list[TuningRecord]


def measurement_problem(w: Workload) -> QuantizedGemmProblem:
    """Deterministic synthetic operand set for a workload.

    Timing is shape-driven, so any well-formed problem serves; a fixed
    one keeps runs reproducible.
    """
    rng = np.random.default_rng([w.m, w.n, w.k, 0xC0FFEE])
    return make_random_problem(w.m, w.n, w.k, rng)


def measure(w: Workload, params: ScheduleParams, cfg: AcceleratorConfig,
            problem: QuantizedGemmProblem | None = None) -> SimReport:
    """One measurement: lower the schedule and replay it on the model."""
    q = problem if problem is not None else measurement_problem(w)
    prog = generate_trace(w, params, q, cfg)
    return timed_execute(prog.trace, None, cfg, with_output=False)


def _measure_worker(args) -> tuple[int, float]:
    w_tuple, params_dict, cfg = args
    w = Workload(*w_tuple)
    params = ScheduleParams.from_dict(params_dict)
    report = measure(w, params, cfg)
    return report.total_cycles, report.gops


def featurize(params: ScheduleParams, w: Workload,
              cfg: AcceleratorConfig) -> list[float]:
    """Fixed feature interface of the cost surrogate: log-scaled tile
    sizes, one-hot flags, and footprint utilization ratios."""
    buf_onehot = [float(params.apply_double_buffer is m) for m in BufferMode]
    df_onehot = [float(params.dataflow is d) for d in Dataflow]
    sp_ratio = scratchpad_footprint(params, cfg).total_bytes \
        / cfg.scratchpad_bytes()
    acc_ratio = accumulator_footprint(params, cfg) / cfg.accumulator_bytes()
    return [np.log2(params.tile_m1), np.log2(params.tile_n1),
            np.log2(params.tile_k1), np.log2(params.parallel_accumulations),
            *buf_onehot, float(params.exchange_axis), *df_onehot,
            float(params.mvout_big_block), sp_ratio, acc_ratio]


class _Proposer:
    """Candidate order for one strategy over a materialized space."""

    def __init__(self, job: TuningJob, space: list[ScheduleParams],
                 padded: Workload):
        self.job = job
        self.space = space
        self.padded = padded
        self.rng = np.random.default_rng(job.seed)
        self.measured: dict[int, float] = {}
        if job.strategy == "exhaustive":
            self.order = list(range(len(space)))
        elif job.strategy == "random":
            self.order = list(self.rng.permutation(len(space)))
        else:
            self.order = None
            self.features = np.array(
                [featurize(p, padded, job.cfg) for p in space])
        self.cursor = 0

    def propose(self, count: int) -> list[int]:
        if self.order is not None:
            batch = self.order[self.cursor:self.cursor + count]
            self.cursor += len(batch)
            return list(batch)
        return self._propose_guided(count)

    def _propose_guided(self, count: int) -> list[int]:
        unmeasured = [i for i in range(len(self.space)) if i not in self.measured]
        if not unmeasured:
            return []
        count = min(count, len(unmeasured))
        if len(self.measured) < MIN_FIT_SAMPLES:
            picks = self.rng.choice(len(unmeasured), size=count, replace=False)
            return [unmeasured[i] for i in picks]
        from sklearn.ensemble import GradientBoostingRegressor
        xs = self.features[list(self.measured)]
        ys = np.log2([self.measured[i] for i in self.measured])
        model = GradientBoostingRegressor(n_estimators=64, max_depth=3,
                                          random_state=self.job.seed)
        model.fit(xs, ys)
        pred = model.predict(self.features[unmeasured])
        ranked = [unmeasured[i] for i in np.argsort(pred, kind="stable")]
        batch: list[int] = []
        pool = set(unmeasured)
        rank_iter = iter(ranked)
        while len(batch) < count:
            if self.rng.random() < EPSILON:
                cand = sorted(pool - set(batch))
                pick = cand[int(self.rng.integers(len(cand)))]
            else:
                pick = next(i for i in rank_iter if i not in batch)
            if pick not in batch:
                batch.append(pick)
        return batch

    def update(self, index: int, cycles: int):
        self.measured[index] = cycles


def tune(job: TuningJob) -> TuneResult:
    """Run the search; return the best record plus the full history.

    Stops at budget exhaustion, space exhaustion, or early_stop
    consecutive non-improving trials.  Ties on cycles break toward the
    lexicographically smaller schedule.
    """
    validate_config(job.cfg)
    padded = pad_workload(job.workload, job.cfg)
    space = enumerate_valid(padded, job.cfg)
    proposer = _Proposer(job, space, padded)
    problem = measurement_problem(job.workload)

    history: list[TuningRecord] = []
    best: TuningRecord | None = None
    since_improve = 0
    budget = job.budget if job.budget is not None else len(space)
    pool = ProcessPoolExecutor(job.parallelism) if job.parallelism > 1 else None
    try:
        while len(history) < budget and since_improve < job.early_stop:
            want = min(job.parallelism, budget - len(history))
            batch = proposer.propose(want)
            if not batch:
                break
            if pool is not None:
                args = [((job.workload.m, job.workload.n, job.workload.k),
                         space[i].to_dict(), job.cfg) for i in batch]
                outcomes = list(pool.map(_measure_worker, args))
            else:
                outcomes = []
                for i in batch:
                    rep = measure(job.workload, space[i], job.cfg, problem)
                    outcomes.append((rep.total_cycles, rep.gops))
            for i, (cycles, gops) in zip(batch, outcomes):
                rec = TuningRecord(space[i], cycles, gops, len(history),
                                   timestamp=time.time())
                history.append(rec)
                proposer.update(i, cycles)
                if best is None or (cycles, rec.params.sort_key()) \
                        < (best.cycles, best.params.sort_key()):
                    best = rec
                    since_improve = 0
                else:
                    since_improve += 1
                    if since_improve >= job.early_stop:
                        break
    finally:
        if pool is not None:
            pool.shutdown()
    assert best is not None
    return TuneResult(best=best, history=history)


@dataclass
class BaselineComparison:
    tuned: TuningRecord
    tuned_history: list[TuningRecord]
    cisc: SimReport
    cisc_cycles: int
    cisc_gops: float
    baseline_schedule: ScheduleParams
    strategy: str

    @property
    def baseline_wins(self) -> bool:
        return self.cisc_cycles < self.tuned.cycles


def compare_baseline(w: Workload, cfg: AcceleratorConfig, *,
                     exhaustive_cap: int = 8192, guided_budget: int = 384,
                     early_stop: int = 500, seed: int = 0,
                     parallelism: int = 1) -> BaselineComparison:
    """Tuned-best versus the hardware's CISC-style schedule.

    Small spaces are searched exhaustively; larger ones fall back to the
    guided strategy.  Both sides run under the identical timing config
    and operand set.
    """
    padded = pad_workload(w, cfg)
    space_size = len(enumerate_valid(padded, cfg))
    if space_size <= exhaustive_cap:
        job = TuningJob(w, cfg, strategy="exhaustive", early_stop=max(
            early_stop, space_size), seed=seed, parallelism=parallelism)
    else:
        job = TuningJob(w, cfg, strategy="model_guided", budget=guided_budget,
                        early_stop=early_stop, seed=seed,
                        parallelism=parallelism)
    result = tune(job)

    problem = measurement_problem(w)
    prog = generate_cisc_baseline(w, problem, cfg)
    cisc_report = timed_execute(prog.trace, None, cfg, with_output=False)
    return BaselineComparison(
        tuned=result.best, tuned_history=result.history, cisc=cisc_report,
        cisc_cycles=cisc_report.total_cycles, cisc_gops=cisc_report.gops,
        baseline_schedule=baseline_params(w, cfg), strategy=job.strategy)
