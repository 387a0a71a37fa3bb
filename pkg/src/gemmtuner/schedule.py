"""Schedule parameter space: definition, validity pruning, enumeration.

A schedule fixes the two-level tiling of the GEMM loop nest plus the
orthogonal knobs: how many output tiles accumulate in place before
being drained, which move-in operands are double buffered, whether the
two output axes are walked N-major, the array dataflow, and whether
move-outs are coalesced into one big block per output tile.

Enumeration yields only hardware-valid points.  Three families of
points are pruned: moves that exceed the per-instruction row/column
limits, tilings whose working set cannot be placed in the scratchpad or
accumulator (with conflict-free banking for double-buffered copies),
and inner tiles that would underutilize the systolic array (the second
tiling level is pinned to the array dimension).
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
from dataclasses import dataclass, asdict

from .accel import AcceleratorConfig
from .isa import Dataflow


class EmptySpaceError(RuntimeError):
    """No valid schedule exists for the workload under this config."""


class UnsatisfiableError(RuntimeError):
    """No conflict-free bank assignment exists for the requested tiles."""


@dataclass(frozen=True, order=True)
class Workload:
    """GEMM dimensions for C[M,N] = A[M,K] @ B[K,N] + D[M,N]."""

    m: int
    n: int
    k: int

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ValueError(f"workload dimensions must be >= 1, got {self}")


class BufferMode(enum.Enum):
    """Which move-in operands get a second (alternate-bank) copy."""

    NONE = "none"
    A_ONLY = "a_only"
    B_ONLY = "b_only"
    BOTH = "both"

    @property
    def a(self) -> bool:
        return self in (BufferMode.A_ONLY, BufferMode.BOTH)

    @property
    def b(self) -> bool:
        return self in (BufferMode.B_ONLY, BufferMode.BOTH)


_BUFFER_ORDER = {m: i for i, m in enumerate(BufferMode)}
_DATAFLOW_ORDER = {Dataflow.WS: 0, Dataflow.OS: 1}


@dataclass(frozen=True)
class ScheduleParams:
    """One point of the schedule search space.

    tile_*1 are the level-1 tile extents (elements moved per scratchpad
    load); tile_*2 the level-2 extents (per systolic-array dispatch),
    pinned to dim for full array utilization.
    """

    tile_m1: int
    tile_n1: int
    tile_k1: int
    tile_m2: int
    tile_n2: int
    tile_k2: int
    parallel_accumulations: int
    apply_double_buffer: BufferMode
    exchange_axis: bool
    dataflow: Dataflow
    mvout_big_block: bool

    def sort_key(self):
        return (self.tile_m1, self.tile_n1, self.tile_k1,
                self.tile_m2, self.tile_n2, self.tile_k2,
                self.parallel_accumulations,
                _BUFFER_ORDER[self.apply_double_buffer],
                self.exchange_axis,
                _DATAFLOW_ORDER[self.dataflow],
                self.mvout_big_block)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["apply_double_buffer"] = self.apply_double_buffer.value
        d["dataflow"] = self.dataflow.value
        return d

    @staticmethod
    def from_dict(d: dict) -> "ScheduleParams":
        d = dict(d)
        d["apply_double_buffer"] = BufferMode(d["apply_double_buffer"])
        d["dataflow"] = Dataflow(d["dataflow"])
        return ScheduleParams(**d)

    def digest(self) -> str:
        """Stable short hash for trace metadata."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


def pad_workload(w: Workload, cfg: AcceleratorConfig) -> Workload:
    """Round each dimension up to the nearest multiple of dim.

    Padding elements are zeros downstream, so padded results restricted
    to the original region are unchanged.
    """
    d = cfg.dim
    up = lambda x: ((x + d - 1) // d) * d
    return Workload(up(w.m), up(w.n), up(w.k))


@dataclass(frozen=True)
class ScratchpadPlan:
    """Bytes per buffering slot plus the bank-aware row assignment.

    bytes_a / bytes_b are per copy; total_bytes counts every copy.
    slots maps slot name ('a0', 'a1', 'b0', 'b1') to its base row in
    the flat scratchpad row space.
    """

    bytes_a: int
    bytes_b: int
    total_bytes: int
    slots: dict
    rows_a: int
    rows_b: int


def scratchpad_footprint(p: ScheduleParams,
                         cfg: AcceleratorConfig) -> ScratchpadPlan:
    """Place the A/B tile copies in scratchpad rows.

    Double-buffered copies of the same operand must land in disjoint
    banks (so prefetch never touches the banks the array is reading);
    the allocator walks the row space first-fit and bumps a copy to the
    next bank boundary when it would share a bank with its twin.
    Raises UnsatisfiableError when the copies cannot be placed.
    """
    row_bytes = cfg.sp_row_bytes()
    rows_a = p.tile_m1 * p.tile_k1 // cfg.dim
    rows_b = p.tile_k1 * p.tile_n1 // cfg.dim
    bytes_a = rows_a * row_bytes
    bytes_b = rows_b * row_bytes
    db = p.apply_double_buffer
    items = [("a0", rows_a)]
    if db.a:
        items.append(("a1", rows_a))
    items.append(("b0", rows_b))
    if db.b:
        items.append(("b1", rows_b))

    bank_rows = cfg.sp_bank_rows
    slots: dict[str, int] = {}
    cursor = 0
    for name, rows in items:
        if name in ("a1", "b1"):
            twin = slots[name[0] + "0"]
            twin_last_bank = (twin + rows - 1) // bank_rows
            if cursor // bank_rows <= twin_last_bank:
                cursor = (twin_last_bank + 1) * bank_rows
        slots[name] = cursor
        cursor += rows
    if cursor > cfg.sp_rows():
        total = bytes_a * (2 if db.a else 1) + bytes_b * (2 if db.b else 1)
        raise UnsatisfiableError(
            f"tiles need {cursor} rows ({total} B with buffering) but the "
            f"scratchpad has {cfg.sp_rows()} rows ({cfg.scratchpad_bytes()} B)")
    total = bytes_a * (2 if db.a else 1) + bytes_b * (2 if db.b else 1)
    return ScratchpadPlan(bytes_a, bytes_b, total, slots, rows_a, rows_b)


def accumulator_footprint(p: ScheduleParams, cfg: AcceleratorConfig) -> int:
    """Accumulator bytes held live by the schedule.

    parallel_accumulations output tiles are resident at once; the bias
    tile is the initial content of each resident output tile, so it
    occupies no extra rows.
    """
    return (p.parallel_accumulations * p.tile_m1 * p.tile_n1
            * cfg.acc_bits // 8)


@dataclass(frozen=True)
class Validity:
    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def _output_tiles(p: ScheduleParams, w: Workload) -> int:
    return (w.m // p.tile_m1) * (w.n // p.tile_n1)


def is_valid(p: ScheduleParams, w: Workload,
             cfg: AcceleratorConfig) -> Validity:
    """Decide whether a schedule point is generatable on the hardware.

    Expects w already padded to dim multiples.  Checks, in order:
    divisibility of the two tiling levels, full-array inner tiles,
    scratchpad fit with conflict-free banking, accumulator fit, the
    per-instruction move limits of every implied move, and capability
    flags.  parallel_accumulations must also not exceed the number of
    output tiles (accumulating more slots than exist is meaningless and
    would only duplicate schedules).
    """
    d = cfg.dim
    for name, t1, t2, full in (("m", p.tile_m1, p.tile_m2, w.m),
                               ("n", p.tile_n1, p.tile_n2, w.n),
                               ("k", p.tile_k1, p.tile_k2, w.k)):
        if t2 < 1 or t1 < 1:
            return Validity(False, f"DivisibilityViolated: tile_{name} not positive")
        if t1 % t2 != 0:
            return Validity(False,
                            f"DivisibilityViolated: tile_{name}2={t2} does not "
                            f"divide tile_{name}1={t1}")
        if full % t1 != 0:
            return Validity(False,
                            f"DivisibilityViolated: tile_{name}1={t1} does not "
                            f"divide padded {name}={full}")
    if not (p.tile_m2 == p.tile_n2 == p.tile_k2 == d):
        return Validity(False,
                        f"ArrayUnderutilized: level-2 tiles "
                        f"({p.tile_m2},{p.tile_n2},{p.tile_k2}) != dim={d}")
    try:
        scratchpad_footprint(p, cfg)
    except UnsatisfiableError as e:
        data = (p.tile_m1 * p.tile_k1 + p.tile_k1 * p.tile_n1) \
            * (2 if p.apply_double_buffer is BufferMode.BOTH else 1)
        kind = "ScratchpadOverflow" if data > cfg.scratchpad_bytes() \
            else "BankingUnsatisfiable"
        return Validity(False, f"{kind}: {e}")
    if accumulator_footprint(p, cfg) > cfg.accumulator_bytes():
        return Validity(False,
                        f"AccumulatorOverflow: {accumulator_footprint(p, cfg)} B "
                        f"> {cfg.accumulator_bytes()} B")
    # Every implied move: A' (m1 x k1), B' (k1 x n1), D' (m1 x n1) in;
    # C' out per dim-patch, or m1 x n1 when big-block move-out is on.
    moves = [("A'", p.tile_m1, p.tile_k1), ("B'", p.tile_k1, p.tile_n1),
             ("D'", p.tile_m1, p.tile_n1)]
    if p.mvout_big_block:
        moves.append(("C'", p.tile_m1, p.tile_n1))
    for name, rows, cols in moves:
        if rows > cfg.max_mv_rows or cols > cfg.max_mv_cols:
            return Validity(False,
                            f"MoveLimitExceeded: {name} move is {rows}x{cols}, "
                            f"limits {cfg.max_mv_rows}x{cfg.max_mv_cols}")
    if p.parallel_accumulations < 1:
        return Validity(False, "ParallelAccumInvalid: must be >= 1")
    if p.parallel_accumulations > _output_tiles(p, w):
        return Validity(False,
                        f"ParallelAccumExceedsTiles: {p.parallel_accumulations} "
                        f"> {_output_tiles(p, w)} output tiles")
    if p.dataflow is Dataflow.WS and not cfg.supports_ws:
        return Validity(False, "UnsupportedDataflow: WS")
    if p.dataflow is Dataflow.OS and not cfg.supports_os:
        return Validity(False, "UnsupportedDataflow: OS")
    if p.mvout_big_block and not cfg.supports_big_mvout:
        return Validity(False, "BigMvoutUnsupported")
    return Validity(True)


def tile_candidates(padded_dim: int, cfg: AcceleratorConfig) -> list[int]:
    """Level-1 tile sizes for one axis: multiples of dim dividing the
    padded extent."""
    d = cfg.dim
    return [t for t in range(d, padded_dim + 1, d) if padded_dim % t == 0]


def parallel_candidates(cfg: AcceleratorConfig) -> list[int]:
    """Powers of two up to the accumulator capacity bound.

    The bound is the capacity in minimal (dim x dim) output tiles;
    larger tiles restrict p further, which is_valid enforces.
    """
    bound = max(1, cfg.accumulator_bytes() // (cfg.dim * cfg.dim * cfg.acc_bits // 8))
    out = []
    p = 1
    while p <= bound:
        out.append(p)
        p *= 2
    return out


def supported_dataflows(cfg: AcceleratorConfig) -> list[Dataflow]:
    out = []
    if cfg.supports_ws:
        out.append(Dataflow.WS)
    if cfg.supports_os:
        out.append(Dataflow.OS)
    return out


def candidate_grid(w: Workload, cfg: AcceleratorConfig):
    """The raw cross product that enumeration filters (w padded)."""
    mvout_opts = [False, True] if cfg.supports_big_mvout else [False]
    return itertools.product(
        tile_candidates(w.m, cfg),
        tile_candidates(w.n, cfg),
        tile_candidates(w.k, cfg),
        parallel_candidates(cfg),
        list(BufferMode),
        [False, True],
        supported_dataflows(cfg),
        mvout_opts,
    )


def enumerate_valid(w: Workload, cfg: AcceleratorConfig) -> list[ScheduleParams]:
    """All valid schedule points, in deterministic lexicographic order.

    The universe is divisor-aligned level-1 tiles x power-of-two
    parallel accumulation x the four buffering modes x both axis orders
    x the supported dataflows x the move-out flag; is_valid filters it.
    Raises EmptySpaceError when nothing survives (cannot happen for
    dim-multiple workloads: the minimal all-dim tiling is always valid).
    """
    d = cfg.dim
    out = []
    for m1, n1, k1, pa, buf, ex, df, mv in candidate_grid(w, cfg):
        p = ScheduleParams(
            tile_m1=m1, tile_n1=n1, tile_k1=k1,
            tile_m2=d, tile_n2=d, tile_k2=d,
            parallel_accumulations=pa, apply_double_buffer=buf,
            exchange_axis=ex, dataflow=df, mvout_big_block=mv)
        if is_valid(p, w, cfg):
            out.append(p)
    if not out:
        raise EmptySpaceError(f"no valid schedule for {w}")
    out.sort(key=ScheduleParams.sort_key)
    return out
