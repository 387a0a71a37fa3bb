"""Functional and timing execution of instruction traces.

Functional execution applies each instruction's architectural semantics
in program order and returns the output matrix; it is the meaning of a
trace.  Timed execution replays the same trace on a decoupled
access-execute machine model and reports cycle counts; it never alters
semantics (hazard detection exists precisely to preserve the sequential
meaning).

The timing model:

* Three controllers (load, execute, store) own their instruction
  categories and issue them in program order, concurrently with each
  other in simulated time.
* Instructions enter a reorder-buffer window of rob_entries in program
  order and leave on completion; an instruction can only issue once all
  older instructions touching overlapping local rows have completed
  (tracked conservatively at array-row-block granularity).
* Moves occupy their controller for ceil(bytes / dma_bytes_per_cycle)
  cycles and complete dma_latency_cycles later (a pipelined DMA
  channel); back-to-back independent transfers stream at full
  bandwidth, while a dependent consumer waits out the full latency.
* A preload/compute pair costs exec_cycles_per_tile, plus
  exec_fill_cycles whenever the stationary operand changes (the weight
  tile under WS, the output patch under OS).
* A load and an execute-side read touching the same scratchpad bank at
  the same time serialize (bank_conflict_count counts these).
* Traces tagged as coming from the hardware's CISC loop FSMs
  additionally model the FSMs' load balancing: issue of a category
  pauses while it holds more than balance_threshold of the in-flight
  window and other categories still have work, except that the oldest
  unfinished instruction is never paused (the FSMs cannot starve the
  machine).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .accel import AcceleratorConfig
from .codegen import DramLayout, extract_output
from .isa import (InstructionTrace, ConfigEx, ConfigMv, MoveIn, MoveOut,
                  Preload, Compute, Fence, Flush, Dataflow, LocalAddr)
from .quant import scale_round, saturate_int8
from .schedule import Workload

BALANCE_THRESHOLD = 0.5  # in-flight share above which a category pauses


class SimulationError(RuntimeError):
    pass


class UninitializedReadError(SimulationError):
    pass


class AddressOutOfRangeError(SimulationError):
    pass


class DeadlockError(SimulationError):
    """No instruction can make progress; indicates a codegen bug."""


class NoOutputError(SimulationError):
    """The trace never wrote an output patch."""


def count_ops(w: Workload) -> int:
    """Operation count of C[M,N] = A[M,K] B[K,N] + D[M,N]:
    2*M*N*K multiply-accumulates plus M*N bias adds."""
    return 2 * w.m * w.n * w.k + w.m * w.n


def move_cost(cfg: AcceleratorConfig, nbytes: int) -> int:
    """Issue-to-data-ready cycles of a single move instruction."""
    t = cfg.timing
    return t.dma_latency_cycles + -(-nbytes // t.dma_bytes_per_cycle)


def _layout_from(trace: InstructionTrace,
                 layout: DramLayout | None) -> DramLayout | None:
    if layout is not None:
        return layout
    if "layout" in trace.metadata:
        return DramLayout.from_dict(trace.metadata["layout"])
    return None


def _workload_from(trace: InstructionTrace) -> Workload | None:
    if "workload" in trace.metadata:
        m, n, k = trace.metadata["workload"]
        return Workload(m, n, k)
    return None


# --------------------------------------------------------------------------
# Functional execution
# --------------------------------------------------------------------------

class _Machine:
    """Architectural state: banked local memories plus DRAM bytes."""

    def __init__(self, cfg: AcceleratorConfig, dram_image: np.ndarray):
        self.cfg = cfg
        self.sp = np.zeros((cfg.sp_rows(), cfg.dim), dtype=np.int8)
        self.sp_init = np.zeros(cfg.sp_rows(), dtype=bool)
        self.acc = np.zeros((cfg.acc_rows(), cfg.dim), dtype=np.int32)
        self.acc_init = np.zeros(cfg.acc_rows(), dtype=bool)
        self.dram = np.array(dram_image, dtype=np.uint8, copy=True)
        self.dataflow: Dataflow | None = None
        self.out_scale = Fraction(1)
        self.mv_stride = {"in": None, "out": None}
        self.mv_scale = {"in": Fraction(1), "out": Fraction(1)}
        self.pending: Preload | None = None
        self.wrote_output = False

    def _local(self, addr: LocalAddr):
        if addr.accumulator:
            return self.acc, self.acc_init
        return self.sp, self.sp_init

    def _check_rows(self, idx: int, addr: LocalAddr, nrows: int):
        mem, _ = self._local(addr)
        if addr.row < 0 or addr.row + nrows > mem.shape[0]:
            space = "accumulator" if addr.accumulator else "scratchpad"
            raise AddressOutOfRangeError(
                f"instr {idx}: rows [{addr.row}, {addr.row + nrows}) outside {space}")

    def _dram_rows(self, idx: int, base: int, rows: int, stride: int,
                   row_bytes: int) -> np.ndarray:
        last = base + (rows - 1) * stride + row_bytes
        if base < 0 or last > self.dram.size:
            raise AddressOutOfRangeError(
                f"instr {idx}: DRAM [{base}, {last}) outside image of "
                f"{self.dram.size} bytes")
        return base + np.arange(rows)[:, None] * stride + np.arange(row_bytes)

    def move_in(self, idx: int, instr: MoveIn):
        stride = self.mv_stride["in"]
        if stride is None:
            raise SimulationError(f"instr {idx}: move.in before config.mv dir=in")
        scale = self.mv_scale["in"]
        d = self.cfg.dim
        ew = self.cfg.acc_bits // 8 if instr.dst.accumulator else 1
        mem, init = self._local(instr.dst)
        slabs = -(-instr.cols // d)
        self._check_rows(idx, instr.dst, slabs * instr.rows)
        for j in range(slabs):
            w = min(d, instr.cols - j * d)
            offs = self._dram_rows(idx, instr.dram_addr + j * d * ew,
                                   instr.rows, stride, w * ew)
            raw = self.dram[offs]
            if instr.dst.accumulator:
                data = raw.reshape(instr.rows, w * ew).copy().view("<i4") \
                    .astype(np.int32)
            else:
                data = raw.reshape(instr.rows, w).view(np.int8)
            if scale != 1:
                scaled = scale_round(data, scale)
                data = scaled.astype(np.int32) if instr.dst.accumulator \
                    else saturate_int8(scaled)
            r0 = instr.dst.row + j * instr.rows
            mem[r0:r0 + instr.rows, :w] = data
            mem[r0:r0 + instr.rows, w:] = 0
            init[r0:r0 + instr.rows] = True

    def move_out(self, idx: int, instr: MoveOut):
        stride = self.mv_stride["out"]
        if stride is None:
            raise SimulationError(f"instr {idx}: move.out before config.mv dir=out")
        if not instr.src.accumulator:
            raise SimulationError(f"instr {idx}: move.out source must be accumulator")
        scale = self.mv_scale["out"]
        d = self.cfg.dim
        slabs = -(-instr.cols // d)
        self._check_rows(idx, instr.src, slabs * instr.rows)
        for j in range(slabs):
            w = min(d, instr.cols - j * d)
            r0 = instr.src.row + j * instr.rows
            if not self.acc_init[r0:r0 + instr.rows].all():
                raise UninitializedReadError(
                    f"instr {idx}: move.out of uninitialized accumulator rows")
            block = self.acc[r0:r0 + instr.rows, :w]
            data = saturate_int8(scale_round(block, scale)) if scale != 1 \
                else saturate_int8(block.astype(np.int64))
            offs = self._dram_rows(idx, instr.dram_addr + j * d,
                                   instr.rows, stride, w)
            self.dram[offs.reshape(instr.rows, w)] = data.view(np.uint8)
        self.wrote_output = True

    def preload(self, idx: int, instr: Preload):
        self._check_rows(idx, instr.b_addr, self.cfg.dim)
        if instr.b_addr.accumulator:
            raise SimulationError(f"instr {idx}: preload operand must be scratchpad")
        if not self.sp_init[instr.b_addr.row:instr.b_addr.row + self.cfg.dim].all():
            raise UninitializedReadError(
                f"instr {idx}: preload of uninitialized scratchpad rows")
        self.pending = instr

    def compute(self, idx: int, instr: Compute):
        if self.dataflow is None:
            raise SimulationError(f"instr {idx}: compute before config.ex")
        if self.pending is None:
            raise SimulationError(f"instr {idx}: compute without a preload")
        d = self.cfg.dim
        self._check_rows(idx, instr.a_addr, d)
        if instr.a_addr.accumulator:
            raise SimulationError(f"instr {idx}: compute operand must be scratchpad")
        if not self.sp_init[instr.a_addr.row:instr.a_addr.row + d].all():
            raise UninitializedReadError(
                f"instr {idx}: compute reads uninitialized scratchpad rows")
        a = self.sp[instr.a_addr.row:instr.a_addr.row + d].astype(np.int32)
        b = self.sp[self.pending.b_addr.row:self.pending.b_addr.row + d] \
            .astype(np.int32)
        prod = a @ b
        if instr.d_addr is not None:
            dmem, dinit = self._local(instr.d_addr)
            self._check_rows(idx, instr.d_addr, d)
            if not dinit[instr.d_addr.row:instr.d_addr.row + d].all():
                raise UninitializedReadError(
                    f"instr {idx}: compute bias rows uninitialized")
            prod = prod + dmem[instr.d_addr.row:instr.d_addr.row + d].astype(np.int32)
        if self.out_scale != 1:
            prod = scale_round(prod, self.out_scale)
        c = self.pending.c_addr
        self._check_rows(idx, c, d)
        if not c.accumulator:
            raise SimulationError(f"instr {idx}: compute target must be accumulator")
        rows = slice(c.row, c.row + d)
        if instr.accumulate:
            if not self.acc_init[rows].all():
                raise UninitializedReadError(
                    f"instr {idx}: accumulate onto uninitialized rows")
            self.acc[rows] += prod.astype(np.int32)
        else:
            self.acc[rows] = prod.astype(np.int32)
            self.acc_init[rows] = True

    def run(self, instr, idx: int):
        tp = type(instr)
        if tp is Compute:
            self.compute(idx, instr)
        elif tp is Preload:
            self.preload(idx, instr)
        elif tp is MoveIn:
            self.move_in(idx, instr)
        elif tp is MoveOut:
            self.move_out(idx, instr)
        elif tp is ConfigEx:
            self.dataflow = instr.dataflow
            self.out_scale = instr.out_scale
            self.pending = None
        elif tp is ConfigMv:
            self.mv_stride[instr.direction] = instr.stride_bytes
            self.mv_scale[instr.direction] = instr.scale
        elif tp is Fence or tp is Flush:
            pass
        else:
            raise SimulationError(f"unknown instruction {instr!r}")


def functional_execute(trace: InstructionTrace, dram_image: np.ndarray,
                       cfg: AcceleratorConfig,
                       layout: DramLayout | None = None) -> np.ndarray:
    """Run the trace's architectural semantics; return the output matrix.

    The output is the unpadded C region of the final DRAM image, per
    the layout recorded in the trace metadata (or passed explicitly for
    hand-built traces).
    """
    machine = _Machine(cfg, dram_image)
    for idx, instr in enumerate(trace.instructions):
        machine.run(instr, idx)
    if not machine.wrote_output:
        raise NoOutputError("trace wrote no output patch")
    lay = _layout_from(trace, layout)
    if lay is None:
        raise SimulationError("no DRAM layout in trace metadata or arguments")
    return extract_output(machine.dram, lay)


# --------------------------------------------------------------------------
# Timed execution
# --------------------------------------------------------------------------

@dataclass
class SimReport:
    """Result of one timed run."""

    output: np.ndarray | None
    total_cycles: int
    busy_cycles: dict
    idle_cycles: dict
    rob_stall_cycles: int
    bank_conflict_count: int
    gops: float

    def summary(self) -> dict:
        return {
            "total_cycles": self.total_cycles,
            "busy_cycles": dict(self.busy_cycles),
            "idle_cycles": dict(self.idle_cycles),
            "rob_stall_cycles": self.rob_stall_cycles,
            "bank_conflict_count": self.bank_conflict_count,
            "gops": self.gops,
        }


_LOAD, _EXEC, _STORE, _SYNC = 0, 1, 2, 3
_CAT_NAMES = ("load", "execute", "store")


class _StaticTrace:
    """Per-instruction static timing data, derived in one program-order
    scan: category, busy cycles, completion tail, cross-controller
    dependencies, and scratchpad bank masks for the conflict rule.

    Dependencies are reduced to at most one predecessor per foreign
    controller: completion order within a controller follows issue
    order (moves share an in-order DMA channel), so waiting on the
    latest conflicting instruction of each controller covers all
    earlier ones.  Row ranges are tracked at dim-row block granularity,
    which is exact for generated traces (all their accesses are
    dim-aligned) and conservative otherwise.
    """

    def __init__(self, trace: InstructionTrace, cfg: AcceleratorConfig,
                 layout: DramLayout | None):
        t = cfg.timing
        d = cfg.dim
        n = len(trace.instructions)
        self.n = n
        cat = self.cat = [0] * n
        busy = self.busy = [0] * n
        tail = self.tail = [0] * n
        # up to two cross-controller predecessors per instruction
        dep_a = self.dep_a = [-1] * n
        dep_b = self.dep_b = [-1] * n
        spmask = self.spmask = [0] * n
        self.is_fence = [False] * n

        sp_blocks = -(-cfg.sp_rows() // d)
        acc_blocks = -(-cfg.acc_rows() // d)
        # last writer / reader per (controller, block); spaces packed into
        # one block index range: sp, then acc, then DRAM regions.
        nregions = 4 if layout is not None else 1
        nblocks = sp_blocks + acc_blocks + nregions
        acc0 = sp_blocks
        dram0 = sp_blocks + acc_blocks
        lw0 = [-1] * nblocks
        lw1 = [-1] * nblocks
        lw2 = [-1] * nblocks
        lr0 = [-1] * nblocks
        lr1 = [-1] * nblocks
        lr2 = [-1] * nblocks
        last_w = (lw0, lw1, lw2)
        last_r = (lr0, lr1, lr2)
        bank_rows = cfg.sp_bank_rows

        if layout is not None:
            region_bases = (layout.c_base, layout.d_base, layout.b_base)

        def dram_region(addr: int) -> int:
            if layout is None:
                return dram0
            if addr >= region_bases[0]:
                return dram0 + 3
            if addr >= region_bases[1]:
                return dram0 + 2
            if addr >= region_bases[2]:
                return dram0 + 1
            return dram0

        def bank_mask(row: int, nrows: int) -> int:
            mask = 0
            for b in range(row // bank_rows, (row + nrows - 1) // bank_rows + 1):
                mask |= 1 << b
            return mask

        def note(i, c, reads, writes):
            # generic path for moves / configs / hand-built traces
            dep0 = dep1 = dep2 = -1
            for blk in reads:
                if lw0[blk] > dep0:
                    dep0 = lw0[blk]
                if lw1[blk] > dep1:
                    dep1 = lw1[blk]
                if lw2[blk] > dep2:
                    dep2 = lw2[blk]
            for blk in writes:
                if lw0[blk] > dep0:
                    dep0 = lw0[blk]
                if lw1[blk] > dep1:
                    dep1 = lw1[blk]
                if lw2[blk] > dep2:
                    dep2 = lw2[blk]
                if lr0[blk] > dep0:
                    dep0 = lr0[blk]
                if lr1[blk] > dep1:
                    dep1 = lr1[blk]
                if lr2[blk] > dep2:
                    dep2 = lr2[blk]
            lr = last_r[c]
            for blk in reads:
                lr[blk] = i
            lw = last_w[c]
            for blk in writes:
                lw[blk] = i
            # own-controller order is free, so at most two foreign deps
            dep = [x for k, x in enumerate((dep0, dep1, dep2))
                   if x >= 0 and k != c]
            if dep:
                dep_a[i] = dep[0]
                if len(dep) > 1:
                    dep_b[i] = dep[1]

        mv_ew_acc = cfg.acc_bits // 8
        dataflow_os = False
        pending_b_row = -1
        pending_c_blk = -1
        pending_c_row = -1
        prev_key = None
        exec_tile = t.exec_cycles_per_tile
        exec_fill = t.exec_fill_cycles
        dma_bw = t.dma_bytes_per_cycle
        dma_lat = t.dma_latency_cycles

        for i, instr in enumerate(trace.instructions):
            tp = type(instr)
            if tp is Preload:
                cat[i] = _EXEC
                b = instr.b_addr
                row = b.row
                if b.accumulator:
                    blk = acc0 + row // d
                else:
                    blk = row // d
                    b0 = row // bank_rows
                    b1 = (row + d - 1) // bank_rows
                    spmask[i] = (1 << b0) if b0 == b1 else bank_mask(row, d)
                dep0 = lw0[blk]
                dep2 = lw2[blk]
                if dep0 >= 0:
                    dep_a[i] = dep0
                    dep_b[i] = dep2
                else:
                    dep_a[i] = dep2
                lr1[blk] = i
                pending_b_row = row
                pending_c_row = instr.c_addr.row
                pending_c_blk = (acc0 + pending_c_row // d) \
                    if instr.c_addr.accumulator else pending_c_row // d
            elif tp is Compute:
                cat[i] = _EXEC
                busy[i] = exec_tile
                key = pending_c_row if dataflow_os else pending_b_row
                if prev_key is None or key != prev_key:
                    busy[i] += exec_fill
                prev_key = key
                a = instr.a_addr
                row = a.row
                if a.accumulator:
                    ablk = acc0 + row // d
                else:
                    ablk = row // d
                    b0 = row // bank_rows
                    b1 = (row + d - 1) // bank_rows
                    spmask[i] = (1 << b0) if b0 == b1 else bank_mask(row, d)
                cblk = pending_c_blk
                dep0 = lw0[ablk]
                dep2 = lw2[ablk]
                if cblk >= 0:
                    if lw0[cblk] > dep0:
                        dep0 = lw0[cblk]
                    if lw2[cblk] > dep2:
                        dep2 = lw2[cblk]
                    if lr0[cblk] > dep0:
                        dep0 = lr0[cblk]
                    if lr2[cblk] > dep2:
                        dep2 = lr2[cblk]
                if instr.d_addr is not None:
                    dblk = (acc0 + instr.d_addr.row // d) \
                        if instr.d_addr.accumulator else instr.d_addr.row // d
                    if lw0[dblk] > dep0:
                        dep0 = lw0[dblk]
                    if lw2[dblk] > dep2:
                        dep2 = lw2[dblk]
                    lr1[dblk] = i
                if dep0 >= 0:
                    dep_a[i] = dep0
                    dep_b[i] = dep2
                else:
                    dep_a[i] = dep2
                lr1[ablk] = i
                if cblk >= 0:
                    lr1[cblk] = i
                    lw1[cblk] = i
            elif tp is MoveIn:
                cat[i] = _LOAD
                dst = instr.dst
                ew = mv_ew_acc if dst.accumulator else 1
                nbytes = instr.rows * instr.cols * ew
                busy[i] = -(-nbytes // dma_bw)
                tail[i] = dma_lat
                nrows = instr.rows * (-(-instr.cols // d))
                if dst.accumulator:
                    blks = range(acc0 + dst.row // d,
                                 acc0 + (dst.row + nrows - 1) // d + 1)
                else:
                    blks = range(dst.row // d, (dst.row + nrows - 1) // d + 1)
                    spmask[i] = bank_mask(dst.row, nrows)
                note(i, _LOAD, [dram_region(instr.dram_addr)], blks)
            elif tp is MoveOut:
                cat[i] = _STORE
                nbytes = instr.rows * instr.cols
                busy[i] = -(-nbytes // dma_bw)
                tail[i] = dma_lat
                nrows = instr.rows * (-(-instr.cols // d))
                src = instr.src
                off = acc0 if src.accumulator else 0
                blks = range(off + src.row // d,
                             off + (src.row + nrows - 1) // d + 1)
                note(i, _STORE, blks, [dram_region(instr.dram_addr)])
            elif tp is ConfigEx:
                cat[i] = _EXEC
                busy[i] = t.config_cycles
                dataflow_os = instr.dataflow is Dataflow.OS
                prev_key = None
            elif tp is ConfigMv:
                cat[i] = _LOAD if instr.direction == "in" else _STORE
                busy[i] = t.config_cycles
            elif tp is Flush:
                cat[i] = _EXEC
                busy[i] = exec_fill
                prev_key = None
            elif tp is Fence:
                cat[i] = _SYNC
                self.is_fence[i] = True
            else:
                raise SimulationError(f"unknown instruction {instr!r}")

        self.queues = [[i for i in range(n) if cat[i] == c] for c in range(3)]
        self.fences = [i for i in range(n) if self.is_fence[i]]


def timed_execute(trace: InstructionTrace, dram_image: np.ndarray | None,
                  cfg: AcceleratorConfig, *,
                  layout: DramLayout | None = None,
                  with_output: bool = True,
                  balance_threshold: float = BALANCE_THRESHOLD,
                  timeline: list | None = None) -> SimReport:
    """Replay the trace on the decoupled machine model.

    with_output=False skips the (comparatively expensive) functional
    pass and allows dram_image=None; cycle counts are identical either
    way.  If `timeline` is a list, one (index, category, issue,
    busy_end, complete) tuple per instruction is appended to it.
    """
    if len(trace.instructions) == 0:
        raise NoOutputError("empty trace")
    lay = _layout_from(trace, layout)
    st = _StaticTrace(trace, cfg, lay)
    balanced = trace.generator == "cisc-baseline"
    rob = cfg.rob_entries
    n = st.n
    catL, busyL, tailL = st.cat, st.busy, st.tail
    depA, depB, maskL = st.dep_a, st.dep_b, st.spmask
    is_fence = st.is_fence
    queues = st.queues

    completed = bytearray(n)
    issue_time = [0] * n if timeline is not None else None
    complete_time = [0] * n if timeline is not None else None
    n_completed = 0
    prefix = 0                      # first not-yet-completed index
    fence_iter = iter(st.fences)
    next_fence = next(fence_iter, n)
    fetch_ptr = 0

    qpos = [0, 0, 0]
    busy_until = [0, 0, 0]
    run_mask = [0, 0, 0]            # sp banks touched by the running op
    run_idx = [-1, -1, -1]
    busy_cycles = [0, 0, 0]
    idle_accum = [0, 0, 0]
    inflight_cat = [0, 0, 0]
    remaining_cat = [len(q) for q in queues]
    paused = [False, False, False]

    rob_stall = 0
    conflicts = 0
    conflict_seen: set[tuple[int, int]] = set()
    events: list[tuple[int, int, int]] = []   # (time, seq, -cat-1 | idx)
    push = heapq.heappush
    pop = heapq.heappop
    seq = 0
    now = 0

    def complete_one(i: int):
        nonlocal n_completed, prefix, next_fence
        completed[i] = 1
        n_completed += 1
        c = catL[i]
        inflight_cat[c] -= 1
        remaining_cat[c] -= 1
        if complete_time is not None:
            complete_time[i] = now
        if i == prefix:
            # drain the completed prefix, completing fences as they
            # become oldest (a fence completes when all older are done)
            p = prefix
            while p < n and (completed[p] or (is_fence[p] and p < fetch_ptr)):
                if is_fence[p] and not completed[p]:
                    completed[p] = 1
                    n_completed += 1
                    if p == next_fence:
                        next_fence = next(fence_iter, n)
                p += 1
            prefix = p

    def fetch():
        nonlocal fetch_ptr, prefix, n_completed, next_fence
        while fetch_ptr < n and fetch_ptr - n_completed < rob:
            i = fetch_ptr
            fetch_ptr += 1
            if catL[i] == _SYNC:
                if prefix == i:
                    completed[i] = 1
                    n_completed += 1
                    prefix = i + 1
                    if i == next_fence:
                        next_fence = next(fence_iter, n)
            else:
                inflight_cat[catL[i]] += 1

    def update_pause(c: int) -> bool:
        total = inflight_cat[0] + inflight_cat[1] + inflight_cat[2]
        if total == 0:
            paused[c] = False
            return False
        others = (remaining_cat[0] > 0 and c != 0) \
            or (remaining_cat[1] > 0 and c != 1) \
            or (remaining_cat[2] > 0 and c != 2)
        share = inflight_cat[c] / total
        if paused[c]:
            if share <= balance_threshold - 1.0 / total or not others:
                paused[c] = False
        elif share > balance_threshold and others:
            paused[c] = True
        return paused[c]

    def try_issue(c: int) -> int:
        # 0 = blocked, 1 = issued (controller busy), 2 = completed inline
        nonlocal conflicts, seq
        if busy_until[c] > now:
            return 0
        q = queues[c]
        pos = qpos[c]
        if pos >= len(q):
            return 0
        i = q[pos]
        if i >= fetch_ptr:
            return 0
        if next_fence < i:
            return 0
        dep = depA[i]
        if dep >= 0:
            if not completed[dep]:
                return 0
            dep = depB[i]
            if dep >= 0 and not completed[dep]:
                return 0
        if balanced and i != prefix and update_pause(c):
            return 0
        mask = maskL[i]
        if mask and c <= 1:
            other = 1 - c  # load <-> execute; stores carry no sp mask
            if busy_until[other] > now and (run_mask[other] & mask):
                pair = (i, run_idx[other])
                if pair not in conflict_seen:
                    conflict_seen.add(pair)
                    conflicts += 1
                return 0
        dur = busyL[i]
        if issue_time is not None:
            issue_time[i] = now
        qpos[c] = pos + 1
        if dur == 0 and tailL[i] == 0:
            complete_one(i)        # zero-cost op: done at issue
            return 2
        end = now + dur
        busy_until[c] = end
        run_mask[c] = mask
        run_idx[c] = i
        busy_cycles[c] += dur
        tl = tailL[i]
        if tl:
            push(events, (end, seq, -c - 1))
            push(events, (end + tl, seq + 1, i))
            seq += 2
        else:
            push(events, (end, seq, i))
            seq += 1
        return 1

    fetch()
    while n_completed < n:
        # Issue until quiescent.  A plain issue only occupies its own
        # controller, but an inline completion (zero-cost op) can
        # unblock the others, so only completions trigger another pass.
        while True:
            unblocked = False
            for c in (0, 1, 2):
                r = try_issue(c)
                while r == 2:
                    unblocked = True
                    r = try_issue(c)
            if not unblocked:
                break
            fetch()
        if n_completed >= n:
            break
        if not events:
            raise DeadlockError(
                f"no runnable instruction at cycle {now}; "
                f"{n - n_completed} remain")
        next_time = events[0][0]
        dt = next_time - now
        if dt > 0:
            # Inter-event spans never straddle a busy end (busy ends are
            # events), so each span is fully busy or fully idle per
            # controller; idle spans whose next instruction has not
            # entered the window count as ROB stall.
            for c in range(3):
                if busy_until[c] <= now:
                    idle_accum[c] += dt
                    q = queues[c]
                    if qpos[c] < len(q) and q[qpos[c]] >= fetch_ptr:
                        rob_stall += dt
        now = next_time
        while events and events[0][0] == now:
            _, _, kind = pop(events)
            if kind < 0:
                c = -kind - 1
                if busy_until[c] <= now:
                    run_idx[c] = -1
                    run_mask[c] = 0
            else:
                i = kind
                if not completed[i]:
                    complete_one(i)
                    c = catL[i]
                    if run_idx[c] == i and busy_until[c] <= now:
                        run_idx[c] = -1
                        run_mask[c] = 0
        fetch()

    total = now
    if timeline is not None:
        for i in range(n):
            timeline.append((i, ("load", "execute", "store", "sync")[catL[i]],
                             issue_time[i], issue_time[i] + busyL[i],
                             complete_time[i]))

    output = None
    if with_output:
        if dram_image is None:
            raise SimulationError("with_output=True requires a DRAM image")
        output = functional_execute(trace, dram_image, cfg, layout=lay)

    w = _workload_from(trace)
    gops = 0.0
    if w is not None and total > 0:
        gops = count_ops(w) / (total / cfg.timing.clock_hz) / 1e9
    busy = {name: busy_cycles[c] for c, name in enumerate(_CAT_NAMES)}
    idle = {name: idle_accum[c] for c, name in enumerate(_CAT_NAMES)}
    return SimReport(output=output, total_cycles=total, busy_cycles=busy,
                     idle_cycles=idle, rob_stall_cycles=rob_stall,
                     bank_conflict_count=conflicts, gops=gops)
