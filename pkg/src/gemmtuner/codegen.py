"""Lowering of (workload, schedule, problem) to an instruction trace.

The generated program walks the classic two-level tiled loop nest:

    config
    for each output tile (outer M x outer N, optionally N-major):
        move.in D' (corrected bias, straight into the accumulator)
        for each outer K step:
            move.in A', move.in B'
            for inner (M, N, K) sub-tiles: preload + compute
        move.out the finished patches (optionally deferred across
        several output tiles, optionally coalesced into one big block)

Double buffering turns the A'/B' move of step t+1 into a prefetch
emitted ahead of step t's compute block, targeting the alternate bank
set; the first step necessarily issues a blocking move.  Configuration
is emitted once per program (one program = one operator); a debug flag
re-emits it per output tile to expose the cost of naive reconfiguration.

DRAM layout: the four regions (A, B, corrected bias, C) share one row
pitch so a single stride configuration per direction covers every move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .accel import AcceleratorConfig
from .isa import (Dataflow, InstructionTrace, Instruction, ConfigEx, ConfigMv,
                  MoveIn, MoveOut, Preload, Compute, Fence, sp, acc)
from .quant import QuantizedGemmProblem, ShapeMismatchError, fold_corrected_bias
from .schedule import (Workload, ScheduleParams, BufferMode, pad_workload,
                       is_valid, scratchpad_footprint, tile_candidates)


class InvalidScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class DramLayout:
    """Byte addresses of the operand regions in simulated DRAM.

    All regions use the same row pitch (pitch_bytes), sized for the
    widest row among A (K int8), B (N int8), bias (N int32), C (N int8).
    """

    workload: tuple[int, int, int]        # original (M, N, K)
    padded: tuple[int, int, int]          # dim-aligned (Mp, Np, Kp)
    pitch_bytes: int
    a_base: int
    b_base: int
    d_base: int
    c_base: int
    total_bytes: int

    def to_dict(self) -> dict:
        return {"workload": list(self.workload), "padded": list(self.padded),
                "pitch_bytes": self.pitch_bytes, "a_base": self.a_base,
                "b_base": self.b_base, "d_base": self.d_base,
                "c_base": self.c_base, "total_bytes": self.total_bytes}

    @staticmethod
    def from_dict(d: dict) -> "DramLayout":
        return DramLayout(tuple(d["workload"]), tuple(d["padded"]),
                          d["pitch_bytes"], d["a_base"], d["b_base"],
                          d["d_base"], d["c_base"], d["total_bytes"])


def make_layout(w: Workload, cfg: AcceleratorConfig) -> DramLayout:
    pw = pad_workload(w, cfg)
    acc_width = cfg.acc_bits // 8
    pitch = max(pw.k, pw.n, pw.n * acc_width)
    a_size = pw.m * pitch
    b_size = pw.k * pitch
    d_size = pw.m * pitch
    c_size = pw.m * pitch
    a_base = 0
    b_base = a_base + a_size
    d_base = b_base + b_size
    c_base = d_base + d_size
    return DramLayout((w.m, w.n, w.k), (pw.m, pw.n, pw.k), pitch,
                      a_base, b_base, d_base, c_base, c_base + c_size)


@dataclass(frozen=True)
class LoweredProgram:
    trace: InstructionTrace
    dram_layout: DramLayout
    expected_moves: dict  # instruction category -> count, from loop arithmetic


def _check_problem(w: Workload, q: QuantizedGemmProblem):
    if q.shape != (w.m, w.n, w.k):
        raise ShapeMismatchError(
            f"problem shape {q.shape} does not match workload "
            f"({w.m}, {w.n}, {w.k})")


def generate_trace(w: Workload, p: ScheduleParams, q: QuantizedGemmProblem,
                   cfg: AcceleratorConfig, *,
                   reemit_config_per_tile: bool = False,
                   generator: str = "tuned") -> LoweredProgram:
    """Lower one GEMM under the given schedule point.

    Preconditions: p must be valid for the padded workload and q's
    shapes must match w.  The emitted trace always passes legality
    checking against cfg.
    """
    _check_problem(w, q)
    pw = pad_workload(w, cfg)
    v = is_valid(p, pw, cfg)
    if not v:
        raise InvalidScheduleError(v.reason)

    d = cfg.dim
    m1, n1, k1 = p.tile_m1, p.tile_n1, p.tile_k1
    nm_o, nn_o, nk_o = pw.m // m1, pw.n // n1, pw.k // k1
    nm_i, nn_i, nk_i = m1 // d, n1 // d, k1 // d

    plan = scratchpad_footprint(p, cfg)
    layout = make_layout(w, cfg)
    pitch = layout.pitch_bytes
    acc_width = cfg.acc_bits // 8
    scale = q.scale_ratio
    _block_cache: dict[tuple, tuple] = {}

    # Output tiles in walk order; each expands into nk_o load/compute steps.
    if p.exchange_axis:
        tiles = [(i_o, j_o) for j_o in range(nn_o) for i_o in range(nm_o)]
    else:
        tiles = [(i_o, j_o) for i_o in range(nm_o) for j_o in range(nn_o)]
    steps = [(ti, i_o, j_o, k_o)
             for ti, (i_o, j_o) in enumerate(tiles) for k_o in range(nk_o)]

    group = p.parallel_accumulations
    tile_acc_rows = m1 * n1 // d

    def acc_slot(ti: int) -> int:
        return (ti % group) * tile_acc_rows

    def a_move(step_idx: int) -> MoveIn:
        _, i_o, _, k_o = steps[step_idx]
        phase = step_idx % 2 if p.apply_double_buffer.a else 0
        base = plan.slots["a1"] if phase else plan.slots["a0"]
        dram = layout.a_base + (i_o * m1) * pitch + k_o * k1
        return MoveIn(dram, sp(base), m1, k1)

    def b_move(step_idx: int) -> MoveIn:
        _, _, j_o, k_o = steps[step_idx]
        phase = step_idx % 2 if p.apply_double_buffer.b else 0
        base = plan.slots["b1"] if phase else plan.slots["b0"]
        dram = layout.b_base + (k_o * k1) * pitch + j_o * n1
        return MoveIn(dram, sp(base), k1, n1)

    def tile_moveouts(ti: int) -> list[Instruction]:
        i_o, j_o = tiles[ti]
        slot = acc_slot(ti)
        if p.mvout_big_block:
            dram = layout.c_base + (i_o * m1) * pitch + j_o * n1
            return [MoveOut(dram, acc(slot), m1, n1)]
        out = []
        for i_i in range(nm_i):
            for j_i in range(nn_i):
                dram = layout.c_base + (i_o * m1 + i_i * d) * pitch \
                    + j_o * n1 + j_i * d
                out.append(MoveOut(dram, acc(slot + j_i * m1 + i_i * d), d, d))
        return out

    config_block: list[Instruction] = [
        ConfigEx(p.dataflow, Fraction(1)),
        ConfigMv("in", pitch, Fraction(1)),
        ConfigMv("out", pitch, scale),
    ]

    instrs: list[Instruction] = []
    if not reemit_config_per_tile:
        instrs.extend(config_block)

    for t, (ti, i_o, j_o, k_o) in enumerate(steps):
        if k_o == 0:
            if reemit_config_per_tile:
                instrs.extend(config_block)
            dram = layout.d_base + (i_o * m1) * pitch + (j_o * n1) * acc_width
            instrs.append(MoveIn(dram, acc(acc_slot(ti)), m1, n1))
        # Moves for this step (double-buffered operands were prefetched,
        # except at t=0 where there is nothing to overlap with).
        if not p.apply_double_buffer.a or t == 0:
            instrs.append(a_move(t))
        if not p.apply_double_buffer.b or t == 0:
            instrs.append(b_move(t))
        # Prefetch the next step's operands into the alternate slots.
        if t + 1 < len(steps):
            if p.apply_double_buffer.a:
                instrs.append(a_move(t + 1))
            if p.apply_double_buffer.b:
                instrs.append(b_move(t + 1))

        a_base_row = plan.slots["a1"] \
            if (p.apply_double_buffer.a and t % 2) else plan.slots["a0"]
        b_base_row = plan.slots["b1"] \
            if (p.apply_double_buffer.b and t % 2) else plan.slots["b0"]
        slot = acc_slot(ti)
        # Inner blocks repeat across steps (only the slot bases vary), and
        # the instructions are immutable values, so build each distinct
        # block once and reuse it.
        block_key = (a_base_row, b_base_row, slot)
        block = _block_cache.get(block_key)
        if block is None:
            block = []
            for i_i in range(nm_i):
                for j_i in range(nn_i):
                    for k_i in range(nk_i):
                        block.append(Preload(sp(b_base_row + j_i * k1 + k_i * d),
                                             acc(slot + j_i * m1 + i_i * d), d, d))
                        block.append(Compute(sp(a_base_row + k_i * m1 + i_i * d),
                                             None, d, d, accumulate=True))
            block = tuple(block)
            _block_cache[block_key] = block
        instrs.extend(block)

        if k_o == nk_o - 1:
            # Tile ti is complete; drain once the deferral group fills
            # (or at the very end for a trailing partial group).
            last_tile = ti == len(tiles) - 1
            if (ti + 1) % group == 0 or last_tile:
                first = ti - (ti % group)
                for tj in range(first, ti + 1):
                    instrs.extend(tile_moveouts(tj))
    instrs.append(Fence())

    n_tiles = nm_o * nn_o
    n_steps = len(steps)
    expected = {
        "config_ex": n_tiles if reemit_config_per_tile else 1,
        "config_mv": 2 * (n_tiles if reemit_config_per_tile else 1),
        "move_in": n_tiles + 2 * n_steps,
        "preload": n_steps * nm_i * nn_i * nk_i,
        "compute": n_steps * nm_i * nn_i * nk_i,
        "move_out": n_tiles * (1 if p.mvout_big_block else nm_i * nn_i),
        "fence": 1,
    }
    metadata = {
        "workload": [w.m, w.n, w.k],
        "padded": [pw.m, pw.n, pw.k],
        "params": p.to_dict(),
        "params_digest": p.digest(),
        "generator": generator,
        "layout": layout.to_dict(),
    }
    trace = InstructionTrace(tuple(instrs), metadata)
    return LoweredProgram(trace, layout, expected)


def baseline_params(w: Workload, cfg: AcceleratorConfig) -> ScheduleParams:
    """The fixed tiling the hardware's loop FSMs would expand.

    Grows a common tile target T and caps each axis to its largest
    divisor-aligned tile below T; keeps the largest T whose tiling is
    valid with both operands double buffered and each operand's two
    copies within half the scratchpad.  Parallel accumulation then
    fills the accumulator (largest power of two that fits, bounded by
    the number of output tiles).
    """
    pw = pad_workload(w, cfg)
    cands = {ax: tile_candidates(getattr(pw, ax), cfg) for ax in "mnk"}
    half = cfg.scratchpad_bytes() // 2
    in_width = cfg.input_bits // 8
    dataflow = Dataflow.WS if cfg.supports_ws else Dataflow.OS

    chosen = None
    for target in range(max(pw.m, pw.n, pw.k), cfg.dim - 1, -cfg.dim):
        m1 = max(t for t in cands["m"] if t <= target)
        n1 = max(t for t in cands["n"] if t <= target)
        k1 = max(t for t in cands["k"] if t <= target)
        p = ScheduleParams(
            tile_m1=m1, tile_n1=n1, tile_k1=k1,
            tile_m2=cfg.dim, tile_n2=cfg.dim, tile_k2=cfg.dim,
            parallel_accumulations=1, apply_double_buffer=BufferMode.BOTH,
            exchange_axis=False, dataflow=dataflow, mvout_big_block=False)
        if not is_valid(p, pw, cfg):
            continue
        if 2 * m1 * k1 * in_width > half or 2 * k1 * n1 * in_width > half:
            continue
        chosen = p
        break
    if chosen is None:
        raise InvalidScheduleError(f"no baseline tiling for {w}")

    n_tiles = (pw.m // chosen.tile_m1) * (pw.n // chosen.tile_n1)
    cap = cfg.accumulator_bytes() // (chosen.tile_m1 * chosen.tile_n1
                                      * cfg.acc_bits // 8)
    pa = 1
    while pa * 2 <= min(cap, n_tiles):
        pa *= 2
    return replace(chosen, parallel_accumulations=pa)


def generate_cisc_baseline(w: Workload, q: QuantizedGemmProblem,
                           cfg: AcceleratorConfig) -> LoweredProgram:
    """Expand the hardware-FSM-style schedule into the low-level
    vocabulary.

    The trace is tagged so the simulator applies the load-balanced
    issue the FSMs implement (see the timing model).
    """
    return generate_trace(w, baseline_params(w, cfg), q, cfg,
                          generator="cisc-baseline")


# --------------------------------------------------------------------------
# DRAM images
# --------------------------------------------------------------------------

def build_dram_image(q: QuantizedGemmProblem, layout: DramLayout) -> np.ndarray:
    """Operands at their region addresses, zero-padded to dim multiples.

    The bias region holds the *corrected* bias (fold_corrected_bias):
    the raw GEMM the trace performs plus this bias plus the move-out
    scale is the whole quantized operator.
    """
    m, n, k = layout.workload
    mp, np_, kp = layout.padded
    if q.shape != (m, n, k):
        raise ShapeMismatchError(f"problem {q.shape} vs layout {(m, n, k)}")
    pitch = layout.pitch_bytes
    img = np.zeros(layout.total_bytes, dtype=np.uint8)

    a_pad = np.zeros((mp, kp), dtype=np.int8)
    a_pad[:m, :k] = q.q_a
    img[layout.a_base:layout.a_base + mp * pitch] \
        .reshape(mp, pitch)[:, :kp] = a_pad.view(np.uint8)

    b_pad = np.zeros((kp, np_), dtype=np.int8)
    b_pad[:k, :n] = q.q_b
    img[layout.b_base:layout.b_base + kp * pitch] \
        .reshape(kp, pitch)[:, :np_] = b_pad.view(np.uint8)

    d_pad = np.zeros((mp, np_), dtype="<i4")
    d_pad[:m, :n] = fold_corrected_bias(q)
    img[layout.d_base:layout.d_base + mp * pitch] \
        .reshape(mp, pitch)[:, :np_ * 4] = d_pad.view(np.uint8).reshape(mp, np_ * 4)
    return img


def extract_output(img: np.ndarray, layout: DramLayout) -> np.ndarray:
    """Read back the unpadded int8 C matrix from the image."""
    m, n, _ = layout.workload
    mp, np_, _ = layout.padded
    pitch = layout.pitch_bytes
    region = img[layout.c_base:layout.c_base + mp * pitch].reshape(mp, pitch)
    return region[:, :np_].view(np.int8)[:m, :n].copy()
