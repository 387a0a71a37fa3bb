"""Instruction vocabulary and trace container.

Five instruction categories: configuration (ConfigEx / ConfigMv), moves
(MoveIn / MoveOut), execution (Preload / Compute), and the maintenance
pair Fence / Flush.  The hardware's CISC-style loop commands are not
instructions here; the baseline generator expands them into this same
vocabulary (see codegen) because on the real device they are FSMs that
emit these primitives.

Addresses are abstract local row indices, not bit-level encodings.  The
accumulator address space is distinguished from the scratchpad by a flag
on the address.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .accel import AcceleratorConfig


class Dataflow(enum.Enum):
    WS = "WS"  # weight stationary
    OS = "OS"  # output stationary


@dataclass(frozen=True, order=True)
class LocalAddr:
    """Row address in scratchpad (accumulator=False) or accumulator."""

    row: int
    accumulator: bool = False

    def __str__(self) -> str:
        return f"{'acc' if self.accumulator else 'sp'}:{self.row}"

    @staticmethod
    def parse(text: str) -> "LocalAddr":
        space, row = text.split(":")
        if space not in ("sp", "acc"):
            raise ValueError(f"bad address space {space!r}")
        return LocalAddr(int(row), accumulator=(space == "acc"))


def sp(row: int) -> LocalAddr:
    return LocalAddr(row, accumulator=False)


def acc(row: int) -> LocalAddr:
    return LocalAddr(row, accumulator=True)


@dataclass(frozen=True)
class ConfigEx:
    """Execution-pipeline setup: dataflow mode and array output scale."""
    dataflow: Dataflow
    out_scale: Fraction = Fraction(1)


@dataclass(frozen=True)
class ConfigMv:
    """Move-pipeline setup for one direction ('in' or 'out').

    stride_bytes is the DRAM row pitch used by subsequent moves in this
    direction; scale is applied elementwise during the move (the
    requantization ratio rides on the 'out' direction).
    """
    direction: str
    stride_bytes: int
    scale: Fraction = Fraction(1)

    def __post_init__(self):
        if self.direction not in ("in", "out"):
            raise ValueError(f"direction must be 'in' or 'out', got {self.direction!r}")


@dataclass(frozen=True)
class MoveIn:
    """Load a rows x cols patch from DRAM into local memory.

    Element width follows the destination space: input-width into the
    scratchpad, accumulator-width into the accumulator.  Column blocks
    of dim elements are stored as consecutive runs of `rows` local rows
    (block j occupies local rows dst.row + j*rows .. + rows).
    """
    dram_addr: int
    dst: LocalAddr
    rows: int
    cols: int


@dataclass(frozen=True)
class MoveOut:
    """Store a rows x cols patch from the accumulator to DRAM.

    Applies the configured output scale and narrows to input width.
    Patches larger than dim x dim require the big-move-out capability.
    """
    dram_addr: int
    src: LocalAddr
    rows: int
    cols: int


@dataclass(frozen=True)
class Preload:
    """Stage the stationary operand and name the output patch."""
    b_addr: LocalAddr
    c_addr: LocalAddr
    rows: int
    cols: int


@dataclass(frozen=True)
class Compute:
    """Dispatch one dim x dim GEMM against the staged operand."""
    a_addr: LocalAddr
    d_addr: LocalAddr | None
    rows: int
    cols: int
    accumulate: bool


@dataclass(frozen=True)
class Fence:
    pass


@dataclass(frozen=True)
class Flush:
    pass


Instruction = (ConfigEx | ConfigMv | MoveIn | MoveOut | Preload | Compute
               | Fence | Flush)

# Controller that owns each instruction in the decoupled model.
LOAD, EXECUTE, STORE, SYNC = "load", "execute", "store", "sync"


def category(instr: Instruction) -> str:
    if isinstance(instr, (MoveIn,)):
        return LOAD
    if isinstance(instr, (MoveOut,)):
        return STORE
    if isinstance(instr, (Preload, Compute, ConfigEx, Flush)):
        return EXECUTE
    if isinstance(instr, ConfigMv):
        return LOAD if instr.direction == "in" else STORE
    return SYNC  # Fence


@dataclass(frozen=True)
class InstructionTrace:
    """Ordered instruction sequence plus provenance metadata.

    metadata holds the workload, a hash of the schedule parameters, the
    generator id ("tuned" | "cisc-baseline") and the DRAM layout needed
    to execute the trace.  Traces are immutable value objects.
    """

    instructions: tuple[Instruction, ...]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.instructions)

    @property
    def generator(self) -> str:
        return self.metadata.get("generator", "tuned")


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    message: str

    def __str__(self) -> str:
        return f"[{self.index}] {self.kind}: {self.message}"


def _local_rows_used(rows: int, cols: int, dim: int) -> int:
    return rows * ((cols + dim - 1) // dim)


def check_legality(trace: InstructionTrace,
                   cfg: AcceleratorConfig) -> list[Violation]:
    """Check every instruction against the hardware description.

    Returns a (possibly empty) list of violations: move-limit breaches,
    local addresses outside the configured memories, capability flags
    (dataflow, big move-out), and configuration-before-use ordering.
    Violations are data, not exceptions.
    """
    out: list[Violation] = []
    sp_rows, acc_rows = cfg.sp_rows(), cfg.acc_rows()
    seen_config_ex = False
    seen_config_mv = {"in": False, "out": False}

    def check_addr(i, addr: LocalAddr, rows, cols, what):
        end = addr.row + _local_rows_used(rows, cols, cfg.dim)
        limit = acc_rows if addr.accumulator else sp_rows
        if addr.row < 0 or end > limit:
            space = "accumulator" if addr.accumulator else "scratchpad"
            out.append(Violation(i, "AddressOutOfRange",
                                 f"{what} rows [{addr.row}, {end}) exceed {space} "
                                 f"size {limit}"))

    def check_move_limits(i, rows, cols):
        if rows > cfg.max_mv_rows:
            out.append(Violation(i, "MoveLimitExceeded",
                                 f"rows={rows} > max_mv_rows={cfg.max_mv_rows}"))
        if cols > cfg.max_mv_cols:
            out.append(Violation(i, "MoveLimitExceeded",
                                 f"cols={cols} > max_mv_cols={cfg.max_mv_cols}"))

    for i, instr in enumerate(trace.instructions):
        if isinstance(instr, ConfigEx):
            seen_config_ex = True
            if instr.dataflow is Dataflow.WS and not cfg.supports_ws:
                out.append(Violation(i, "UnsupportedDataflow", "WS not supported"))
            if instr.dataflow is Dataflow.OS and not cfg.supports_os:
                out.append(Violation(i, "UnsupportedDataflow", "OS not supported"))
        elif isinstance(instr, ConfigMv):
            seen_config_mv[instr.direction] = True
        elif isinstance(instr, MoveIn):
            if not seen_config_mv["in"]:
                out.append(Violation(i, "ConfigBeforeUse",
                                     "move.in before any config.mv dir=in"))
            check_move_limits(i, instr.rows, instr.cols)
            check_addr(i, instr.dst, instr.rows, instr.cols, "move.in")
        elif isinstance(instr, MoveOut):
            if not seen_config_mv["out"]:
                out.append(Violation(i, "ConfigBeforeUse",
                                     "move.out before any config.mv dir=out"))
            check_move_limits(i, instr.rows, instr.cols)
            if (instr.rows > cfg.dim or instr.cols > cfg.dim) \
                    and not cfg.supports_big_mvout:
                out.append(Violation(i, "BigMvoutUnsupported",
                                     f"{instr.rows}x{instr.cols} move.out needs "
                                     "big move-out support"))
            check_addr(i, instr.src, instr.rows, instr.cols, "move.out")
        elif isinstance(instr, Preload):
            if not seen_config_ex:
                out.append(Violation(i, "ConfigBeforeUse",
                                     "preload before any config.ex"))
            check_addr(i, instr.b_addr, instr.rows, instr.cols, "preload b")
            check_addr(i, instr.c_addr, instr.rows, instr.cols, "preload c")
        elif isinstance(instr, Compute):
            if not seen_config_ex:
                out.append(Violation(i, "ConfigBeforeUse",
                                     "compute before any config.ex"))
            check_addr(i, instr.a_addr, instr.rows, instr.cols, "compute a")
            if instr.d_addr is not None:
                check_addr(i, instr.d_addr, instr.rows, instr.cols, "compute d")
    return out


# --------------------------------------------------------------------------
# Textual trace format (stable; round-trips through parse_trace)
# --------------------------------------------------------------------------

def render_instruction(instr: Instruction) -> str:
    if isinstance(instr, ConfigEx):
        return f"config.ex dataflow={instr.dataflow.value} scale={instr.out_scale}"
    if isinstance(instr, ConfigMv):
        return (f"config.mv dir={instr.direction} stride={instr.stride_bytes} "
                f"scale={instr.scale}")
    if isinstance(instr, MoveIn):
        return (f"move.in dram={instr.dram_addr} dst={instr.dst} "
                f"rows={instr.rows} cols={instr.cols}")
    if isinstance(instr, MoveOut):
        return (f"move.out dram={instr.dram_addr} src={instr.src} "
                f"rows={instr.rows} cols={instr.cols}")
    if isinstance(instr, Preload):
        return (f"preload b={instr.b_addr} c={instr.c_addr} "
                f"rows={instr.rows} cols={instr.cols}")
    if isinstance(instr, Compute):
        d = str(instr.d_addr) if instr.d_addr is not None else "-"
        return (f"compute a={instr.a_addr} d={d} rows={instr.rows} "
                f"cols={instr.cols} acc={int(instr.accumulate)}")
    if isinstance(instr, Fence):
        return "fence"
    if isinstance(instr, Flush):
        return "flush"
    raise TypeError(f"unknown instruction {instr!r}")


def render_trace(trace: InstructionTrace) -> str:
    """One line per instruction; metadata as a leading comment."""
    lines = []
    if trace.metadata:
        lines.append("# meta " + json.dumps(trace.metadata, sort_keys=True))
    lines.extend(render_instruction(i) for i in trace.instructions)
    return "\n".join(lines) + ("\n" if lines else "")


def _fields(parts: list[str]) -> dict[str, str]:
    return dict(p.split("=", 1) for p in parts)


def parse_instruction(line: str) -> Instruction:
    parts = line.split()
    op, kw = parts[0], _fields(parts[1:])
    if op == "config.ex":
        return ConfigEx(Dataflow(kw["dataflow"]), Fraction(kw["scale"]))
    if op == "config.mv":
        return ConfigMv(kw["dir"], int(kw["stride"]), Fraction(kw["scale"]))
    if op == "move.in":
        return MoveIn(int(kw["dram"]), LocalAddr.parse(kw["dst"]),
                      int(kw["rows"]), int(kw["cols"]))
    if op == "move.out":
        return MoveOut(int(kw["dram"]), LocalAddr.parse(kw["src"]),
                       int(kw["rows"]), int(kw["cols"]))
    if op == "preload":
        return Preload(LocalAddr.parse(kw["b"]), LocalAddr.parse(kw["c"]),
                       int(kw["rows"]), int(kw["cols"]))
    if op == "compute":
        d = None if kw["d"] == "-" else LocalAddr.parse(kw["d"])
        return Compute(LocalAddr.parse(kw["a"]), d, int(kw["rows"]),
                       int(kw["cols"]), bool(int(kw["acc"])))
    if op == "fence":
        return Fence()
    if op == "flush":
        return Flush()
    raise ValueError(f"unknown instruction line {line!r}")


def parse_trace(text: str) -> InstructionTrace:
    """Inverse of render_trace."""
    metadata: dict = {}
    instrs = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("# meta "):
            metadata = json.loads(line[len("# meta "):])
            continue
        if line.startswith("#"):
            continue
        instrs.append(parse_instruction(line))
    return InstructionTrace(tuple(instrs), metadata)
