"""Static hardware description of the modeled accelerator.

Everything downstream (schedule pruning, code generation, simulation)
validates against an :class:`AcceleratorConfig`.  The config is a plain
immutable dataclass; the derived capacity arithmetic lives here so the
numbers are computed in exactly one place.

The shipped presets model a 16x16 Gemmini-style accelerator with a
256 KB scratchpad (4 banks x 4096 rows) and a 64 KB accumulator
(1 bank x 1024 rows), in two variants that differ only in the memory
path parameters (with / without an L2 cache in front of DRAM).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
import configparser


@dataclass(frozen=True)
class TimingParams:
    """Parameters of the timing model (not of the functional semantics).

    The memory path is modeled as a pipelined DMA channel: a transfer
    occupies its controller for ceil(bytes / dma_bytes_per_cycle) cycles
    and its data becomes architecturally visible dma_latency_cycles
    later.  A dim x dim tile GEMM costs exec_cycles_per_tile once the
    stationary operand is loaded, plus exec_fill_cycles whenever the
    stationary operand changes.
    """

    clock_hz: float = 100e6
    dma_bytes_per_cycle: int = 32
    dma_latency_cycles: int = 40
    exec_fill_cycles: int = 16
    # dim + 1: one drain bubble per dispatched tile.  Keeping this >= dim+1
    # guarantees no simulated rate can exceed the theoretical peak.
    exec_cycles_per_tile: int = 17
    config_cycles: int = 10
    l2_enabled: bool = True


@dataclass(frozen=True)
class AcceleratorConfig:
    """Dimensions and capacities of the modeled accelerator.

    dim:            systolic array is dim x dim MAC units.
    input_bits:     width of inputs/weights (scratchpad elements).
    acc_bits:       width of accumulator elements.
    sp_banks/rows:  scratchpad geometry; each row holds dim input elements.
    acc_banks/rows: accumulator geometry; each row holds dim acc elements.
    max_mv_rows/cols: per-instruction move limits.
    rob_entries:    reorder-buffer capacity (in-flight instruction window).
    """

    dim: int = 16
    input_bits: int = 8
    acc_bits: int = 32
    sp_banks: int = 4
    sp_bank_rows: int = 4096
    acc_banks: int = 1
    acc_bank_rows: int = 1024
    max_mv_rows: int = 256
    max_mv_cols: int = 256
    rob_entries: int = 16
    supports_ws: bool = True
    supports_os: bool = True
    supports_big_mvout: bool = True
    timing: TimingParams = field(default_factory=TimingParams)

    def scratchpad_bytes(self) -> int:
        return self.sp_banks * self.sp_bank_rows * self.dim * self.input_bits // 8

    def accumulator_bytes(self) -> int:
        return self.acc_banks * self.acc_bank_rows * self.dim * self.acc_bits // 8

    def sp_rows(self) -> int:
        """Total scratchpad rows across all banks."""
        return self.sp_banks * self.sp_bank_rows

    def acc_rows(self) -> int:
        """Total accumulator rows across all banks."""
        return self.acc_banks * self.acc_bank_rows

    def sp_row_bytes(self) -> int:
        return self.dim * self.input_bits // 8

    def acc_row_bytes(self) -> int:
        return self.dim * self.acc_bits // 8


@dataclass(frozen=True)
class ConfigViolation:
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


class InvalidConfigError(ValueError):
    """Raised by validate_config; carries every violated invariant."""

    def __init__(self, violations: list[ConfigViolation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def config_violations(cfg: AcceleratorConfig) -> list[ConfigViolation]:
    """Return every violated invariant of cfg (empty list when valid)."""
    bad = []
    if cfg.dim < 1:
        bad.append(ConfigViolation("ZeroDimension", f"dim={cfg.dim}, need >= 1"))
    for name in ("sp_banks", "sp_bank_rows", "acc_banks", "acc_bank_rows"):
        if getattr(cfg, name) < 1:
            bad.append(ConfigViolation("EmptyMemory", f"{name}={getattr(cfg, name)}, need >= 1"))
    for name in ("input_bits", "acc_bits"):
        if getattr(cfg, name) < 1:
            bad.append(ConfigViolation("ZeroWidth", f"{name}={getattr(cfg, name)}, need >= 1"))
    if cfg.dim >= 1:
        if cfg.max_mv_rows < cfg.dim:
            bad.append(ConfigViolation(
                "MoveLimitBelowDim", f"max_mv_rows={cfg.max_mv_rows} < dim={cfg.dim}"))
        if cfg.max_mv_cols < cfg.dim:
            bad.append(ConfigViolation(
                "MoveLimitBelowDim", f"max_mv_cols={cfg.max_mv_cols} < dim={cfg.dim}"))
    if cfg.rob_entries < 1:
        bad.append(ConfigViolation("EmptyMemory", f"rob_entries={cfg.rob_entries}, need >= 1"))
    if not (cfg.supports_ws or cfg.supports_os):
        bad.append(ConfigViolation("NoDataflow", "accelerator supports neither WS nor OS"))
    t = cfg.timing
    if t.clock_hz <= 0:
        bad.append(ConfigViolation("InvalidTiming", f"clock_hz={t.clock_hz}, need > 0"))
    if t.dma_bytes_per_cycle <= 0:
        bad.append(ConfigViolation(
            "InvalidTiming", f"dma_bytes_per_cycle={t.dma_bytes_per_cycle}, need > 0"))
    for name in ("dma_latency_cycles", "exec_fill_cycles", "exec_cycles_per_tile",
                 "config_cycles"):
        if getattr(t, name) < 0:
            bad.append(ConfigViolation("InvalidTiming", f"{name}={getattr(t, name)}, need >= 0"))
    return bad


def validate_config(cfg: AcceleratorConfig) -> AcceleratorConfig:
    """Return cfg unchanged iff every invariant holds, else raise.

    The raised InvalidConfigError reports all violations, not just the
    first one.
    """
    bad = config_violations(cfg)
    if bad:
        raise InvalidConfigError(bad)
    return cfg


def theoretical_peak_gops(cfg: AcceleratorConfig) -> float:
    """Peak throughput in GOPs: 2 * dim^2 MACs per cycle at clock_hz."""
    return 2.0 * cfg.dim * cfg.dim * cfg.timing.clock_hz / 1e9


# --------------------------------------------------------------------------
# Config files
# --------------------------------------------------------------------------

_ACCEL_FIELDS = {
    "dim": int, "input_bits": int, "acc_bits": int,
    "sp_banks": int, "sp_bank_rows": int, "acc_banks": int, "acc_bank_rows": int,
    "max_mv_rows": int, "max_mv_cols": int, "rob_entries": int,
    "supports_ws": bool, "supports_os": bool, "supports_big_mvout": bool,
}

_TIMING_FIELDS = {
    "clock_hz": float, "dma_bytes_per_cycle": int, "dma_latency_cycles": int,
    "exec_fill_cycles": int, "exec_cycles_per_tile": int, "config_cycles": int,
    "l2_enabled": bool,
}

PRESET_NAMES = ("gemmini16_l2", "gemmini16_nol2")


def _parse_section(parser, section, fields):
    out = {}
    for key in parser[section]:
        if key not in fields:
            raise ValueError(f"unknown key '{key}' in [{section}]")
        typ = fields[key]
        if typ is bool:
            out[key] = parser[section].getboolean(key)
        elif typ is int:
            out[key] = parser[section].getint(key)
        else:
            out[key] = parser[section].getfloat(key)
    return out


def load_config(name_or_path: str | Path) -> AcceleratorConfig:
    """Load and validate an accelerator config file.

    Accepts a filesystem path or the name of a shipped preset
    ('gemmini16_l2', 'gemmini16_nol2').  The file format is INI with
    [accelerator] and [timing] sections; omitted keys keep their
    dataclass defaults.
    """
    path = Path(name_or_path)
    if not path.exists():
        name = str(name_or_path).removesuffix(".cfg")
        if name in PRESET_NAMES:
            ref = resources.files("gemmtuner") / "configs" / f"{name}.cfg"
            return _load_config_text(ref.read_text())
        raise FileNotFoundError(
            f"no config file '{name_or_path}' and no preset of that name "
            f"(presets: {', '.join(PRESET_NAMES)})")
    return _load_config_text(path.read_text())


def _load_config_text(text: str) -> AcceleratorConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    accel_kw = _parse_section(parser, "accelerator", _ACCEL_FIELDS) \
        if parser.has_section("accelerator") else {}
    timing_kw = _parse_section(parser, "timing", _TIMING_FIELDS) \
        if parser.has_section("timing") else {}
    cfg = AcceleratorConfig(timing=TimingParams(**timing_kw), **accel_kw)
    return validate_config(cfg)


# Timing presets for the two modeled memory paths.  The no-L2 variant
# pays a longer round trip and a narrower effective channel to DRAM.
L2_TIMING = TimingParams()
NO_L2_TIMING = TimingParams(dma_bytes_per_cycle=4, dma_latency_cycles=200,
                            l2_enabled=False)


def default_config(l2: bool = True) -> AcceleratorConfig:
    """The reference 16x16 configuration with the chosen memory path."""
    return AcceleratorConfig(timing=L2_TIMING if l2 else NO_L2_TIMING)
