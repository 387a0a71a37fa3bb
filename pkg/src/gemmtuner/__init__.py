"""Desk-scale model and schedule autotuner for a systolic GEMM accelerator.

The pipeline: enumerate the hardware-valid schedule space for a
quantized GEMM, lower each point to an instruction trace, execute it on
a functional + timing model of a Gemmini-style accelerator, and search
for the schedule with minimum cycles.
"""

from .accel import (AcceleratorConfig, TimingParams, default_config,
                    load_config, theoretical_peak_gops, validate_config)
from .codegen import (LoweredProgram, build_dram_image, extract_output,
                      generate_cisc_baseline, generate_trace)
from .isa import (Dataflow, InstructionTrace, check_legality, parse_trace,
                  render_trace)
from .quant import (QuantizedGemmProblem, fold_corrected_bias, folded_qgemm,
                    reference_qgemm)
from .schedule import (BufferMode, ScheduleParams, Workload, enumerate_valid,
                       is_valid, pad_workload)
from .sim import SimReport, count_ops, functional_execute, timed_execute
from .tuner import TuningJob, TuningRecord, compare_baseline, tune

__version__ = "0.1.0"

__all__ = [
    "AcceleratorConfig", "TimingParams", "default_config", "load_config",
    "theoretical_peak_gops", "validate_config",
    "LoweredProgram", "build_dram_image", "extract_output",
    "generate_cisc_baseline", "generate_trace",
    "Dataflow", "InstructionTrace", "check_legality", "parse_trace",
    "render_trace",
    "QuantizedGemmProblem", "fold_corrected_bias", "folded_qgemm",
    "reference_qgemm",
    "BufferMode", "ScheduleParams", "Workload", "enumerate_valid", "is_valid",
    "pad_workload",
    "SimReport", "count_ops", "functional_execute", "timed_execute",
    "TuningJob", "TuningRecord", "compare_baseline", "tune",
]
