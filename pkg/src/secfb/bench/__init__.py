"""Protection case study, latency harness and report rendering."""

from secfb.bench.casestudy import build_case_study, casestudy_source, co_located, with_keysize
from secfb.bench.harness import (
    MIN_CYCLES,
    BenchError,
    BenchReport,
    Topology,
    Verdict,
    prepare_scenario,
    run_latency_bench,
    run_matrix,
    run_plan,
)
from secfb.bench.protection import (
    DEFAULT_CONFIGS,
    ProtectionConfig,
    ProtectionFunction,
    differential_fb,
    earth_fault_fb,
    overcurrent_fb,
)

__all__ = [
    "build_case_study",
    "casestudy_source",
    "co_located",
    "with_keysize",
    "MIN_CYCLES",
    "BenchError",
    "BenchReport",
    "Topology",
    "Verdict",
    "prepare_scenario",
    "run_latency_bench",
    "run_matrix",
    "run_plan",
    "DEFAULT_CONFIGS",
    "ProtectionConfig",
    "ProtectionFunction",
    "differential_fb",
    "earth_fault_fb",
    "overcurrent_fb",
]
