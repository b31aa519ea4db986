"""Iteration-level simulator for LLM decoding on a heterogeneous system of
processing units and two classes of processing-in-memory devices."""

from .model_kernels import (
    KernelKind,
    KernelWork,
    ModelConfig,
    attention_ai,
    fc_ai_exact,
    iteration_workload,
    kv_cache_bytes,
)
from .pim_design import (
    AreaParams,
    EnergyParams,
    PimConfig,
    PimRole,
    area_feasible,
    calibrate_energy,
    dram_access_fraction,
    max_banks,
    partition_attention,
    partition_fc,
    pim_bandwidth,
    pim_power,
    pim_throughput,
)
from .roofline import Boundedness, DeviceKind, DeviceSpec, classify, kernel_latency
from .scheduler import (
    CalibrationResult,
    Placement,
    SchedulerState,
    calibrate_threshold,
    estimate_ai,
    initial_placement,
    runtime_step,
)
from .sim_engine import (
    EnergyModel,
    InterconnectSpec,
    IterationRecord,
    PlacementMode,
    RunConfig,
    SimReport,
    SystemConfig,
    calibrate_system,
    communication_time,
    compare_baselines,
    simulate,
)
from .workload import (
    BatchPolicy,
    BatchState,
    LengthDist,
    Request,
    Trace,
    load_trace,
    step_tokens,
    synth_trace,
)

__version__ = "0.1.0"
