"""Roofline latency and boundedness model.

A device is a pair of peaks (FLOP/s, bytes/s); the ridge point is their
ratio. Work whose arithmetic intensity reaches the ridge is compute-bound,
otherwise memory-bound. Latency is the max of the two limbs, optionally
derated by a scalar utilization factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .model_kernels import KernelWork, ModelConfig, fc_works


class DeviceKind(Enum):
    PU = "pu"
    PIM = "pim"


class Boundedness(Enum):
    COMPUTE_BOUND = "compute-bound"
    MEMORY_BOUND = "memory-bound"


@dataclass(frozen=True)
class DeviceSpec:
    """Peak throughput and bandwidth of one device (or device aggregate)."""

    kind: DeviceKind
    peak_flops: float  # FLOP/s
    peak_bandwidth: float  # bytes/s
    label: str = ""

    def __post_init__(self):
        if self.peak_flops <= 0 or self.peak_bandwidth <= 0:
            raise ValueError("peak_flops and peak_bandwidth must be positive")

    @property
    def ridge_point(self) -> float:
        """FLOPs/byte at which the device shifts from memory- to compute-bound."""
        return self.peak_flops / self.peak_bandwidth


def classify(work: KernelWork, device: DeviceSpec) -> Boundedness:
    """Classify work on a device; ties go to compute-bound."""
    if work.total_bytes <= 0:
        raise ValueError("cannot classify zero-byte work")
    if work.arithmetic_intensity >= device.ridge_point:
        return Boundedness.COMPUTE_BOUND
    return Boundedness.MEMORY_BOUND


def kernel_latency(work: KernelWork, device: DeviceSpec, utilization: float = 1.0) -> float:
    """Roofline latency in seconds: max of compute and bandwidth limbs."""
    if not 0.0 < utilization <= 1.0:
        raise ValueError(f"utilization must be in (0, 1], got {utilization}")
    compute = work.flops / (device.peak_flops * utilization)
    memory = work.total_bytes / (device.peak_bandwidth * utilization)
    return max(compute, memory)


def fc_latency(
    model: ModelConfig, rlp: int, tlp: int, device: DeviceSpec, utilization: float = 1.0
) -> float:
    """Latency of one iteration's FC kernels (QKV + projection + FFN), run
    sequentially on the given device."""
    return sum(kernel_latency(w, device, utilization) for w in fc_works(model, rlp, tlp))
