"""Named model, device and system presets.

Per-bank bandwidth is the least settled hardware figure, so three presets
are exposed:

  * ``pin-rate`` (default): 5.2 GB/s per bank, the per-bank share of an
    HBM3 device's external pin bandwidth (1024 pins x 5.2 Gb/s over 128
    banks). Keeps every kernel in a single roofline regime across the
    experiment grids.
  * ``stream``: one weight byte per FPU clock, 666 MB/s per bank. Row
    activate/precharge overhead halves the 2 B/cycle FP16 streaming demand
    of a fused multiply-add unit at 666 MHz.
  * ``quoted``: 20.8 MB/s per bank, a figure that circulates for this device
    class but is likely a units typo; kept verbatim rather than corrected.
"""

from __future__ import annotations

import dataclasses

from .model_kernels import ModelConfig
from .pim_design import (
    GIB,
    MIB,
    PimConfig,
    PimRole,
    calibrate_energy,
)
from .roofline import DeviceKind, DeviceSpec
from .sim_engine import EnergyModel, InterconnectSpec, PlacementMode, SystemConfig

PER_BANK_BW_PRESETS = {
    "pin-rate": 5.2e9,
    "stream": 666e6,
    "quoted": 20.8e6,
}
PER_BANK_BW_DEFAULT = PER_BANK_BW_PRESETS["pin-rate"]

FPU_FREQ_HZ = 666e6
FLOPS_PER_FPU_CYCLE = 2  # fused multiply-add


def _pim(x: int, y: int, m: int, role: PimRole) -> PimConfig:
    return PimConfig(
        fpus_per_group=x,
        banks_per_group=y,
        num_banks=m,
        fpu_freq=FPU_FREQ_HZ,
        flops_per_fpu_cycle=FLOPS_PER_FPU_CYCLE,
        per_bank_bandwidth=PER_BANK_BW_DEFAULT,
        capacity=m * 128 * MIB,  # 128 MiB per bank
        role=role,
    )


# FC array trades one of four bank groups for FPUs: 96 banks, 12 GiB.
PIM_PRESETS: dict[str, PimConfig] = {
    "fc-4p1b": _pim(4, 1, 96, PimRole.FC_PIM),
    "attn-1p2b": _pim(1, 2, 128, PimRole.ATTN_PIM),
    "hbm-pim-1p2b": _pim(1, 2, 128, PimRole.ATTN_PIM),
    "pim-1p1b": _pim(1, 1, 128, PimRole.ATTN_PIM),
}

PU_PRESETS: dict[str, DeviceSpec] = {
    "a100": DeviceSpec(DeviceKind.PU, peak_flops=312e12, peak_bandwidth=1935e9, label="a100"),
    "a100x6": DeviceSpec(
        DeviceKind.PU, peak_flops=6 * 312e12, peak_bandwidth=6 * 1935e9, label="a100x6"
    ),
}

LINK_PRESETS: dict[str, InterconnectSpec] = {
    "nvlink": InterconnectSpec(bandwidth=600e9, base_latency=1e-6),
    "pcie": InterconnectSpec(bandwidth=64e9, base_latency=2e-6),
}

MODEL_PRESETS: dict[str, ModelConfig] = {
    "gpt3-175b": ModelConfig("gpt3-175b", num_layers=96, hidden_dim=12288,
                             num_heads=96, head_dim=128, ffn_dim=49152),
    "gpt3-66b": ModelConfig("gpt3-66b", num_layers=64, hidden_dim=9216,
                            num_heads=72, head_dim=128, ffn_dim=36864),
    "llama-65b": ModelConfig("llama-65b", num_layers=80, hidden_dim=8192,
                             num_heads=64, head_dim=128, ffn_dim=22016),
    "opt-30b": ModelConfig("opt-30b", num_layers=48, hidden_dim=7168,
                           num_heads=56, head_dim=128, ffn_dim=28672),
}


def _system(label: str, fc: str, attn: str, pu: str = "a100") -> SystemConfig:
    return SystemConfig(
        label=label,
        pu=PU_PRESETS[pu],
        fc_pim=PIM_PRESETS[fc],
        fc_pim_count=30,
        attn_pim=PIM_PRESETS[attn],
        attn_pim_count=60,
        fc_link=LINK_PRESETS["nvlink"],
        attn_link=LINK_PRESETS["pcie"],
        placement_mode=PlacementMode.DYNAMIC,
    )


# 90 HBM devices each: 30 hold FC weights, 60 hold KV caches.
SYSTEM_PRESETS: dict[str, SystemConfig] = {
    "hybrid": _system("hybrid", "fc-4p1b", "attn-1p2b"),
    "hybrid-6gpu": _system("hybrid-6gpu", "fc-4p1b", "attn-1p2b", pu="a100x6"),
    "gpu-attn1p1b": _system("gpu-attn1p1b", "pim-1p1b", "pim-1p1b"),
    "gpu-attn1p2b": _system("gpu-attn1p2b", "pim-1p1b", "hbm-pim-1p2b"),
    "pim-1p1b": _system("pim-1p1b", "pim-1p1b", "pim-1p1b"),
}

# The placement modes conventionally pair with these baseline systems when
# reproducing cross-system comparisons.
MODE_BASELINE_SYSTEMS: dict[PlacementMode, str] = {
    PlacementMode.DYNAMIC: "hybrid",
    PlacementMode.PIM_ONLY: "hybrid",
    PlacementMode.STATIC_GPU_FC: "gpu-attn1p1b",
    PlacementMode.STATIC_HBM_PIM: "gpu-attn1p2b",
}

# Energy constants calibrated against the FC array design point.
DEFAULT_PIM_ENERGY = calibrate_energy(PIM_PRESETS["fc-4p1b"])


def default_energy_model(system: SystemConfig) -> EnergyModel:
    return EnergyModel.from_pu_power(system.pu, system.pu_power_w, DEFAULT_PIM_ENERGY)


def get_system(name: str, placement_mode: PlacementMode | None = None) -> SystemConfig:
    if name not in SYSTEM_PRESETS:
        raise KeyError(f"unknown system preset {name!r}; have {sorted(SYSTEM_PRESETS)}")
    system = SYSTEM_PRESETS[name]
    if placement_mode is not None:
        system = dataclasses.replace(system, placement_mode=placement_mode)
    return system


def get_model(name: str) -> ModelConfig:
    if name not in MODEL_PRESETS:
        raise KeyError(f"unknown model preset {name!r}; have {sorted(MODEL_PRESETS)}")
    return MODEL_PRESETS[name]
