"""PIM device design models: area, power, energy, throughput, partitioning.

A PIM device is an HBM die with floating-point units grouped near banks.
``xPyB`` means x FPUs shared by every y banks. The die area budget caps how
many banks fit next to the FPUs; the power budget caps how fast rows can be
activated, which is where data reuse (serving several computation passes
from one activated row) becomes the controlling knob.

Energy is modeled per row pass: one pass consumes one DRAM row's worth of
multiply-accumulates. A pass costs an amortized row activation (e_row / r at
reuse level r) plus an activation-transfer and a compute term. Absolute
constants are not published for this design space, so defaults are
calibrated against two anchors: the no-reuse DRAM share of total energy
(96.7%) and the reuse level at which a 4-FPU-per-bank die first meets the
HBM power budget (reuse 4 at 116 W). Both are overridable via config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .roofline import DeviceKind, DeviceSpec

MIB = 1 << 20
GIB = 1 << 30

# Per-die area figures (22 nm class) and the HBM3 cube power budget.
DEFAULT_BANK_AREA_MM2 = 0.83
DEFAULT_FPU_AREA_MM2 = 0.1025
DEFAULT_DIE_AREA_MM2 = 121.0
DEFAULT_POWER_BUDGET_W = 116.0

# Scalars per DRAM row pass: a 2 KB row of FP16 holds 1024 weights.
DEFAULT_ROW_MACS = 1024

# Share of total energy taken by row activation when nothing is reused.
DRAM_ENERGY_FRACTION_NO_REUSE = 0.967
# Reuse level at which the 4-FPU-per-bank configuration meets the budget.
BUDGET_CROSS_REUSE = 4


class PimRole(Enum):
    FC_PIM = "fc"
    ATTN_PIM = "attn"


@dataclass(frozen=True)
class PimConfig:
    """One PIM device: x FPUs per group of y banks, m banks total."""

    fpus_per_group: int  # x
    banks_per_group: int  # y
    num_banks: int  # m
    fpu_freq: float  # Hz
    flops_per_fpu_cycle: int  # 2 for fused multiply-add
    per_bank_bandwidth: float  # bytes/s
    capacity: int  # bytes
    role: PimRole
    # Column fan-out used by the FC weight tiling.
    pseudo_channels: int = 2
    bank_groups: int = 4

    def __post_init__(self):
        if self.fpus_per_group < 1 or self.banks_per_group < 1:
            raise ValueError("fpus_per_group and banks_per_group must be >= 1")
        if self.num_banks < self.banks_per_group:
            raise ValueError("num_banks must be >= banks_per_group")
        if self.num_banks % self.banks_per_group != 0:
            raise ValueError("num_banks must be divisible by banks_per_group")
        if self.fpu_freq <= 0 or self.per_bank_bandwidth <= 0 or self.capacity <= 0:
            raise ValueError("fpu_freq, per_bank_bandwidth and capacity must be positive")
        if self.flops_per_fpu_cycle < 1:
            raise ValueError("flops_per_fpu_cycle must be >= 1")

    @property
    def total_fpus(self) -> int:
        return self.fpus_per_group * (self.num_banks // self.banks_per_group)

    @property
    def shorthand(self) -> str:
        return f"{self.fpus_per_group}P{self.banks_per_group}B"


@dataclass(frozen=True)
class AreaParams:
    a_bank: float = DEFAULT_BANK_AREA_MM2  # mm^2 per bank
    a_fpu: float = DEFAULT_FPU_AREA_MM2  # mm^2 per FPU
    a_max: float = DEFAULT_DIE_AREA_MM2  # mm^2 per die

    def __post_init__(self):
        if self.a_bank <= 0 or self.a_fpu <= 0 or self.a_max <= 0:
            raise ValueError("area parameters must be positive")


@dataclass(frozen=True)
class EnergyParams:
    """Per-pass energies (joules) and the device power budget (watts)."""

    e_row: float  # row activation + read, amortized by reuse
    e_xfer: float  # activation transfer to the FPU
    e_comp: float  # FPU computation
    power_budget: float = DEFAULT_POWER_BUDGET_W
    row_macs: int = DEFAULT_ROW_MACS  # MACs served by one row pass

    def __post_init__(self):
        if min(self.e_row, self.e_xfer, self.e_comp, self.power_budget) <= 0:
            raise ValueError("energy parameters must be positive")
        if self.row_macs < 1:
            raise ValueError("row_macs must be >= 1")


def area_feasible(x: int, m: int, params: AreaParams) -> bool:
    """True iff m banks with x FPUs each fit the die: m*(x*a_fpu + a_bank) <= a_max."""
    if x < 1 or m < 1:
        raise ValueError("x and m must be >= 1")
    return m * (x * params.a_fpu + params.a_bank) <= params.a_max


def max_banks(x: int, params: AreaParams) -> int:
    """Largest bank count that keeps an x-FPUs-per-bank die within area."""
    if x < 1:
        raise ValueError("x must be >= 1")
    m = math.floor(params.a_max / (x * params.a_fpu + params.a_bank))
    # Guard the floating-point boundary.
    while m >= 1 and not area_feasible(x, m, params):
        m -= 1
    return m


def config_area_feasible(config: PimConfig, params: AreaParams) -> bool:
    """Area check for arbitrary xPyB groupings (FPUs may be shared by banks)."""
    total = config.total_fpus * params.a_fpu + config.num_banks * params.a_bank
    return total <= params.a_max


def dram_access_fraction(reuse: int, params: EnergyParams) -> float:
    """Share of per-pass energy spent on DRAM access at the given reuse level."""
    if reuse < 1:
        raise ValueError("reuse must be >= 1")
    amortized_row = params.e_row / reuse
    return amortized_row / (amortized_row + params.e_xfer + params.e_comp)


def _pass_rate(config: PimConfig, params: EnergyParams) -> float:
    """Row passes per second when every FPU streams MACs at full rate."""
    mac_rate = config.total_fpus * config.fpu_freq * (config.flops_per_fpu_cycle / 2)
    return mac_rate / params.row_macs


def pim_power(config: PimConfig, reuse: int, params: EnergyParams) -> float:
    """Sustained device power in watts at the given data reuse level."""
    if reuse < 1:
        raise ValueError("reuse must be >= 1")
    energy_per_pass = params.e_row / reuse + params.e_xfer + params.e_comp
    return _pass_rate(config, params) * energy_per_pass


def pim_energy(config: PimConfig, flops: float, reuse: int, params: EnergyParams) -> float:
    """Energy in joules to execute the given FLOPs on the device at a reuse level."""
    if reuse < 1:
        raise ValueError("reuse must be >= 1")
    passes = (flops / 2) / params.row_macs
    return passes * (params.e_row / reuse + params.e_xfer + params.e_comp)


def pim_throughput(config: PimConfig) -> float:
    """Peak FLOP/s of one device: all FPUs at full clock."""
    return config.total_fpus * config.fpu_freq * config.flops_per_fpu_cycle


def pim_bandwidth(config: PimConfig) -> float:
    """Peak internal bytes/s of one device: all banks streaming."""
    return config.num_banks * config.per_bank_bandwidth


def pim_device_spec(config: PimConfig, count: int = 1, label: str = "") -> DeviceSpec:
    """Roofline device for ``count`` identical PIM devices working in parallel."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return DeviceSpec(
        kind=DeviceKind.PIM,
        peak_flops=count * pim_throughput(config),
        peak_bandwidth=count * pim_bandwidth(config),
        label=label or f"{count}x {config.shorthand}",
    )


def calibrate_energy(
    config: PimConfig,
    power_budget: float = DEFAULT_POWER_BUDGET_W,
    dram_fraction: float = DRAM_ENERGY_FRACTION_NO_REUSE,
    budget_cross_reuse: int = BUDGET_CROSS_REUSE,
    row_macs: int = DEFAULT_ROW_MACS,
) -> EnergyParams:
    """Solve for per-pass energies from the two published anchors.

    Step 1 fixes the ratio e_row : (e_xfer + e_comp) so that the no-reuse
    DRAM share equals ``dram_fraction`` exactly. Step 2 fixes the absolute
    scale so that ``config`` lands exactly on ``power_budget`` at reuse level
    ``budget_cross_reuse``. The transfer/compute split is taken as equal;
    only their sum is observable through the anchors.
    """
    if not 0.0 < dram_fraction < 1.0:
        raise ValueError("dram_fraction must be in (0, 1)")
    ratio = dram_fraction / (1.0 - dram_fraction)
    probe = EnergyParams(e_row=ratio, e_xfer=0.5, e_comp=0.5, row_macs=row_macs)
    rate = _pass_rate(config, probe)
    scale = power_budget / (rate * (ratio / budget_cross_reuse + 1.0))
    return EnergyParams(
        e_row=ratio * scale,
        e_xfer=scale / 2,
        e_comp=scale / 2,
        power_budget=power_budget,
        row_macs=row_macs,
    )


# ---------------------------------------------------------------------------
# Data partitioning across banks and devices
# ---------------------------------------------------------------------------


def _split(n: int, parts: int) -> list[int]:
    """Split n items into ``parts`` contiguous chunks, largest first."""
    q, r = divmod(n, parts)
    return [q + 1] * r + [q] * (parts - r)


@dataclass(frozen=True)
class FcPartition:
    """Weight-matrix tiling over devices, column slices and banks."""

    device_grid: tuple[int, int]  # (row blocks, column blocks)
    device_loads: tuple[int, ...]  # matrix elements per device
    bank_loads: tuple[tuple[int, ...], ...]  # per device, per bank
    utilization: float  # mean bank load / max bank load
    idle_banks: int


def partition_fc(
    weight_rows: int, weight_cols: int, devices: int, config: PimConfig
) -> FcPartition:
    """Tile a weight matrix across devices and their banks.

    Devices get contiguous 2D blocks from a near-square device grid; inside a
    device, columns split across pseudo-channel x bank-group slices and rows
    split across the banks of each slice. Utilization is the load balance
    (mean over max) across every bank in the system, the factor by which the
    roofline peaks are derated.
    """
    if weight_rows < 1 or weight_cols < 1:
        raise ValueError("weight dimensions must be >= 1")
    if devices < 1:
        raise ValueError("devices must be >= 1")
    col_fanout = config.pseudo_channels * config.bank_groups
    if config.num_banks % col_fanout != 0:
        raise ValueError(
            f"num_banks ({config.num_banks}) must be divisible by "
            f"pseudo_channels * bank_groups ({col_fanout})"
        )
    banks_per_slice = config.num_banks // col_fanout

    grid_rows = 1
    for candidate in range(1, math.isqrt(devices) + 1):
        if devices % candidate == 0:
            grid_rows = candidate
    grid_cols = devices // grid_rows

    row_blocks = _split(weight_rows, grid_rows)
    col_blocks = _split(weight_cols, grid_cols)

    device_loads: list[int] = []
    bank_loads: list[tuple[int, ...]] = []
    for rows in row_blocks:
        for cols in col_blocks:
            device_loads.append(rows * cols)
            slice_cols = _split(cols, col_fanout)
            slice_rows = _split(rows, banks_per_slice)
            loads = tuple(c * r for c in slice_cols for r in slice_rows)
            bank_loads.append(loads)

    all_banks = [load for device in bank_loads for load in device]
    max_load = max(all_banks)
    mean_load = weight_rows * weight_cols / len(all_banks)
    return FcPartition(
        device_grid=(grid_rows, grid_cols),
        device_loads=tuple(device_loads),
        bank_loads=tuple(bank_loads),
        utilization=mean_load / max_load if max_load > 0 else 0.0,
        idle_banks=sum(1 for load in all_banks if load == 0),
    )


@dataclass(frozen=True)
class AttnPartition:
    """Round-robin assignment of attention heads to devices."""

    heads_per_device: tuple[tuple[int, ...], ...]
    utilization: float  # mean device load / max device load


def partition_attention(num_heads: int, num_devices: int) -> AttnPartition:
    """Distribute attention heads across devices, one head per device slot."""
    if num_heads < 1 or num_devices < 1:
        raise ValueError("num_heads and num_devices must be >= 1")
    assignment: list[list[int]] = [[] for _ in range(num_devices)]
    for head in range(num_heads):
        assignment[head % num_devices].append(head)
    max_load = max(len(heads) for heads in assignment)
    mean_load = num_heads / num_devices
    return AttnPartition(
        heads_per_device=tuple(tuple(heads) for heads in assignment),
        utilization=mean_load / max_load,
    )
