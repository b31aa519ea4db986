"""Iteration-level decoding simulator.

Advances one decoding iteration at a time: admit arrived requests (charging
a compute-bound PU prefill pass), place the FC kernels per the configured
placement mode, price every kernel with the roofline model, add link
transfer time, accumulate energy, step the speculative token state and ask
the runtime scheduler whether to migrate. Kernels within an iteration are
serialized; communication overlap is configurable and off by default.

A run is strictly sequential and deterministic: identical inputs produce
bit-identical reports.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .model_kernels import (
    FC_KINDS,
    KernelKind,
    ModelConfig,
    fc_aggregate,
    iteration_workload,
)
from .pim_design import (
    EnergyParams,
    PimConfig,
    partition_attention,
    partition_fc,
    pim_device_spec,
    pim_energy,
)
from .roofline import DeviceSpec, kernel_latency
from .scheduler import (
    CalibrationResult,
    Placement,
    SchedulerState,
    calibrate_threshold,
    initial_placement,
    runtime_step,
)
from .workload import (
    AdmitResult,
    BatchPolicy,
    BatchState,
    KvCapacityChecker,
    Request,
    RequestState,
    Trace,
    admit,
    step_tokens,
)


class SimulationFault(RuntimeError):
    """The engine detected an impossible state mid-run."""


class PlacementMode(Enum):
    DYNAMIC = "dynamic"
    STATIC_GPU_FC = "static-gpu-fc"
    PIM_ONLY = "pim-only"
    # Same static PU placement as STATIC_GPU_FC; named separately because the
    # conventional pairing puts a 1P2B attention array behind it instead of
    # a 1P1B one (the system preset carries that difference).
    STATIC_HBM_PIM = "static-hbm-pim"

STATIC_PU_MODES = (PlacementMode.STATIC_GPU_FC, PlacementMode.STATIC_HBM_PIM)


@dataclass(frozen=True)
class InterconnectSpec:
    bandwidth: float  # bytes/s
    base_latency: float = 0.0  # seconds per transfer

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.base_latency < 0:
            raise ValueError("base_latency must be >= 0")

    def transfer_time(self, num_bytes: float) -> float:
        return self.base_latency + num_bytes / self.bandwidth


@dataclass(frozen=True)
class SystemConfig:
    """One heterogeneous system: a PU plus two PIM device arrays."""

    label: str
    pu: DeviceSpec
    fc_pim: PimConfig
    fc_pim_count: int
    attn_pim: PimConfig
    attn_pim_count: int
    fc_link: InterconnectSpec
    attn_link: InterconnectSpec
    placement_mode: PlacementMode = PlacementMode.DYNAMIC
    pu_utilization: float = 0.7  # achieved fraction of PU peaks
    pu_power_w: float = 400.0

    def __post_init__(self):
        if self.fc_pim_count < 1 or self.attn_pim_count < 1:
            raise ValueError("device counts must be >= 1")
        if not 0.0 < self.pu_utilization <= 1.0:
            raise ValueError("pu_utilization must be in (0, 1]")
        if self.attn_capacity_bytes <= 0:
            raise ValueError("total attention capacity must be positive")

    @property
    def fc_pim_device(self) -> DeviceSpec:
        return pim_device_spec(self.fc_pim, self.fc_pim_count, label="fc-pim-array")

    @property
    def attn_pim_device(self) -> DeviceSpec:
        return pim_device_spec(self.attn_pim, self.attn_pim_count, label="attn-pim-array")

    @property
    def attn_capacity_bytes(self) -> int:
        return self.attn_pim.capacity * self.attn_pim_count


@dataclass(frozen=True)
class EnergyModel:
    """Energy constants for the PU, the links and the PIM pass model."""

    pu_joules_per_flop: float
    pu_joules_per_byte: float
    link_joules_per_byte: float
    pim: EnergyParams

    @classmethod
    def from_pu_power(
        cls, pu: DeviceSpec, pu_power_w: float, pim: EnergyParams,
        link_joules_per_byte: float = 1e-11,
    ) -> "EnergyModel":
        """Derive PU constants from its peak power over its peak rates."""
        return cls(
            pu_joules_per_flop=pu_power_w / pu.peak_flops,
            pu_joules_per_byte=pu_power_w / pu.peak_bandwidth,
            link_joules_per_byte=link_joules_per_byte,
            pim=pim,
        )


@dataclass(frozen=True)
class RunConfig:
    """Per-run knobs that are not part of the hardware description."""

    policy: BatchPolicy = BatchPolicy.STATIC
    batch_size: int = 4
    max_rlp: int = 128
    spec_len: int = 1
    acceptance_rate: float = 1.0
    migration_penalty_s: float = 0.0
    comm_overlap: float = 0.0  # fraction of link time hidden by compute
    max_iterations: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_rlp < 1 or self.spec_len < 1:
            raise ValueError("batch_size, max_rlp and spec_len must be >= 1")
        if not 0.0 <= self.comm_overlap <= 1.0:
            raise ValueError("comm_overlap must be in [0, 1]")
        if self.migration_penalty_s < 0:
            raise ValueError("migration_penalty_s must be >= 0")


@dataclass(frozen=True)
class IterationRecord:
    index: int
    placement: Placement
    rlp: int
    tlp: int
    lat_fc: float
    lat_attention: float
    lat_communication: float
    lat_other: float  # prefill passes and migration penalties
    energy_pu: float
    energy_fc_pim: float
    energy_attn_pim: float
    energy_links: float
    tokens: int
    eos: int

    @property
    def total_latency(self) -> float:
        return self.lat_fc + self.lat_attention + self.lat_communication + self.lat_other

    @property
    def total_energy(self) -> float:
        return self.energy_pu + self.energy_fc_pim + self.energy_attn_pim + self.energy_links


CSV_COLUMNS = (
    "iteration", "placement", "rlp", "tlp",
    "lat_fc", "lat_attention", "lat_communication", "lat_other",
    "energy_pu", "energy_fc_pim", "energy_attn_pim", "energy_links",
    "tokens", "eos",
)


def records_to_csv(records: Sequence[IterationRecord]) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for r in records:
        out.write(
            f"{r.index},{r.placement.value},{r.rlp},{r.tlp},"
            f"{r.lat_fc!r},{r.lat_attention!r},{r.lat_communication!r},{r.lat_other!r},"
            f"{r.energy_pu!r},{r.energy_fc_pim!r},{r.energy_attn_pim!r},{r.energy_links!r},"
            f"{r.tokens},{r.eos}\n"
        )
    return out.getvalue()


@dataclass(frozen=True)
class SimReport:
    records: tuple[IterationRecord, ...]
    aggregates: dict
    rejected: tuple[int, ...]  # request ids whose KV alone exceeds capacity
    config: dict

    def to_csv(self) -> str:
        return records_to_csv(self.records)


@dataclass(frozen=True)
class CommBreakdown:
    seconds: float
    attn_link_bytes: int
    fc_link_bytes: int


def communication_time(
    placement: Placement,
    model: ModelConfig,
    rlp: int,
    tlp: int,
    fc_link: InterconnectSpec,
    attn_link: InterconnectSpec,
) -> CommBreakdown:
    """Link time for one iteration.

    Per layer, the query vectors go out to the attention array and the
    attention outputs come back. When FC runs on the PU, the activations
    additionally cross the FC link both ways (weights stay resident in the
    FC-PIM memory and are already priced in the kernel's byte traffic).
    """
    vec_bytes = rlp * tlp * model.hidden_dim * model.dtype_bytes
    layers = model.num_layers
    seconds = layers * 2 * attn_link.transfer_time(vec_bytes)
    attn_bytes = layers * 2 * vec_bytes
    fc_bytes = 0
    if placement is Placement.FC_ON_PU:
        seconds += layers * 2 * fc_link.transfer_time(vec_bytes)
        fc_bytes = layers * 2 * vec_bytes
    return CommBreakdown(seconds=seconds, attn_link_bytes=attn_bytes, fc_link_bytes=fc_bytes)


def calibrate_system(
    system: SystemConfig, model: ModelConfig, sweep_max: int = 512
) -> CalibrationResult:
    """Offline threshold calibration with the same effective device rates the
    engine uses (PU utilization and FC-PIM partition balance included)."""
    fc_util = partition_fc(
        model.hidden_dim, model.hidden_dim, system.fc_pim_count, system.fc_pim
    ).utilization
    return calibrate_threshold(
        model,
        system.pu,
        system.fc_pim_device,
        sweep_max=sweep_max,
        pu_utilization=system.pu_utilization,
        pim_utilization=fc_util,
    )


def _fresh_requests(trace: Trace) -> list[Request]:
    return [
        Request(id=r.id, arrival_time=r.arrival_time, input_len=r.input_len,
                output_len=r.output_len)
        for r in trace.requests
    ]


def _prefill_cost(
    model: ModelConfig, request: Request, system: SystemConfig, energy: EnergyModel
) -> tuple[float, float]:
    """Latency and energy of one compute-bound PU pass over the prompt."""
    works = iteration_workload(model, 1, request.input_len, [request.input_len])
    seconds = sum(kernel_latency(w, system.pu, system.pu_utilization) for w in works)
    joules = sum(
        w.flops * energy.pu_joules_per_flop + w.total_bytes * energy.pu_joules_per_byte
        for w in works
    )
    return seconds, joules


def simulate(
    system: SystemConfig,
    model: ModelConfig,
    trace: Trace,
    run: RunConfig,
    energy: EnergyModel,
    calibration: Optional[CalibrationResult] = None,
) -> SimReport:
    """Run the whole trace to completion and return per-iteration records
    plus aggregates."""
    mode = system.placement_mode
    if mode is PlacementMode.DYNAMIC and calibration is None:
        raise ValueError("dynamic placement requires a calibration result")

    waiting = _fresh_requests(trace)
    waiting.sort(key=lambda r: (r.arrival_time, r.id))
    events = sorted(trace.events, key=lambda e: e.time)
    batch = BatchState(tlp=run.spec_len)
    checker = KvCapacityChecker(model=model, capacity_bytes=system.attn_capacity_bytes)

    alpha = calibration.alpha if calibration is not None else 0
    sched = SchedulerState(
        alpha=alpha, tlp_register=run.spec_len,
        current_placement=Placement.FC_ON_FCPIM, rlp=0,
    )

    fc_util = partition_fc(
        model.hidden_dim, model.hidden_dim, system.fc_pim_count, system.fc_pim
    ).utilization
    attn_util = partition_attention(model.num_heads, system.attn_pim_count).utilization
    fc_pim_dev = system.fc_pim_device
    attn_dev = system.attn_pim_device

    records: list[IterationRecord] = []
    rejected: list[int] = []
    now = 0.0
    prefill_total = 0.0
    migrations = 0
    decision_mismatches = 0
    penalty_due = False
    event_idx = 0
    pending_tlp: Optional[int] = None

    while waiting or batch.active:
        if len(records) >= run.max_iterations:
            raise SimulationFault(f"exceeded max_iterations={run.max_iterations}")

        # Idle until the next arrival if nothing is running.
        if not batch.active and waiting and waiting[0].arrival_time > now:
            now = waiting[0].arrival_time

        # Host-signaled speculation-length changes take effect at iteration
        # boundaries.
        while event_idx < len(events) and events[event_idx].time <= now:
            pending_tlp = events[event_idx].value
            event_idx += 1
        if pending_tlp is not None:
            batch.tlp = pending_tlp

        was_empty = not batch.active
        result: AdmitResult = admit(
            batch, waiting, run.policy, checker, now=now,
            batch_size=run.batch_size, max_rlp=run.max_rlp,
        )
        rejected.extend(r.id for r in result.rejected)
        if not batch.active:
            if waiting:
                continue  # everything left rejected or not yet arrived
            break

        other_s = 0.0
        energy_pu = 0.0
        for req in result.admitted:
            prefill_s, prefill_j = _prefill_cost(model, req, system, energy)
            other_s += prefill_s
            energy_pu += prefill_j
            req.advance(RequestState.DECODING)
        prefill_total += other_s

        sched.rlp = batch.rlp
        if was_empty and mode is PlacementMode.DYNAMIC:
            sched.current_placement = initial_placement(batch.rlp, batch.tlp, alpha)

        if mode is PlacementMode.DYNAMIC:
            placement = sched.current_placement
        elif mode is PlacementMode.PIM_ONLY:
            placement = Placement.FC_ON_FCPIM
        elif mode in STATIC_PU_MODES:
            placement = Placement.FC_ON_PU
        else:
            raise SimulationFault(f"unhandled placement mode {mode}")

        if penalty_due:
            other_s += run.migration_penalty_s
            penalty_due = False

        if batch.kv_bytes(model) > system.attn_capacity_bytes:
            raise SimulationFault("KV capacity invariant violated")

        rlp, tlp = batch.rlp, batch.tlp
        works = iteration_workload(model, rlp, tlp, batch.context_lens)
        fc_parts = [w for w in works if w.kind in FC_KINDS]
        attn_work = next(w for w in works if w.kind is KernelKind.ATTENTION)

        fc_on_pu = sum(kernel_latency(w, system.pu, system.pu_utilization) for w in fc_parts)
        fc_on_pim = sum(kernel_latency(w, fc_pim_dev, fc_util) for w in fc_parts)
        comm_pu = communication_time(Placement.FC_ON_PU, model, rlp, tlp,
                                     system.fc_link, system.attn_link)
        comm_pim = communication_time(Placement.FC_ON_FCPIM, model, rlp, tlp,
                                      system.fc_link, system.attn_link)
        if placement is Placement.FC_ON_PU:
            lat_fc, comm = fc_on_pu, comm_pu
        else:
            lat_fc, comm = fc_on_pim, comm_pim
        if mode is PlacementMode.DYNAMIC:
            best = min(fc_on_pu + comm_pu.seconds, fc_on_pim + comm_pim.seconds)
            if lat_fc + comm.seconds > best:
                decision_mismatches += 1

        lat_attn = kernel_latency(attn_work, attn_dev, attn_util)
        lat_comm = comm.seconds * (1.0 - run.comm_overlap)

        fc_agg = fc_aggregate(works)
        energy_fc_pim = 0.0
        if placement is Placement.FC_ON_PU:
            energy_pu += (fc_agg.flops * energy.pu_joules_per_flop
                          + fc_agg.total_bytes * energy.pu_joules_per_byte)
        else:
            energy_fc_pim = pim_energy(system.fc_pim, fc_agg.flops, rlp * tlp, energy.pim)
        # KV rows are reused across speculative tokens only; batching adds no
        # reuse for attention.
        energy_attn = pim_energy(system.attn_pim, attn_work.flops, tlp, energy.pim)
        energy_links = (comm.attn_link_bytes + comm.fc_link_bytes) * energy.link_joules_per_byte

        emissions = step_tokens(batch, run.acceptance_rate)
        tokens = sum(e.tokens for e in emissions)
        eos = sum(1 for e in emissions if e.eos)
        if tokens == 0:
            raise SimulationFault("zero-progress iteration")

        if mode is PlacementMode.DYNAMIC:
            step = runtime_step(sched, emissions, new_tlp=pending_tlp)
            if step.directive is not None:
                migrations += 1
                penalty_due = True
        pending_tlp = None

        record = IterationRecord(
            index=len(records), placement=placement, rlp=rlp, tlp=tlp,
            lat_fc=lat_fc, lat_attention=lat_attn, lat_communication=lat_comm,
            lat_other=other_s,
            energy_pu=energy_pu, energy_fc_pim=energy_fc_pim,
            energy_attn_pim=energy_attn, energy_links=energy_links,
            tokens=tokens, eos=eos,
        )
        records.append(record)
        now += record.total_latency

    aggregates = _aggregate(records, now, prefill_total, migrations,
                            decision_mismatches, rejected)
    return SimReport(
        records=tuple(records),
        aggregates=aggregates,
        rejected=tuple(rejected),
        config={},  # filled by the experiment layer with the resolved config
    )


def _aggregate(
    records: Sequence[IterationRecord],
    end_time: float,
    prefill_total: float,
    migrations: int,
    decision_mismatches: int,
    rejected: Sequence[int],
) -> dict:
    lat_fc = sum(r.lat_fc for r in records)
    lat_attn = sum(r.lat_attention for r in records)
    lat_comm = sum(r.lat_communication for r in records)
    lat_other = sum(r.lat_other for r in records)
    total = lat_fc + lat_attn + lat_comm + lat_other
    tokens = sum(r.tokens for r in records)
    decode = total - prefill_total
    energy = {
        "pu": sum(r.energy_pu for r in records),
        "fc_pim": sum(r.energy_fc_pim for r in records),
        "attn_pim": sum(r.energy_attn_pim for r in records),
        "links": sum(r.energy_links for r in records),
    }
    energy["total"] = energy["pu"] + energy["fc_pim"] + energy["attn_pim"] + energy["links"]
    return {
        "iterations": len(records),
        "tokens": tokens,
        "total_latency_s": total,
        "decode_latency_s": decode,
        "prefill_latency_s": prefill_total,
        "end_time_s": end_time,
        "latency_components_s": {
            "fc": lat_fc, "attention": lat_attn,
            "communication": lat_comm, "other": lat_other,
        },
        "tokens_per_s": tokens / total if total > 0 else 0.0,
        "decode_tokens_per_s": tokens / decode if decode > 0 else 0.0,
        "energy_j": energy,
        "tokens_per_joule": tokens / energy["total"] if energy["total"] > 0 else 0.0,
        "migrations": migrations,
        "decision_mismatches": decision_mismatches,
        "rejected": list(rejected),
    }


@dataclass(frozen=True)
class ComparisonRow:
    mode: PlacementMode
    total_latency_s: float
    speedup: float  # baseline latency / this latency
    tokens_per_joule: float
    energy_efficiency_ratio: float  # this tokens/J / baseline tokens/J


def compare_baselines(
    system: SystemConfig,
    model: ModelConfig,
    trace: Trace,
    run: RunConfig,
    energy: EnergyModel,
    calibration: CalibrationResult,
    modes: Sequence[PlacementMode] = (
        PlacementMode.DYNAMIC,
        PlacementMode.STATIC_GPU_FC,
        PlacementMode.PIM_ONLY,
        PlacementMode.STATIC_HBM_PIM,
    ),
    baseline: PlacementMode = PlacementMode.STATIC_GPU_FC,
) -> list[ComparisonRow]:
    """Run the same trace under several placement modes on one system and
    normalize latency and energy efficiency against the baseline mode."""
    reports = {}
    for mode in modes:
        mode_system = dataclasses.replace(system, placement_mode=mode)
        reports[mode] = simulate(mode_system, model, trace, run, energy, calibration)
    if baseline not in reports:
        base_system = dataclasses.replace(system, placement_mode=baseline)
        reports[baseline] = simulate(base_system, model, trace, run, energy, calibration)
    base = reports[baseline].aggregates
    rows = []
    for mode in modes:
        agg = reports[mode].aggregates
        rows.append(
            ComparisonRow(
                mode=mode,
                total_latency_s=agg["total_latency_s"],
                speedup=base["total_latency_s"] / agg["total_latency_s"],
                tokens_per_joule=agg["tokens_per_joule"],
                energy_efficiency_ratio=(
                    agg["tokens_per_joule"] / base["tokens_per_joule"]
                    if base["tokens_per_joule"] > 0 else 0.0
                ),
            )
        )
    return rows
