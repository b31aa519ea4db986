"""Parallelism-aware FC-kernel scheduling.

The FC kernels of a decoding iteration can run either on the processing
units (PU) or on the FC-optimized PIM array; attention always runs on the
attention PIM array. The product of request-level and token-level
parallelism estimates the FC arithmetic intensity, and a calibrated
threshold ``alpha`` decides the placement: products above alpha go to the
PU, everything else (ties included, since the product slightly
overestimates the true intensity) stays on PIM.

Calibration sweeps integer parallelism levels, timing the FC kernels on
both sides, and returns the largest level at which PIM is still preferred.
With the strictly-greater placement rule this makes the scheduler pick the
pointwise-faster device at every level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .model_kernels import ModelConfig
from .roofline import DeviceSpec, fc_latency


class Placement(Enum):
    FC_ON_PU = "fc-on-pu"
    FC_ON_FCPIM = "fc-on-fcpim"


class StateCorruptionError(RuntimeError):
    """Scheduler bookkeeping diverged from the batch it tracks."""


def estimate_ai(rlp: int, tlp: int) -> int:
    """Arithmetic-intensity estimate for the FC kernels: just rlp * tlp."""
    if rlp == 0:
        raise ValueError("empty batch: no intensity estimate for rlp == 0")
    if rlp < 1 or tlp < 1:
        raise ValueError("rlp and tlp must be >= 1")
    return rlp * tlp


def placement_for(estimate: float, alpha: float) -> Placement:
    """Threshold rule: PU strictly above alpha, PIM at or below."""
    return Placement.FC_ON_PU if estimate > alpha else Placement.FC_ON_FCPIM


def initial_placement(batch_size: int, spec_len: int, alpha: float) -> Placement:
    """Placement decided before serving starts, from the configured batch
    size and speculation length."""
    if batch_size < 1 or spec_len < 1:
        raise ValueError("batch_size and spec_len must be >= 1")
    return placement_for(estimate_ai(batch_size, spec_len), alpha)


@dataclass
class SchedulerState:
    """Mutable scheduler registers for one simulation run."""

    alpha: float
    tlp_register: int
    current_placement: Placement
    rlp: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.tlp_register < 1:
            raise ValueError("tlp_register must be >= 1")
        if self.rlp < 0:
            raise ValueError("rlp must be >= 0")


@dataclass(frozen=True)
class StepResult:
    state: "SchedulerState"
    directive: Optional[Placement]  # set iff the placement flipped
    drained: bool = False


def runtime_step(
    state: SchedulerState,
    iteration_outputs: Sequence["TokenEmission"],
    new_tlp: Optional[int] = None,
) -> StepResult:
    """Process one iteration's outputs and decide whether to migrate FC.

    Gathers the per-request emissions, subtracts finished requests (EOS
    count) from the live-request register, applies any host-signaled TLP
    change, re-estimates the FC intensity and compares it to alpha. A
    directive is returned only when the comparison outcome differs from the
    current placement; the state is updated in place.
    """
    if len(iteration_outputs) != state.rlp:
        raise ValueError(
            f"iteration_outputs has {len(iteration_outputs)} entries, "
            f"scheduler tracks rlp={state.rlp}"
        )
    eos_count = sum(1 for out in iteration_outputs if out.eos)
    if eos_count > state.rlp:
        raise StateCorruptionError(f"EOS count {eos_count} exceeds rlp {state.rlp}")
    state.rlp -= eos_count
    if new_tlp is not None:
        if new_tlp < 1:
            raise ValueError("new_tlp must be >= 1")
        state.tlp_register = new_tlp
    if state.rlp == 0:
        return StepResult(state, directive=None, drained=True)
    wanted = placement_for(estimate_ai(state.rlp, state.tlp_register), state.alpha)
    directive = None
    if wanted is not state.current_placement:
        directive = wanted
        state.current_placement = wanted
    return StepResult(state, directive=directive, drained=False)


# ---------------------------------------------------------------------------
# Offline threshold calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    parallelism: int
    pu_latency: float
    pim_latency: float


@dataclass(frozen=True)
class CalibrationResult:
    alpha: int
    rows: tuple[SweepRow, ...]
    warnings: tuple[str, ...] = field(default=())

    @property
    def sweep_max(self) -> int:
        return self.rows[-1].parallelism if self.rows else 0


def analyze_sweep(rows: Sequence[SweepRow]) -> tuple[int, tuple[str, ...]]:
    """Derive alpha from a latency sweep.

    Alpha is the parallelism just below the first level at which the PU is
    strictly faster; if the PU never wins, alpha is sweep_max + 1 (always
    prefer PIM). Multiple sign changes across the sweep indicate a
    non-monotone crossover and produce a warning alongside the first one.
    """
    if len(rows) < 2:
        raise ValueError("sweep needs at least 2 rows")
    pu_wins = [row.pu_latency < row.pim_latency for row in rows]
    changes = sum(1 for a, b in zip(pu_wins, pu_wins[1:]) if a != b)
    warnings: tuple[str, ...] = ()
    first_win = next((row.parallelism for row, win in zip(rows, pu_wins) if win), None)
    if first_win is not None:
        alpha = first_win - 1
    else:
        alpha = rows[-1].parallelism + 1
    if changes > 1:
        warnings = (
            f"non-monotone crossover: {changes} sign changes in the sweep, "
            f"using the first (alpha={alpha})",
        )
    return alpha, warnings


def calibrate_threshold(
    model: ModelConfig,
    pu: DeviceSpec,
    fcpim: DeviceSpec,
    sweep_max: int = 512,
    pu_utilization: float = 1.0,
    pim_utilization: float = 1.0,
) -> CalibrationResult:
    """Time the FC kernels on both devices over integer parallelism levels
    and derive the placement threshold."""
    if sweep_max < 2:
        raise ValueError("sweep_max must be >= 2")
    rows = tuple(
        SweepRow(
            parallelism=r,
            pu_latency=fc_latency(model, r, 1, pu, pu_utilization),
            pim_latency=fc_latency(model, r, 1, fcpim, pim_utilization),
        )
        for r in range(1, sweep_max + 1)
    )
    alpha, warnings = analyze_sweep(rows)
    return CalibrationResult(alpha=alpha, rows=rows, warnings=warnings)
