"""Request traces, batching policies and speculative token accounting.

Trace file format, one request per line:

    id,arrival_seconds,input_len,output_len

A header line is allowed and ignored; lines starting with '#' are comments.
Event lines of the form ``@t,set_tlp,k`` change the speculation length at
simulation time t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .model_kernels import ModelConfig, kv_cache_bytes


class RequestState(Enum):
    WAITING = 0
    PREFILLING = 1
    DECODING = 2
    DONE = 3


@dataclass
class Request:
    id: int
    arrival_time: float
    input_len: int
    output_len: int
    generated: int = 0
    state: RequestState = RequestState.WAITING

    def __post_init__(self):
        if self.input_len < 1 or self.output_len < 1:
            raise ValueError(
                f"request {self.id}: input_len and output_len must be >= 1"
            )
        if self.arrival_time < 0:
            raise ValueError(f"request {self.id}: arrival_time must be >= 0")

    @property
    def context_len(self) -> int:
        return self.input_len + self.generated

    @property
    def remaining(self) -> int:
        return self.output_len - self.generated

    def advance(self, state: RequestState) -> None:
        if state.value < self.state.value:
            raise ValueError(f"request {self.id}: state may only move forward")
        self.state = state


@dataclass(frozen=True)
class TraceEvent:
    time: float
    kind: str  # only "set_tlp" for now
    value: int


@dataclass(frozen=True)
class Trace:
    requests: tuple[Request, ...]
    events: tuple[TraceEvent, ...] = ()
    source: str = "inline"


class TraceParseError(ValueError):
    pass


def load_trace(path: str | Path) -> Trace:
    """Parse a trace file; requests come back sorted by arrival time."""
    path = Path(path)
    requests: list[Request] = []
    events: list[TraceEvent] = []
    seen_data = False
    with path.open() as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("@"):
                events.append(_parse_event(line, lineno))
                continue
            fields = line.split(",")
            if not seen_data and not _is_int(fields[0]):
                continue  # optional header
            seen_data = True
            if len(fields) != 4:
                raise TraceParseError(f"line {lineno}: expected 4 fields, got {len(fields)}")
            try:
                req = Request(
                    id=int(fields[0]),
                    arrival_time=float(fields[1]),
                    input_len=int(fields[2]),
                    output_len=int(fields[3]),
                )
            except ValueError as exc:
                raise TraceParseError(f"line {lineno}: {exc}") from exc
            requests.append(req)
    requests.sort(key=lambda r: (r.arrival_time, r.id))
    events.sort(key=lambda e: e.time)
    return Trace(requests=tuple(requests), events=tuple(events), source=str(path))


def _is_int(token: str) -> bool:
    try:
        int(token)
        return True
    except ValueError:
        return False


def _parse_event(line: str, lineno: int) -> TraceEvent:
    fields = line[1:].split(",")
    if len(fields) != 3 or fields[1] != "set_tlp":
        raise TraceParseError(f"line {lineno}: malformed event line {line!r}")
    try:
        time, value = float(fields[0]), int(fields[2])
    except ValueError as exc:
        raise TraceParseError(f"line {lineno}: {exc}") from exc
    if value < 1:
        raise TraceParseError(f"line {lineno}: set_tlp value must be >= 1")
    return TraceEvent(time=time, kind="set_tlp", value=value)


def write_trace(trace: Trace, path: str | Path, header_comment: str = "") -> None:
    path = Path(path)
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("id,arrival_seconds,input_len,output_len")
    for req in trace.requests:
        lines.append(f"{req.id},{req.arrival_time:.6f},{req.input_len},{req.output_len}")
    for event in trace.events:
        lines.append(f"@{event.time:.6f},{event.kind},{event.value}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Synthetic traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LengthDist:
    """Token-length distribution: fixed, uniform, or lognormal by median."""

    kind: str  # fixed | uniform | lognormal
    p1: float  # fixed value / uniform low / lognormal median
    p2: float = 0.0  # uniform high / lognormal sigma

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            value = self.p1
        elif self.kind == "uniform":
            value = rng.integers(int(self.p1), int(self.p2) + 1)
        elif self.kind == "lognormal":
            value = rng.lognormal(mean=math.log(self.p1), sigma=self.p2)
        else:
            raise ValueError(f"unknown length distribution {self.kind!r}")
        return max(1, int(round(value)))


# Rough long-output and short-output presets; stand-ins, not measured fits.
TRACE_PRESETS: dict[str, tuple[LengthDist, LengthDist]] = {
    "creative-writing-like": (
        LengthDist("lognormal", 128, 0.6),
        LengthDist("lognormal", 256, 0.8),
    ),
    "general-qa-like": (
        LengthDist("lognormal", 128, 0.6),
        LengthDist("lognormal", 48, 0.6),
    ),
}


def synth_trace(
    count: int,
    input_dist: LengthDist,
    output_dist: LengthDist,
    seed: int,
    arrival_rate: float = 0.0,
) -> Trace:
    """Deterministic synthetic trace. ``arrival_rate`` > 0 draws Poisson
    arrivals at that many requests per second; otherwise everything arrives
    at t = 0."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    now = 0.0
    requests = []
    for rid in range(count):
        if arrival_rate > 0:
            now += float(rng.exponential(1.0 / arrival_rate))
        requests.append(
            Request(
                id=rid,
                arrival_time=now,
                input_len=input_dist.sample(rng),
                output_len=output_dist.sample(rng),
            )
        )
    return Trace(requests=tuple(requests), source=f"synth(seed={seed})")


# ---------------------------------------------------------------------------
# Batch state and policies
# ---------------------------------------------------------------------------


@dataclass
class BatchState:
    """Live decoding batch: the active request set plus the speculation length."""

    tlp: int
    active: list[Request] = field(default_factory=list)

    def __post_init__(self):
        if self.tlp < 1:
            raise ValueError("tlp must be >= 1")

    @property
    def rlp(self) -> int:
        return len(self.active)

    @property
    def context_lens(self) -> list[int]:
        return [req.context_len for req in self.active]

    def kv_bytes(self, model: ModelConfig) -> int:
        return sum(kv_cache_bytes(model, req.context_len) for req in self.active)


class BatchPolicy(Enum):
    STATIC = "static"
    MIXED_CONTINUOUS = "mixed-continuous"


@dataclass
class KvCapacityChecker:
    """Admission gate on the attention-PIM KV capacity.

    Admission charges a request's peak footprint (prompt plus full output),
    so the live KV total can never outgrow capacity mid-flight.
    """

    model: ModelConfig
    capacity_bytes: int

    def peak_bytes(self, request: Request) -> int:
        return kv_cache_bytes(self.model, request.input_len + request.output_len)

    def committed_bytes(self, batch: BatchState) -> int:
        return sum(self.peak_bytes(req) for req in batch.active)

    def fits(self, batch: BatchState, request: Request) -> bool:
        return self.committed_bytes(batch) + self.peak_bytes(request) <= self.capacity_bytes

    def alone_infeasible(self, request: Request) -> bool:
        return self.peak_bytes(request) > self.capacity_bytes


@dataclass(frozen=True)
class AdmitResult:
    admitted: tuple[Request, ...]
    rejected: tuple[Request, ...]  # single footprint exceeds capacity


def admit(
    batch: BatchState,
    waiting: list[Request],
    policy: BatchPolicy,
    checker: KvCapacityChecker,
    now: float = 0.0,
    batch_size: int = 1,
    max_rlp: Optional[int] = None,
) -> AdmitResult:
    """Move arrived requests from ``waiting`` into the batch.

    Static batching only admits into an empty batch, up to ``batch_size``.
    Mixed continuous batching admits at any iteration boundary while KV
    capacity and ``max_rlp`` allow. Requests whose KV footprint alone
    exceeds capacity are rejected outright; requests that merely do not fit
    right now stay queued. FCFS order is preserved.
    """
    if policy is BatchPolicy.STATIC and batch.active:
        return AdmitResult((), ())
    limit = batch_size if policy is BatchPolicy.STATIC else (max_rlp or len(waiting) + batch.rlp)

    admitted: list[Request] = []
    rejected: list[Request] = []
    while waiting:
        candidate = waiting[0]
        if candidate.arrival_time > now:
            break
        if batch.rlp >= limit:
            break
        if checker.alone_infeasible(candidate):
            waiting.pop(0)
            candidate.advance(RequestState.DONE)
            rejected.append(candidate)
            continue
        if not checker.fits(batch, candidate):
            break
        waiting.pop(0)
        candidate.advance(RequestState.PREFILLING)
        batch.active.append(candidate)
        admitted.append(candidate)
    return AdmitResult(tuple(admitted), tuple(rejected))


@dataclass(frozen=True)
class TokenEmission:
    request_id: int
    tokens: int
    eos: bool


def step_tokens(batch: BatchState, acceptance_rate: float = 1.0) -> list[TokenEmission]:
    """Advance every active request by one speculative decoding iteration.

    Each request accepts floor(tlp * acceptance_rate) tokens, at least one,
    capped at its remaining output budget. Requests that reach their output
    length emit EOS, turn Done and leave the batch.
    """
    if not 0.0 < acceptance_rate <= 1.0:
        raise ValueError("acceptance_rate must be in (0, 1]")
    accepted = max(1, math.floor(batch.tlp * acceptance_rate))
    emissions: list[TokenEmission] = []
    for req in batch.active:
        if req.state is not RequestState.DECODING:
            req.advance(RequestState.DECODING)
        take = min(accepted, req.remaining)
        req.generated += take
        done = req.generated >= req.output_len
        if done:
            req.advance(RequestState.DONE)
        emissions.append(TokenEmission(request_id=req.id, tokens=take, eos=done))
    batch.active = [req for req in batch.active if req.state is not RequestState.DONE]
    return emissions
