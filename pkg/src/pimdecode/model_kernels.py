"""Per-iteration decoder kernel accounting.

Each decoding iteration of a transformer decoder runs four kernel families:
QKV generation, multi-head attention over the KV cache, the output
projection, and the feedforward network. All of them are GEMV-shaped at
decode time. This module counts their FLOPs and byte traffic per iteration
(aggregated over layers) and derives arithmetic intensities.

Conventions: one multiply-accumulate counts as 2 FLOPs, byte counts scale
with the scalar width, FLOP counts do not. Softmax and normalization work
is omitted (well under 1% of the GEMV totals).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence


class KernelKind(Enum):
    QKV = "qkv"
    ATTENTION = "attention"
    PROJECTION = "projection"
    FFN = "ffn"
    # Synthetic aggregate of QKV + projection + FFN, used for reporting and
    # classification; never produced by iteration_workload itself.
    FC = "fc"


FC_KINDS = (KernelKind.QKV, KernelKind.PROJECTION, KernelKind.FFN)

_ALLOWED_DTYPE_BYTES = (1, 2, 4)


@dataclass(frozen=True)
class ModelConfig:
    """Transformer decoder shape from which all kernel work derives."""

    name: str
    num_layers: int
    hidden_dim: int
    num_heads: int
    head_dim: int
    ffn_dim: int
    dtype_bytes: int = 2  # FP16 default

    def __post_init__(self):
        for field in ("num_layers", "hidden_dim", "num_heads", "head_dim", "ffn_dim"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1, got {getattr(self, field)}")
        if self.num_heads * self.head_dim != self.hidden_dim:
            raise ValueError(
                f"num_heads * head_dim must equal hidden_dim: "
                f"{self.num_heads} * {self.head_dim} != {self.hidden_dim}"
            )
        if self.dtype_bytes not in _ALLOWED_DTYPE_BYTES:
            raise ValueError(f"dtype_bytes must be one of {_ALLOWED_DTYPE_BYTES}")

    @property
    def fc_weight_bytes(self) -> int:
        """Total FC weight footprint (QKV + projection + FFN) over all layers."""
        h, f = self.hidden_dim, self.ffn_dim
        per_layer = 3 * h * h + h * h + 2 * h * f
        return per_layer * self.dtype_bytes * self.num_layers


@dataclass(frozen=True)
class KernelWork:
    """Work descriptor for one kernel kind over one decoding iteration."""

    kind: KernelKind
    flops: int
    weight_bytes: int
    activation_bytes: int
    kv_bytes: int = 0

    def __post_init__(self):
        if self.kind is not KernelKind.ATTENTION and self.kv_bytes != 0:
            raise ValueError("kv_bytes must be zero for non-attention kernels")
        for field in ("flops", "weight_bytes", "activation_bytes", "kv_bytes"):
            if getattr(self, field) < 0:
                raise ValueError(f"{field} must be non-negative")

    @property
    def total_bytes(self) -> int:
        return self.weight_bytes + self.activation_bytes + self.kv_bytes

    @property
    def arithmetic_intensity(self) -> float:
        if self.total_bytes == 0:
            raise ValueError("zero-byte work has no arithmetic intensity")
        return self.flops / self.total_bytes


def fc_works(model: ModelConfig, rlp: int, tlp: int) -> list[KernelWork]:
    """FC-family work (QKV, projection, FFN) for one iteration, all layers.

    With T = rlp * tlp tokens per iteration and hidden dim h, each layer does
    dense GEMVs against a (h, 3h) QKV weight, a (h, h) projection weight and
    the (h, ffn)+(ffn, h) FFN pair. Activation traffic counts the input and
    output token vectors of each GEMV, including the FFN intermediate.
    """
    if rlp < 1 or tlp < 1:
        raise ValueError("rlp and tlp must be >= 1")
    h, f, d, n = model.hidden_dim, model.ffn_dim, model.dtype_bytes, model.num_layers
    t = rlp * tlp
    qkv = KernelWork(
        kind=KernelKind.QKV,
        flops=2 * t * h * 3 * h * n,
        weight_bytes=3 * h * h * d * n,
        activation_bytes=(t * h + 3 * t * h) * d * n,
    )
    proj = KernelWork(
        kind=KernelKind.PROJECTION,
        flops=2 * t * h * h * n,
        weight_bytes=h * h * d * n,
        activation_bytes=2 * t * h * d * n,
    )
    ffn = KernelWork(
        kind=KernelKind.FFN,
        flops=2 * t * h * f * 2 * n,
        weight_bytes=2 * h * f * d * n,
        activation_bytes=2 * t * (h + f) * d * n,
    )
    return [qkv, proj, ffn]


def attention_work(model: ModelConfig, tlp: int, ctx_lens: Sequence[int]) -> KernelWork:
    """Multi-head attention work for one iteration over all layers.

    Per request with context length L: score GEMV (t x L per head) plus the
    weighted sum over V, 4*t*L*h FLOPs per layer. KV traffic reads the K and
    V matrices once; activation traffic covers the query/output vectors and
    the t x L score matrix per head at scalar width.
    """
    if tlp < 1:
        raise ValueError("tlp must be >= 1")
    if not ctx_lens:
        raise ValueError("ctx_lens must be non-empty")
    if any(length < 1 for length in ctx_lens):
        raise ValueError("all context lengths must be >= 1")
    h, d, n = model.hidden_dim, model.dtype_bytes, model.num_layers
    total_ctx = sum(ctx_lens)
    rlp = len(ctx_lens)
    return KernelWork(
        kind=KernelKind.ATTENTION,
        flops=4 * tlp * total_ctx * h * n,
        weight_bytes=0,
        activation_bytes=(2 * rlp * tlp * h + model.num_heads * tlp * total_ctx) * d * n,
        kv_bytes=2 * total_ctx * h * d * n,
    )


def iteration_workload(
    model: ModelConfig, rlp: int, tlp: int, ctx_lens: Sequence[int]
) -> list[KernelWork]:
    """All four kernel descriptors for one decoding iteration.

    ``ctx_lens`` holds the per-request context length (prompt plus generated
    tokens so far) and must have exactly ``rlp`` entries.
    """
    if rlp != len(ctx_lens):
        raise ValueError(f"rlp ({rlp}) must match len(ctx_lens) ({len(ctx_lens)})")
    qkv, proj, ffn = fc_works(model, rlp, tlp)
    attn = attention_work(model, tlp, ctx_lens)
    return [qkv, attn, proj, ffn]


def fc_aggregate(works: Sequence[KernelWork]) -> KernelWork:
    """Merge the FC-family entries of a workload into one descriptor."""
    parts = [w for w in works if w.kind in FC_KINDS]
    if not parts:
        raise ValueError("no FC kernels in workload")
    return KernelWork(
        kind=KernelKind.FC,
        flops=sum(w.flops for w in parts),
        weight_bytes=sum(w.weight_bytes for w in parts),
        activation_bytes=sum(w.activation_bytes for w in parts),
    )


def fc_ai_exact(rlp: int, tlp: int, h: int) -> float:
    """Arithmetic intensity of a representative (h, h) FC GEMV.

    With R = rlp * tlp input rows: 2*R*h^2 FLOPs over (2*R*h + h^2) scalars
    of traffic. Equals R*h / (2R + h); approaches R for large h.
    """
    if rlp < 1 or tlp < 1 or h < 1:
        raise ValueError("rlp, tlp and h must be >= 1")
    r = rlp * tlp
    return (r * h * h * 2) / ((2 * r * h + h * h) * 2)


def attention_ai(tlp: int, ctx_len: int, model: ModelConfig) -> float:
    """Arithmetic intensity of attention for a single request.

    Independent of the number of batched requests by construction: batching
    adds no KV reuse, so FLOPs and bytes scale together with the batch.
    """
    if ctx_len < 1:
        raise ValueError("ctx_len must be >= 1")
    work = attention_work(model, tlp, [ctx_len])
    return work.arithmetic_intensity


def kv_cache_bytes(model: ModelConfig, ctx_len: int) -> int:
    """KV-cache footprint of one request at the given context length."""
    if ctx_len < 0:
        raise ValueError("ctx_len must be >= 0")
    return 2 * ctx_len * model.hidden_dim * model.dtype_bytes * model.num_layers
