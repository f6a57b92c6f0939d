"""Attention tensors, scaled dot-product attention, and a per-run record store.

All tensors are 32-bit floats.  Maps are post-softmax probabilities: every
row is a distribution over key positions.  Records computed inside a
backend step may view backend-owned workspace memory; an
:class:`AttentionStore` therefore clones tensors on insert unless
constructed with ``copy_on_insert=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import torch

from .errors import (
    AttentionStoreConflict,
    AttentionStoreMiss,
    InvalidRecordError,
    MissingTextConditioningError,
    ShapeMismatchError,
)

ROW_SUM_TOL = 1e-6

StoreKey = tuple[int, str, int]  # (timestep, layer_id, head)


def row_softmax(logits: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = logits - logits.max(dim=-1, keepdim=True).values
    e = shifted.exp()
    return e / e.sum(dim=-1, keepdim=True)


def row_softmax_(buf: torch.Tensor) -> torch.Tensor:
    """In-place row softmax over the last dim of ``buf`` (used by hot paths)."""
    buf.sub_(buf.max(dim=-1, keepdim=True).values)
    buf.exp_()
    buf.div_(buf.sum(dim=-1, keepdim=True))
    return buf


def scaled_dot_attention(
    query: torch.Tensor, key: torch.Tensor, value: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Compute ``softmax(Q K^T / sqrt(d_k)) V``.

    Args:
        query: (n_q, d_k)
        key:   (n_k, d_k)
        value: (n_k, d_v)

    Returns:
        (output, map): ``output`` is (n_q, d_v); ``map`` is the (n_q, n_k)
        row-stochastic attention map.

    Raises:
        ShapeMismatchError: if query/key inner dims or key/value row
            counts disagree.
    """
    if query.ndim != 2 or key.ndim != 2 or value.ndim != 2:
        raise ShapeMismatchError(
            f"expected 2-D operands, got query{tuple(query.shape)}, "
            f"key{tuple(key.shape)}, value{tuple(value.shape)}"
        )
    if query.shape[1] != key.shape[1]:
        raise ShapeMismatchError(
            f"query/key inner dims differ: query d_k={query.shape[1]}, "
            f"key d_k={key.shape[1]}"
        )
    if key.shape[0] != value.shape[0]:
        raise ShapeMismatchError(
            f"key/value row counts differ: key n_k={key.shape[0]}, "
            f"value n_k={value.shape[0]}"
        )
    scale = 1.0 / math.sqrt(query.shape[1])
    attn_map = row_softmax((query * scale) @ key.T)
    return attn_map @ value, attn_map


def attention_map_into(
    query: torch.Tensor,
    key: torch.Tensor,
    out: torch.Tensor,
    chunk_rows: int = 2048,
) -> torch.Tensor:
    """Write ``row_softmax(Q K^T / sqrt(d_k))`` into a preallocated buffer.

    Row chunks bound the working set and the map is written to memory
    exactly once; numerically equivalent to :func:`scaled_dot_attention`'s
    map (the fused library softmax is avoided here: its row sums drift
    past the 1e-6 stochasticity tolerance at large widths).
    ``out`` must be (n_q, n_k).
    """
    n_q = query.shape[0]
    scale = 1.0 / math.sqrt(query.shape[1])
    q_scaled = query * scale
    key_t = key.T.contiguous()
    for start in range(0, n_q, chunk_rows):
        rows = slice(start, min(start + chunk_rows, n_q))
        torch.mm(q_scaled[rows], key_t, out=out[rows])
        row_softmax_(out[rows])
    return out


def project_qkv(
    spatial_features: torch.Tensor,
    f_q: torch.Tensor,
    f_k: torch.Tensor,
    f_v: torch.Tensor,
    kind: str = "self",
    text_embedding: Optional[torch.Tensor] = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Apply the Q/K/V linear projections.

    For ``kind="self"`` all three projections consume ``spatial_features``;
    for ``kind="cross"`` the key/value projections consume
    ``text_embedding`` so the prompt conditions the synthesis through the
    key and value matrices.
    """
    if kind not in ("self", "cross"):
        raise ValueError(f"kind must be 'self' or 'cross', got {kind!r}")
    if kind == "cross":
        if text_embedding is None:
            raise MissingTextConditioningError(
                "cross-attention projection requires a text embedding"
            )
        source = text_embedding
    else:
        source = spatial_features
    return spatial_features @ f_q, source @ f_k, source @ f_v


@dataclass
class AttentionRecord:
    """One attention computation at one (layer, timestep, head).

    ``map`` is row-stochastic over key positions.  For self-attention
    the key axis equals the query axis (``resolution**2`` spatial
    positions); for cross-attention it is the prompt token axis.
    """

    layer_id: str
    kind: str  # "self" | "cross"
    resolution: int
    timestep: int
    head: int
    query: torch.Tensor
    key: torch.Tensor
    value: torch.Tensor
    map: torch.Tensor

    @property
    def store_key(self) -> StoreKey:
        return (self.timestep, self.layer_id, self.head)

    def validate(self) -> None:
        """Check structural invariants; raise InvalidRecordError on violation."""
        n_q, n_k = self.map.shape
        if self.kind not in ("self", "cross"):
            raise InvalidRecordError(f"unknown kind {self.kind!r}")
        if n_q != self.resolution**2:
            raise InvalidRecordError(
                f"{self.layer_id}: map has {n_q} query rows, expected "
                f"resolution^2 = {self.resolution ** 2}"
            )
        if self.kind == "self" and n_q != n_k:
            raise InvalidRecordError(
                f"{self.layer_id}: self-attention map must be square, got "
                f"{n_q}x{n_k}"
            )
        if self.query.shape[0] != n_q or self.key.shape[0] != n_k:
            raise InvalidRecordError(
                f"{self.layer_id}: Q/K rows do not match map {n_q}x{n_k}"
            )
        if self.value.shape[0] != n_k:
            raise InvalidRecordError(
                f"{self.layer_id}: value has {self.value.shape[0]} rows, "
                f"map has {n_k} key columns"
            )
        if float(self.map.min()) < 0.0:
            raise InvalidRecordError(f"{self.layer_id}: map has negative entries")
        row_err = float((self.map.sum(dim=-1) - 1.0).abs().max())
        if row_err > ROW_SUM_TOL:
            raise InvalidRecordError(
                f"{self.layer_id}: map rows deviate from 1 by {row_err:.3e}"
            )

    def clone(self) -> "AttentionRecord":
        return replace(
            self,
            query=self.query.clone(),
            key=self.key.clone(),
            value=self.value.clone(),
            map=self.map.clone(),
        )


CapturePolicy = Callable[[AttentionRecord], bool]


def capture_all(record: AttentionRecord) -> bool:
    """Default policy: keep self maps at all resolutions and all cross maps."""
    return True


def capture_self_only(record: AttentionRecord) -> bool:
    return record.kind == "self"


def capture_self_at_least(resolution: int) -> CapturePolicy:
    return lambda r: r.kind == "self" and r.resolution >= resolution


def capture_self_at_most(resolution: int) -> CapturePolicy:
    return lambda r: r.kind == "self" and r.resolution <= resolution


@dataclass
class AttentionStore:
    """Keyed storage of attention records for injection and analysis.

    Single-writer while a denoising run records into it; read-only use is
    safe afterwards.  At most one record per (timestep, layer_id, head).
    """

    capture_policy: CapturePolicy = capture_all
    copy_on_insert: bool = True
    validate_on_insert: bool = True
    records: dict[StoreKey, AttentionRecord] = field(default_factory=dict)

    def record(self, rec: AttentionRecord) -> bool:
        """Insert ``rec`` if the capture policy retains it.

        Returns True when retained.  Raises AttentionStoreConflict on a
        duplicate key: injection correctness depends on key uniqueness.
        """
        if not self.capture_policy(rec):
            return False
        if self.validate_on_insert:
            rec.validate()
        key = rec.store_key
        if key in self.records:
            raise AttentionStoreConflict(
                f"record already present for timestep={key[0]} "
                f"layer={key[1]!r} head={key[2]}"
            )
        self.records[key] = rec.clone() if self.copy_on_insert else rec
        return True

    def fetch(self, timestep: int, layer_id: str, head: int) -> AttentionRecord:
        try:
            return self.records[(timestep, layer_id, head)]
        except KeyError:
            raise AttentionStoreMiss(
                f"no record for timestep={timestep} layer={layer_id!r} head={head}"
            ) from None

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, key: StoreKey) -> bool:
        return key in self.records

    def iter_records(self) -> Iterable[AttentionRecord]:
        return self.records.values()

    def layer_records(self, layer_id: str) -> list[AttentionRecord]:
        return [r for k, r in sorted(self.records.items()) if k[1] == layer_id]

    def evict_before(self, timestep: int) -> None:
        """Drop records older than ``timestep`` (bounds lockstep-run memory)."""
        stale = [k for k in self.records if k[0] < timestep]
        for k in stale:
            del self.records[k]


def mean_map_over_timesteps(store: AttentionStore, layer_id: str) -> torch.Tensor:
    """Elementwise mean of one layer's maps across retained timesteps and heads.

    The mean of row-stochastic matrices is row-stochastic, so the result
    can be analyzed like any single map.
    """
    maps = [r.map for r in store.layer_records(layer_id)]
    if not maps:
        raise AttentionStoreMiss(f"no records retained for layer {layer_id!r}")
    acc = torch.zeros(maps[0].shape, dtype=torch.float64)
    for m in maps:
        acc += m.to(torch.float64)
    return (acc / len(maps)).to(torch.float32)
