"""Dual-branch denoising with self-map injection and Value amplification.

Both branches start from the same seeded latent.  At every timestep the
source branch runs first and records its self-attention maps; the
target branch then runs with (a) its self-attention maps replaced by
the source maps at every resolution at or above the gate, and (b) the
cross-attention Value rows of attribute-descriptor tokens scaled by the
schedule's ratio for that step.  Replacing the map injects the source
layout; scaling the Value rows strengthens the descriptor's influence
without touching the attention map itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np
import torch

from .attention import AttentionRecord, AttentionStore, capture_self_only
from .backend import AttentionHooks, CrossAttentionContext, DiffusionBackend
from .errors import InjectionMissError
from .prompts import AnnotatedPrompt, locate_attribute_tokens
from .schedule import InterventionConfig, applied_ratio


def _scale_rows(matrix: torch.Tensor, row_indices, ratio: float, what: str) -> torch.Tensor:
    for idx in row_indices:
        if not 0 <= idx < matrix.shape[0]:
            raise IndexError(
                f"{what} row index {idx} out of range for {matrix.shape[0]} rows"
            )
    if ratio == 1.0:
        return matrix
    out = matrix.clone()
    idx = list(row_indices)
    out[idx] = matrix[idx] * ratio
    return out


def amplify_values(
    value: torch.Tensor, spans, ratio: float
) -> torch.Tensor:
    """Scale attribute-token rows of a cross-attention Value matrix.

    Rows at the span indices are multiplied by ``ratio``; every other
    row is returned bitwise unchanged (ratio 1.0 returns the input
    itself).  ``spans`` is an iterable of token row indices.
    """
    return _scale_rows(value, spans, ratio, "value")


def amplify_keys(key: torch.Tensor, spans, ratio: float) -> torch.Tensor:
    """Ablation-only counterpart of :func:`amplify_values` on Key rows.

    Scaling keys perturbs the attention map itself, which destabilizes
    structure; it is gated behind ``amplify_target="key"``.
    """
    return _scale_rows(key, spans, ratio, "key")


def inject_self_attention(
    target_record: AttentionRecord,
    source_store: AttentionStore,
    gate: int,
) -> AttentionRecord:
    """Replace a target self-attention map with the source branch's map.

    Applies only when the record's resolution is at or above ``gate``
    (inclusive); below it the target record is returned unchanged.
    Q/K/V are never touched.  A missing source record aborts the run:
    silently skipping would corrupt structure preservation with no
    visible symptom.
    """
    if target_record.kind != "self":
        raise ValueError(
            f"injection applies to self-attention records, got kind="
            f"{target_record.kind!r} at layer {target_record.layer_id!r}"
        )
    if target_record.resolution < gate:
        return target_record
    t, layer, head = target_record.store_key
    if (t, layer, head) not in source_store:
        raise InjectionMissError(
            f"no source self-attention map for timestep={t} "
            f"layer={layer!r} head={head} (gate={gate}, "
            f"resolution={target_record.resolution})"
        )
    source = source_store.fetch(t, layer, head)
    return replace(target_record, map=source.map)


@dataclass
class RunTrace:
    """Optional per-run capture for verification and ablation studies."""

    ratios: list[tuple[int, Fraction]] = field(default_factory=list)
    capture_values: bool = False
    # (timestep, layer_id) -> (value before, value after); first-step analyses
    values: dict[tuple[int, str], tuple[torch.Tensor, torch.Tensor]] = field(
        default_factory=dict
    )


def spaa_denoise_pair(
    backend: DiffusionBackend,
    source_prompt: str,
    target_prompt: str,
    attrs: list[str],
    seed: int,
    config: InterventionConfig,
    steps: int,
    source_store: Optional[AttentionStore] = None,
    target_store: Optional[AttentionStore] = None,
    trace: Optional[RunTrace] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the dual-branch loop and decode both final latents.

    Fully deterministic given (backend, seed, prompts, config, steps).
    ``source_store`` / ``target_store`` retain records for post-run
    verification according to their capture policies; ``trace`` logs the
    applied ratio per step and, when ``trace.capture_values`` is set,
    the pre/post cross-attention Value matrices.
    """
    if not source_prompt or not target_prompt:
        raise ValueError("prompts must be nonempty")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    annotated: AnnotatedPrompt = locate_attribute_tokens(
        target_prompt, attrs, backend.tokenize
    )
    span_indices = annotated.attribute_token_indices

    # Separate backend instance for the target branch (when available) so
    # source-step records stay valid while the target step reads them.
    # Without a twin the step store snapshots maps instead of borrowing
    # views, in case the backend reuses workspace memory across steps.
    has_twin = hasattr(backend, "twin")
    target_backend = backend.twin() if has_twin else backend

    src_embeddings = backend.encode_text(source_prompt)
    tgt_embeddings = target_backend.encode_text(target_prompt)
    src_latent = backend.init_latent(seed)
    tgt_latent = src_latent.clone()

    for step in range(steps):
        ratio = applied_ratio(config, step, steps)
        ratio_f = float(ratio)
        if trace is not None:
            trace.ratios.append((step, ratio))

        # Source step: record this step's self maps for injection; they
        # are consumed by the target step below, before the source
        # branch runs again.
        step_store = AttentionStore(
            capture_policy=capture_self_only, copy_on_insert=not has_twin
        )

        def observe_source(rec: AttentionRecord) -> None:
            step_store.record(rec)
            if source_store is not None:
                source_store.record(rec)

        src_latent = backend.denoise_step(
            src_latent, step, src_embeddings, AttentionHooks(observe=observe_source)
        )

        # Target step: inject gated self maps, amplify attribute rows.
        def inject(rec: AttentionRecord) -> AttentionRecord:
            if not config.replace_throughout:
                return rec
            return inject_self_attention(rec, step_store, config.resolution_gate)

        def amplify(
            ctx: CrossAttentionContext, key: torch.Tensor, value: torch.Tensor
        ) -> tuple[torch.Tensor, torch.Tensor]:
            if config.amplify_target == "value":
                new_value = amplify_values(value, span_indices, ratio_f)
                new_key = key
            else:
                new_key = amplify_keys(key, span_indices, ratio_f)
                new_value = value
            if trace is not None and trace.capture_values:
                trace.values[(ctx.timestep, ctx.layer_id)] = (
                    value.clone(),
                    new_value.clone(),
                )
            return new_key, new_value

        def observe_target(rec: AttentionRecord) -> None:
            if target_store is not None:
                target_store.record(rec)

        tgt_latent = target_backend.denoise_step(
            tgt_latent,
            step,
            tgt_embeddings,
            AttentionHooks(
                self_map=inject, cross_text=amplify, observe=observe_target
            ),
        )

    return backend.decode(src_latent), target_backend.decode(tgt_latent)
