"""Diffusion backend contract and the reusable conformance suite.

A backend exposes tokenization, text encoding, seeded latent init, a
hook-aware denoising step, latent decoding, and a stable enumeration of
its attention layers.  The two intervention callbacks are:

* ``self_map(record) -> record`` — fires once per (self layer, head)
  after the map is computed, before the attention output; the returned
  record's map is the one used downstream.
* ``cross_text(ctx, key, value) -> (key, value)`` — fires once per
  cross layer on the full-width projected text Key/Value before head
  split; row transforms here implement attribute amplification.

``observe(record)`` fires for every computed record (self records
post-transform) and is the channel capture stores listen on.  Records
may view backend-owned workspace memory that is reused on the next
step; retain them by cloning (AttentionStore does this by default).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Protocol, runtime_checkable

import numpy as np
import torch

from .attention import AttentionRecord


class AttentionLayerInfo(NamedTuple):
    layer_id: str
    kind: str  # "self" | "cross"
    resolution: int


class CrossAttentionContext(NamedTuple):
    timestep: int
    layer_id: str
    resolution: int


SelfMapHook = Callable[[AttentionRecord], AttentionRecord]
CrossTextHook = Callable[
    [CrossAttentionContext, torch.Tensor, torch.Tensor],
    tuple[torch.Tensor, torch.Tensor],
]
ObserveHook = Callable[[AttentionRecord], None]


@dataclass
class AttentionHooks:
    self_map: Optional[SelfMapHook] = None
    cross_text: Optional[CrossTextHook] = None
    observe: Optional[ObserveHook] = None


IDENTITY_HOOKS = AttentionHooks()


@runtime_checkable
class DiffusionBackend(Protocol):
    """Capabilities a denoising backend must provide."""

    backend_id: str

    def tokenize(self, prompt: str) -> list[str]: ...

    def encode_text(self, prompt: str) -> torch.Tensor: ...

    def init_latent(self, seed: int) -> torch.Tensor: ...

    def denoise_step(
        self,
        latent: torch.Tensor,
        timestep: int,
        embeddings: torch.Tensor,
        hooks: AttentionHooks,
    ) -> torch.Tensor: ...

    def decode(self, latent: torch.Tensor) -> np.ndarray: ...

    def enumerate_attention_layers(self) -> list[AttentionLayerInfo]: ...


@dataclass
class ConformanceReport:
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def run_conformance(
    backend: DiffusionBackend,
    prompt: str = "a photo of a red lamp",
    seed: int = 0,
) -> ConformanceReport:
    """Contract checks any backend adapter must pass.

    Verifies step determinism, layer-enumeration stability, exact hook
    invocation counts, and (when the backend exposes a fingerprint)
    that forward passes leave the weights untouched.
    """
    failures: list[str] = []
    layers = backend.enumerate_attention_layers()
    if layers != backend.enumerate_attention_layers():
        failures.append("enumerate_attention_layers is not stable across calls")
    self_layers = [l for l in layers if l.kind == "self"]
    cross_layers = [l for l in layers if l.kind == "cross"]

    emb = backend.encode_text(prompt)
    latent = backend.init_latent(seed)

    fingerprint_before = None
    if hasattr(backend, "weights_fingerprint"):
        fingerprint_before = backend.weights_fingerprint()

    counts = {"self": 0, "cross": 0, "observed": 0}
    heads_seen: set[tuple[str, int]] = set()

    def count_self(rec: AttentionRecord) -> AttentionRecord:
        counts["self"] += 1
        heads_seen.add((rec.layer_id, rec.head))
        return rec

    def count_cross(ctx, key, value):
        counts["cross"] += 1
        return key, value

    def count_observe(rec: AttentionRecord) -> None:
        counts["observed"] += 1

    hooks = AttentionHooks(count_self, count_cross, count_observe)
    out_a = backend.denoise_step(latent, 0, emb, hooks)
    out_b = backend.denoise_step(latent, 0, emb, AttentionHooks())
    if not torch.equal(out_a, out_b):
        failures.append("denoise_step is not deterministic for identical inputs")

    heads_per_self_layer = {}
    for layer_id, head in heads_seen:
        heads_per_self_layer[layer_id] = max(
            heads_per_self_layer.get(layer_id, 0), head + 1
        )
    expected_self = sum(heads_per_self_layer.get(l.layer_id, 0) for l in self_layers)
    if counts["self"] != expected_self or len(heads_per_self_layer) != len(self_layers):
        failures.append(
            f"self hook fired {counts['self']} times over "
            f"{len(heads_per_self_layer)} layers; expected once per "
            f"(self layer, head) across {len(self_layers)} layers"
        )
    if counts["cross"] != len(cross_layers):
        failures.append(
            f"cross hook fired {counts['cross']} times, expected once per "
            f"cross layer ({len(cross_layers)})"
        )
    if counts["observed"] == 0:
        failures.append("observe hook never fired")

    if fingerprint_before is not None:
        if backend.weights_fingerprint() != fingerprint_before:
            failures.append("weights changed across forward passes")

    return ConformanceReport(failures)


def reraise_with_step_context(exc: Exception, timestep: int, layer_id: str) -> None:
    """Re-raise a hook/backend failure with (timestep, layer) context attached.

    The exception type is preserved so callers can still catch the
    specific failure (e.g. an injection miss aborting a run).
    """
    exc.args = exc.args + (f"at timestep={timestep} layer={layer_id!r}",)
    raise exc
