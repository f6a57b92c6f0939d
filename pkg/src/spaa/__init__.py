"""Structure-preserving attribute amplification for diffusion denoising.

Dual-branch denoising where the target branch inherits the source
branch's high-resolution self-attention maps (structure preservation)
while the cross-attention Value rows of attribute-descriptor tokens are
scaled by a per-step decaying ratio (attribute amplification).  The
package also ships the dataset engine that verifies, gates, and
serializes generated pairs into instruction-tuning triples, the SVD
attention diagnostics, and the evaluation metric suite — all runnable
at desk scale against a deterministic toy backend.
"""

from .attention import (
    AttentionRecord,
    AttentionStore,
    mean_map_over_timesteps,
    project_qkv,
    row_softmax,
    scaled_dot_attention,
)
from .backend import AttentionHooks, AttentionLayerInfo, DiffusionBackend, run_conformance
from .intervention import (
    RunTrace,
    amplify_keys,
    amplify_values,
    inject_self_attention,
    spaa_denoise_pair,
)
from .prompts import AnnotatedPrompt, AttributeSpan, locate_attribute_tokens
from .schedule import (
    AmplificationSchedule,
    InterventionConfig,
    applied_ratio,
    color_schedule,
    material_schedule,
    ratio_at,
    stage_mask_amplification,
    unit_schedule,
)
from .toy_backend import ToyDenoiser

__version__ = "0.1.0"

__all__ = [
    "AttentionRecord",
    "AttentionStore",
    "mean_map_over_timesteps",
    "project_qkv",
    "row_softmax",
    "scaled_dot_attention",
    "AttentionHooks",
    "AttentionLayerInfo",
    "DiffusionBackend",
    "run_conformance",
    "RunTrace",
    "amplify_keys",
    "amplify_values",
    "inject_self_attention",
    "spaa_denoise_pair",
    "AnnotatedPrompt",
    "AttributeSpan",
    "locate_attribute_tokens",
    "AmplificationSchedule",
    "InterventionConfig",
    "applied_ratio",
    "color_schedule",
    "material_schedule",
    "ratio_at",
    "stage_mask_amplification",
    "unit_schedule",
    "ToyDenoiser",
    "__version__",
]
