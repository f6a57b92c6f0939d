"""Adapter construction from config, plus the registration extension point.

Stub adapters ship with the package; production adapters (a hosted VLM
judge, embedding scorers, grounded detection, promptable segmentation)
are registered by the integrator under a kind name and configured by
URL plus the *name* of the environment variable holding their
credential — the credential itself never enters a config file.
"""

from __future__ import annotations

from typing import Any, Callable

from .errors import ScorerUnavailableError
from .engine.stubs import (
    BoxFillSegmenter,
    CenteredBoxDetector,
    ConstantScorer,
    FailingJudge,
    FailingScorer,
    FullFrameSegmenter,
    GrayscaleCosineScorer,
    NoDetection,
    StubJudge,
)
from .metrics import BagOfWordsClipStub, MaskedMseLpipsStub

AdapterFactory = Callable[[dict], Any]

_REGISTRY: dict[tuple[str, str], AdapterFactory] = {
    ("judge", "stub-yes"): lambda cfg: StubJudge("yes"),
    ("judge", "stub-no"): lambda cfg: StubJudge("no"),
    ("judge", "stub-failing"): lambda cfg: FailingJudge(),
    ("scorer", "stub-grayscale-cosine"): lambda cfg: GrayscaleCosineScorer(),
    ("scorer", "stub-constant"): lambda cfg: ConstantScorer(cfg.get("value", 1.0)),
    ("scorer", "stub-failing"): lambda cfg: FailingScorer(),
    ("detector", "stub-centered-box"): lambda cfg: CenteredBoxDetector(
        cfg.get("fraction", 0.5)
    ),
    ("detector", "stub-none"): lambda cfg: NoDetection(),
    ("segmenter", "stub-box-fill"): lambda cfg: BoxFillSegmenter(),
    ("segmenter", "stub-full-frame"): lambda cfg: FullFrameSegmenter(),
    ("dino_gray", "stub-grayscale-cosine"): lambda cfg: GrayscaleCosineScorer(),
    ("dino_gray", "stub-constant"): lambda cfg: ConstantScorer(cfg.get("value", 1.0)),
    ("clip", "stub-bow-clip"): lambda cfg: BagOfWordsClipStub(),
    ("lpips", "stub-masked-mse"): lambda cfg: MaskedMseLpipsStub(),
}


def register_adapter(role: str, kind: str, factory: AdapterFactory) -> None:
    """Install a factory for (role, kind); later registrations win."""
    _REGISTRY[(role, kind)] = factory


def build_adapter(role: str, adapter_config: dict):
    kind = adapter_config["kind"]
    factory = _REGISTRY.get((role, kind))
    if factory is None:
        raise ScorerUnavailableError(
            f"no adapter registered for role {role!r} kind {kind!r}; "
            f"register one with spaa.adapters.register_adapter"
        )
    return factory(adapter_config)


# Diffusion backends: the config key is "toy" or "adapter:<name>", the
# latter resolved through this registry so real-model wrappers plug in
# without touching the CLI.
_BACKEND_REGISTRY: dict[str, Callable[[dict], Any]] = {}


def register_backend(name: str, factory: Callable[[dict], Any]) -> None:
    _BACKEND_REGISTRY[name] = factory


def build_backend(generation_config: dict):
    from .toy_backend import ToyDenoiser

    spec = generation_config["backend"]
    if spec == "toy":
        return ToyDenoiser(arch_seed=generation_config["arch_seed"])
    if spec.startswith("adapter:"):
        name = spec.split(":", 1)[1]
        factory = _BACKEND_REGISTRY.get(name)
        if factory is None:
            raise ScorerUnavailableError(
                f"no diffusion backend registered under {name!r}; register one "
                f"with spaa.adapters.register_backend"
            )
        return factory(generation_config)
    raise ValueError(
        f"backend must be 'toy' or 'adapter:<name>', got {spec!r}"
    )
