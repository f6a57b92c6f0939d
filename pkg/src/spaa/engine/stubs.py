"""Deterministic stand-ins for the model-backed pipeline components.

Production adapters (a VLM judge, grayscale-embedding scorer, grounded
detector, promptable segmenter) are remote/GPU-scale services; these
stubs satisfy the same contracts so every pipeline path is testable
offline.  Each stub counts its calls so gate short-circuiting can be
asserted.
"""

from __future__ import annotations

import numpy as np

from ..metrics import GrayscaleCosineScorer  # re-exported stub pair scorer

__all__ = [
    "StubJudge",
    "FailingJudge",
    "ConstantScorer",
    "FailingScorer",
    "CenteredBoxDetector",
    "NoDetection",
    "BoxFillSegmenter",
    "FullFrameSegmenter",
    "GrayscaleCosineScorer",
]


class StubJudge:
    """Returns a fixed answer (or per-image answers from a mapping)."""

    def __init__(self, answer: str = "yes", per_image: dict[str, str] | None = None):
        self.answer_text = answer
        self.per_image = per_image or {}
        self.calls = 0

    def answer(self, image_ref: str, query: str) -> str:
        self.calls += 1
        return self.per_image.get(image_ref, self.answer_text)


class FailingJudge:
    """Simulates a judge transport failure."""

    def __init__(self, message: str = "judge endpoint unavailable"):
        self.message = message
        self.calls = 0

    def answer(self, image_ref: str, query: str) -> str:
        self.calls += 1
        raise ConnectionError(self.message)


class ConstantScorer:
    scorer_id = "stub-constant"

    def __init__(self, value: float = 1.0):
        self.value = value
        self.calls = 0

    def score(self, image_a: np.ndarray, image_b: np.ndarray) -> float:
        self.calls += 1
        return self.value


class FailingScorer:
    scorer_id = "stub-failing"

    def __init__(self):
        self.calls = 0

    def score(self, image_a: np.ndarray, image_b: np.ndarray) -> float:
        self.calls += 1
        raise ConnectionError("scorer endpoint unavailable")


class CenteredBoxDetector:
    """Detects one box covering the central ``fraction`` of the frame."""

    def __init__(self, fraction: float = 0.5):
        if not 0 < fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {fraction}")
        self.fraction = fraction
        self.calls = 0

    def detect(self, image: np.ndarray, subject: str):
        self.calls += 1
        h, w = np.asarray(image).shape[:2]
        bh, bw = round(h * self.fraction), round(w * self.fraction)
        top, left = (h - bh) // 2, (w - bw) // 2
        return [(top, left, top + bh, left + bw)]


class NoDetection:
    def __init__(self):
        self.calls = 0

    def detect(self, image: np.ndarray, subject: str):
        self.calls += 1
        return []


class BoxFillSegmenter:
    """Object mask = the detector box, filled."""

    def __init__(self):
        self.calls = 0

    def segment(self, image: np.ndarray, box) -> np.ndarray:
        self.calls += 1
        h, w = np.asarray(image).shape[:2]
        top, left, bottom, right = box
        mask = np.zeros((h, w), dtype=bool)
        mask[top:bottom, left:right] = True
        return mask


class FullFrameSegmenter:
    """Marks the whole frame as object (empty background: leakage-free)."""

    def __init__(self):
        self.calls = 0

    def segment(self, image: np.ndarray, box) -> np.ndarray:
        self.calls += 1
        h, w = np.asarray(image).shape[:2]
        return np.ones((h, w), dtype=bool)
