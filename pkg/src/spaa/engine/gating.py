"""Semantic-similarity gating and attribute-leakage filtering.

The similarity gate scores grayscale versions of the source/target
images and keeps the pair only when the score clears a per-kind
threshold (0.98 for color, 0.90 for material by default — color edits
must preserve structure almost exactly, material edits inherently
change texture).  The leakage filter counts changed background pixels
between the images and discards the pair when the count exceeds 50.
"""

from __future__ import annotations

from typing import Optional, Protocol, runtime_checkable

import numpy as np

from ..errors import DetectionMissError, ShapeMismatchError
from ..metrics import PairScorer, to_grayscale
from .pairs import Verdict

SIMILARITY_THRESHOLDS = {"color": 0.98, "material": 0.90}
LEAKAGE_THRESHOLD = 50
LEAKAGE_REFERENCE_PIXELS = 512 * 512
PIXEL_TOLERANCE = 0  # 8-bit units; strictly non-zero differences count


def similarity_gate(
    scorer: PairScorer,
    source_image: np.ndarray,
    target_image: np.ndarray,
    attribute_kind: str,
    thresholds: Optional[dict[str, float]] = None,
) -> Verdict:
    """Score grayscale source vs target; pass iff score >= threshold."""
    if np.asarray(source_image).shape != np.asarray(target_image).shape:
        raise ShapeMismatchError(
            f"image shapes differ: {np.asarray(source_image).shape} vs "
            f"{np.asarray(target_image).shape}"
        )
    table = dict(SIMILARITY_THRESHOLDS)
    if thresholds:
        table.update(thresholds)
    if attribute_kind not in table:
        raise ValueError(f"no similarity threshold for kind {attribute_kind!r}")
    threshold = table[attribute_kind]
    try:
        score = float(
            scorer.score(to_grayscale(source_image), to_grayscale(target_image))
        )
    except Exception as exc:
        return Verdict(
            "pending",
            {
                "threshold": threshold,
                "error": f"{type(exc).__name__}: {exc}",
                "retryable": True,
            },
        )
    status = "pass" if score >= threshold else "fail"
    return Verdict(
        status,
        {"score": score, "threshold": threshold, "scorer_id": scorer.scorer_id},
    )


@runtime_checkable
class GroundedDetector(Protocol):
    """Text-grounded object detection: subject phrase -> boxes."""

    def detect(self, image: np.ndarray, subject: str) -> list[tuple[int, int, int, int]]:
        """Boxes as (top, left, bottom, right), best first."""
        ...


@runtime_checkable
class Segmenter(Protocol):
    def segment(
        self, image: np.ndarray, box: tuple[int, int, int, int]
    ) -> np.ndarray:
        """Boolean object mask of the image's spatial shape."""
        ...


def background_mask(
    detector: GroundedDetector,
    segmenter: Segmenter,
    image: np.ndarray,
    subject: str,
) -> np.ndarray:
    """Invert the detected object's segmentation mask.

    Raises DetectionMissError when the detector returns no box; the
    caller flags the pair for triage instead of auto-accepting it.
    """
    boxes = detector.detect(image, subject)
    if not boxes:
        raise DetectionMissError(f"no detection for subject {subject!r}")
    object_mask = np.asarray(segmenter.segment(image, boxes[0]), dtype=bool)
    if object_mask.shape != np.asarray(image).shape[:2]:
        raise ShapeMismatchError(
            f"mask shape {object_mask.shape} does not match image "
            f"{np.asarray(image).shape[:2]}"
        )
    return ~object_mask


def leakage_count(
    source_image: np.ndarray,
    target_image: np.ndarray,
    bg_mask: np.ndarray,
    pixel_tolerance: int = PIXEL_TOLERANCE,
) -> int:
    """Background pixels whose max-channel 8-bit difference exceeds tolerance."""
    src = np.asarray(source_image)
    tgt = np.asarray(target_image)
    mask = np.asarray(bg_mask, dtype=bool)
    if src.shape != tgt.shape or mask.shape != src.shape[:2]:
        raise ShapeMismatchError(
            f"shapes disagree: source {src.shape}, target {tgt.shape}, "
            f"mask {mask.shape}"
        )
    if pixel_tolerance < 0:
        raise ValueError(f"pixel_tolerance must be >= 0, got {pixel_tolerance}")
    diff = np.abs(src.astype(np.int16) - tgt.astype(np.int16))
    if diff.ndim == 3:
        diff = diff.max(axis=2)
    return int((diff[mask] > pixel_tolerance).sum())


def leakage_threshold(
    image_shape: tuple[int, ...],
    base_threshold: int = LEAKAGE_THRESHOLD,
    scale_with_area: bool = True,
) -> int:
    """Discard threshold for a given image size.

    The base value is calibrated at 512x512; with ``scale_with_area``
    (default) it scales proportionally to the pixel count so the filter
    stays equally strict at other sizes.
    """
    if not scale_with_area:
        return base_threshold
    pixels = image_shape[0] * image_shape[1]
    return round(base_threshold * pixels / LEAKAGE_REFERENCE_PIXELS)


def leakage_verdict(count: int, threshold: int) -> Verdict:
    """Keep iff the count does not exceed (strictly) the threshold."""
    status = "pass" if count <= threshold else "fail"
    return Verdict(status, {"count": count, "threshold": threshold})
