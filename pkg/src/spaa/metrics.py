"""Evaluation measures: SSIM, object-region hue distance, scorer contracts.

Closed-form metrics (SSIM, HSV hue L1 against a pure-color reference)
are implemented natively.  Model-based scores (CLIP-style text-image
similarity, grayscale embedding similarity, perceptual background
distance) are pluggable contracts with deterministic stubs so pipelines
run with no model downloads; the stubs are explicitly not faithful to
the real scorers and must not back quality claims.

Images are numpy arrays: grayscale (H, W) or RGB (H, W, 3), float
values in [0, 1] unless a function states otherwise.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

import numpy as np
from scipy.ndimage import correlate1d

from .colors import color_rgb01
from .errors import ScorerUnavailableError, ShapeMismatchError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 1.0


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma conversion (0.299 / 0.587 / 0.114); grayscale passes through."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.asarray(LUMA_WEIGHTS)
    raise ShapeMismatchError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    x = np.arange(size) - half
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def ssim(image_a: np.ndarray, image_b: np.ndarray) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window, sigma 1.5.

    K1 = 0.01, K2 = 0.03, dynamic range 1.0; the mean is taken over
    valid window positions only (no padding).  RGB inputs are converted
    to luma first.
    """
    a = to_grayscale(image_a)
    b = to_grayscale(image_b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)

    def smooth(x: np.ndarray) -> np.ndarray:
        y = correlate1d(x, kernel, axis=0, mode="constant")
        y = correlate1d(y, kernel, axis=1, mode="constant")
        half = SSIM_WINDOW // 2
        return y[half:-half, half:-half]

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a**2
    var_b = smooth(b * b) - mu_b**2
    cov = smooth(a * b) - mu_a * mu_b
    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(ssim_map.mean())


def rgb_to_hsv(image: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV with H in [0, 360) and S, V in [0, 1].

    H is 0 by convention wherever S = 0.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"expected (H, W, 3) image, got {img.shape}")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=2)
    minc = img.min(axis=2)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    h = np.zeros_like(maxc)
    nz = delta > 0
    rc = np.where(nz, (maxc - r) / np.where(nz, delta, 1.0), 0.0)
    gc = np.where(nz, (maxc - g) / np.where(nz, delta, 1.0), 0.0)
    bc = np.where(nz, (maxc - b) / np.where(nz, delta, 1.0), 0.0)
    h = np.where((maxc == r) & nz, bc - gc, h)
    h = np.where((maxc == g) & nz, 2.0 + rc - bc, h)
    h = np.where((maxc == b) & nz, 4.0 + gc - rc, h)
    h = (h * 60.0) % 360.0
    return np.stack([h, s, v], axis=2)


def pure_color_image(color_name: str, width: int, height: int) -> np.ndarray:
    """Constant (height, width, 3) image of a vocabulary color."""
    rgb = color_rgb01(color_name)
    return np.broadcast_to(np.asarray(rgb), (height, width, 3)).copy()


def circular_hue_delta(h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """Shorter arc between hue angles in degrees (359 vs 1 gives 2)."""
    d = np.abs(np.asarray(h1, dtype=np.float64) - np.asarray(h2, dtype=np.float64))
    return np.minimum(d, 360.0 - d)


def hue_l1(
    target_image: np.ndarray, object_mask: np.ndarray, color_name: str
) -> float:
    """Mean absolute HSV distance of masked pixels to the pure color.

    Each channel is scaled to a common [0, 255] range before averaging
    (H by 255/360, S and V by 255); hue is differenced circularly.
    Lower is better; the pure color itself scores 0.
    """
    mask = np.asarray(object_mask, dtype=bool)
    if mask.shape != np.asarray(target_image).shape[:2]:
        raise ShapeMismatchError(
            f"mask shape {mask.shape} does not match image "
            f"{np.asarray(target_image).shape[:2]}"
        )
    if not mask.any():
        raise ValueError("object mask is empty")
    hsv_t = rgb_to_hsv(target_image)[mask]
    ref = rgb_to_hsv(pure_color_image(color_name, 1, 1))[0, 0]
    dh = circular_hue_delta(hsv_t[:, 0], ref[0]) * (255.0 / 360.0)
    ds = np.abs(hsv_t[:, 1] - ref[1]) * 255.0
    dv = np.abs(hsv_t[:, 2] - ref[2]) * 255.0
    return float(np.mean((dh + ds + dv) / 3.0))


# -- pluggable scorers -------------------------------------------------------


@runtime_checkable
class PairScorer(Protocol):
    """Similarity of two images (e.g. grayscale-embedding score)."""

    scorer_id: str

    def score(self, image_a: np.ndarray, image_b: np.ndarray) -> float: ...


@runtime_checkable
class ImageTextScorer(Protocol):
    scorer_id: str

    def score(self, image: np.ndarray, text: str) -> float: ...


@runtime_checkable
class MaskedPairScorer(Protocol):
    scorer_id: str

    def score(
        self, image_a: np.ndarray, image_b: np.ndarray, mask: np.ndarray
    ) -> float: ...


@dataclass
class ScoredValue:
    value: float
    scorer_id: str


def score_with(scorer, *inputs) -> ScoredValue:
    """Run a configured scorer, tagging the result with its provenance."""
    if scorer is None:
        raise ScorerUnavailableError("no scorer adapter configured")
    return ScoredValue(float(scorer.score(*inputs)), scorer.scorer_id)


def block_downsample(gray: np.ndarray, side: int) -> np.ndarray:
    """Mean-pool a grayscale image onto a side x side grid."""
    g = np.asarray(gray, dtype=np.float64)
    rows = np.array_split(g, side, axis=0)
    return np.asarray(
        [[c.mean() for c in np.array_split(r, side, axis=1)] for r in rows]
    )


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0 if na == nb else 0.0
    return float(np.dot(a, b) / (na * nb))


class GrayscaleCosineScorer:
    """Stub pair scorer: cosine of 32x32 block-mean grayscale vectors.

    Monotone enough to exercise threshold logic; not a substitute for a
    learned embedding.
    """

    scorer_id = "stub-grayscale-cosine"

    def __init__(self, side: int = 32):
        self.side = side
        self.calls = 0

    def score(self, image_a: np.ndarray, image_b: np.ndarray) -> float:
        self.calls += 1
        va = block_downsample(to_grayscale(image_a), self.side).ravel()
        vb = block_downsample(to_grayscale(image_b), self.side).ravel()
        return cosine(va, vb)


class BagOfWordsClipStub:
    """Stub image-text scorer: cosine of hashed token-bag vs image sketch.

    The text embedding is a sum of per-token hash vectors, so the score
    is invariant to token order.
    """

    scorer_id = "stub-bow-clip"
    _DIM = 64

    def __init__(self):
        self.calls = 0

    def _token_vec(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(b"bow:" + token.encode("utf-8"), digest_size=8)
        rng = np.random.default_rng(int.from_bytes(digest.digest(), "little"))
        return rng.standard_normal(self._DIM)

    def score(self, image: np.ndarray, text: str) -> float:
        self.calls += 1
        tokens = text.lower().split()
        if not tokens:
            return 0.0
        text_vec = np.sum([self._token_vec(t) for t in tokens], axis=0)
        side = int(math.isqrt(self._DIM))
        img_vec = block_downsample(to_grayscale(image), side).ravel()
        img_vec = img_vec - img_vec.mean()
        return cosine(text_vec, img_vec)


class MaskedMseLpipsStub:
    """Stub perceptual distance: masked MSE (0 for identical regions)."""

    scorer_id = "stub-masked-mse"

    def __init__(self):
        self.calls = 0

    def score(
        self, image_a: np.ndarray, image_b: np.ndarray, mask: np.ndarray
    ) -> float:
        self.calls += 1
        a = to_grayscale(image_a)
        b = to_grayscale(image_b)
        m = np.asarray(mask, dtype=bool)
        if not m.any():
            return 0.0
        return float(np.mean((a[m] - b[m]) ** 2))


@dataclass
class MetricReport:
    """Per-pair evaluation row; model-based fields stay absent (None)
    when no adapter is configured, never fabricated as zeros."""

    pair_id: str
    ssim: float
    hue_l1: Optional[float] = None
    clip_score: Optional[ScoredValue] = None
    dino_gray: Optional[ScoredValue] = None
    lpips_bg: Optional[ScoredValue] = None
    masks_used: Optional[str] = None
    skipped: Optional[dict[str, str]] = None

    def to_json_dict(self) -> dict:
        out: dict = {"pair_id": self.pair_id, "ssim": self.ssim}
        if self.hue_l1 is not None:
            out["hue_l1"] = self.hue_l1
        for name in ("clip_score", "dino_gray", "lpips_bg"):
            scored = getattr(self, name)
            if scored is not None:
                out[name] = {"value": scored.value, "scorer_id": scored.scorer_id}
        if self.masks_used is not None:
            out["masks_used"] = self.masks_used
        if self.skipped:
            out["skipped"] = self.skipped
        return out
