"""SVD principal-component heatmaps of self-attention maps.

A self-attention map over N = resolution^2 spatial positions decomposes
as U S V^T; the leading left singular vectors, reshaped onto the
spatial grid, show what layout information the layer carries.  Higher
resolutions expose progressively finer structure.  Left (query-side)
vectors are rendered by default; the right factor is also spatially
indexed and available via ``side="right"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError


@dataclass
class ComponentHeatmap:
    layer_id: Optional[str]
    rank: int
    singular_value: float
    heatmap: np.ndarray  # (resolution, resolution), max-normalized to [0, 1]

    @property
    def resolution(self) -> int:
        return self.heatmap.shape[0]


def principal_components(
    attn_map, k: int, layer_id: Optional[str] = None, side: str = "left"
) -> list[ComponentHeatmap]:
    """Top-k SVD components of a square attention map.

    Each component's heatmap is the singular vector reshaped to
    resolution x resolution, absolute-valued (singular vectors have an
    arbitrary sign) and max-normalized.  Singular values come back in
    descending order.
    """
    m = np.asarray(attn_map, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatchError(
            f"expected a square map, got shape {m.shape}"
        )
    n = m.shape[0]
    res = math.isqrt(n)
    if res * res != n:
        raise ShapeMismatchError(
            f"map side {n} is not a squared resolution"
        )
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    out = []
    for i in range(k):
        vec = u[:, i] if side == "left" else vt[i]
        heat = np.abs(vec).reshape(res, res)
        peak = heat.max()
        if peak > 0:
            heat = heat / peak
        out.append(ComponentHeatmap(layer_id, i, float(s[i]), heat))
    return out


def upscale_nearest(img: np.ndarray, out_size: int) -> np.ndarray:
    n = img.shape[0]
    idx = (np.arange(out_size) * n) // out_size
    return img[np.ix_(idx, idx)]


def upscale_bilinear(img: np.ndarray, out_size: int) -> np.ndarray:
    """Align-corners bilinear upscaling (closed form, endpoint-exact)."""
    n = img.shape[0]
    if n == 1:
        return np.full((out_size, out_size), img[0, 0], dtype=np.float64)
    pos = np.arange(out_size) * (n - 1) / (out_size - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    rows = (
        img[lo][:, lo] * np.outer(1 - frac, 1 - frac)
        + img[lo][:, hi] * np.outer(1 - frac, frac)
        + img[hi][:, lo] * np.outer(frac, 1 - frac)
        + img[hi][:, hi] * np.outer(frac, frac)
    )
    return rows


def render_heatmaps(
    components: list[ComponentHeatmap],
    out_size: int = 512,
    mode: str = "bilinear",
    out_dir: Optional[Path | str] = None,
) -> list[np.ndarray]:
    """Upscale component heatmaps to a uniform size; optionally write PNGs.

    Emits one grayscale PNG per component plus a k-wide contact sheet
    when ``out_dir`` is given.  Returns the upscaled float arrays.
    """
    if not components:
        raise ValueError("components must be nonempty")
    if mode == "bilinear":
        scale = upscale_bilinear
    elif mode == "nearest":
        scale = upscale_nearest
    else:
        raise ValueError(f"mode must be 'bilinear' or 'nearest', got {mode!r}")
    images = [scale(c.heatmap, out_size) for c in components]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        layer = _slugify(components[0].layer_id or "layer")
        for comp, img in zip(components, images):
            Image.fromarray(_to_u8(img), mode="L").save(
                out_dir / f"{layer}_c{comp.rank:02d}.png"
            )
        sheet = np.concatenate(images, axis=1)
        Image.fromarray(_to_u8(sheet), mode="L").save(
            out_dir / f"{layer}_top{len(components)}.png"
        )
    return images


def write_singular_value_report(
    components: list[ComponentHeatmap], path: Path | str
) -> None:
    payload = {
        "layer_id": components[0].layer_id if components else None,
        "singular_values": [c.singular_value for c in components],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _slugify(name: str) -> str:
    import re

    return re.sub(r"[^A-Za-z0-9._-]+", "-", name)
