"""PNG I/O and image-layout conversions shared by the pipeline modules."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def chw_to_hwc(image: np.ndarray) -> np.ndarray:
    return np.transpose(np.asarray(image), (1, 2, 0))


def float_to_u8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def u8_to_float(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) / 255.0


def save_png(path: Path | str, image_u8: np.ndarray) -> None:
    """Write an (H, W, 3) or (H, W) uint8 array; byte-deterministic."""
    arr = np.asarray(image_u8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(Path(path), format="PNG")


def load_png(path: Path | str) -> np.ndarray:
    """Read a PNG as uint8, RGB for color files, (H, W) for grayscale."""
    with Image.open(Path(path)) as img:
        if img.mode in ("L", "1"):
            return np.asarray(img.convert("L"))
        return np.asarray(img.convert("RGB"))


def save_mask_png(path: Path | str, mask: np.ndarray) -> None:
    save_png(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def load_mask_png(path: Path | str) -> np.ndarray:
    return load_png(path) > 127
