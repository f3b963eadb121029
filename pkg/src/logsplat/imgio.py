"""PNG load/save with a fixed in-memory convention: float32 RGB in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingFile


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG as float32 (H, W, 3) in [0, 1]; alpha is dropped."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"image not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write float (H, W, 3) in [0, 1] as 8-bit PNG (values clipped)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def load_mask(path: str | Path) -> np.ndarray:
    """Read a grayscale PNG as a boolean mask (pixel > 127)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"mask not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L").save(path)
