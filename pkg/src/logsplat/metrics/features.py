"""Patch-grid feature maps and foreground pooling.

The embedding distances are defined over patch features from a large vision
backbone. Running such a backbone is out of scope here: feature maps are
consumed as precomputed ``.fmap`` files. For self-contained runs and tests
the module provides :func:`color_patch_features`, which average-pools raw
pixel colors per patch. Those features are exactly translation and scale
equivariant, so they exercise the full alignment + pooling math.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    CorruptHeader,
    MissingFile,
    NoForegroundPatches,
    ShapeMismatch,
    TruncatedPayload,
)

# A patch cell counts as foreground when at least half its pixels are masked.
FG_COVERAGE = 0.5

_MAGIC = "FMAP"
_VERSION = 1


@dataclass(frozen=True)
class FeatureMap:
    """Per-patch feature vectors on a regular grid.

    values has shape (C, H_p, W_p); patch_size is the pixel edge length of
    one grid cell in the source image.
    """

    values: np.ndarray
    patch_size: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[0] < 1:
            raise ShapeMismatch(f"feature values must be (C, H_p, W_p), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ShapeMismatch("feature values must be finite")
        if self.patch_size < 1:
            raise ShapeMismatch(f"patch_size must be >= 1, got {self.patch_size}")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


def color_patch_features(image: np.ndarray, patch_size: int) -> FeatureMap:
    """Average-pool raw RGB over non-overlapping patches.

    The image extent must be an exact multiple of patch_size in both axes;
    silently dropping edge pixels would break the patch/pixel correspondence
    the mask downsampling relies on.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image, got {img.shape}")
    h, w = img.shape[:2]
    if h % patch_size or w % patch_size:
        raise ShapeMismatch(
            f"image {h}x{w} not divisible by patch_size {patch_size}"
        )
    hp, wp = h // patch_size, w // patch_size
    pooled = img.reshape(hp, patch_size, wp, patch_size, 3).mean(axis=(1, 3))
    return FeatureMap(pooled.transpose(2, 0, 1).astype(np.float32), patch_size)


def downsample_mask(mask: np.ndarray, patch_size: int) -> np.ndarray:
    """Reduce a pixel mask to the patch grid by the coverage rule."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected (H, W) mask, got {m.shape}")
    h, w = m.shape
    if h % patch_size or w % patch_size:
        raise ShapeMismatch(f"mask {h}x{w} not divisible by patch_size {patch_size}")
    hp, wp = h // patch_size, w // patch_size
    cov = m.reshape(hp, patch_size, wp, patch_size).mean(axis=(1, 3))
    return cov >= FG_COVERAGE


def pooled_embedding(features: FeatureMap, mask: np.ndarray) -> np.ndarray:
    """Mean feature vector over foreground patches.

    mask may be given at pixel resolution (patch_size * grid) or already on
    the patch grid; pixel masks are reduced with the coverage rule first.
    """
    hp, wp = features.grid_shape
    m = np.asarray(mask, dtype=bool)
    if m.shape == (hp, wp):
        patch_mask = m
    elif m.shape == (hp * features.patch_size, wp * features.patch_size):
        patch_mask = downsample_mask(m, features.patch_size)
    else:
        raise ShapeMismatch(
            f"mask shape {m.shape} matches neither the patch grid ({hp}, {wp}) "
            f"nor its pixel extent"
        )
    if not patch_mask.any():
        raise NoForegroundPatches("no patch reaches the foreground coverage threshold")
    sel = features.values[:, patch_mask].astype(np.float64)
    return sel.mean(axis=1)


def save_features(path, features: FeatureMap) -> None:
    hp, wp = features.grid_shape
    header = (
        f"{_MAGIC} {_VERSION}\n"
        f"channels {features.channels}\n"
        f"grid {hp} {wp}\n"
        f"patch {features.patch_size}\n"
        f"end_header\n"
    )
    buf = io.BytesIO()
    buf.write(header.encode("ascii"))
    buf.write(np.ascontiguousarray(features.values, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_features(path) -> FeatureMap:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"feature file not found: {p}")
    raw = p.read_bytes()
    marker = b"end_header\n"
    idx = raw.find(marker)
    if idx < 0:
        raise CorruptHeader(f"{p}: missing end_header")
    lines = raw[:idx].decode("ascii", errors="replace").splitlines()
    fields = {}
    for ln in lines:
        parts = ln.split()
        if parts:
            fields[parts[0]] = parts[1:]
    if fields.get(_MAGIC) != [str(_VERSION)]:
        raise CorruptHeader(f"{p}: expected '{_MAGIC} {_VERSION}' header")
    try:
        c = int(fields["channels"][0])
        hp, wp = int(fields["grid"][0]), int(fields["grid"][1])
        patch = int(fields["patch"][0])
    except (KeyError, IndexError, ValueError) as exc:
        raise CorruptHeader(f"{p}: malformed header field ({exc})") from exc
    payload = raw[idx + len(marker):]
    need = c * hp * wp * 4
    if len(payload) < need:
        raise TruncatedPayload(f"{p}: expected {need} payload bytes, got {len(payload)}")
    values = np.frombuffer(payload[:need], dtype="<f4").reshape(c, hp, wp)
    return FeatureMap(values.copy(), patch)
