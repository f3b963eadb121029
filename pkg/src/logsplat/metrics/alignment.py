"""Mask-based rigid alignment and the pooled embedding distance.

Before comparing a rendered object against a reference view, the render is
translated so the two mask centroids coincide and scaled about the
reference centroid so the mask areas match. Only then are patch features
pooled and compared; the metric should not punish a reconstruction for
being rendered slightly off-center or at a different apparent size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cameras import bilinear_sample
from ..errors import EmptyGtMask, EmptyRenderMask, ShapeMismatch, ZeroEmbedding
from .features import FeatureMap, pooled_embedding


def mask_centroid(mask: np.ndarray) -> np.ndarray:
    """Centroid of foreground pixel centers, (x, y) in pixels."""
    m = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(m)
    if xs.size == 0:
        raise ValueError("centroid of an empty mask")
    return np.array([xs.mean() + 0.5, ys.mean() + 0.5])


def mask_area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(mask, dtype=bool)))


@dataclass(frozen=True)
class AlignmentTransform:
    """Translate by `translation`, then scale by `scale` about `pivot`.

    All quantities live in pixel coordinates of the reference view;
    pivot is the reference mask centroid.
    """

    translation: np.ndarray
    scale: float
    pivot: np.ndarray

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Forward map of source points into the aligned frame."""
        pts = np.asarray(points, dtype=np.float64)
        return self.pivot + self.scale * (pts + self.translation - self.pivot)

    def invert(self, points: np.ndarray) -> np.ndarray:
        """Aligned-frame points back to source coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.pivot) / self.scale + self.pivot - self.translation


def align_to_gt(
    render_rgb: np.ndarray,
    render_mask: np.ndarray,
    gt_mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, AlignmentTransform]:
    """Resample the render so its mask matches the reference mask.

    Returns the aligned image and mask on the reference canvas plus the
    transform that was applied. RGB is sampled bilinearly, the mask with
    nearest neighbor; samples falling outside the source stay background.
    """
    rgb = np.asarray(render_rgb, dtype=np.float64)
    rm = np.asarray(render_mask, dtype=bool)
    gm = np.asarray(gt_mask, dtype=bool)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) render, got {rgb.shape}")
    if rgb.shape[:2] != rm.shape:
        raise ShapeMismatch(f"render image {rgb.shape[:2]} vs mask {rm.shape}")
    if not rm.any():
        raise EmptyRenderMask("render mask has no foreground")
    if not gm.any():
        raise EmptyGtMask("reference mask has no foreground")

    area_r = mask_area(rm)
    area_gt = mask_area(gm)
    c_r = mask_centroid(rm)
    c_gt = mask_centroid(gm)
    transform = AlignmentTransform(
        translation=c_gt - c_r,
        scale=float(np.sqrt(area_gt / area_r)),
        pivot=c_gt,
    )

    # Identity alignment short-circuits to an exact copy: resampling at the
    # original pixel centers would still pick up pivot-arithmetic rounding,
    # and a render compared against itself must come back bit-identical.
    if rgb.shape[:2] == gm.shape and transform.scale == 1.0 and not transform.translation.any():
        return rgb.astype(np.float32), rm.copy(), transform

    out_h, out_w = gm.shape
    xs = np.arange(out_w) + 0.5
    ys = np.arange(out_h) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    dest = np.stack([gx, gy], axis=-1)
    src = transform.invert(dest)

    values, valid = bilinear_sample(rgb, src)
    aligned_rgb = np.where(valid[..., None], values, 0.0).astype(np.float32)

    # Nearest neighbor keeps the mask binary; pixel index is floor of the
    # continuous coordinate under the half-pixel-center convention.
    ij = np.floor(src).astype(np.int64)
    inside = (
        (ij[..., 0] >= 0)
        & (ij[..., 0] < rm.shape[1])
        & (ij[..., 1] >= 0)
        & (ij[..., 1] < rm.shape[0])
    )
    aligned_mask = np.zeros(gm.shape, dtype=bool)
    ii = np.clip(ij[..., 1], 0, rm.shape[0] - 1)
    jj = np.clip(ij[..., 0], 0, rm.shape[1] - 1)
    aligned_mask[inside] = rm[ii, jj][inside]
    return aligned_rgb, aligned_mask, transform


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), clamped to [0, 2].

    Bit-identical inputs return exactly 0.0; the naive expression leaves
    rounding residue that would make self-distance nonzero.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ShapeMismatch(f"embedding shapes differ: {av.shape} vs {bv.shape}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroEmbedding("cosine distance undefined for a zero embedding")
    if np.array_equal(av, bv):
        return 0.0
    d = 1.0 - float(np.dot(av, bv)) / (na * nb)
    return min(2.0, max(0.0, d))


def ed_r(
    feat_r: FeatureMap,
    mask_r: np.ndarray,
    feat_gt: FeatureMap,
    mask_gt: np.ndarray,
) -> float:
    """Cosine distance between foreground-pooled embeddings.

    Alignment (align_to_gt) happens upstream, before feature extraction;
    this function only pools and compares.
    """
    if feat_r.channels != feat_gt.channels:
        raise ShapeMismatch(
            f"channel mismatch: {feat_r.channels} vs {feat_gt.channels}"
        )
    e_r = pooled_embedding(feat_r, mask_r)
    e_gt = pooled_embedding(feat_gt, mask_gt)
    return cosine_distance(e_r, e_gt)
