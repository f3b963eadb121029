"""Body-part partition of pedestrian masks and the part-aware distance.

Keypoints come from an external pose model and are consumed as JSON files;
the partition itself is purely geometric. Each foreground pixel is assigned
to the nearest skeleton bone segment, and segments are grouped into six
parts: head, torso, left/right arms, left/right legs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    InsufficientKeypoints,
    MissingFile,
    NoCommonParts,
    NoForegroundPatches,
    SchemaViolation,
    ShapeMismatch,
)
from .alignment import cosine_distance
from .features import FeatureMap, pooled_embedding

# Fixed order doubles as the distance tie-break: earlier part wins.
PART_NAMES = ("head", "torso", "left_arm", "right_arm", "left_leg", "right_leg")

BACKGROUND_LABEL = -1

# Bones per part, named by their keypoint endpoints. A bone participates
# only when both endpoints were detected; a part with no live bone is
# simply absent from the label map rather than an error.
_PART_SEGMENTS: dict[str, tuple[tuple[str, str], ...]] = {
    "head": (("neck", "head"),),
    "torso": (
        ("neck", "pelvis"),
        ("left_shoulder", "right_shoulder"),
        ("left_hip", "right_hip"),
    ),
    "left_arm": (("left_shoulder", "left_elbow"), ("left_elbow", "left_wrist")),
    "right_arm": (("right_shoulder", "right_elbow"), ("right_elbow", "right_wrist")),
    "left_leg": (("left_hip", "left_knee"), ("left_knee", "left_ankle")),
    "right_leg": (("right_hip", "right_knee"), ("right_knee", "right_ankle")),
}

KEYPOINT_NAMES = tuple(sorted({n for segs in _PART_SEGMENTS.values() for a, b in segs for n in (a, b)}))

DEFAULT_MIN_CONFIDENCE = 0.3


@dataclass(frozen=True)
class Keypoint:
    xy: np.ndarray
    confidence: float

    def __post_init__(self):
        p = np.asarray(self.xy, dtype=np.float64)
        if p.shape != (2,) or not np.all(np.isfinite(p)):
            raise SchemaViolation(f"keypoint xy must be a finite 2-vector, got {self.xy}")
        object.__setattr__(self, "xy", p)


def load_keypoints(path) -> dict[str, Keypoint]:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"keypoint file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{p}: invalid JSON ({exc})") from exc
    pts = doc.get("points")
    if not isinstance(pts, dict):
        raise SchemaViolation(f"{p}: expected top-level 'points' object")
    out = {}
    for name, rec in pts.items():
        if not isinstance(rec, dict) or "xy" not in rec:
            raise SchemaViolation(f"{p}: point '{name}' missing 'xy'")
        out[name] = Keypoint(
            xy=np.asarray(rec["xy"], dtype=np.float64),
            confidence=float(rec.get("confidence", 1.0)),
        )
    return out


def save_keypoints(path, points: dict[str, Keypoint]) -> None:
    doc = {
        "points": {
            name: {"xy": [float(kp.xy[0]), float(kp.xy[1])], "confidence": float(kp.confidence)}
            for name, kp in points.items()
        }
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class PartLabelMap:
    """Per-pixel part labels over a foreground mask.

    labels holds an index into PART_NAMES, BACKGROUND_LABEL outside the
    mask and for parts with no detected bone.
    """

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int8)
        if lab.ndim != 2:
            raise ShapeMismatch(f"labels must be (H, W), got {lab.shape}")
        object.__setattr__(self, "labels", lab)

    @property
    def visible_parts(self) -> tuple[str, ...]:
        present = np.unique(self.labels)
        return tuple(PART_NAMES[i] for i in present if i >= 0)

    def part_mask(self, name: str) -> np.ndarray:
        return self.labels == PART_NAMES.index(name)


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=-1)


def partition_parts(
    mask: np.ndarray,
    keypoints: dict[str, Keypoint],
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> PartLabelMap:
    """Label each foreground pixel with its nearest body part.

    Keypoints below min_confidence count as missing. The torso anchors
    (neck, pelvis) are mandatory; limbs degrade gracefully to absent parts.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected (H, W) mask, got {m.shape}")
    live = {
        name: kp.xy
        for name, kp in keypoints.items()
        if kp.confidence >= min_confidence
    }
    if "neck" not in live or "pelvis" not in live:
        raise InsufficientKeypoints(
            "need at least neck and pelvis keypoints above the confidence threshold"
        )

    ys, xs = np.nonzero(m)
    labels = np.full(m.shape, BACKGROUND_LABEL, dtype=np.int8)
    if xs.size == 0:
        return PartLabelMap(labels)
    pix = np.stack([xs + 0.5, ys + 0.5], axis=-1).astype(np.float64)

    part_dist = np.full((len(PART_NAMES), pix.shape[0]), np.inf)
    for pi, part in enumerate(PART_NAMES):
        for a_name, b_name in _PART_SEGMENTS[part]:
            if a_name in live and b_name in live:
                d = _segment_distances(pix, live[a_name], live[b_name])
                np.minimum(part_dist[pi], d, out=part_dist[pi])
    # argmin returns the first minimum, which realizes the fixed-order
    # tie-break since rows follow PART_NAMES.
    best = np.argmin(part_dist, axis=0)
    best_dist = part_dist[best, np.arange(pix.shape[0])]
    assigned = np.isfinite(best_dist)
    labels[ys[assigned], xs[assigned]] = best[assigned].astype(np.int8)
    return PartLabelMap(labels)


def ed_p(
    feat_r: FeatureMap,
    parts_r: PartLabelMap,
    feat_gt: FeatureMap,
    parts_gt: PartLabelMap,
) -> float:
    """Mean per-part embedding distance over parts visible on both sides.

    A part only participates when it yields at least one foreground patch
    in both feature grids; thin limbs can vanish under the patch coverage
    rule even though they own a few pixels.
    """
    if feat_r.channels != feat_gt.channels:
        raise ShapeMismatch(
            f"channel mismatch: {feat_r.channels} vs {feat_gt.channels}"
        )
    common = [p for p in PART_NAMES if p in parts_r.visible_parts and p in parts_gt.visible_parts]
    dists = []
    for part in common:
        try:
            e_r = pooled_embedding(feat_r, parts_r.part_mask(part))
            e_gt = pooled_embedding(feat_gt, parts_gt.part_mask(part))
        except NoForegroundPatches:
            continue
        dists.append(cosine_distance(e_r, e_gt))
    if not dists:
        raise NoCommonParts("no body part is visible in both views at patch resolution")
    return float(np.mean(dists))
