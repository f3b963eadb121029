"""Object-centric geometry: ray/cuboid tests, occlusion, view selection.

Cuboids are oriented boxes: ``half_extents`` along local +x/+y/+z, local
frame mapped to world by ``orientation`` (w, x, y, z quaternion) and
``center``. Corner order is fixed as the sign pattern
(-,-,-), (-,-,+), (-,+,-), (-,+,+), (+,-,-), (+,-,+), (+,+,-), (+,+,+)
over (x, y, z); downstream code indexes into it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cameras import Camera
from .errors import BehindCamera, CameraInsideTarget
from .rotations import quat_to_matrix

_CORNER_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))

# Face layout: axis (0..2) and sign of the outward normal in the local frame.
_FACES = tuple((axis, sign) for axis in range(3) for sign in (-1.0, 1.0))


@dataclass(frozen=True)
class Cuboid:
    center: np.ndarray  # (3,)
    half_extents: np.ndarray  # (3,) positive
    orientation: np.ndarray  # (4,) unit quaternion, local -> world

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=np.float64))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=np.float64))
        if np.any(self.half_extents <= 0):
            raise ValueError("half_extents must be positive")

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def corners(self) -> np.ndarray:
        """(8, 3) world corners in the fixed sign order."""
        local = _CORNER_SIGNS * self.half_extents
        return local @ self.rotation_matrix.T + self.center

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation_matrix

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation_matrix.T + self.center

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(self.to_local(points)) <= self.half_extents + 1e-12, axis=-1)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # need not be unit length; t is in units of |direction|


def ray_box_intersect(
    origins: np.ndarray, directions: np.ndarray, box: Cuboid
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slab test in the box frame for rays (N, 3)/(N, 3) or single (3,).

    Returns (hit, t_near, t_far) with line parameters t such that
    origin + t * direction lies on the box boundary; hit requires the
    forward half-line (t >= 0) to overlap the box. Misses return
    t_near=+inf, t_far=-inf. A ray parallel to a slab counts as inside
    that slab iff its origin lies within the slab (boundary included).
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if o.shape != d.shape or o.shape[-1] != 3:
        raise ValueError(f"origins/directions shapes {o.shape}/{d.shape} do not match (N, 3)")
    scalar = np.asarray(origins).ndim == 1

    r = quat_to_matrix(box.orientation)
    o_l = (o - box.center) @ r
    d_l = d @ r
    h = box.half_extents

    t_lo = np.full(o_l.shape[0], -np.inf)
    t_hi = np.full(o_l.shape[0], np.inf)
    inside_parallel = np.ones(o_l.shape[0], dtype=bool)
    for ax in range(3):
        da = d_l[:, ax]
        oa = o_l[:, ax]
        par = np.abs(da) < 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h[ax] - oa) / da
            t2 = (h[ax] - oa) / da
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        t_lo = np.where(par, t_lo, np.maximum(t_lo, lo))
        t_hi = np.where(par, t_hi, np.minimum(t_hi, hi))
        inside_parallel &= np.where(par, np.abs(oa) <= h[ax], True)

    hit = (t_lo <= t_hi) & (t_hi >= 0.0) & inside_parallel
    t_near = np.where(hit, t_lo, np.inf)
    t_far = np.where(hit, t_hi, -np.inf)
    if scalar:
        return bool(hit[0]), float(t_near[0]), float(t_far[0])
    return hit, t_near, t_far


def _face_grid(box: Cuboid, axis: int, sign: float, g: int) -> np.ndarray:
    """g*g stratified cell-center samples on one face, in world coordinates."""
    u_ax, v_ax = [a for a in range(3) if a != axis]
    ticks = (np.arange(g) + 0.5) / g * 2.0 - 1.0  # cell centers in [-1, 1]
    uu, vv = np.meshgrid(ticks, ticks)
    local = np.zeros((g * g, 3))
    local[:, axis] = sign * box.half_extents[axis]
    local[:, u_ax] = uu.ravel() * box.half_extents[u_ax]
    local[:, v_ax] = vv.ravel() * box.half_extents[v_ax]
    return box.to_world(local)


def occlusion_fraction(
    target: Cuboid,
    camera_center: np.ndarray,
    occluders: list[Cuboid],
    n_samples: int = 64,
) -> float:
    """Fraction of camera-facing surface samples whose view is blocked.

    Sampling is deterministic: each camera-facing face gets a square grid of
    cell-center points, sized so the total is close to ``n_samples``. A
    sample is blocked when its segment to the camera center intersects any
    occluder strictly between the endpoints.
    """
    eye = np.asarray(camera_center, dtype=np.float64)
    if bool(target.contains(eye[None, :])[0]):
        raise CameraInsideTarget("camera center lies inside the target cuboid")

    r = target.rotation_matrix
    facing = []
    for axis, sign in _FACES:
        normal = sign * r[:, axis]
        face_center = target.center + sign * target.half_extents[axis] * r[:, axis]
        if float(np.dot(eye - face_center, normal)) > 0.0:
            facing.append((axis, sign))
    if not facing:  # numerically possible only with the eye on the surface
        return 0.0

    g = max(1, int(round(np.sqrt(n_samples / len(facing)))))
    points = np.concatenate([_face_grid(target, ax, s, g) for ax, s in facing])
    if not occluders:
        return 0.0

    seg = eye - points  # blocked iff any box cuts t in (0, 1)
    blocked = np.zeros(len(points), dtype=bool)
    for box in occluders:
        hit, t_near, t_far = ray_box_intersect(points, seg, box)
        eps = 1e-9
        blocked |= hit & (np.minimum(t_far, 1.0 - eps) >= np.maximum(t_near, eps))
    return float(np.count_nonzero(blocked)) / float(len(points))


@dataclass(frozen=True)
class CuboidProjection:
    corners_px: np.ndarray  # (8, 2), NaN where behind the camera
    corners_valid: np.ndarray  # (8,) bool
    aabb: np.ndarray  # (4,) xmin, ymin, xmax, ymax over valid corners
    fully_in_front: bool


def project_cuboid(camera: Camera, box: Cuboid) -> CuboidProjection:
    """Project the 8 corners; AABB covers the valid ones.

    Raises BehindCamera when no corner projects (the box is entirely
    outside the camera's forward field).
    """
    px, valid = camera.project(box.corners())
    if not np.any(valid):
        raise BehindCamera("no cuboid corner is visible from the camera")
    vp = px[valid]
    aabb = np.array([vp[:, 0].min(), vp[:, 1].min(), vp[:, 0].max(), vp[:, 1].max()])
    return CuboidProjection(
        corners_px=px,
        corners_valid=valid,
        aabb=aabb,
        fully_in_front=bool(np.all(valid)),
    )


def mask_bbox(mask: np.ndarray) -> np.ndarray | None:
    """Tight continuous-coordinate bbox (xmin, ymin, xmax, ymax) of a boolean mask."""
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if xs.size == 0:
        return None
    return np.array([xs.min(), ys.min(), xs.max() + 1.0, ys.max() + 1.0], dtype=np.float64)


def _rect_iou(a: np.ndarray, b: np.ndarray) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
    area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0.0 else 0.0


def mask_cuboid_iou(mask: np.ndarray, projection: CuboidProjection) -> float:
    """IoU between the mask's bbox and the projected cuboid's AABB.

    An empty mask scores 0 (maximally misaligned) rather than raising:
    the filter stage treats it as a reject, not an error.
    """
    mb = mask_bbox(mask)
    if mb is None:
        return 0.0
    return _rect_iou(mb, projection.aabb)


@dataclass(frozen=True)
class FilterConfig:
    min_px: float = 64.0
    border_px: float = 2.0
    d_min: float = 3.0
    d_max: float = 60.0
    max_occlusion: float = 0.3
    min_mask_iou: float = 0.5


@dataclass
class ViewCandidate:
    """One (frame, track) observation scored for selection."""

    camera_id: str
    frame_index: int
    timestamp: float
    direction: np.ndarray  # unit vector, object center -> camera, object frame
    distance: float
    projection: CuboidProjection
    image_size: tuple  # (width, height)
    occlusion: float
    mask_iou: float | None = None
    flags: set = field(default_factory=set)


def quality_filter(candidate: ViewCandidate, config: FilterConfig) -> tuple[bool, set]:
    """Apply the five keep/reject predicates; returns (keep, flags).

    Flags: LowResolution (projected bbox shorter side under min_px),
    Truncated (a corner behind the camera, or the bbox within border_px of
    the image edge), OutOfDistanceRange, Occluded, MaskMisaligned (skipped
    when no mask is available).
    """
    flags = set()
    aabb = candidate.projection.aabb
    w, h = aabb[2] - aabb[0], aabb[3] - aabb[1]
    if min(w, h) < config.min_px:
        flags.add("LowResolution")
    iw, ih = candidate.image_size
    if (
        not candidate.projection.fully_in_front
        or aabb[0] < config.border_px
        or aabb[1] < config.border_px
        or aabb[2] > iw - config.border_px
        or aabb[3] > ih - config.border_px
    ):
        flags.add("Truncated")
    if not (config.d_min <= candidate.distance <= config.d_max):
        flags.add("OutOfDistanceRange")
    if candidate.occlusion > config.max_occlusion:
        flags.add("Occluded")
    if candidate.mask_iou is not None and candidate.mask_iou < config.min_mask_iou:
        flags.add("MaskMisaligned")
    return (not flags), flags


def fps_orientations(
    directions: np.ndarray,
    k: int,
    seed_index: int = 0,
    min_angle_deg: float = 15.0,
) -> list[int]:
    """Greedy farthest-point selection over unit viewing directions.

    Starts from seed_index, then repeatedly adds the direction maximizing
    the minimum angular distance to the selected set. Stops at k picks or
    when the best remaining candidate is closer than min_angle_deg to the
    set. Ties resolve to the lowest index.
    """
    dirs = np.asarray(directions, dtype=np.float64)
    if dirs.ndim != 2 or dirs.shape[1] != 3 or dirs.shape[0] == 0:
        raise ValueError(f"directions must be (N, 3) with N >= 1, got {dirs.shape}")
    n = dirs.shape[0]
    if not (0 <= seed_index < n):
        raise ValueError(f"seed_index {seed_index} out of range for {n} directions")
    if k < 1:
        return []
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("directions must be nonzero")
    dirs = dirs / norms

    min_rad = np.radians(min_angle_deg)
    selected = [int(seed_index)]
    picked = np.zeros(n, dtype=bool)
    picked[seed_index] = True
    min_angle = np.arccos(np.clip(dirs @ dirs[seed_index], -1.0, 1.0))
    while len(selected) < k and not picked.all():
        masked = np.where(picked, -np.inf, min_angle)
        best = int(np.argmax(masked))
        if masked[best] < min_rad:
            break
        selected.append(best)
        picked[best] = True
        min_angle = np.minimum(min_angle, np.arccos(np.clip(dirs @ dirs[best], -1.0, 1.0)))
    return selected
