"""Pinhole and f-theta camera models, crop rectification, per-pixel ray maps.

Pixel convention, fixed for the whole package: pixel (ix, iy) covers the
unit square [ix, ix+1) x [iy, iy+1) and is sampled at its center
(ix + 0.5, iy + 0.5). Projection returns continuous coordinates in that
frame: u grows to the right, v grows downward. Camera axes are +x right,
+y down, +z forward (the optical axis).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BehindCamera, OutOfImage, RootFindFailure, ShapeMismatch
from .rotations import RigidTransform, look_at, quat_from_axis_angle, quat_multiply

MONOTONICITY_GRID = 10_000
BISECTION_TOL_RAD = 1e-10


class FovClampWarning(UserWarning):
    """Requested rectification fov fell outside the allowed range and was clamped."""


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform  # world -> camera

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.pose.inverse().translation

    @property
    def fov_x_deg(self) -> float:
        return float(np.degrees(2.0 * np.arctan(self.width / (2.0 * self.fx))))

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points (..., 3) to pixels (..., 2).

        Returns (px, valid); points behind the camera (z_cam <= 0) are
        flagged invalid and get NaN coordinates.
        """
        p = self.pose.apply(np.asarray(points, dtype=np.float64))
        z = p[..., 2]
        valid = z > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * p[..., 0] / z + self.cx
            v = self.fy * p[..., 1] / z + self.cy
        px = np.stack([u, v], axis=-1)
        px[~valid] = np.nan
        return px, valid

    def unproject(self, px: np.ndarray, depth) -> np.ndarray:
        """World point at pixel(s) px and z-depth ``depth`` (meters along the optical axis)."""
        px = np.asarray(px, dtype=np.float64)
        self._check_in_image(px)
        depth = np.asarray(depth, dtype=np.float64)
        x = (px[..., 0] - self.cx) / self.fx * depth
        y = (px[..., 1] - self.cy) / self.fy * depth
        p_cam = np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1)
        return self.pose.inverse().apply(p_cam)

    def ray_directions(self, px: np.ndarray) -> np.ndarray:
        """Unit ray directions in world coordinates for continuous pixels (..., 2)."""
        px = np.asarray(px, dtype=np.float64)
        x = (px[..., 0] - self.cx) / self.fx
        y = (px[..., 1] - self.cy) / self.fy
        d = np.stack([x, y, np.ones_like(x)], axis=-1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return self.pose.inverse().apply_direction(d)

    def _check_in_image(self, px: np.ndarray) -> None:
        u, v = px[..., 0], px[..., 1]
        if np.any(u < -1e-9) or np.any(u > self.width + 1e-9) or np.any(v < -1e-9) or np.any(v > self.height + 1e-9):
            raise OutOfImage(f"pixel outside image bounds {self.width}x{self.height}")

    def to_dict(self) -> dict:
        return {
            "model": "pinhole",
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "rotation": [float(x) for x in self.pose.rotation],
            "translation": [float(x) for x in self.pose.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "PinholeCamera":
        return PinholeCamera(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            pose=RigidTransform(np.array(d["rotation"]), np.array(d["translation"])),
        )


@dataclass(frozen=True)
class FThetaCamera:
    """Fisheye model with image radius polynomial in the off-axis angle.

    r(theta) = poly[0]*theta + poly[1]*theta^3 + poly[2]*theta^5 + ...
    (pixels; theta in radians). ``max_theta`` is the field-of-view
    half-angle; r must be strictly increasing on [0, max_theta], which is
    checked numerically at construction.
    """

    poly: np.ndarray
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform
    max_theta: float = field(default=np.radians(100.0))

    def __post_init__(self):
        poly = np.atleast_1d(np.asarray(self.poly, dtype=np.float64))
        object.__setattr__(self, "poly", poly)
        if poly.size < 1 or poly[0] <= 0:
            raise ValueError("f-theta polynomial needs a positive leading focal term")
        if not (0 < self.max_theta <= np.pi):
            raise ValueError(f"max_theta must lie in (0, pi], got {self.max_theta}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}")
        grid = np.linspace(0.0, self.max_theta, MONOTONICITY_GRID)
        r = self._radius(grid)
        if np.any(np.diff(r) <= 0.0):
            raise ValueError("f-theta radius polynomial is not strictly increasing on [0, max_theta]")

    def _radius(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        r = np.zeros_like(theta)
        for i, k in enumerate(self.poly):
            r = r + k * theta ** (2 * i + 1)
        return r

    @property
    def center(self) -> np.ndarray:
        return self.pose.inverse().translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points; invalid when theta exceeds max_theta."""
        p = self.pose.apply(np.asarray(points, dtype=np.float64))
        rho = np.hypot(p[..., 0], p[..., 1])
        theta = np.arctan2(rho, p[..., 2])
        valid = theta <= self.max_theta + 1e-12
        r = self._radius(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(rho > 0.0, r / np.where(rho == 0.0, 1.0, rho), 0.0)
        u = self.cx + scale * p[..., 0]
        v = self.cy + scale * p[..., 1]
        px = np.stack([u, v], axis=-1)
        px[~valid] = np.nan
        return px, valid

    def _invert_radius(self, r: np.ndarray) -> np.ndarray:
        """theta such that radius(theta) == r, by bisection on [0, max_theta]."""
        r = np.asarray(r, dtype=np.float64)
        r_max = float(self._radius(np.array(self.max_theta)))
        if np.any(r > r_max * (1.0 + 1e-9)) or np.any(r < 0.0):
            raise RootFindFailure("pixel radius outside the invertible fov range")
        lo = np.zeros_like(r)
        hi = np.full_like(r, self.max_theta)
        # ~60 halvings of [0, pi] land below 1e-10 rad.
        n_iter = int(np.ceil(np.log2(self.max_theta / BISECTION_TOL_RAD))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self._radius(mid) < r
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def unproject(self, px: np.ndarray, depth) -> np.ndarray:
        """World point at pixel(s) px and ``depth`` meters along the ray.

        Range-along-ray is used (not z-depth): beyond 90 deg off-axis the
        z coordinate is no longer positive, so it cannot parameterize depth.
        """
        px = np.asarray(px, dtype=np.float64)
        self._check_in_image(px)
        d = self._ray_dirs_cam(px) * np.asarray(depth, dtype=np.float64)[..., None]
        return self.pose.inverse().apply(d)

    def _ray_dirs_cam(self, px: np.ndarray) -> np.ndarray:
        du = px[..., 0] - self.cx
        dv = px[..., 1] - self.cy
        r = np.hypot(du, dv)
        theta = self._invert_radius(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_r = np.where(r > 0.0, 1.0 / np.where(r == 0.0, 1.0, r), 0.0)
        st = np.sin(theta)
        return np.stack([st * du * inv_r, st * dv * inv_r, np.cos(theta)], axis=-1)

    def ray_directions(self, px: np.ndarray) -> np.ndarray:
        return self.pose.inverse().apply_direction(self._ray_dirs_cam(np.asarray(px, dtype=np.float64)))

    def _check_in_image(self, px: np.ndarray) -> None:
        u, v = px[..., 0], px[..., 1]
        if np.any(u < -1e-9) or np.any(u > self.width + 1e-9) or np.any(v < -1e-9) or np.any(v > self.height + 1e-9):
            raise OutOfImage(f"pixel outside image bounds {self.width}x{self.height}")

    def to_dict(self) -> dict:
        return {
            "model": "f-theta",
            "poly": [float(k) for k in self.poly],
            "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "max_theta": float(self.max_theta),
            "rotation": [float(x) for x in self.pose.rotation],
            "translation": [float(x) for x in self.pose.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "FThetaCamera":
        return FThetaCamera(
            poly=np.array(d["poly"], dtype=np.float64),
            cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            max_theta=float(d["max_theta"]),
            pose=RigidTransform(np.array(d["rotation"]), np.array(d["translation"])),
        )


Camera = PinholeCamera | FThetaCamera


def camera_from_dict(d: dict) -> Camera:
    if d.get("model") == "pinhole":
        return PinholeCamera.from_dict(d)
    if d.get("model") == "f-theta":
        return FThetaCamera.from_dict(d)
    raise ValueError(f"unknown camera model {d.get('model')!r}")


@dataclass(frozen=True)
class RayMap:
    """Per-pixel rays (origin, direction) in world coordinates."""

    width: int
    height: int
    origins: np.ndarray  # (H, W, 3)
    directions: np.ndarray  # (H, W, 3), unit norm

    def channels(self) -> np.ndarray:
        """Stacked (6, H, W) layout: origin xyz then direction xyz."""
        return np.concatenate([self.origins, self.directions], axis=-1).transpose(2, 0, 1)


@dataclass
class ViewCrop:
    """One rectified object observation.

    ``image`` is float32 (H, W, 3) in [0, 1]; pixels with no source data
    hold the sentinel -1.0 and are False in ``valid_mask``.
    """

    image: np.ndarray
    valid_mask: np.ndarray
    camera: PinholeCamera
    fg_mask: np.ndarray | None = None
    quality_flags: set = field(default_factory=set)
    fov_clamped: bool = False


def pixel_center_grid(width: int, height: int) -> np.ndarray:
    """(H, W, 2) continuous coordinates of all pixel centers."""
    u = np.arange(width, dtype=np.float64) + 0.5
    v = np.arange(height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], axis=-1)


def bilinear_sample(image: np.ndarray, px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample image (H, W, C) at continuous coordinates px (..., 2).

    Valid only where the full 2x2 tap neighborhood is inside the image;
    invalid samples return 0 with valid=False.
    """
    h, w = image.shape[:2]
    x = px[..., 0] - 0.5  # continuous -> pixel-index space
    y = px[..., 1] - 0.5
    eps = 1e-6  # keep exact-boundary samples valid under fp jitter
    valid = np.isfinite(x) & np.isfinite(y) & (x >= -eps) & (x <= w - 1.0 + eps) & (y >= -eps) & (y <= h - 1.0 + eps)
    xc = np.clip(np.nan_to_num(x, nan=0.0), 0.0, w - 1.0)
    yc = np.clip(np.nan_to_num(y, nan=0.0), 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    out = (
        image[y0, x0] * (1 - fx) * (1 - fy)
        + image[y0, x1] * fx * (1 - fy)
        + image[y1, x0] * (1 - fx) * fy
        + image[y1, x1] * fx * fy
    )
    return out, valid


def rectify_crop(
    src: Camera,
    image: np.ndarray,
    look_at_point: np.ndarray,
    fov_deg: float,
    out_size: int,
    fov_range_deg: tuple[float, float] = (10.0, 40.0),
) -> ViewCrop:
    """Resample a source-camera view into a canonical pinhole observation.

    The virtual camera shares the source center, its optical axis passes
    through ``look_at_point``, roll is fixed so world-up projects upward,
    and fx == fy with the principal point at the image center. Out-of-source
    pixels are filled with the sentinel -1 and recorded in the validity mask.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[:2] != (src.height, src.width):
        raise ShapeMismatch(
            f"image shape {image.shape} does not match source camera {src.height}x{src.width}"
        )
    look_at_point = np.asarray(look_at_point, dtype=np.float64)
    center = src.center
    _, vis = src.project(look_at_point[None, :])
    if not bool(vis[0]):
        raise BehindCamera("look_at point is not visible from the source camera")

    fov_clamped = False
    lo, hi = fov_range_deg
    if not (lo <= fov_deg <= hi):
        warnings.warn(f"fov {fov_deg:.2f} deg outside [{lo}, {hi}], clamping", FovClampWarning)
        fov_deg = float(np.clip(fov_deg, lo, hi))
        fov_clamped = True

    f = (out_size / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    virt = PinholeCamera(
        fx=f, fy=f, cx=out_size / 2.0, cy=out_size / 2.0,
        width=out_size, height=out_size,
        pose=look_at(center, look_at_point),
    )

    grid = pixel_center_grid(out_size, out_size)
    dirs = virt.ray_directions(grid.reshape(-1, 2))
    src_px, in_fov = src.project(center + dirs)  # rays are central: any point along the ray works
    samples, in_image = bilinear_sample(image, src_px)
    valid = (in_fov & in_image).reshape(out_size, out_size)
    out = samples.reshape(out_size, out_size, -1).astype(np.float32)
    out[~valid] = -1.0
    return ViewCrop(image=out, valid_mask=valid, camera=virt, fov_clamped=fov_clamped)


def plucker_map(camera: Camera) -> RayMap:
    """Per-pixel-center rays (o, d); o is the camera center for these central models."""
    grid = pixel_center_grid(camera.width, camera.height)
    dirs = camera.ray_directions(grid)
    origins = np.broadcast_to(camera.center, dirs.shape).copy()
    return RayMap(width=camera.width, height=camera.height, origins=origins, directions=dirs)


def generate_target_cameras(
    fov_deg: float,
    distance: float,
    n_views: int = 16,
    elevation_deg: float = 0.0,
    image_size: int = 512,
) -> list[PinholeCamera]:
    """Ring of pinhole cameras looking at the origin.

    Azimuths are uniformly spaced at k*360/n degrees, all cameras share the
    given fov, distance, and elevation.
    """
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if distance <= 0:
        raise ValueError("distance must be positive")
    f = (image_size / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    el = np.radians(elevation_deg)
    cams = []
    for k in range(n_views):
        az = 2.0 * np.pi * k / n_views
        eye = distance * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(
            PinholeCamera(
                fx=f, fy=f, cx=image_size / 2.0, cy=image_size / 2.0,
                width=image_size, height=image_size,
                pose=look_at(eye, np.zeros(3)),
            )
        )
    return cams


def perturb_camera(
    camera: PinholeCamera,
    rng_seed: int,
    fov_jitter_deg: float = 0.0,
    rot_jitter_deg: float = 0.0,
    trans_jitter_m: float = 0.0,
) -> PinholeCamera:
    """Deterministically jitter fov and extrinsics within the given bounds.

    Draw order is fixed (fov, rotation axis, rotation angle, translation) so
    a seed fully determines the output. Zero jitters return the camera
    unchanged, bit for bit.
    """
    if min(fov_jitter_deg, rot_jitter_deg, trans_jitter_m) < 0:
        raise ValueError("jitter magnitudes must be >= 0")
    rng = np.random.default_rng(rng_seed)
    cam = camera

    d_fov = rng.uniform(-fov_jitter_deg, fov_jitter_deg)
    if fov_jitter_deg > 0.0:
        new_fov = float(np.clip(cam.fov_x_deg + d_fov, 1.0, 179.0))
        new_fx = (cam.width / 2.0) / np.tan(np.radians(new_fov) / 2.0)
        cam = replace(cam, fx=new_fx, fy=cam.fy * (new_fx / cam.fx))

    axis = rng.normal(size=3)
    angle = rng.uniform(-np.radians(rot_jitter_deg), np.radians(rot_jitter_deg))
    d_trans = rng.uniform(-trans_jitter_m, trans_jitter_m, size=3)

    if rot_jitter_deg > 0.0 or trans_jitter_m > 0.0:
        center = cam.center
        q = cam.pose.rotation
        if rot_jitter_deg > 0.0:
            q = quat_multiply(quat_from_axis_angle(axis, angle), q)
        new_center = center + (d_trans if trans_jitter_m > 0.0 else 0.0)
        rot = RigidTransform(q, np.zeros(3))
        cam = replace(cam, pose=RigidTransform(q, -rot.apply(new_center)))
    return cam
