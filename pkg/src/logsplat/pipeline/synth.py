"""Synthetic sensor logs with exact geometric ground truth.

Scenes are colored cuboids ray-cast through the real camera models, so
every downstream stage (projection, occlusion, cropping, selection) can be
checked against analytic truth. Three presets:

    ring8          one cube watched by 8 fisheye cameras on a ring
    occluded_wall  cube + wall with cameras at occlusion 0.0 / 0.5 / 1.0
    blocked        cube fully hidden behind a wall from every camera

synth_scene writes a complete on-disk log (manifest, images, masks) and
returns it loaded through the normal manifest reader, plus a truth table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cameras import Camera, FThetaCamera, pixel_center_grid
from ..errors import ConfigError
from ..geometry import Cuboid, ray_box_intersect
from ..imgio import save_image, save_mask
from ..logstore import (
    CameraCalibration,
    CuboidState,
    CuboidTrack,
    FrameRecord,
    SensorLog,
    load_manifest,
    manifest_dict,
)
from ..rotations import look_at

PRESETS = ("ring8", "occluded_wall", "blocked")


@dataclass(frozen=True)
class SynthTruth:
    """Analytic ground truth recorded next to a generated scene."""

    visible_cameras: dict          # track_id -> list of camera ids with any pixels
    occlusion: dict                # (track_id, camera_id) -> exact fraction, when known
    track_ids: tuple


def _ring_camera(index: int, n: int, radius: float, height: float, size=(320, 240)) -> FThetaCamera:
    az = 2.0 * np.pi * index / n
    eye = np.array([radius * np.cos(az), radius * np.sin(az), height])
    w, h = size
    return FThetaCamera(
        poly=(180.0, 3.0),
        cx=w / 2.0,
        cy=h / 2.0,
        width=w,
        height=h,
        pose=look_at(eye, np.array([0.0, 0.0, height])),
        max_theta=1.4,
    )


def _camera_at(eye, target, size=(320, 240)) -> FThetaCamera:
    w, h = size
    return FThetaCamera(
        poly=(180.0, 3.0),
        cx=w / 2.0,
        cy=h / 2.0,
        width=w,
        height=h,
        pose=look_at(np.asarray(eye, dtype=float), np.asarray(target, dtype=float)),
        max_theta=1.4,
    )


def _static_track(track_id: str, object_class: str, center, dims, t0=0.0, t1=7.0) -> CuboidTrack:
    mk = lambda t: CuboidState(
        timestamp=t,
        center=np.asarray(center, dtype=float),
        dimensions=np.asarray(dims, dtype=float),
        orientation=np.array([1.0, 0.0, 0.0, 0.0]),
    )
    return CuboidTrack(track_id=track_id, object_class=object_class, states=[mk(t0), mk(t1)])


def _face_colors(rng: np.random.Generator) -> np.ndarray:
    """Six distinct face colors, one per +-x/+-y/+-z face."""
    base = rng.uniform(0.25, 0.9, size=3)
    shades = np.linspace(0.55, 1.0, 6)
    cols = np.stack([np.clip(base * s, 0.0, 1.0) for s in shades])
    # Make at least the dominant channel differ per face.
    cols[:, rng.integers(0, 3)] = np.linspace(0.3, 0.95, 6)
    return cols


def _raycast_frame(camera: Camera, boxes: list[tuple[str, Cuboid, np.ndarray]]):
    """Render cuboids through the camera; returns (image, {track_id: mask}).

    Nearest hit wins per pixel. Face color is chosen by the dominant local
    axis of the hit point, slightly shaded by axis sign.
    """
    grid = pixel_center_grid(camera.width, camera.height)
    dirs = camera.ray_directions(grid.reshape(-1, 2))
    origins = np.broadcast_to(camera.center, dirs.shape)

    n_px = dirs.shape[0]
    best_t = np.full(n_px, np.inf)
    best_idx = np.full(n_px, -1, dtype=np.int64)
    for bi, (_, box, _) in enumerate(boxes):
        hit, t_near, _ = ray_box_intersect(origins, dirs, box)
        t_entry = np.where(hit, np.maximum(t_near, 0.0), np.inf)
        closer = t_entry < best_t
        best_t = np.where(closer, t_entry, best_t)
        best_idx = np.where(closer, bi, best_idx)

    # Sky gradient background keeps the crops visually debuggable.
    img = np.zeros((n_px, 3))
    img[:, 0] = 0.05
    img[:, 1] = 0.08
    img[:, 2] = 0.12 + 0.08 * np.clip(dirs[:, 2], 0.0, 1.0)

    masks = {}
    for bi, (track_id, box, colors) in enumerate(boxes):
        sel = best_idx == bi
        if not sel.any():
            continue
        pts = origins[sel] + best_t[sel][:, None] * dirs[sel]
        local = box.to_local(pts) / box.half_extents
        axis = np.argmax(np.abs(local), axis=1)
        sign = np.take_along_axis(local, axis[:, None], axis=1)[:, 0] >= 0
        face = axis * 2 + sign.astype(np.int64)
        img[sel] = colors[face]
        masks[track_id] = sel.reshape(camera.height, camera.width)

    return img.reshape(camera.height, camera.width, 3), masks


def _build_preset(preset: str, rng: np.random.Generator):
    """Camera dict, track list, and the analytic truth for one preset."""
    if preset == "ring8":
        # Sized so the projected bbox clears the default min_px=64 filter
        # from every ring position (the tightest is the axis-aligned view,
        # about 70 px across).
        cameras = {f"cam{k:02d}": _ring_camera(k, 8, radius=9.0, height=1.5) for k in range(8)}
        tracks = [_static_track("cube0", "consumer_vehicle", (0.0, 0.0, 1.5), (3.0, 3.0, 3.0))]
        truth = SynthTruth(
            visible_cameras={"cube0": sorted(cameras)},
            occlusion={("cube0", cid): 0.0 for cid in cameras},
            track_ids=("cube0",),
        )
        return cameras, tracks, truth

    if preset == "occluded_wall":
        # Target cube plus a wall on its +x side. Two cameras:
        #   cam_free    -x side, nothing in between       -> occlusion 0.0
        #   cam_half    +x side, wall hides half the face -> occlusion 0.5
        # cam_half sits level with the cube center, so rays to the +x face
        # cross the wall plane below z=1.5 exactly when they aim at the
        # lower half of the face; the wall's top edge is at z=1.5.
        cube = _static_track("cube0", "consumer_vehicle", (0.0, 0.0, 1.5), (3.0, 3.0, 3.0))
        wall_half = _static_track("wall_half", "other", (4.0, 0.0, -0.5), (0.4, 6.0, 4.0))
        cameras = {
            "cam_free": _camera_at((-8.0, 0.0, 1.5), (0.0, 0.0, 1.5)),
            "cam_half": _camera_at((12.0, 0.0, 1.5), (0.0, 0.0, 1.5)),
        }
        tracks = [cube, wall_half]
        truth = SynthTruth(
            visible_cameras={"cube0": ["cam_free", "cam_half"], "wall_half": ["cam_free", "cam_half"]},
            occlusion={
                ("cube0", "cam_free"): 0.0,
                ("cube0", "cam_half"): 0.5,
            },
            track_ids=("cube0", "wall_half"),
        )
        return cameras, tracks, truth

    if preset == "blocked":
        # Wall strictly between both cameras and the cube, tall and wide
        # enough to cut every sample ray.
        cube = _static_track("cube0", "consumer_vehicle", (0.0, 0.0, 1.5), (3.0, 3.0, 3.0))
        wall = _static_track("wall0", "other", (5.0, 0.0, 1.5), (0.4, 30.0, 30.0))
        cameras = {
            "cam_a": _camera_at((12.0, 0.0, 1.5), (0.0, 0.0, 1.5)),
            "cam_b": _camera_at((12.0, 3.0, 1.5), (0.0, 0.0, 1.5)),
        }
        truth = SynthTruth(
            visible_cameras={"cube0": [], "wall0": ["cam_a", "cam_b"]},
            occlusion={("cube0", "cam_a"): 1.0, ("cube0", "cam_b"): 1.0},
            track_ids=("cube0", "wall0"),
        )
        return cameras, [cube, wall], truth

    raise ConfigError(f"unknown synth preset '{preset}' (have: {', '.join(PRESETS)})")


def synth_scene(preset: str, seed: int, root) -> tuple[SensorLog, SynthTruth]:
    """Write a synthetic log under root and load it back via the manifest.

    Deterministic: (preset, seed) fixes every byte, including PNG payloads.
    """
    rng = np.random.default_rng(seed)
    cameras, tracks, truth = _build_preset(preset, rng)
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)

    colors = {tr.track_id: _face_colors(rng) for tr in tracks}
    t_frame = 3.5  # mid-track; states are static so interpolation is exact
    boxes = []
    for tr in tracks:
        state = tr.states[0]
        boxes.append(
            (
                tr.track_id,
                Cuboid(
                    center=state.center,
                    half_extents=state.dimensions / 2.0,
                    orientation=state.orientation,
                ),
                colors[tr.track_id],
            )
        )

    frames = []
    for cam_id in sorted(cameras):
        cam = cameras[cam_id]
        img, masks = _raycast_frame(cam, boxes)
        image_rel = f"images/{cam_id}_000.png"
        save_image(root / image_rel, img)
        mask_rels = {}
        for track_id, mask in masks.items():
            rel = f"masks/{cam_id}_000_{track_id}.png"
            save_mask(root / rel, mask)
            mask_rels[track_id] = rel
        frames.append(
            FrameRecord(
                camera_id=cam_id,
                frame_index=0,
                timestamp=t_frame,
                image=image_rel,
                masks=mask_rels,
            )
        )

    calibrations = {cid: CameraCalibration(camera_id=cid, camera=cam) for cid, cam in cameras.items()}
    doc = manifest_dict(f"synth-{preset}-{seed}", calibrations, frames, tracks)
    (root / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    truth_doc = {
        "visible_cameras": truth.visible_cameras,
        "occlusion": {f"{t}|{c}": v for (t, c), v in truth.occlusion.items()},
        "track_ids": list(truth.track_ids),
    }
    (root / "truth.json").write_text(json.dumps(truth_doc, indent=2, sort_keys=True) + "\n")

    return load_manifest(root / "manifest.json"), truth
