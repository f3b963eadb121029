"""Per-object view harvesting: sensor log -> rectified crop sets.

harvest_one scores every usable (frame, track) observation, rectifies the
survivors into canonical pinhole crops centered on the object, and writes
the per-instance views.json plus the target camera ring. select_views_one
then runs farthest-point selection over the stored viewing directions and
assigns each crop a role (selected / held_out / unused); it can be re-run
with a different selection config without touching any pixels.

Both stages hash their inputs into stage.json: a rerun with unchanged
inputs returns the stored summary and rewrites nothing, so workspace trees
stay byte-identical across repeats.

Cameras in views.json and targets/cameras.json are stored in the OBJECT
frame (the object sits at the origin, axis-aligned). Downstream stages fit
and render assets in that frame; the world pose of each observation is kept
alongside as obj_to_world.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..cameras import generate_target_cameras, rectify_crop
from ..errors import BehindCamera, CameraInsideTarget, LogsplatError, MissingFile
from ..geometry import (
    Cuboid,
    ViewCandidate,
    fps_orientations,
    mask_cuboid_iou,
    occlusion_fraction,
    project_cuboid,
    quality_filter,
)
from ..imgio import load_image, load_mask, save_image, save_mask
from ..logstore import CuboidTrack, SensorLog, interpolate_cuboid
from ..rotations import RigidTransform
from .config import PipelineConfig
from .workspace import InstanceDir, Workspace, canonical_json, read_json, sha256_of, write_json

VIEW_ROLES = ("selected", "held_out", "unused")


def log_fingerprint(log: SensorLog) -> str:
    """Content hash standing in for the whole source log."""
    manifest = log.root / "manifest.json"
    if manifest.is_file():
        return sha256_of("manifest", manifest.read_bytes())
    return sha256_of("session", log.session_id)


def adaptive_fov_deg(half_extents, distance: float, crop_cfg) -> tuple[float, bool]:
    """Fov covering margin * bounding-sphere radius, clamped to the range."""
    radius = crop_cfg.margin * float(np.linalg.norm(half_extents))
    fov = float(np.degrees(2.0 * np.arctan2(radius, distance)))
    clamped = float(np.clip(fov, crop_cfg.fov_min_deg, crop_cfg.fov_max_deg))
    return clamped, clamped != fov


def _cuboid(state) -> Cuboid:
    return Cuboid(
        center=state.center,
        half_extents=state.dimensions / 2.0,
        orientation=state.orientation,
    )


def collect_candidates(log: SensorLog, track: CuboidTrack, cfg: PipelineConfig) -> list[dict]:
    """Score every in-span observation of the track.

    Returns one record per candidate: the ViewCandidate, its source frame
    and interpolated state, and the keep/flags verdict. Frames outside the
    track's time span and views where the whole cuboid is behind the camera
    produce no record at all.
    """
    others = [tr for tid, tr in sorted(log.tracks.items()) if tid != track.track_id]
    records = []
    for frame in sorted(log.frames, key=lambda fr: (fr.camera_id, fr.frame_index)):
        state, extrapolated = interpolate_cuboid(track, frame.timestamp)
        if extrapolated:
            continue
        box = _cuboid(state)
        cam = log.camera(frame.camera_id)
        try:
            proj = project_cuboid(cam, box)
        except BehindCamera:
            continue
        occluders = []
        for other in others:
            other_state, other_extrap = interpolate_cuboid(other, frame.timestamp)
            if not other_extrap:
                occluders.append(_cuboid(other_state))
        try:
            occ = occlusion_fraction(box, cam.center, occluders, n_samples=cfg.occlusion.n_samples)
        except CameraInsideTarget:
            continue
        offset = cam.center - box.center
        distance = float(np.linalg.norm(offset))
        direction_obj = box.rotation_matrix.T @ (offset / distance)
        mask_path = log.mask_path(frame, track.track_id)
        iou = None
        if mask_path is not None and mask_path.is_file():
            iou = mask_cuboid_iou(load_mask(mask_path), proj)
        candidate = ViewCandidate(
            camera_id=frame.camera_id,
            frame_index=frame.frame_index,
            timestamp=frame.timestamp,
            direction=direction_obj,
            distance=distance,
            projection=proj,
            image_size=(cam.width, cam.height),
            occlusion=occ,
            mask_iou=iou,
        )
        keep, flags = quality_filter(candidate, cfg.filter)
        records.append(
            {"frame": frame, "state": state, "candidate": candidate, "keep": keep, "flags": flags}
        )
    return records


def _candidate_doc(rec: dict) -> dict:
    c = rec["candidate"]
    return {
        "camera_id": c.camera_id,
        "frame_index": c.frame_index,
        "timestamp": c.timestamp,
        "distance": c.distance,
        "occlusion": c.occlusion,
        "mask_iou": c.mask_iou,
        "bbox": [float(x) for x in c.projection.aabb],
        "kept": rec["keep"],
        "flags": sorted(rec["flags"]),
    }


def harvest_one(log: SensorLog, track_id: str, inst: InstanceDir, cfg: PipelineConfig) -> dict:
    """Crop every filter-passing observation of one track into inst/views.

    Writes views.json (all candidates plus one entry per written crop, role
    left as "unused" until selection runs) and targets/cameras.json.
    """
    track = log.tracks[track_id]
    input_hash = sha256_of("harvest", cfg.canonical_json(), log_fingerprint(log), track_id)
    if inst.stage_done("harvest", input_hash):
        return inst.read_stage()["stages"]["harvest"]
    inst.ensure()

    records = collect_candidates(log, track, cfg)
    fov_range = (cfg.crop.fov_min_deg, cfg.crop.fov_max_deg)
    views = []
    for rec in records:
        if not rec["keep"]:
            continue
        frame, state, cand = rec["frame"], rec["state"], rec["candidate"]
        cam = log.camera(frame.camera_id)
        fov, fov_clamped = adaptive_fov_deg(state.dimensions / 2.0, cand.distance, cfg.crop)
        image = load_image(log.image_path(frame))
        try:
            crop = rectify_crop(cam, image, state.center, fov, cfg.crop.out_size, fov_range)
        except BehindCamera:
            # Corner visibility got the candidate through the filter but the
            # center is outside the source field; unusable as a crop.
            rec["keep"] = False
            rec["flags"].add("CropFailed")
            continue

        vi = len(views)
        mask_rel = None
        mask_path = log.mask_path(frame, track_id)
        if mask_path is not None and mask_path.is_file():
            mask_img = load_mask(mask_path).astype(np.float32)[..., None]
            mask_crop = rectify_crop(cam, mask_img, state.center, fov, cfg.crop.out_size, fov_range)
            fg = (mask_crop.image[..., 0] > 0.5) & mask_crop.valid_mask
            mask_rel = f"views/mask_{vi:02d}.png"
            save_mask(inst.path / mask_rel, fg)

        image_rel = f"views/view_{vi:02d}.png"
        valid_rel = f"views/valid_{vi:02d}.png"
        save_image(inst.path / image_rel, np.where(crop.valid_mask[..., None], crop.image, 0.0))
        save_mask(inst.path / valid_rel, crop.valid_mask)

        obj_to_world = RigidTransform(state.orientation, state.center)
        camera_obj = dataclasses.replace(crop.camera, pose=crop.camera.pose.compose(obj_to_world))
        views.append(
            {
                "index": vi,
                "camera_id": cand.camera_id,
                "frame_index": cand.frame_index,
                "timestamp": cand.timestamp,
                "distance": cand.distance,
                "direction": [float(x) for x in cand.direction],
                "fov_deg": fov,
                "fov_clamped": fov_clamped,
                "camera": camera_obj.to_dict(),
                "obj_to_world": {
                    "rotation": [float(x) for x in state.orientation],
                    "translation": [float(x) for x in state.center],
                },
                "image": image_rel,
                "valid": valid_rel,
                "mask": mask_rel,
                "role": "unused",
                "fps_rank": None,
            }
        )

    half_extents = track.states[0].dimensions / 2.0
    target_distance = cfg.targets.distance_scale * float(np.linalg.norm(half_extents))
    target_cams = generate_target_cameras(
        fov_deg=cfg.targets.fov_deg,
        distance=target_distance,
        n_views=cfg.targets.n_views,
        elevation_deg=cfg.targets.elevation_deg,
        image_size=cfg.targets.image_size,
    )
    write_json(
        inst.targets_dir / "cameras.json",
        {
            "object_id": track_id,
            "distance": target_distance,
            "fov_deg": cfg.targets.fov_deg,
            "image_size": cfg.targets.image_size,
            "cameras": [c.to_dict() for c in target_cams],
        },
    )
    write_json(
        inst.views_dir / "views.json",
        {
            "object_id": track_id,
            "object_class": track.object_class,
            "half_extents": [float(x) for x in half_extents],
            "candidates": [_candidate_doc(r) for r in records],
            "views": views,
            "select": None,
        },
    )
    if not views:
        inst.add_flag("no_views")
    inst.mark_stage("harvest", input_hash, n_candidates=len(records), n_views=len(views))
    return inst.read_stage()["stages"]["harvest"]


def select_views_one(inst: InstanceDir, cfg: PipelineConfig) -> dict:
    """Assign selected / held_out roles by farthest-point selection.

    The FPS tail (the least direction-diverse picks) becomes the held-out
    set, but only when enough views exist to spare them; otherwise every
    pick is used for fitting and evaluation later reports the gap.
    """
    stage = inst.read_stage()
    harvest_rec = stage["stages"].get("harvest")
    if not harvest_rec:
        raise MissingFile(f"harvest has not run for instance '{inst.object_id}'")
    sel_cfg = dataclasses.asdict(cfg.select)
    input_hash = sha256_of("select", canonical_json(sel_cfg), harvest_rec["hash"])
    if inst.stage_done("select", input_hash):
        return stage["stages"]["select"]

    views_path = inst.views_dir / "views.json"
    doc = read_json(views_path)
    views = doc["views"]
    order: list[int] = []
    held: list[int] = []
    if views:
        directions = np.array([v["direction"] for v in views], dtype=np.float64)
        seed = cfg.select.seed_index % len(views)
        order = fps_orientations(
            directions,
            k=cfg.select.k_max,
            seed_index=seed,
            min_angle_deg=cfg.select.min_angle_deg,
        )
        if cfg.select.held_out > 0 and len(order) > cfg.select.held_out:
            held = order[-cfg.select.held_out:]
    selected = [i for i in order if i not in held]

    for v in views:
        v["role"] = "unused"
        v["fps_rank"] = None
    for rank, idx in enumerate(order):
        views[idx]["fps_rank"] = rank
        views[idx]["role"] = "held_out" if idx in held else "selected"
    doc["select"] = {
        "config": sel_cfg,
        "order": order,
        "selected": selected,
        "held_out": held,
    }
    write_json(views_path, doc)
    inst.mark_stage("select", input_hash, n_selected=len(selected), n_held_out=len(held))
    return inst.read_stage()["stages"]["select"]


def run_harvest(log: SensorLog, workspace_root, cfg: PipelineConfig) -> list[dict]:
    """Harvest + select every track in the log.

    Per-object failures are recorded as instance flags and reported in the
    returned summaries; one broken track never aborts the batch.
    """
    ws = Workspace(workspace_root)
    track_ids = sorted(log.tracks)

    def one(track_id: str) -> dict:
        inst = ws.instance(track_id)
        try:
            harvest_rec = harvest_one(log, track_id, inst, cfg)
            select_rec = select_views_one(inst, cfg)
            return {
                "object_id": track_id,
                "harvest": harvest_rec,
                "select": select_rec,
                "flags": inst.flags,
                "error": None,
            }
        except LogsplatError as exc:
            inst.ensure()
            inst.add_flag(f"harvest_error:{type(exc).__name__}")
            return {
                "object_id": track_id,
                "harvest": None,
                "select": None,
                "flags": inst.flags,
                "error": str(exc),
            }

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(one, track_ids))
    return [one(t) for t in track_ids]
