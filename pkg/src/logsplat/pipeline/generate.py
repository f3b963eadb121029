"""Target view generation: the pluggable novel-view stand-in.

The real view generator is an external model; this stage only fixes its
contract. Three modes:

    solid_color    every target view is one constant color
    copy_nearest   each target copies the harvested crop whose viewing
                   direction is closest to the target camera's
    external_dir   images produced out of band are picked up from
                   <dir>/<object_id>/view_XX.png

A missing external file is a per-instance error (MissingExternalOutputs)
naming every absent path, never a silent skip. Outputs land in
targets/view_XX.png at the target camera resolution.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image

from ..cameras import PinholeCamera
from ..errors import EmptyViewSet, LogsplatError, MissingExternalOutputs, MissingFile
from ..imgio import load_image, save_image
from .config import PipelineConfig
from .workspace import InstanceDir, Workspace, canonical_json, read_json, sha256_of


def _target_names(n: int) -> list[str]:
    return [f"view_{i:02d}.png" for i in range(n)]


def _resize(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[0] == size and image.shape[1] == size:
        return image
    pil = Image.fromarray((np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8))
    out = pil.resize((size, size), Image.BILINEAR)
    return np.asarray(out, dtype=np.float32) / 255.0


def _copy_nearest_images(inst: InstanceDir, cameras: list[PinholeCamera], size: int) -> list[np.ndarray]:
    doc = read_json(inst.views_dir / "views.json")
    views = [v for v in doc["views"] if v["role"] == "selected"]
    if not views:
        views = doc["views"]
    if not views:
        raise EmptyViewSet(f"instance '{inst.object_id}' has no views to copy from")
    directions = np.array([v["direction"] for v in views], dtype=np.float64)
    images = []
    for cam in cameras:
        d = cam.center
        d = d / np.linalg.norm(d)
        nearest = int(np.argmax(directions @ d))
        src = load_image(inst.path / views[nearest]["image"])
        images.append(_resize(src, size))
    return images


def _external_paths(inst: InstanceDir, external_dir: str, names: list[str]) -> list[Path]:
    base = Path(external_dir) / inst.object_id
    paths = [base / name for name in names]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise MissingExternalOutputs(
            f"external generator outputs missing for '{inst.object_id}': " + ", ".join(missing)
        )
    return paths


def generate_one(inst: InstanceDir, cfg: PipelineConfig) -> dict:
    """Produce every target view image for one instance."""
    stage = inst.read_stage()
    select_rec = stage["stages"].get("select")
    if not select_rec:
        raise MissingFile(f"select has not run for instance '{inst.object_id}'")

    targets_doc = read_json(inst.targets_dir / "cameras.json")
    cameras = [PinholeCamera.from_dict(d) for d in targets_doc["cameras"]]
    size = int(targets_doc["image_size"])
    names = _target_names(len(cameras))

    hash_parts = [
        "generate",
        canonical_json(dataclasses.asdict(cfg.generator)),
        canonical_json(dataclasses.asdict(cfg.targets)),
        select_rec["hash"],
    ]
    external_paths = None
    if cfg.generator.mode == "external_dir":
        external_paths = _external_paths(inst, cfg.generator.external_dir, names)
        hash_parts.extend(p.read_bytes() for p in external_paths)
    input_hash = sha256_of(*hash_parts)
    if inst.stage_done("generate", input_hash):
        return stage["stages"]["generate"]

    if cfg.generator.mode == "solid_color":
        flat = np.full((size, size, 3), np.asarray(cfg.generator.color, dtype=np.float32))
        images = [flat] * len(cameras)
    elif cfg.generator.mode == "copy_nearest":
        images = _copy_nearest_images(inst, cameras, size)
    else:
        images = [load_image(p) for p in external_paths]
        for name, img in zip(names, images):
            if img.shape[0] != size or img.shape[1] != size:
                raise MissingExternalOutputs(
                    f"external image {name} for '{inst.object_id}' is "
                    f"{img.shape[1]}x{img.shape[0]}, expected {size}x{size}"
                )

    for name, img in zip(names, images):
        save_image(inst.targets_dir / name, img)
    inst.mark_stage("generate", input_hash, mode=cfg.generator.mode, n_images=len(images))
    return inst.read_stage()["stages"]["generate"]


def run_generate(workspace_root, cfg: PipelineConfig) -> list[dict]:
    """Generate targets for every instance; failures become flags."""
    ws = Workspace(workspace_root)
    out = []
    for inst in ws.instances():
        try:
            rec = generate_one(inst, cfg)
            out.append({"object_id": inst.object_id, "generate": rec, "error": None})
        except LogsplatError as exc:
            inst.add_flag(f"generate_error:{type(exc).__name__}")
            out.append({"object_id": inst.object_id, "generate": None, "error": str(exc)})
    return out
