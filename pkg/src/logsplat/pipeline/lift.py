"""Asset lifting: posed target views -> one gaussian asset per instance.

fit_free places one isotropic gaussian per block x block tile of every
target view, along the camera ray through the tile center at the camera's
distance from the origin, colored by the tile mean. Deliberately crude:
the point is a deterministic, dependency-free stand-in with the same
contract as a learned lifter (consume posed views, emit an asset), good
enough that the rendered asset beats an empty scene under the recon loss.

external_asset routes a pre-built .gsa through validation instead. The
configured path may be a single file or a directory holding
<object_id>.gsa per instance.

Everything here lives in the object frame: the target cameras look at the
origin and the asset is centered there.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from ..cameras import PinholeCamera
from ..errors import AssetLoadError, ConfigError, LogsplatError, MissingFile
from ..gaussians import GaussianAsset, load_asset, n_sh_coeffs, recon_loss, render, rgb_to_dc, save_asset
from ..imgio import load_image
from .config import PipelineConfig
from .workspace import InstanceDir, Workspace, canonical_json, read_json, sha256_of


def _tile_centers(size: int, block: int) -> np.ndarray:
    """(nb*nb, 2) continuous pixel coordinates of tile centers."""
    nb = size // block
    ticks = (np.arange(nb, dtype=np.float64) + 0.5) * block
    uu, vv = np.meshgrid(ticks, ticks)
    return np.stack([uu.ravel(), vv.ravel()], axis=-1)


def fit_free_asset(
    cameras: list[PinholeCamera],
    images: list[np.ndarray],
    block: int,
    sh_degree: int,
    opacity: float,
) -> GaussianAsset:
    """One gaussian per image tile, positioned along the tile-center ray."""
    size = cameras[0].width
    if size % block != 0:
        raise ConfigError(f"lift.block {block} does not divide target size {size}")
    nb = size // block

    positions, log_scales, colors = [], [], []
    for cam, img in zip(cameras, images):
        if img.shape[0] != size or img.shape[1] != size:
            raise ConfigError(
                f"target image is {img.shape[1]}x{img.shape[0]}, camera expects {size}x{size}"
            )
        tiles = img.reshape(nb, block, nb, block, 3).mean(axis=(1, 3))
        centers = _tile_centers(size, block)
        dirs = cam.ray_directions(centers)
        dist = float(np.linalg.norm(cam.center))
        positions.append(cam.center[None, :] + dist * dirs)
        # tile footprint at that distance; half size as the 1-sigma radius
        s = 0.5 * dist * block / cam.fx
        log_scales.append(np.full((nb * nb, 3), np.log(s)))
        colors.append(tiles.reshape(-1, 3))

    pos = np.concatenate(positions)
    k = pos.shape[0]
    sh = np.zeros((k, n_sh_coeffs(sh_degree), 3))
    sh[:, 0, :] = rgb_to_dc(np.concatenate(colors))
    rot = np.zeros((k, 4))
    rot[:, 0] = 1.0
    logit = float(np.log(opacity / (1.0 - opacity)))
    return GaussianAsset(
        positions=pos,
        log_scales=np.concatenate(log_scales),
        rotations=rot,
        opacity_logits=np.full(k, logit),
        sh_coeffs=sh,
        sh_degree=sh_degree,
    )


def _external_asset_path(inst: InstanceDir, configured: str) -> Path:
    p = Path(configured)
    if p.is_dir():
        p = p / f"{inst.object_id}.gsa"
    if not p.is_file():
        raise AssetLoadError(f"external asset not found for '{inst.object_id}': {p}")
    return p


def _recon_scores(asset: GaussianAsset, cameras, images, cfg: PipelineConfig) -> tuple[float, float]:
    """Mean recon loss of the asset's renders vs the targets, and of an
    empty black scene vs the same targets (the do-nothing baseline)."""
    lw, sw = cfg.recon_loss.l1_weight, cfg.recon_loss.ssim_weight
    losses, baselines = [], []
    for cam, img in zip(cameras, images):
        rendered = render(asset, cam).image
        losses.append(recon_loss(rendered, img, lw, sw))
        baselines.append(recon_loss(np.zeros_like(img), img, lw, sw))
    return float(np.mean(losses)), float(np.mean(baselines))


def lift_one(inst: InstanceDir, cfg: PipelineConfig) -> dict:
    """Build (or import) the instance asset and score it against targets."""
    stage = inst.read_stage()
    generate_rec = stage["stages"].get("generate")
    if not generate_rec:
        raise MissingFile(f"generate has not run for instance '{inst.object_id}'")

    hash_parts = [
        "lift",
        canonical_json(dataclasses.asdict(cfg.lift)),
        canonical_json(dataclasses.asdict(cfg.recon_loss)),
        generate_rec["hash"],
    ]
    external = None
    if cfg.lift.mode == "external_asset":
        external = _external_asset_path(inst, cfg.lift.external_asset)
        hash_parts.append(external.read_bytes())
    input_hash = sha256_of(*hash_parts)
    if inst.stage_done("lift", input_hash):
        return stage["stages"]["lift"]

    targets_doc = read_json(inst.targets_dir / "cameras.json")
    cameras = [PinholeCamera.from_dict(d) for d in targets_doc["cameras"]]
    images = [
        load_image(inst.targets_dir / f"view_{i:02d}.png") for i in range(len(cameras))
    ]

    if cfg.lift.mode == "external_asset":
        asset = load_asset(external)
    else:
        asset = fit_free_asset(cameras, images, cfg.lift.block, cfg.lift.sh_degree, cfg.lift.opacity)
    save_asset(inst.asset_path, asset)

    loss, baseline = _recon_scores(asset, cameras, images, cfg)
    inst.mark_stage(
        "lift",
        input_hash,
        mode=cfg.lift.mode,
        n_gaussians=len(asset),
        recon_loss=loss,
        baseline_loss=baseline,
    )
    return inst.read_stage()["stages"]["lift"]


def run_lift(workspace_root, cfg: PipelineConfig) -> list[dict]:
    """Lift every instance; failures become flags."""
    ws = Workspace(workspace_root)
    out = []
    for inst in ws.instances():
        try:
            rec = lift_one(inst, cfg)
            out.append({"object_id": inst.object_id, "lift": rec, "error": None})
        except LogsplatError as exc:
            inst.add_flag(f"lift_error:{type(exc).__name__}")
            out.append({"object_id": inst.object_id, "lift": None, "error": str(exc)})
    return out
