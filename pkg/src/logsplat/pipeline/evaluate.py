"""Held-out evaluation and the pairwise preference protocol.

Part A scores the lifted asset against held-out rectified crops the fit
never saw: full-image PSNR / SSIM (renders are quantized to the same uint8
grid the crops were stored on, so a render compared against its own saved
pixels is exact), the pooled-embedding distance after mask alignment
(ed_r), its per-part variant for pedestrians when keypoint files exist
(ed_p), and an external LPIPS-style score table when configured. A failed
metric on one view nulls that entry and leaves a note; it never kills the
batch.

Part B renders the same seeded random viewpoint from this workspace's
asset and a baseline workspace's asset, pairs them with a masked held-out
reference crop, and runs the three-image judge protocol with seeded B/C
slot assignment. Draw order per instance is fixed (viewpoint, then slot),
so one seed reproduces the full set of assignments.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from ..cameras import PinholeCamera
from ..errors import (
    ConfigError,
    EmptyGtMask,
    EmptyRenderMask,
    InsufficientKeypoints,
    LogsplatError,
    MissingFile,
    NoCommonParts,
    NoForegroundPatches,
    NoHeldOutViews,
    ZeroEmbedding,
)
from ..gaussians import load_asset, psnr, render, ssim
from ..imgio import load_image, load_mask
from ..metrics import (
    Keypoint,
    align_to_gt,
    aggregate_preferences,
    build_judge_task,
    color_patch_features,
    ed_p,
    ed_r,
    load_keypoints,
    load_score_table,
    partition_parts,
    run_judge_tasks,
)
from .config import PipelineConfig
from .workspace import InstanceDir, Workspace, canonical_json, read_json, sha256_of, write_json

METRIC_NAMES = ("psnr", "ssim", "ed_r", "ed_p")


def quantize_u8(image: np.ndarray) -> np.ndarray:
    """Snap a float image onto the 256-level float32 grid PNG storage uses.

    float32 output matters: a render written through save_image and read
    back must compare bit-identical to the quantized in-memory render.
    """
    arr = np.asarray(image, dtype=np.float64)
    return (np.round(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _render_view(asset, view_doc: dict, inst: InstanceDir):
    """Render the asset through a stored object-frame view camera."""
    cam = PinholeCamera.from_dict(view_doc["camera"])
    result = render(asset, cam)
    valid = load_mask(inst.path / view_doc["valid"])
    rendered = np.where(valid[..., None], quantize_u8(result.image), 0.0)
    return rendered, result.alpha, valid


def _eval_view(asset, view_doc: dict, inst: InstanceDir, object_class: str, cfg: PipelineConfig) -> dict:
    notes = []
    out = {"index": view_doc["index"], "psnr": None, "ssim": None, "ed_r": None, "ed_p": None}

    gt = load_image(inst.path / view_doc["image"])
    rendered, alpha, valid = _render_view(asset, view_doc, inst)
    out["psnr"] = psnr(rendered, gt)
    out["ssim"] = ssim(rendered, gt)

    if view_doc["mask"] is None:
        notes.append("no_gt_mask")
        out["notes"] = notes
        return out
    gt_mask = load_mask(inst.path / view_doc["mask"])
    render_mask = (alpha > 0.5) & valid

    patch = cfg.metrics.patch_size
    try:
        aligned_rgb, aligned_mask, transform = align_to_gt(rendered, render_mask, gt_mask)
        feat_r = color_patch_features(aligned_rgb, patch)
        feat_gt = color_patch_features(gt, patch)
        out["ed_r"] = ed_r(feat_r, aligned_mask, feat_gt, gt_mask)
    except (EmptyRenderMask, EmptyGtMask, NoForegroundPatches, ZeroEmbedding) as exc:
        notes.append(f"ed_r_failed:{type(exc).__name__}")
        out["notes"] = notes
        return out

    kp_path = inst.path / f"views/keypoints_{view_doc['index']:02d}.json"
    if object_class == "vru_pedestrian" and kp_path.is_file():
        try:
            kp_gt = load_keypoints(kp_path)
            parts_gt = partition_parts(gt_mask, kp_gt)
            render_kp_path = inst.path / f"views/keypoints_render_{view_doc['index']:02d}.json"
            if render_kp_path.is_file():
                raw = load_keypoints(render_kp_path)
                kp_r = {
                    name: Keypoint(xy=transform.apply(k.xy), confidence=k.confidence)
                    for name, k in raw.items()
                }
            else:
                # No pose model ran on the render; the aligned render shares
                # the reference geometry, so reuse the reference keypoints.
                notes.append("ed_p_reused_gt_keypoints")
                kp_r = kp_gt
            parts_r = partition_parts(aligned_mask, kp_r)
            out["ed_p"] = ed_p(feat_r, parts_r, feat_gt, parts_gt)
        except (InsufficientKeypoints, NoCommonParts, NoForegroundPatches) as exc:
            notes.append(f"ed_p_failed:{type(exc).__name__}")

    out["notes"] = notes
    return out


def evaluate_one(inst: InstanceDir, cfg: PipelineConfig) -> dict:
    """Part A for one instance; writes and returns report.json."""
    stage = inst.read_stage()
    lift_rec = stage["stages"].get("lift")
    select_rec = stage["stages"].get("select")
    if not lift_rec or not select_rec:
        raise MissingFile(f"lift/select have not run for instance '{inst.object_id}'")

    hash_parts = [
        "evaluate",
        canonical_json(dataclasses.asdict(cfg.metrics)),
        lift_rec["hash"],
        select_rec["hash"],
    ]
    lpips_table = None
    if cfg.metrics.lpips_scores:
        lpips_table = load_score_table(cfg.metrics.lpips_scores)
        hash_parts.append(canonical_json(lpips_table))
    input_hash = sha256_of(*hash_parts)
    if inst.stage_done("evaluate", input_hash) and inst.report_path.is_file():
        return read_json(inst.report_path)

    doc = read_json(inst.views_dir / "views.json")
    held = [v for v in doc["views"] if v["role"] == "held_out"]
    if not held:
        inst.add_flag("no_held_out")
        raise NoHeldOutViews(f"instance '{inst.object_id}' has no held-out views")

    asset = load_asset(inst.asset_path)
    view_reports = [_eval_view(asset, v, inst, doc["object_class"], cfg) for v in held]

    means = {}
    for name in METRIC_NAMES:
        values = [r[name] for r in view_reports if r[name] is not None]
        means[name] = float(np.mean(values)) if values else None

    notes = []
    lpips = None
    if lpips_table is None:
        notes.append("lpips_unavailable")
    else:
        lpips = lpips_table.get(inst.object_id)
        if lpips is None:
            notes.append("lpips_missing_for_instance")

    report = {
        "object_id": inst.object_id,
        "object_class": doc["object_class"],
        "views": view_reports,
        "means": means,
        "recon": {
            "recon_loss": lift_rec["recon_loss"],
            "baseline_loss": lift_rec["baseline_loss"],
        },
        "lpips": lpips,
        "notes": notes,
        "flags": inst.flags,
    }
    write_json(inst.report_path, report)
    inst.mark_stage("evaluate", input_hash, n_views=len(view_reports))
    return report


def run_evaluate(workspace_root, cfg: PipelineConfig) -> list[dict]:
    """Part A over the whole workspace; failures become flags."""
    ws = Workspace(workspace_root)
    out = []
    for inst in ws.instances():
        try:
            report = evaluate_one(inst, cfg)
            out.append({"object_id": inst.object_id, "report": report, "error": None})
        except LogsplatError as exc:
            inst.add_flag(f"evaluate_error:{type(exc).__name__}")
            out.append({"object_id": inst.object_id, "report": None, "error": str(exc)})
    return out


def aggregate_reports(workspace_root) -> dict:
    """Fold per-instance reports into per-class and overall means.

    Instance means enter the aggregate only where they exist; a metric
    that failed everywhere stays None rather than becoming a fake zero.
    """
    ws = Workspace(workspace_root)
    instances = {}
    for inst in ws.instances():
        if inst.report_path.is_file():
            rep = read_json(inst.report_path)
            instances[inst.object_id] = {
                "object_class": rep["object_class"],
                "means": rep["means"],
                "lpips": rep["lpips"],
                "recon": rep["recon"],
            }

    def fold(rows: list[dict]) -> dict:
        agg = {}
        for name in METRIC_NAMES:
            values = [r["means"][name] for r in rows if r["means"][name] is not None]
            agg[name] = float(np.mean(values)) if values else None
        lp = [r["lpips"] for r in rows if r["lpips"] is not None]
        agg["lpips"] = float(np.mean(lp)) if lp else None
        return agg

    by_class = {}
    for row in instances.values():
        by_class.setdefault(row["object_class"], []).append(row)
    return {
        "n_instances": len(instances),
        "instances": instances,
        "by_class": {cls: fold(rows) for cls, rows in sorted(by_class.items())},
        "overall": fold(list(instances.values())),
    }


def _masked_reference(inst: InstanceDir, view_doc: dict) -> np.ndarray:
    """Held-out crop with the background zeroed out, as the judge's image A."""
    image = load_image(inst.path / view_doc["image"])
    if view_doc["mask"] is not None:
        mask = load_mask(inst.path / view_doc["mask"])
        image = image * mask[..., None]
    return image


def build_workspace_judge_tasks(
    ours_root,
    baseline_root,
    cfg: PipelineConfig,
    baseline_name: str,
) -> tuple[list, list[dict]]:
    """Pair every common instance into a judge task.

    Per instance, in fixed order: one viewpoint draw over the target ring,
    one B/C slot draw (inside build_judge_task). Returns (tasks, skipped).
    """
    ws_ours = Workspace(ours_root)
    ws_base = Workspace(baseline_root)
    base_ids = {i.object_id for i in ws_base.instances()}
    rng = np.random.default_rng(cfg.seed)
    tasks = []
    skipped = []
    for inst in ws_ours.instances():
        oid = inst.object_id
        base_inst = ws_base.instance(oid)

        def skip(reason: str):
            skipped.append({"object_id": oid, "reason": reason})

        if oid not in base_ids or not base_inst.asset_path.is_file():
            skip("missing_baseline_asset")
            continue
        if not inst.asset_path.is_file():
            skip("missing_asset")
            continue
        views_doc = read_json(inst.views_dir / "views.json")
        held = [v for v in views_doc["views"] if v["role"] == "held_out"]
        if not held:
            skip("no_held_out_reference")
            continue

        targets_doc = read_json(inst.targets_dir / "cameras.json")
        cameras = [PinholeCamera.from_dict(d) for d in targets_doc["cameras"]]
        view_idx = int(rng.integers(0, len(cameras)))
        cam = cameras[view_idx]
        ours_img = quantize_u8(render(load_asset(inst.asset_path), cam).image)
        base_img = quantize_u8(render(load_asset(base_inst.asset_path), cam).image)
        tasks.append(
            build_judge_task(
                instance_id=oid,
                class_label=views_doc["object_class"],
                baseline_name=baseline_name,
                ref_image=_masked_reference(inst, held[0]),
                ours_image=ours_img,
                baseline_image=base_img,
                rng=rng,
            )
        )
    return tasks, skipped


def judge_workspaces(
    ours_root,
    baseline_root,
    cfg: PipelineConfig,
    baseline_name: str,
    transport=None,
    emit_dir=None,
) -> dict:
    """Part B: run (or just emit) the judge protocol between two workspaces.

    With emit_dir set, payloads are written as JSON for an out-of-band
    judge and no network is touched; otherwise a transport must be given.
    Writes judge_report.json under ours_root when replies were collected.
    """
    tasks, skipped = build_workspace_judge_tasks(ours_root, baseline_root, cfg, baseline_name)

    if emit_dir is not None:
        emit = Path(emit_dir)
        emit.mkdir(parents=True, exist_ok=True)
        index = []
        for task in tasks:
            name = f"task_{task.instance_id}.json"
            write_json(emit / name, task.payload(cfg.judge.model))
            index.append(
                {
                    "file": name,
                    "instance_id": task.instance_id,
                    "class_label": task.class_label,
                    "ours_slot": task.ours_slot,
                }
            )
        write_json(
            emit / "index.json",
            {"baseline_name": baseline_name, "seed": cfg.seed, "tasks": index, "skipped": skipped},
        )
        return {"emitted": len(tasks), "skipped": skipped, "dir": str(emit)}

    if transport is None:
        raise ConfigError("judge needs either a transport (endpoint) or emit_dir")
    records = run_judge_tasks(transport, tasks, cfg.judge.model, cfg.judge.max_in_flight)
    doc = {
        "baseline_name": baseline_name,
        "seed": cfg.seed,
        "model": cfg.judge.model,
        "skipped": skipped,
        "records": [r.to_dict() for r in records],
        "aggregate": aggregate_preferences(records),
    }
    write_json(Path(ours_root) / "judge_report.json", doc)
    return doc
