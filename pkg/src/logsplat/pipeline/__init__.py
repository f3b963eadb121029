"""Batch pipeline: harvest -> select -> generate -> lift -> evaluate.

Stages communicate only through the workspace directory tree and hash
their inputs into stage.json, so any prefix of the pipeline can be re-run
cheaply and identical inputs always reproduce identical bytes.
"""

from .config import (
    CropConfig,
    GeneratorConfig,
    JudgeConfig,
    LiftConfig,
    MetricsConfig,
    OcclusionConfig,
    PipelineConfig,
    ReconLossConfig,
    SelectConfig,
    TargetConfig,
    config_from_dict,
    default_config,
    load_config,
)
from .evaluate import (
    aggregate_reports,
    build_workspace_judge_tasks,
    evaluate_one,
    judge_workspaces,
    quantize_u8,
    run_evaluate,
)
from .generate import generate_one, run_generate
from .harvest import (
    adaptive_fov_deg,
    collect_candidates,
    harvest_one,
    log_fingerprint,
    run_harvest,
    select_views_one,
)
from .lift import fit_free_asset, lift_one, run_lift
from .synth import PRESETS, SynthTruth, synth_scene
from .workspace import (
    STAGE_ORDER,
    InstanceDir,
    Workspace,
    canonical_json,
    read_json,
    sha256_bytes,
    sha256_of,
    tree_digest,
    write_json,
)

__all__ = [
    "CropConfig",
    "GeneratorConfig",
    "JudgeConfig",
    "LiftConfig",
    "MetricsConfig",
    "OcclusionConfig",
    "PipelineConfig",
    "ReconLossConfig",
    "SelectConfig",
    "TargetConfig",
    "config_from_dict",
    "default_config",
    "load_config",
    "aggregate_reports",
    "build_workspace_judge_tasks",
    "evaluate_one",
    "judge_workspaces",
    "quantize_u8",
    "run_evaluate",
    "generate_one",
    "run_generate",
    "adaptive_fov_deg",
    "collect_candidates",
    "harvest_one",
    "log_fingerprint",
    "run_harvest",
    "select_views_one",
    "fit_free_asset",
    "lift_one",
    "run_lift",
    "PRESETS",
    "SynthTruth",
    "synth_scene",
    "STAGE_ORDER",
    "InstanceDir",
    "Workspace",
    "canonical_json",
    "read_json",
    "sha256_bytes",
    "sha256_of",
    "tree_digest",
    "write_json",
]
