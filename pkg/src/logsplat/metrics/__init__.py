"""Benchmark metric suite: embedding distances, pairwise judging, census."""

from .alignment import (
    AlignmentTransform,
    align_to_gt,
    cosine_distance,
    ed_r,
    mask_area,
    mask_centroid,
)
from .bench import (
    EXPECTED_CENSUS,
    EXPECTED_TOTALS,
    CensusTable,
    benchmark_manifest_check,
    expected_census_table,
    format_preference_row,
    load_benchmark_manifest,
    load_score_table,
)
from .features import (
    FG_COVERAGE,
    FeatureMap,
    color_patch_features,
    downsample_mask,
    load_features,
    pooled_embedding,
    save_features,
)
from .judge import (
    DEFAULT_MODEL,
    DEFAULT_TOKEN_ENV,
    HttpJudgeTransport,
    JudgeTask,
    PreferenceRecord,
    REPLY_B,
    REPLY_C,
    REPLY_ERROR,
    WINNER_BASELINE,
    WINNER_INVALID,
    WINNER_OURS,
    aggregate_preferences,
    build_judge_task,
    judge_request,
    load_judge_prompt,
    parse_judge_reply,
    record_from_reply,
    run_judge_tasks,
)
from .parts import (
    BACKGROUND_LABEL,
    KEYPOINT_NAMES,
    PART_NAMES,
    Keypoint,
    PartLabelMap,
    ed_p,
    load_keypoints,
    partition_parts,
    save_keypoints,
)

__all__ = [
    "AlignmentTransform",
    "align_to_gt",
    "cosine_distance",
    "ed_r",
    "mask_area",
    "mask_centroid",
    "EXPECTED_CENSUS",
    "EXPECTED_TOTALS",
    "CensusTable",
    "benchmark_manifest_check",
    "expected_census_table",
    "format_preference_row",
    "load_benchmark_manifest",
    "load_score_table",
    "FG_COVERAGE",
    "FeatureMap",
    "color_patch_features",
    "downsample_mask",
    "load_features",
    "pooled_embedding",
    "save_features",
    "DEFAULT_MODEL",
    "DEFAULT_TOKEN_ENV",
    "HttpJudgeTransport",
    "JudgeTask",
    "PreferenceRecord",
    "REPLY_B",
    "REPLY_C",
    "REPLY_ERROR",
    "WINNER_BASELINE",
    "WINNER_INVALID",
    "WINNER_OURS",
    "aggregate_preferences",
    "build_judge_task",
    "judge_request",
    "load_judge_prompt",
    "parse_judge_reply",
    "record_from_reply",
    "run_judge_tasks",
    "BACKGROUND_LABEL",
    "KEYPOINT_NAMES",
    "PART_NAMES",
    "Keypoint",
    "PartLabelMap",
    "ed_p",
    "load_keypoints",
    "partition_parts",
    "save_keypoints",
]
