"""Request and response models for the HTTP service.

Paths in requests are interpreted on the server's filesystem; this service
fronts a local working tree, it is not a remote storage API. The optional
`config` object accepts the same partial document as a config file: named
sections override defaults, unknown keys are rejected.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    preset: str
    seed: int = 0
    root: str


class SynthResponse(BaseModel):
    root: str
    session_id: str
    n_cameras: int
    n_frames: int
    track_ids: list[str]


class StageRequest(BaseModel):
    workspace: str
    config: dict = Field(default_factory=dict)


class HarvestRequest(StageRequest):
    manifest: str


class HarvestResult(BaseModel):
    object_id: str
    harvest: dict | None = None
    select: dict | None = None
    flags: list[str] = Field(default_factory=list)
    error: str | None = None


class HarvestResponse(BaseModel):
    workspace: str
    results: list[HarvestResult]


class GenerateResult(BaseModel):
    object_id: str
    generate: dict | None = None
    error: str | None = None


class GenerateResponse(BaseModel):
    workspace: str
    results: list[GenerateResult]


class LiftResult(BaseModel):
    object_id: str
    lift: dict | None = None
    error: str | None = None


class LiftResponse(BaseModel):
    workspace: str
    results: list[LiftResult]


class EvaluateResult(BaseModel):
    object_id: str
    report: dict | None = None
    error: str | None = None


class EvaluateResponse(BaseModel):
    workspace: str
    results: list[EvaluateResult]
    aggregate: dict


class AggregateRequest(BaseModel):
    workspace: str


class ReportRequest(BaseModel):
    workspace: str
    object_id: str


class JudgeRequest(StageRequest):
    baseline_workspace: str
    baseline_name: str = "baseline"
    emit_dir: str | None = None


class JudgeEmitResponse(BaseModel):
    emitted: int
    skipped: list[dict]
    dir: str


class JudgeRunResponse(BaseModel):
    baseline_name: str
    seed: int
    model: str
    skipped: list[dict]
    records: list[dict]
    aggregate: dict


class CensusRequest(BaseModel):
    path: str | None = None
    manifest: dict | None = None


class CensusResponse(BaseModel):
    per_class: dict[str, dict[str, int]]
    totals: dict[str, int]
    matches_expected: bool
