"""HTTP front end over the pipeline package.

Every endpoint is a thin shell: parse the request model, call the library,
wrap the result. Domain errors map onto status codes in one place
(missing inputs 404, bad configuration 422, other domain failures 400) so
handlers never touch HTTPException themselves.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import (
    AssetLoadError,
    ConfigError,
    LogsplatError,
    MissingExternalOutputs,
    MissingFile,
    SchemaViolation,
    UnknownClass,
)
from ..logstore import load_manifest
from ..metrics import HttpJudgeTransport, benchmark_manifest_check, load_benchmark_manifest
from ..pipeline import (
    Workspace,
    aggregate_reports,
    config_from_dict,
    judge_workspaces,
    read_json,
    run_evaluate,
    run_generate,
    run_harvest,
    run_lift,
    synth_scene,
)
from .schemas import (
    AggregateRequest,
    CensusRequest,
    CensusResponse,
    EvaluateResponse,
    EvaluateResult,
    GenerateResponse,
    GenerateResult,
    HarvestRequest,
    HarvestResponse,
    HarvestResult,
    HealthResponse,
    JudgeEmitResponse,
    JudgeRequest,
    JudgeRunResponse,
    LiftResponse,
    LiftResult,
    ReportRequest,
    StageRequest,
    SynthRequest,
    SynthResponse,
)

_HTTP_STATUS = (
    (MissingFile, 404),
    (AssetLoadError, 404),
    (MissingExternalOutputs, 404),
    (ConfigError, 422),
    (SchemaViolation, 422),
    (UnknownClass, 422),
)


def _handle_logsplat_error(request, exc: LogsplatError) -> JSONResponse:
    status = next((code for klass, code in _HTTP_STATUS if isinstance(exc, klass)), 400)
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "detail": str(exc)},
    )


def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def do_synth(req: SynthRequest) -> SynthResponse:
    log, _ = synth_scene(req.preset, req.seed, req.root)
    return SynthResponse(
        root=str(log.root),
        session_id=log.session_id,
        n_cameras=len(log.cameras),
        n_frames=len(log.frames),
        track_ids=sorted(log.tracks),
    )


def do_harvest(req: HarvestRequest) -> HarvestResponse:
    cfg = config_from_dict(req.config)
    log = load_manifest(req.manifest)
    results = run_harvest(log, req.workspace, cfg)
    return HarvestResponse(
        workspace=req.workspace,
        results=[HarvestResult(**r) for r in results],
    )


def do_generate(req: StageRequest) -> GenerateResponse:
    cfg = config_from_dict(req.config)
    results = run_generate(req.workspace, cfg)
    return GenerateResponse(
        workspace=req.workspace,
        results=[GenerateResult(**r) for r in results],
    )


def do_lift(req: StageRequest) -> LiftResponse:
    cfg = config_from_dict(req.config)
    results = run_lift(req.workspace, cfg)
    return LiftResponse(
        workspace=req.workspace,
        results=[LiftResult(**r) for r in results],
    )


def do_evaluate(req: StageRequest) -> EvaluateResponse:
    cfg = config_from_dict(req.config)
    results = run_evaluate(req.workspace, cfg)
    return EvaluateResponse(
        workspace=req.workspace,
        results=[EvaluateResult(**r) for r in results],
        aggregate=aggregate_reports(req.workspace),
    )


def do_aggregate(req: AggregateRequest) -> dict:
    return aggregate_reports(req.workspace)


def do_report(req: ReportRequest) -> dict:
    inst = Workspace(req.workspace).instance(req.object_id)
    return read_json(inst.report_path)


def do_judge(req: JudgeRequest) -> JudgeEmitResponse | JudgeRunResponse:
    cfg = config_from_dict(req.config)
    transport = None
    if req.emit_dir is None and cfg.judge.endpoint:
        transport = HttpJudgeTransport(
            cfg.judge.endpoint,
            token_env=cfg.judge.token_env,
            timeout_s=cfg.judge.timeout_s,
            retries=cfg.judge.retries,
        )
    doc = judge_workspaces(
        req.workspace,
        req.baseline_workspace,
        cfg,
        req.baseline_name,
        transport=transport,
        emit_dir=req.emit_dir,
    )
    if req.emit_dir is not None:
        return JudgeEmitResponse(**doc)
    return JudgeRunResponse(**doc)


def do_census(req: CensusRequest) -> CensusResponse:
    if (req.path is None) == (req.manifest is None):
        raise ConfigError("census needs exactly one of 'path' or 'manifest'")
    doc = load_benchmark_manifest(req.path) if req.path is not None else req.manifest
    table = benchmark_manifest_check(doc)
    d = table.to_dict()
    return CensusResponse(
        per_class=d["per_class"],
        totals=d["totals"],
        matches_expected=table.matches_expected(),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="logsplat service", version=__version__)
    app.add_exception_handler(LogsplatError, _handle_logsplat_error)
    app.get("/health", response_model=HealthResponse)(health)
    app.post("/synth", response_model=SynthResponse)(do_synth)
    app.post("/harvest", response_model=HarvestResponse)(do_harvest)
    app.post("/generate", response_model=GenerateResponse)(do_generate)
    app.post("/lift", response_model=LiftResponse)(do_lift)
    app.post("/evaluate", response_model=EvaluateResponse)(do_evaluate)
    app.post("/aggregate", response_model=dict)(do_aggregate)
    app.post("/report", response_model=dict)(do_report)
    app.post("/judge", response_model=JudgeEmitResponse | JudgeRunResponse)(do_judge)
    app.post("/bench/census", response_model=CensusResponse)(do_census)
    return app


app = create_app()
