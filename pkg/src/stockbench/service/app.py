"""FastAPI service wrapping the benchmark pipeline.

Each endpoint is a thin adapter over the corresponding pipeline command; the
CLI calls the same handler functions in-process, so behavior is identical
over HTTP and on the command line.
"""
from __future__ import annotations

import logging

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..pipeline import StageError, cmd_build, cmd_characterize, cmd_report, cmd_run, cmd_synth
from .schemas import (
    BuildRequest,
    BuildResponse,
    CharacterizeRequest,
    CharacterizeResponse,
    DatasetInfo,
    HealthResponse,
    PatternRow,
    ReportRequest,
    ReportResponse,
    RunRequest,
    RunResponse,
    SynthRequest,
    SynthResponse,
)

logger = logging.getLogger(__name__)


def handle_synth(request: SynthRequest) -> SynthResponse:
    result = cmd_synth(
        out_dir=request.out_dir,
        seed=request.seed,
        cohort_size=request.cohort_size,
        n_days=request.n_days,
        regime_overrides=request.regime_overrides,
    )
    return SynthResponse(
        panel_csv=result.panel_csv,
        labels_csv=result.labels_csv,
        n_stocks=result.n_stocks,
        n_days=result.n_days,
    )


def handle_build(request: BuildRequest) -> BuildResponse:
    result = cmd_build(
        panel_csv=request.panel_csv,
        out_dir=request.out_dir,
        fmt=request.format,
        segment_len=request.segment_len,
        cohort_size=request.cohort_size,
        z_threshold=request.z_threshold,
    )
    return BuildResponse(
        labels_csv=result.labels_csv,
        datasets=[DatasetInfo(**vars(d)) for d in result.datasets],
        discarded_days=result.discarded_days,
    )


def handle_characterize(request: CharacterizeRequest) -> CharacterizeResponse:
    result = cmd_characterize(
        panel_csv=request.panel_csv,
        out_dir=request.out_dir,
        fmt=request.format,
        segment_len=request.segment_len,
        cohort_size=request.cohort_size,
        z_threshold=request.z_threshold,
        adf_lags=request.adf_lags,
    )
    return CharacterizeResponse(
        rows=[PatternRow(**row) for row in result.rows],
        csv_path=result.csv_path,
        json_path=result.json_path,
    )


def handle_run(request: RunRequest) -> RunResponse:
    result = cmd_run(request.config, jobs=request.jobs)
    return RunResponse(archive=result.archive, metrics=result.metrics)


def handle_report(request: ReportRequest) -> ReportResponse:
    result = cmd_report(list(request.archives), request.out_dir)
    return ReportResponse(
        table=result.table,
        table_csv=result.table_csv,
        cumulative_returns_csv=result.cumulative_returns_csv,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="stockbench", version=__version__)

    @app.exception_handler(ValueError)
    async def _bad_input(request, exc: ValueError):
        # covers PanelError and ConfigError too
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(StageError)
    async def _stage_error(request, exc: StageError):
        return JSONResponse(
            status_code=500, content={"detail": str(exc), "stage": exc.stage}
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=SynthResponse)
    def synth(request: SynthRequest) -> SynthResponse:
        return handle_synth(request)

    @app.post("/build", response_model=BuildResponse)
    def build(request: BuildRequest) -> BuildResponse:
        return handle_build(request)

    @app.post("/characterize", response_model=CharacterizeResponse)
    def characterize(request: CharacterizeRequest) -> CharacterizeResponse:
        return handle_characterize(request)

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        return handle_run(request)

    @app.post("/report", response_model=ReportResponse)
    def report(request: ReportRequest) -> ReportResponse:
        return handle_report(request)

    return app


app = create_app()
