"""FastAPI service wrapping the simulation pipeline.

Runs execute synchronously in the request (desk-scale workloads); artifact
directories live on the service host's filesystem. Domain errors map to
structured payloads the CLI translates into exit codes.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import (
    ConfigError,
    FlexgridError,
    PowerFlowDivergedError,
    SolverError,
)
from ..grid import default_topology, load_topology
from ..pipeline import RunConfig, compare, format_compare, run, write_scenario_files
from ..scenarios import controllable_energy_share, generate
from .schemas import (
    CompareRequest,
    CompareResponse,
    CompareRow,
    ErrorPayload,
    HealthResponse,
    MetricsModel,
    ReportRequest,
    RunRequest,
    RunResponse,
    ScenarioRequest,
    ScenarioResponse,
)

app = FastAPI(title="flexgrid dispatch service", version=__version__)


def _error_payload(exc: FlexgridError) -> ErrorPayload:
    if isinstance(exc, ConfigError):
        default_stage = "config"
    elif isinstance(exc, PowerFlowDivergedError):
        default_stage = "powerflow"
    elif isinstance(exc, SolverError):
        default_stage = "solver"
    else:
        default_stage = "internal"
    return ErrorPayload(
        stage=getattr(exc, "stage", default_stage),
        error_type=type(exc).__name__,
        message=str(exc),
    )


@app.exception_handler(FlexgridError)
async def flexgrid_error_handler(request: Request, exc: FlexgridError):
    status = 400 if isinstance(exc, ConfigError) else 500
    return JSONResponse(status_code=status, content=_error_payload(exc).model_dump())


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/runs", response_model=RunResponse)
def create_run(request: RunRequest) -> RunResponse:
    config = RunConfig.from_dict(request.config.as_config_dict())
    result = run(config)
    return RunResponse(
        run_dir=str(result.run_dir),
        metrics=MetricsModel(**result.metrics.to_dict()),
        dispatch_seconds=result.dispatch_seconds,
        stage_seconds=result.stage_seconds,
    )


@app.post("/scenarios", response_model=ScenarioResponse)
def create_scenario(request: ScenarioRequest) -> ScenarioResponse:
    config = RunConfig.from_dict(
        {"out_dir": request.out_dir, "topology": request.topology,
         "scenario": request.scenario.as_config_dict()}
    )
    topology = (
        default_topology()
        if config.topology_path in (None, "", "default")
        else load_topology(config.topology_path)
    )
    scenario = generate(config.scenario, topology)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_scenario_files(out_dir, scenario)
    return ScenarioResponse(
        out_dir=str(out_dir),
        n_units=len(scenario.placement.units),
        n_devices=len(scenario.placement.devices),
        devices_per_feeder=scenario.placement.devices_per_feeder(topology),
        controllable_share=controllable_energy_share(scenario),
    )


@app.post("/report", response_model=MetricsModel)
def report(request: ReportRequest) -> MetricsModel:
    import json

    path = Path(request.run_dir) / "metrics.json"
    if not path.exists():
        raise ConfigError(f"{request.run_dir} holds no metrics.json")
    return MetricsModel(**json.loads(path.read_text()))


@app.post("/compare", response_model=CompareResponse)
def compare_runs(request: CompareRequest) -> CompareResponse:
    rows = compare(request.run_a, request.run_b)
    return CompareResponse(
        rows=[CompareRow(**row) for row in rows],
        table=format_compare(rows, Path(request.run_a).name, Path(request.run_b).name),
    )
