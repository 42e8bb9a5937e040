"""Request/response models of the dispatch service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..scenarios import RANDOMIZED


class ScenarioSpecModel(BaseModel):
    kind: str = RANDOMIZED
    seed: int | None = None
    horizon: int | None = None
    n_devices: int | None = None
    controllable_share: float | None = None
    renewable_ratio: float | None = None

    def as_config_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        for name in ("seed", "horizon", "n_devices", "controllable_share", "renewable_ratio"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


class RunConfigModel(BaseModel):
    out_dir: str
    topology: str | None = None
    scenario: ScenarioSpecModel = Field(default_factory=ScenarioSpecModel)
    algorithm: str = "none"
    critical_line: str | None = None
    objective: str = "sum_norm_quadratic"
    power_mode: str = "both"
    variable_mode: str = "binary"
    w1: float = 1e6
    w2: float = 1e3
    internal_controller: bool = False
    pf_tol: float = 1e-8
    pf_max_iter: int = 100

    def as_config_dict(self) -> dict:
        out = self.model_dump(exclude_none=True)
        out["scenario"] = self.scenario.as_config_dict()
        return out


class MetricsModel(BaseModel):
    total_load_mwh: float
    total_load_mvarh: float
    residual_load_mwh: float
    residual_load_mvarh: float
    active_losses_sum_mw: float
    voltage_deviation_sum_pct: float
    voltage_deviation_max_pct: float
    phase_angle_sum_deg: float
    line_loading_sum_pct: float
    line_loading_max_pct: float
    trafo_loading_sum_pct: float
    trafo_loading_max_pct: float
    critical_line_id: str | None = None
    critical_line_loading_sum_pct: float | None = None
    critical_line_loading_max_pct: float | None = None


class RunRequest(BaseModel):
    config: RunConfigModel


class RunResponse(BaseModel):
    run_dir: str
    metrics: MetricsModel
    dispatch_seconds: float
    stage_seconds: dict[str, float]


class ScenarioRequest(BaseModel):
    out_dir: str
    topology: str | None = None
    scenario: ScenarioSpecModel = Field(default_factory=ScenarioSpecModel)


class ScenarioResponse(BaseModel):
    out_dir: str
    n_units: int
    n_devices: int
    devices_per_feeder: dict[str, int]
    controllable_share: float


class ReportRequest(BaseModel):
    run_dir: str


class CompareRequest(BaseModel):
    run_a: str
    run_b: str


class CompareRow(BaseModel):
    metric: str
    a: float | None = None
    b: float | None = None
    delta: float | None = None


class CompareResponse(BaseModel):
    rows: list[CompareRow]
    table: str


class ErrorPayload(BaseModel):
    stage: str
    error_type: str
    message: str


class HealthResponse(BaseModel):
    status: str
    version: str
