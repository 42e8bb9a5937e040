"""Experiment pipeline: scenario -> dispatch -> power flow -> metrics.

A run writes a self-contained directory: the generated scenario, the
dispatch schedules, per-timestep power-flow results as CSV, and a metrics
JSON whose figures are all recomputable from the emitted CSVs. Wall-clock
timings live in a separate run_info.json so metrics.json stays byte-stable
for identical configs and seeds.
"""

from __future__ import annotations

import csv
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import AlgorithmKind, DispatchConfig, DispatchDevice, dispatch
from .devices import simulate_uncontrolled
from .errors import ConfigError, FlexgridError
from .grid import Topology, default_topology, load_topology
from .powerflow import MetricsReport, PowerFlowOptions, metrics, solve_series
from .scenarios import (
    RANDOMIZED,
    REGULAR,
    Scenario,
    ScenarioSpec,
    generate,
)
from .scheduling import ControlMode, DeviceModel, ObjectiveKind, PowerMode, VariableMode

NO_CONTROL = "none"


@dataclass
class RunConfig:
    out_dir: str
    topology_path: str | None = None  # None -> bundled default network
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec.randomized)
    algorithm: str = NO_CONTROL
    critical_line: str | None = None
    objective: ObjectiveKind = ObjectiveKind.SUM_NORM_QUADRATIC
    power_mode: PowerMode = PowerMode.BOTH
    variable_mode: VariableMode = VariableMode.BINARY
    w1: float = 1e6
    w2: float = 1e3
    internal_controller: bool = False
    pf_tol: float = 1e-8
    pf_max_iter: int = 100

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        try:
            scenario_raw = dict(raw.get("scenario", {}))
            kind = scenario_raw.pop("kind", RANDOMIZED)
            if kind == RANDOMIZED:
                spec = ScenarioSpec.randomized()
            elif kind == REGULAR:
                spec = ScenarioSpec.regular()
            else:
                raise ConfigError(f"unknown scenario kind {kind!r}")
            spec_kwargs = {
                k: scenario_raw[k]
                for k in (
                    "seed", "horizon", "n_devices", "controllable_share",
                    "renewable_ratio",
                )
                if k in scenario_raw
            }
            if spec_kwargs:
                from dataclasses import replace

                spec = replace(spec, **spec_kwargs)
            algorithm = raw.get("algorithm", NO_CONTROL)
            if algorithm not in (NO_CONTROL, *AlgorithmKind.ALL):
                raise ConfigError(f"unknown algorithm {algorithm!r}")
            return RunConfig(
                out_dir=str(raw["out_dir"]),
                topology_path=raw.get("topology"),
                scenario=spec,
                algorithm=algorithm,
                critical_line=raw.get("critical_line"),
                objective=ObjectiveKind(raw.get("objective", "sum_norm_quadratic")),
                power_mode=PowerMode(raw.get("power_mode", "both")),
                variable_mode=VariableMode(raw.get("variable_mode", "binary")),
                w1=float(raw.get("w1", 1e6)),
                w2=float(raw.get("w2", 1e3)),
                internal_controller=bool(raw.get("internal_controller", False)),
                pf_tol=float(raw.get("pf_tol", 1e-8)),
                pf_max_iter=int(raw.get("pf_max_iter", 100)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "out_dir": self.out_dir,
            "topology": self.topology_path,
            "scenario": {
                "kind": self.scenario.kind,
                "seed": self.scenario.seed,
                "horizon": self.scenario.horizon,
                "n_devices": self.scenario.n_devices,
                "controllable_share": self.scenario.controllable_share,
                "renewable_ratio": self.scenario.renewable_ratio,
            },
            "algorithm": self.algorithm,
            "critical_line": self.critical_line,
            "objective": self.objective.value,
            "power_mode": self.power_mode.value,
            "variable_mode": self.variable_mode.value,
            "w1": self.w1,
            "w2": self.w2,
            "internal_controller": self.internal_controller,
            "pf_tol": self.pf_tol,
            "pf_max_iter": self.pf_max_iter,
        }


@dataclass
class RunResult:
    run_dir: Path
    metrics: MetricsReport
    stage_seconds: dict[str, float]
    dispatch_seconds: float


@contextmanager
def _stage(name: str, timings: dict[str, float]):
    start = time.perf_counter()
    try:
        yield
    except FlexgridError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name  # type: ignore[attr-defined]
        raise
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def _load_topology(config: RunConfig) -> Topology:
    if config.topology_path in (None, "", "default"):
        return default_topology()
    return load_topology(config.topology_path)


def build_dispatch_devices(scenario: Scenario, config: RunConfig) -> list[DispatchDevice]:
    control = ControlMode(
        internal_controller=config.internal_controller, w1=config.w1, w2=config.w2
    )
    return [
        DispatchDevice(
            device_id=dev.device_id,
            bus_id=dev.bus_id,
            model=DeviceModel(
                dev.params, dev.x0, dev.exo, control,
                scenario.spec.dt_hours, device_id=dev.device_id,
            ),
        )
        for dev in scenario.placement.devices
    ]


def uncontrolled_profiles(scenario: Scenario) -> dict[str, np.ndarray]:
    """Thermostat-driven on/off profile per device (the no-control baseline)."""
    out = {}
    for dev in scenario.placement.devices:
        traj = simulate_uncontrolled(
            dev.params, dev.x0, dev.exo, scenario.spec.dt_hours
        )
        out[dev.device_id] = (traj.u * traj.v).astype(np.int8)
    return out


def run(config: RunConfig) -> RunResult:
    timings: dict[str, float] = {}
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    with _stage("topology", timings):
        topology = _load_topology(config)
    with _stage("scenario", timings):
        scenario = generate(config.scenario, topology)
        if config.critical_line is not None and config.critical_line not in topology.lines:
            raise ConfigError(f"unknown critical line {config.critical_line}")

    dt = scenario.spec.dt_hours
    t_steps = scenario.t_steps
    dispatch_seconds = 0.0
    with _stage("dispatch", timings):
        if config.algorithm == NO_CONTROL:
            profiles = uncontrolled_profiles(scenario)
            schedules = profiles
            controlled_act = {
                b: np.array(v, dtype=float) for b, v in scenario.residual_act.items()
            }
            controlled_react = {
                b: np.array(v, dtype=float) for b, v in scenario.residual_react.items()
            }
            for dev in scenario.placement.devices:
                on = profiles[dev.device_id].astype(float)
                controlled_act[dev.bus_id] += dev.params.p_rated * on
                controlled_react[dev.bus_id] += dev.params.q_rated * on
        else:
            fleet = build_dispatch_devices(scenario, config)
            dispatch_config = DispatchConfig(
                objective=config.objective, power_mode=config.power_mode,
                control=ControlMode(
                    internal_controller=config.internal_controller,
                    w1=config.w1, w2=config.w2,
                ),
                variable_mode=config.variable_mode, dt_hours=dt,
            )
            result = dispatch(
                config.algorithm, topology, fleet, scenario.residual_act,
                scenario.residual_react, dispatch_config,
                critical=config.critical_line,
            )
            schedules = result.schedules
            controlled_act = result.controlled_act
            controlled_react = result.controlled_react
            dispatch_seconds = result.solve_seconds

    device_on_kw = np.zeros(t_steps)
    device_on_kvar = np.zeros(t_steps)
    for dev in scenario.placement.devices:
        on = schedules[dev.device_id].astype(float)
        device_on_kw += dev.params.p_rated * on
        device_on_kvar += dev.params.q_rated * on
    consumption_kw = scenario.load_consumption_kw + device_on_kw
    consumption_kvar = scenario.load_consumption_kvar + device_on_kvar

    with _stage("powerflow", timings):
        results = solve_series(
            topology, controlled_act, controlled_react,
            PowerFlowOptions(tol=config.pf_tol, max_iter=config.pf_max_iter),
        )

    with _stage("metrics", timings):
        feeder_act = {}
        feeder_react = {}
        for feeder in topology.feeder_ids():
            buses = topology.feeder_buses(feeder)
            feeder_act[feeder] = sum(
                controlled_act.get(b, np.zeros(t_steps)) for b in buses
            )
            feeder_react[feeder] = sum(
                controlled_react.get(b, np.zeros(t_steps)) for b in buses
            )
        report = metrics(
            results, topology, dt, consumption_kw, consumption_kvar,
            feeder_act, feeder_react, critical_line=config.critical_line,
        )

    with _stage("write", timings):
        _write_run_dir(
            run_dir, config, topology, scenario, schedules, controlled_act,
            controlled_react, results, report, timings, dispatch_seconds,
        )
    return RunResult(
        run_dir=run_dir, metrics=report, stage_seconds=timings,
        dispatch_seconds=dispatch_seconds,
    )


def _json_dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_scenario_files(run_dir: Path, scenario: Scenario) -> None:
    placement = {
        "units": [
            {
                "id": u.unit_id, "bus": u.bus_id, "category": u.category,
                "rating_kw": u.rating_kw, "load_factor": u.load_factor,
            }
            for u in scenario.placement.units
        ],
        "devices": [
            {
                "id": d.device_id, "bus": d.bus_id, "kind": d.params.kind.value,
                "x0": d.x0, "p_rated_kw": d.params.p_rated,
                "q_rated_kvar": d.params.q_rated,
            }
            for d in scenario.placement.devices
        ],
        "spec": {
            "kind": scenario.spec.kind, "seed": scenario.spec.seed,
            "horizon": scenario.spec.horizon, "n_devices": scenario.spec.n_devices,
        },
        "series": "residuals.csv",
    }
    _json_dump(run_dir / "scenario.json", placement)
    with open(run_dir / "residuals.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "bus", "p_kw", "q_kvar"])
        for bus in sorted(scenario.residual_act):
            p = scenario.residual_act[bus]
            q = scenario.residual_react[bus]
            for t in range(scenario.t_steps):
                writer.writerow([t, bus, repr(float(p[t])), repr(float(q[t]))])


def _write_run_dir(
    run_dir, config, topology, scenario, schedules, controlled_act,
    controlled_react, results, report, timings, dispatch_seconds,
) -> None:
    _json_dump(run_dir / "config.json", config.to_dict())
    write_scenario_files(run_dir, scenario)
    _json_dump(
        run_dir / "dispatch.json",
        {
            "algorithm": config.algorithm,
            "schedules": {
                dev_id: [int(v) for v in u] for dev_id, u in sorted(schedules.items())
            },
        },
    )
    with open(run_dir / "bus_states.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "bus", "u_mag_pu", "theta_rad"])
        for t, res in enumerate(results):
            for bus in sorted(res.bus_states):
                state = res.bus_states[bus]
                writer.writerow([t, bus, repr(state.u_mag), repr(state.theta)])
    with open(run_dir / "branch_flows.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "element", "kind", "p_km", "q_km", "p_mk", "q_mk",
             "p_loss", "q_loss", "loading_pct"]
        )
        for t, res in enumerate(results):
            for eid in sorted(res.branch_flows):
                f = res.branch_flows[eid]
                writer.writerow(
                    [t, eid, f.kind, repr(f.p_km), repr(f.q_km), repr(f.p_mk),
                     repr(f.q_mk), repr(f.p_loss), repr(f.q_loss),
                     repr(f.loading_pct)]
                )
    _json_dump(run_dir / "metrics.json", report.to_dict())
    _json_dump(
        run_dir / "run_info.json",
        {
            "version": __version__,
            "stage_seconds": timings,
            "dispatch_seconds": dispatch_seconds,
        },
    )


COMPARE_ROWS = (
    "total_load_mwh",
    "total_load_mvarh",
    "residual_load_mwh",
    "residual_load_mvarh",
    "active_losses_sum_mw",
    "voltage_deviation_sum_pct",
    "voltage_deviation_max_pct",
    "phase_angle_sum_deg",
    "line_loading_sum_pct",
    "line_loading_max_pct",
    "trafo_loading_sum_pct",
    "trafo_loading_max_pct",
    "critical_line_loading_sum_pct",
    "critical_line_loading_max_pct",
)


def compare(run_a: str | Path, run_b: str | Path) -> list[dict]:
    """Side-by-side metric rows of two completed runs on the same scenario."""
    rows = []
    payloads = []
    configs = []
    for run_dir in (run_a, run_b):
        run_dir = Path(run_dir)
        try:
            payloads.append(json.loads((run_dir / "metrics.json").read_text()))
            configs.append(json.loads((run_dir / "config.json").read_text()))
        except FileNotFoundError as exc:
            raise ConfigError(f"{run_dir} is not a completed run: {exc}") from exc
    sa, sb = configs[0]["scenario"], configs[1]["scenario"]
    if (sa["kind"], sa["seed"], sa["horizon"]) != (sb["kind"], sb["seed"], sb["horizon"]):
        raise ConfigError(
            f"runs use different scenarios: {sa} vs {sb}"
        )
    infos = []
    for run_dir in (run_a, run_b):
        info_path = Path(run_dir) / "run_info.json"
        infos.append(json.loads(info_path.read_text()) if info_path.exists() else {})
    rows.append(
        {
            "metric": "computational_time_s",
            "a": infos[0].get("dispatch_seconds"),
            "b": infos[1].get("dispatch_seconds"),
            "delta": None,
        }
    )
    for key in COMPARE_ROWS:
        if key not in payloads[0] and key not in payloads[1]:
            continue
        a = payloads[0].get(key)
        b = payloads[1].get(key)
        delta = None if a is None or b is None else b - a
        rows.append({"metric": key, "a": a, "b": b, "delta": delta})
    return rows


def format_compare(rows: list[dict], label_a: str = "run A", label_b: str = "run B") -> str:
    width = max(len(r["metric"]) for r in rows)
    lines = [f"{'metric':<{width}}  {label_a:>16}  {label_b:>16}  {'delta':>16}"]
    for r in rows:
        def fmt(v):
            return "-" if v is None else f"{v:16.6g}"

        lines.append(
            f"{r['metric']:<{width}}  {fmt(r['a'])}  {fmt(r['b'])}  {fmt(r['delta'])}"
        )
    return "\n".join(lines)
