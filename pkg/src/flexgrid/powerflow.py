"""AC power flow on the radial topology.

Per-timestep solution uses a backward/forward sweep (current aggregation
leaf-to-root, voltage update root-to-leaf), which converges fast on radial
LV networks and needs no matrix factorization. Converged voltages are fed
back through the closed-form branch-flow expressions so the dual loss
identities (flow sum vs. voltage-drop form) are checkable on every solution.

Transformers are modelled with a complex tap t = a*exp(j*phi). The sweep
uses the exact two-port relations: the child-side voltage update is
V_m = t*V_k - z*I_down and the parent side draws conj(t)*I_down.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalConsistencyError, PowerFlowDivergedError
from .grid import Topology, transformer_impedance

LOSS_IDENTITY_TOL = 1e-9


def line_flow(
    g: float, b: float, b_sh: float, u_k: float, u_m: float, theta_km: float
) -> tuple[float, float]:
    """Sending-end active/reactive flow of a line."""
    cos_t, sin_t = math.cos(theta_km), math.sin(theta_km)
    p_km = u_k**2 * g - u_k * u_m * g * cos_t - u_k * u_m * b * sin_t
    q_km = -(u_k**2) * (b + b_sh) + u_k * u_m * b * cos_t - u_k * u_m * g * sin_t
    return p_km, q_km


def line_losses(
    flows_km: tuple[float, float],
    flows_mk: tuple[float, float],
    e_k: complex,
    e_m: complex,
    g: float,
    b: float,
    b_sh: float,
) -> tuple[float, float]:
    """Branch losses from the voltage drop, cross-checked against the flow sum.

    p_loss = g*|E_k - E_m|^2 and q_loss = -b_sh*(U_k^2 + U_m^2) - b*|E_k - E_m|^2
    must both agree with the respective sending-end sums.
    """
    drop_sq = abs(e_k - e_m) ** 2
    p_loss = g * drop_sq
    q_loss = -b_sh * (abs(e_m) ** 2 + abs(e_k) ** 2) - b * drop_sq
    if abs(p_loss - (flows_km[0] + flows_mk[0])) > 1e-10 * max(1.0, abs(p_loss)):
        raise NumericalConsistencyError(
            f"active loss identity violated: {p_loss} vs {flows_km[0] + flows_mk[0]}"
        )
    if abs(q_loss - (flows_km[1] + flows_mk[1])) > 1e-10 * max(1.0, abs(q_loss)):
        raise NumericalConsistencyError(
            f"reactive loss identity violated: {q_loss} vs {flows_km[1] + flows_mk[1]}"
        )
    return p_loss, q_loss


def inphase_transformer_flow(
    a: float, g: float, b: float, u_k: float, u_m: float, theta_km: float
) -> tuple[float, float, float, float, float, float]:
    """Flows and losses of an in-phase transformer with turns ratio a.

    Returns (p_km, q_km, p_mk, q_mk, p_loss, q_loss). The reactive loss is
    reported as the flow sum q_km + q_mk = -b*|a*E_k - E_m|^2; its closed
    form with the opposite sign circulates and is covered by a dedicated
    cross-check test.
    """
    cos_km, sin_km = math.cos(theta_km), math.sin(theta_km)
    cos_mk, sin_mk = math.cos(-theta_km), math.sin(-theta_km)
    p_km = (a * u_k) ** 2 * g - a * u_k * u_m * g * cos_km - a * u_k * u_m * b * sin_km
    q_km = -((a * u_k) ** 2) * b + a * u_k * u_m * b * cos_km - a * u_k * u_m * g * sin_km
    p_mk = u_m**2 * g - a * u_k * u_m * g * cos_mk - a * u_k * u_m * b * sin_mk
    q_mk = -(u_m**2) * b + a * u_k * u_m * b * cos_mk - a * u_k * u_m * g * sin_mk
    drop_sq = (a * u_k) ** 2 + u_m**2 - 2 * a * u_k * u_m * cos_km
    return p_km, q_km, p_mk, q_mk, g * drop_sq, -b * drop_sq


def phase_shift_transformer_flow(
    a: float,
    phi: float,
    g: float,
    b: float,
    u_k: float,
    u_m: float,
    theta_km: float,
) -> tuple[float, float, float, float, float, float]:
    """Flows and losses of a phase-shifting transformer, tap t = a*exp(j*phi).

    The sending-end flows use (theta_km + phi); the receiving end uses
    (theta_mk - phi); losses use |t*E_k - E_m|^2.
    """
    cos_km, sin_km = math.cos(theta_km + phi), math.sin(theta_km + phi)
    cos_mk, sin_mk = math.cos(-theta_km - phi), math.sin(-theta_km - phi)
    p_km = u_k**2 * a**2 * g - u_k * u_m * a * g * cos_km - u_k * u_m * a * b * sin_km
    q_km = -(u_k**2) * a**2 * b + u_k * u_m * a * b * cos_km - u_k * u_m * a * g * sin_km
    p_mk = u_m**2 * g - a * u_k * u_m * g * cos_mk - a * u_k * u_m * b * sin_mk
    q_mk = -(u_m**2) * b + a * u_k * u_m * b * cos_mk - a * u_k * u_m * g * sin_mk
    drop_sq = a**2 * u_k**2 + u_m**2 - 2 * a * u_k * u_m * cos_km
    return p_km, q_km, p_mk, q_mk, g * drop_sq, -b * drop_sq


@dataclass(frozen=True)
class BusState:
    u_mag: float  # per-unit
    theta: float  # radians

    @property
    def phasor(self) -> complex:
        return cmath.rect(self.u_mag, self.theta)


@dataclass(frozen=True)
class BranchFlow:
    element_id: str
    kind: str  # "line" | "transformer"
    p_km: float
    q_km: float
    p_mk: float
    q_mk: float
    p_loss: float
    q_loss: float
    loading_pct: float


@dataclass
class PowerFlowResult:
    bus_states: dict[str, BusState]
    branch_flows: dict[str, BranchFlow]
    p_loss_total: float  # pu
    slack_p: float  # pu, net flow from the slack into the network
    slack_q: float
    iterations: int

    def loss_mw(self, base_mva: float) -> float:
        return self.p_loss_total * base_mva


@dataclass(frozen=True)
class PowerFlowOptions:
    tol: float = 1e-8
    max_iter: int = 100


@dataclass(frozen=True)
class _Branch:
    element_id: str
    kind: str
    parent: str
    child: str
    z: complex
    tap: complex
    g: float
    b: float
    b_sh: float
    i_max_a: float  # lines only
    s_rated_mva: float  # transformers only
    base_kv_child: float


def _build_branches(topology: Topology) -> list[_Branch]:
    """Branch list in topological order (parents before children)."""
    branches: list[_Branch] = []
    for trafo_id in sorted(topology.transformers):
        trafo = topology.transformers[trafo_id]
        r, x = transformer_impedance(trafo, topology.base_mva)
        z = complex(r, x)
        y = 1.0 / z
        branches.append(
            _Branch(
                element_id=trafo.id, kind="transformer", parent=trafo.hv_bus,
                child=trafo.lv_bus, z=z, tap=trafo.complex_tap,
                g=y.real, b=y.imag, b_sh=0.0,
                i_max_a=0.0, s_rated_mva=trafo.s_rated_mva,
                base_kv_child=trafo.lv_kv,
            )
        )
    ordered_buses = sorted(topology.depth, key=lambda bus: (topology.depth[bus], bus))
    for bus in ordered_buses:
        for line_id in sorted(topology.children[bus]):
            line = topology.lines[line_id]
            base_kv = topology.buses[line.to_bus].nominal_kv
            g, b = line.admittance_pu(base_kv, topology.base_mva)
            branches.append(
                _Branch(
                    element_id=line.id, kind="line", parent=line.from_bus,
                    child=line.to_bus, z=line.impedance_pu(base_kv, topology.base_mva),
                    tap=1.0 + 0.0j, g=g, b=b, b_sh=line.b_sh_pu,
                    i_max_a=line.i_max_a, s_rated_mva=0.0, base_kv_child=base_kv,
                )
            )
    return branches


def _branch_flow(
    branch: _Branch, v_parent: complex, v_child: complex, base_mva: float
) -> BranchFlow:
    u_k, u_m = abs(v_parent), abs(v_child)
    theta_km = cmath.phase(v_parent) - cmath.phase(v_child)
    if branch.kind == "line":
        p_km, q_km = line_flow(branch.g, branch.b, branch.b_sh, u_k, u_m, theta_km)
        p_mk, q_mk = line_flow(branch.g, branch.b, branch.b_sh, u_m, u_k, -theta_km)
        p_loss, q_loss = line_losses(
            (p_km, q_km), (p_mk, q_mk), v_parent, v_child, branch.g, branch.b, branch.b_sh
        )
        # physical amps from sending-end apparent power and line-to-line voltage
        # (single-phase-equivalent balanced assumption)
        s_mva = math.hypot(p_km, q_km) * base_mva
        u_kv = u_k * branch.base_kv_child
        amps = s_mva * 1000.0 / (math.sqrt(3.0) * u_kv) if u_kv > 0 else 0.0
        loading = 100.0 * amps / branch.i_max_a if branch.i_max_a > 0 else 0.0
    else:
        a = abs(branch.tap)
        phi = cmath.phase(branch.tap)
        if phi == 0.0:
            p_km, q_km, p_mk, q_mk, p_loss, q_loss = inphase_transformer_flow(
                a, branch.g, branch.b, u_k, u_m, theta_km
            )
        else:
            p_km, q_km, p_mk, q_mk, p_loss, q_loss = phase_shift_transformer_flow(
                a, phi, branch.g, branch.b, u_k, u_m, theta_km
            )
        s_max = max(math.hypot(p_km, q_km), math.hypot(p_mk, q_mk))
        loading = 100.0 * s_max * base_mva / branch.s_rated_mva
    if abs(p_loss - (p_km + p_mk)) > LOSS_IDENTITY_TOL:
        raise NumericalConsistencyError(
            f"{branch.element_id}: active loss identity off by {p_loss - (p_km + p_mk):.3e}"
        )
    return BranchFlow(
        element_id=branch.element_id, kind=branch.kind,
        p_km=p_km, q_km=q_km, p_mk=p_mk, q_mk=q_mk,
        p_loss=p_loss, q_loss=q_loss, loading_pct=loading,
    )


def solve_power_flow(
    topology: Topology,
    injections: dict[str, complex],
    options: PowerFlowOptions = PowerFlowOptions(),
) -> PowerFlowResult:
    """Solve one timestep. injections: per-unit complex S per bus, consumption
    positive. Buses without an entry are treated as zero-injection."""
    branches = _build_branches(topology)
    order = list(range(len(branches)))
    v: dict[str, complex] = {bus: 1.0 + 0.0j for bus in topology.buses}
    s_load = {bus: complex(injections.get(bus, 0.0)) for bus in topology.buses}
    shunts: dict[str, complex] = {bus: 0.0j for bus in topology.buses}
    for br in branches:
        if br.b_sh:
            shunts[br.parent] += 1j * br.b_sh
            shunts[br.child] += 1j * br.b_sh

    i_down: list[complex] = [0.0j] * len(branches)
    iterations = 0
    for iterations in range(1, options.max_iter + 1):
        i_acc = {
            bus: (s_load[bus] / v[bus]).conjugate() + shunts[bus] * v[bus]
            for bus in topology.buses
        }
        for idx in reversed(order):
            br = branches[idx]
            i_down[idx] = i_acc[br.child]
            i_acc[br.parent] += br.tap.conjugate() * i_down[idx]
        max_dv = 0.0
        for idx in order:
            br = branches[idx]
            v_new = br.tap * v[br.parent] - br.z * i_down[idx]
            max_dv = max(max_dv, abs(v_new - v[br.child]))
            v[br.child] = v_new
        if max_dv < options.tol:
            break
    else:
        raise PowerFlowDivergedError(
            f"sweep did not converge in {options.max_iter} iterations", mismatch=max_dv
        )

    flows = {
        br.element_id: _branch_flow(br, v[br.parent], v[br.child], topology.base_mva)
        for br in branches
    }

    # power mismatch at every non-slack bus
    inflow: dict[str, complex] = {bus: 0.0j for bus in topology.buses}
    for br in branches:
        flow = flows[br.element_id]
        inflow[br.child] += complex(-flow.p_mk, -flow.q_mk)
        inflow[br.parent] -= complex(flow.p_km, flow.q_km)
    # the closed-form flows carry the line-end shunts, so plain KCL applies
    worst = 0.0
    for bus in topology.buses:
        if bus == topology.slack_bus:
            continue
        worst = max(worst, abs(inflow[bus] - s_load[bus]))
    if worst > max(options.tol * 10, 1e-7):
        raise PowerFlowDivergedError(
            f"power mismatch {worst:.3e} above tolerance after convergence", mismatch=worst
        )

    slack = sum(
        complex(flows[br.element_id].p_km, flows[br.element_id].q_km)
        for br in branches
        if br.parent == topology.slack_bus
    )
    bus_states = {
        bus: BusState(u_mag=abs(v[bus]), theta=cmath.phase(v[bus])) for bus in topology.buses
    }
    p_loss_total = sum(f.p_loss for f in flows.values())
    return PowerFlowResult(
        bus_states=bus_states, branch_flows=flows, p_loss_total=p_loss_total,
        slack_p=slack.real, slack_q=slack.imag, iterations=iterations,
    )


def solve_series(
    topology: Topology,
    injections_kw: dict[str, np.ndarray],
    injections_kvar: dict[str, np.ndarray],
    options: PowerFlowOptions = PowerFlowOptions(),
) -> list[PowerFlowResult]:
    """Solve every timestep of a kW/kvar injection series (consumption > 0)."""
    t_steps = 0
    for arr in injections_kw.values():
        t_steps = max(t_steps, len(arr))
    base_kw = topology.base_mva * 1000.0
    results = []
    for t in range(t_steps):
        injections = {
            bus: complex(
                injections_kw.get(bus, _ZEROS)[t] if bus in injections_kw else 0.0,
                injections_kvar.get(bus, _ZEROS)[t] if bus in injections_kvar else 0.0,
            )
            / base_kw
            for bus in set(injections_kw) | set(injections_kvar)
        }
        results.append(solve_power_flow(topology, injections, options))
    return results


_ZEROS = np.zeros(0)


@dataclass
class MetricsReport:
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

    def to_dict(self) -> dict:
        out = {
            "total_load_mwh": self.total_load_mwh,
            "total_load_mvarh": self.total_load_mvarh,
            "residual_load_mwh": self.residual_load_mwh,
            "residual_load_mvarh": self.residual_load_mvarh,
            "active_losses_sum_mw": self.active_losses_sum_mw,
            "voltage_deviation_sum_pct": self.voltage_deviation_sum_pct,
            "voltage_deviation_max_pct": self.voltage_deviation_max_pct,
            "phase_angle_sum_deg": self.phase_angle_sum_deg,
            "line_loading_sum_pct": self.line_loading_sum_pct,
            "line_loading_max_pct": self.line_loading_max_pct,
            "trafo_loading_sum_pct": self.trafo_loading_sum_pct,
            "trafo_loading_max_pct": self.trafo_loading_max_pct,
        }
        if self.critical_line_id is not None:
            out["critical_line_id"] = self.critical_line_id
            out["critical_line_loading_sum_pct"] = self.critical_line_loading_sum_pct
            out["critical_line_loading_max_pct"] = self.critical_line_loading_max_pct
        return out


def metrics(
    results: list[PowerFlowResult],
    topology: Topology,
    dt_hours: float,
    consumption_kw: np.ndarray,
    consumption_kvar: np.ndarray,
    feeder_residual_kw: dict[str, np.ndarray],
    feeder_residual_kvar: dict[str, np.ndarray],
    critical_line: str | None = None,
) -> MetricsReport:
    """Aggregate per-timestep power-flow results into the report rows.

    Loading sums are per-element peaks summed over elements; voltage/angle
    sums run over every (timestep, bus) pair. Consumption series cover only
    consuming units (device switches plus non-controllable loads), which is
    why total load shrinks under control while residual energy is a separate
    net-exchange figure.
    """
    if not results:
        raise ValueError("metrics needs at least one timestep")
    lv_buses = [b for b in topology.buses if b != topology.slack_bus]
    dev_sum = 0.0
    dev_max = 0.0
    angle_sum = 0.0
    per_element_max: dict[str, float] = {}
    for res in results:
        for bus in lv_buses:
            state = res.bus_states[bus]
            dev = abs(state.u_mag - 1.0) * 100.0
            dev_sum += dev
            dev_max = max(dev_max, dev)
            angle_sum += abs(math.degrees(state.theta))
        for eid, flow in res.branch_flows.items():
            cur = per_element_max.get(eid, 0.0)
            if flow.loading_pct > cur:
                per_element_max[eid] = flow.loading_pct
    line_ids = set(topology.lines)
    line_peaks = [per_element_max[e] for e in per_element_max if e in line_ids]
    trafo_peaks = [per_element_max[e] for e in per_element_max if e not in line_ids]
    report = MetricsReport(
        total_load_mwh=float(np.sum(np.abs(consumption_kw))) * dt_hours / 1000.0,
        total_load_mvarh=float(np.sum(np.abs(consumption_kvar))) * dt_hours / 1000.0,
        residual_load_mwh=float(
            sum(np.sum(np.abs(series)) for series in feeder_residual_kw.values())
        )
        * dt_hours
        / 1000.0,
        residual_load_mvarh=float(
            sum(np.sum(np.abs(series)) for series in feeder_residual_kvar.values())
        )
        * dt_hours
        / 1000.0,
        active_losses_sum_mw=float(
            sum(res.p_loss_total for res in results) * topology.base_mva
        ),
        voltage_deviation_sum_pct=dev_sum,
        voltage_deviation_max_pct=dev_max,
        phase_angle_sum_deg=angle_sum,
        line_loading_sum_pct=float(sum(line_peaks)),
        line_loading_max_pct=float(max(line_peaks, default=0.0)),
        trafo_loading_sum_pct=float(sum(trafo_peaks)),
        trafo_loading_max_pct=float(max(trafo_peaks, default=0.0)),
    )
    if critical_line is not None:
        if critical_line not in topology.lines:
            raise ValueError(f"unknown critical line {critical_line}")
        loadings = [res.branch_flows[critical_line].loading_pct for res in results]
        report.critical_line_id = critical_line
        report.critical_line_loading_sum_pct = float(sum(loadings))
        report.critical_line_loading_max_pct = float(max(loadings))
    return report
