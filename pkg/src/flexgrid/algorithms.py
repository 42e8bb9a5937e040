"""The five dispatch strategies orchestrating scheduling solves on the grid.

Grid algorithms flatten each feeder's aggregate exchange with the MV level;
line algorithms target the per-line flows derived from the radial adjacency.
"Optimal" variants solve all devices of a feeder jointly, "heuristic"
variants schedule one device after another against the updated residual.
Feeders never share flexibility: every algorithm runs per feeder.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TopologyError
from .grid import Topology, downstream_buses
from .scheduling import (
    ControlMode,
    DeviceModel,
    ObjectiveKind,
    PowerMode,
    ScheduleProblem,
    VariableMode,
    round_and_repair,
    solve_multi_device,
    solve_single_device,
)
from .scheduling import _CoordinateDescent  # line-flow descent builds on the CD core


class AlgorithmKind:
    OPTIMAL_GRID = "optimal_grid"
    HEURISTIC_GRID = "heuristic_grid"
    OPTIMAL_LINE = "optimal_line"
    HEURISTIC_LINE = "heuristic_line"
    CRITICAL_LINE = "critical_line"

    ALL = (OPTIMAL_GRID, HEURISTIC_GRID, OPTIMAL_LINE, HEURISTIC_LINE, CRITICAL_LINE)


@dataclass(frozen=True)
class DispatchDevice:
    device_id: str
    bus_id: str
    model: DeviceModel


@dataclass(frozen=True)
class DispatchConfig:
    objective: ObjectiveKind = ObjectiveKind.SUM_NORM_QUADRATIC
    power_mode: PowerMode = PowerMode.BOTH
    control: ControlMode = ControlMode()
    variable_mode: VariableMode = VariableMode.BINARY
    exact_bits_single: int = 20
    exact_bits_joint: int = 24
    exact_bits_line: int = 16  # enumeration budget of the line-flow objective
    dt_hours: float = 0.25


@dataclass
class DispatchResult:
    algorithm: str
    schedules: dict[str, np.ndarray]  # device_id -> binary switch vector
    device_bus: dict[str, str]
    controlled_act: dict[str, np.ndarray]  # bus -> residual incl. devices, kW
    controlled_react: dict[str, np.ndarray]
    feeder_exchange_act: dict[str, np.ndarray]
    feeder_exchange_react: dict[str, np.ndarray]
    solve_seconds: float
    device_order: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def flexibility_key(dev: DispatchDevice) -> tuple:
    """Heuristic dispatch priority: biggest energy flexibility first
    (band width times rating over input gain), device id breaking ties."""
    params = dev.model.params
    flexibility = params.t_db * params.p_rated / params.c_inp
    return (-flexibility, dev.device_id)


def _problem_for(
    devices: list[DispatchDevice],
    r_act: np.ndarray,
    r_react: np.ndarray,
    config: DispatchConfig,
) -> ScheduleProblem:
    return ScheduleProblem(
        r_act=r_act, r_react=r_react, devices=[d.model for d in devices],
        objective=config.objective, power_mode=config.power_mode,
        variable_mode=config.variable_mode,
        exact_bits_single=config.exact_bits_single,
        exact_bits_joint=config.exact_bits_joint, dt_hours=config.dt_hours,
    )


def _feeder_groups(
    topology: Topology, fleet: list[DispatchDevice]
) -> dict[str, list[DispatchDevice]]:
    groups: dict[str, list[DispatchDevice]] = {f: [] for f in topology.feeder_ids()}
    for dev in fleet:
        bus = topology.buses.get(dev.bus_id)
        if bus is None:
            raise ConfigError(f"device {dev.device_id}: unknown bus {dev.bus_id}")
        groups[bus.feeder_id].append(dev)
    return groups


def _aggregate(residual: dict[str, np.ndarray], buses, t_steps: int) -> np.ndarray:
    total = np.zeros(t_steps)
    for bus in buses:
        if bus in residual:
            total = total + residual[bus]
    return total


def _result_from_schedules(
    algorithm: str,
    topology: Topology,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    schedules: dict[str, np.ndarray],
    solve_seconds: float,
    device_order: list[str],
    stats: dict,
    t_steps: int,
) -> DispatchResult:
    controlled_act = {b: np.array(v, dtype=float) for b, v in residual_act.items()}
    controlled_react = {b: np.array(v, dtype=float) for b, v in residual_react.items()}
    device_bus = {}
    for dev in fleet:
        u = schedules[dev.device_id].astype(float)
        device_bus[dev.device_id] = dev.bus_id
        if dev.bus_id not in controlled_act:
            controlled_act[dev.bus_id] = np.zeros(t_steps)
            controlled_react[dev.bus_id] = np.zeros(t_steps)
        controlled_act[dev.bus_id] = controlled_act[dev.bus_id] + dev.model.p * u
        controlled_react[dev.bus_id] = controlled_react[dev.bus_id] + dev.model.q * u
    exchange_act = {}
    exchange_react = {}
    for feeder in topology.feeder_ids():
        buses = topology.feeder_buses(feeder)
        exchange_act[feeder] = _aggregate(controlled_act, buses, t_steps)
        exchange_react[feeder] = _aggregate(controlled_react, buses, t_steps)
    return DispatchResult(
        algorithm=algorithm, schedules=schedules, device_bus=device_bus,
        controlled_act=controlled_act, controlled_react=controlled_react,
        feeder_exchange_act=exchange_act, feeder_exchange_react=exchange_react,
        solve_seconds=solve_seconds, device_order=device_order, stats=stats,
    )


def _sequential_dispatch(
    devices: list[DispatchDevice],
    r_act: np.ndarray,
    r_react: np.ndarray,
    config: DispatchConfig,
    schedules: dict[str, np.ndarray],
    order_log: list[str],
) -> tuple[np.ndarray, np.ndarray]:
    """One device at a time against the running residual; updates in place."""
    for dev in sorted(devices, key=flexibility_key):
        problem = _problem_for([dev], r_act, r_react, config)
        sched = solve_single_device(problem)
        u = sched.u[0].astype(float)
        schedules[dev.device_id] = sched.u[0]
        order_log.append(dev.device_id)
        r_act = r_act + dev.model.p * u
        r_react = r_react + dev.model.q * u
    return r_act, r_react


def heuristic_grid(
    topology: Topology,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    config: DispatchConfig = DispatchConfig(),
    t_steps: int | None = None,
) -> DispatchResult:
    """Flatten each feeder's exchange, one device after another."""
    t_steps = t_steps or _infer_steps(residual_act, fleet)
    start = time.perf_counter()
    groups = _feeder_groups(topology, fleet)
    schedules: dict[str, np.ndarray] = {}
    order: list[str] = []
    for feeder in topology.feeder_ids():
        r_act = _aggregate(residual_act, topology.feeder_buses(feeder), t_steps)
        r_react = _aggregate(residual_react, topology.feeder_buses(feeder), t_steps)
        _sequential_dispatch(groups[feeder], r_act, r_react, config, schedules, order)
    return _result_from_schedules(
        AlgorithmKind.HEURISTIC_GRID, topology, fleet, residual_act, residual_react,
        schedules, time.perf_counter() - start, order, {}, t_steps,
    )


def optimal_grid(
    topology: Topology,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    config: DispatchConfig = DispatchConfig(),
    t_steps: int | None = None,
) -> DispatchResult:
    """Flatten each feeder's exchange with one joint solve per feeder."""
    t_steps = t_steps or _infer_steps(residual_act, fleet)
    start = time.perf_counter()
    groups = _feeder_groups(topology, fleet)
    schedules: dict[str, np.ndarray] = {}
    order: list[str] = []
    stats: dict = {}
    for feeder in topology.feeder_ids():
        devices = groups[feeder]
        if not devices:
            continue
        r_act = _aggregate(residual_act, topology.feeder_buses(feeder), t_steps)
        r_react = _aggregate(residual_react, topology.feeder_buses(feeder), t_steps)
        problem = _problem_for(devices, r_act, r_react, config)
        sched = solve_multi_device(problem)
        for i, dev in enumerate(devices):
            schedules[dev.device_id] = sched.u[i]
            order.append(dev.device_id)
        stats[feeder] = sched.stats
    return _result_from_schedules(
        AlgorithmKind.OPTIMAL_GRID, topology, fleet, residual_act, residual_react,
        schedules, time.perf_counter() - start, order, stats, t_steps,
    )


class _LineFlowDescent(_CoordinateDescent):
    """Coordinate descent on the summed squared line flows of one feeder.

    Flows are affine in u (a device loads every line on its path to the
    feeder root), so the per-coordinate core stays an exact quadratic and the
    comfort machinery of the base class applies unchanged.
    """

    def __init__(self, problem: ScheduleProblem, membership: np.ndarray,
                 base_act: np.ndarray, base_react: np.ndarray, u0=None):
        if problem.objective != ObjectiveKind.SUM_NORM_QUADRATIC:
            raise ConfigError("line-flow dispatch supports the quadratic sum norm only")
        super().__init__(problem, u0=u0)
        self.membership = membership  # (n_dev, n_lines) path indicators
        self.base_act = base_act  # (n_lines, T) flows with all devices off
        self.base_react = base_react
        self._recompute_flows()

    def _recompute_flows(self):
        p = np.array([d.p for d in self.devs])
        q = np.array([d.q for d in self.devs])
        self.flow_act = self.base_act + np.einsum(
            "il,i,it->lt", self.membership, p, self.u
        )
        self.flow_react = self.base_react + np.einsum(
            "il,i,it->lt", self.membership, q, self.u
        )

    def objective_now(self) -> float:
        core = 0.0
        if self.use_act:
            core += float(np.sum(self.flow_act**2))
        if self.use_react:
            core += float(np.sum(self.flow_react**2))
        slack = 0.0
        for i, dev in enumerate(self.devs):
            slack += float(np.sum(dev.slacks_for_states(self.x[i])))
        return core + slack

    def _quad_coefficients(self, i: int, t: int, ra: float, rr: float) -> tuple[float, float]:
        dev = self.devs[i]
        lines = np.flatnonzero(self.membership[i])
        k = len(lines)
        a = b = 0.0
        if self.use_act:
            rest = self.flow_act[lines, t] - dev.p * self.u[i, t]
            a += 2 * k * dev.p * dev.p
            b += 2 * dev.p * float(rest.sum())
        if self.use_react:
            rest = self.flow_react[lines, t] - dev.q * self.u[i, t]
            a += 2 * k * dev.q * dev.q
            b += 2 * dev.q * float(rest.sum())
        return a, b

    def _apply_update(self, i: int, t: int, delta: float):
        super()._apply_update(i, t, delta)
        dev = self.devs[i]
        lines = self.membership[i].astype(bool)
        self.flow_act[lines, t] += dev.p * delta
        self.flow_react[lines, t] += dev.q * delta


def _line_structures(topology: Topology, feeder: str, devices, residual_act, residual_react, t_steps):
    line_ids = sorted(
        lid for lid, line in topology.lines.items()
        if topology.buses[line.from_bus].feeder_id == feeder
    )
    buses = topology.feeder_buses(feeder)
    base_act = np.zeros((len(line_ids), t_steps))
    base_react = np.zeros((len(line_ids), t_steps))
    for k, lid in enumerate(line_ids):
        down = downstream_buses(topology, lid)
        base_act[k] = _aggregate(residual_act, down, t_steps)
        base_react[k] = _aggregate(residual_react, down, t_steps)
    membership = np.zeros((len(devices), len(line_ids)))
    for i, dev in enumerate(devices):
        for k, lid in enumerate(line_ids):
            if dev.bus_id in downstream_buses(topology, lid):
                membership[i, k] = 1.0
    return line_ids, membership, base_act, base_react


def _line_objective(problem, membership, base_act, base_react, u) -> float:
    """Line-flow analog of the schedule objective, for oracle comparisons."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    p = np.array([d.p for d in problem.devices])
    q = np.array([d.q for d in problem.devices])
    core = 0.0
    if problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH):
        flows = base_act + np.einsum("il,i,it->lt", membership, p, u)
        core += float(np.sum(flows**2))
    if problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH):
        flows = base_react + np.einsum("il,i,it->lt", membership, q, u)
        core += float(np.sum(flows**2))
    slack = 0.0
    for i, dev in enumerate(problem.devices):
        slack += float(np.sum(dev.slacks_for_states(dev.states(u[i]))))
    return core + slack


def _line_exact(problem, membership, base_act, base_react) -> np.ndarray:
    """Lexicographic-first exhaustive minimum of the line-flow objective."""
    n_dev, t_steps = len(problem.devices), problem.t_steps
    bits = n_dev * t_steps
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    p = np.array([d.p for d in problem.devices])
    q = np.array([d.q for d in problem.devices])
    use_act = problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH)
    use_react = problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH)
    best_val, best_index = np.inf, -1
    chunk = 1 << 14
    for start in range(0, 1 << bits, chunk):
        stop = min(start + chunk, 1 << bits)
        codes = np.arange(start, stop, dtype=np.uint64)
        u_all = ((codes[:, None] >> shifts[None, :]) & 1).astype(float)
        u_all = u_all.reshape(len(codes), n_dev, t_steps)
        values = np.zeros(len(codes))
        if use_act:
            flows = base_act[None] + np.einsum("il,i,cit->clt", membership, p, u_all)
            values += np.sum(flows**2, axis=(1, 2))
        if use_react:
            flows = base_react[None] + np.einsum("il,i,cit->clt", membership, q, u_all)
            values += np.sum(flows**2, axis=(1, 2))
        for i, dev in enumerate(problem.devices):
            x = dev.alpha[None, :] + u_all[:, i, :] @ dev.gamma
            a = np.maximum(
                dev.w_lo * np.maximum(0.0, dev.lower - x),
                dev.w_up * np.maximum(0.0, x - dev.upper),
            )
            values += a.sum(axis=1)
        local = int(np.argmin(values))
        if values[local] < best_val:
            best_val, best_index = float(values[local]), start + local
    u = ((np.uint64(best_index) >> shifts) & 1).astype(np.int8)
    return u.reshape(n_dev, t_steps)


def optimal_line(
    topology: Topology,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    config: DispatchConfig = DispatchConfig(),
    t_steps: int | None = None,
) -> DispatchResult:
    """Minimize the summed squared line flows of each feeder jointly.

    The adjacency equalities are substituted directly: a line's flow is the
    sum of the residuals of its downstream buses, hence affine in u.
    """
    t_steps = t_steps or _infer_steps(residual_act, fleet)
    start = time.perf_counter()
    groups = _feeder_groups(topology, fleet)
    schedules: dict[str, np.ndarray] = {}
    order: list[str] = []
    stats: dict = {}
    for feeder in topology.feeder_ids():
        devices = groups[feeder]
        if not devices:
            continue
        line_ids, membership, base_act, base_react = _line_structures(
            topology, feeder, devices, residual_act, residual_react, t_steps
        )
        problem = _problem_for(devices, np.zeros(t_steps), np.zeros(t_steps), config)
        bits = len(devices) * t_steps
        if config.variable_mode == VariableMode.BINARY and bits <= config.exact_bits_line:
            u_best = _line_exact(problem, membership, base_act, base_react)
            stats[feeder] = {"method": "line_exact", "evaluated": 1 << bits}
        else:
            cd = _LineFlowDescent(problem, membership, base_act, base_react)
            u_frac, st = cd.run()
            u_best = np.zeros((len(devices), t_steps), dtype=np.int8)
            for i in range(len(devices)):
                u_best[i] = round_and_repair(u_frac[i], devices[i].model)
                if i + 1 < len(devices):
                    u_frac[i] = u_best[i]
                    cd = _LineFlowDescent(
                        problem, membership, base_act, base_react, u0=u_frac
                    )
                    u_frac, _ = cd.run(first_free=i + 1)
            u_best = _line_improve_bits(problem, membership, base_act, base_react, u_best)
            stats[feeder] = st
        for i, dev in enumerate(devices):
            schedules[dev.device_id] = u_best[i]
            order.append(dev.device_id)
    return _result_from_schedules(
        AlgorithmKind.OPTIMAL_LINE, topology, fleet, residual_act, residual_react,
        schedules, time.perf_counter() - start, order, stats, t_steps,
    )


def _line_improve_bits(problem, membership, base_act, base_react, u, max_rounds=32):
    u = u.copy()
    current = _line_objective(problem, membership, base_act, base_react, u)
    n_dev, t_steps = u.shape
    for _ in range(max_rounds):
        changed = False
        for i in range(n_dev):
            for t in range(t_steps):
                u[i, t] ^= 1
                val = _line_objective(problem, membership, base_act, base_react, u)
                if val < current - 1e-12:
                    current = val
                    changed = True
                else:
                    u[i, t] ^= 1
        if not changed:
            return u
    return u


def heuristic_line(
    topology: Topology,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    config: DispatchConfig = DispatchConfig(),
    t_steps: int | None = None,
) -> DispatchResult:
    """Backward sweep: dispatch devices bus by bus, deepest buses first,
    each against the accumulated residual of its own subtree."""
    t_steps = t_steps or _infer_steps(residual_act, fleet)
    start = time.perf_counter()
    schedules: dict[str, np.ndarray] = {}
    order: list[str] = []
    devices_at: dict[str, list[DispatchDevice]] = {}
    for dev in fleet:
        devices_at.setdefault(dev.bus_id, []).append(dev)
    controlled_act = {b: np.array(v, dtype=float) for b, v in residual_act.items()}
    controlled_react = {b: np.array(v, dtype=float) for b, v in residual_react.items()}

    def subtree_height(bus: str) -> int:
        heights = [
            1 + subtree_height(topology.lines[line_id].to_bus)
            for line_id in topology.children[bus]
        ]
        return max(heights, default=0)

    for feeder in topology.feeder_ids():
        buses = topology.feeder_buses(feeder)
        # deepest first; ties broken toward the deeper subtree, then bus id
        visit = sorted(
            buses, key=lambda b: (-topology.depth[b], -subtree_height(b), b)
        )
        acc_act: dict[str, np.ndarray] = {}
        acc_react: dict[str, np.ndarray] = {}
        for bus in visit:
            r_act = np.array(controlled_act.get(bus, np.zeros(t_steps)), dtype=float)
            r_react = np.array(controlled_react.get(bus, np.zeros(t_steps)), dtype=float)
            for line_id in topology.children[bus]:
                child = topology.lines[line_id].to_bus
                r_act = r_act + acc_act[child]
                r_react = r_react + acc_react[child]
            r_act, r_react = _sequential_dispatch(
                devices_at.get(bus, []), r_act, r_react, config, schedules, order
            )
            acc_act[bus] = r_act
            acc_react[bus] = r_react
    return _result_from_schedules(
        AlgorithmKind.HEURISTIC_LINE, topology, fleet, residual_act, residual_react,
        schedules, time.perf_counter() - start, order, {}, t_steps,
    )


def critical_line(
    topology: Topology,
    critical: str | None,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    config: DispatchConfig = DispatchConfig(),
    t_steps: int | None = None,
) -> DispatchResult:
    """Dispatch the devices below the designated line first, against that
    line's aggregated downstream residual; everything else follows the
    grid heuristic. Without a critical line this IS the grid heuristic."""
    if critical is None:
        result = heuristic_grid(
            topology, fleet, residual_act, residual_react, config, t_steps
        )
        result.algorithm = AlgorithmKind.CRITICAL_LINE
        return result
    if critical not in topology.lines:
        raise TopologyError(f"unknown critical line {critical}")
    t_steps = t_steps or _infer_steps(residual_act, fleet)
    start = time.perf_counter()
    down = downstream_buses(topology, critical)
    critical_feeder = topology.buses[topology.lines[critical].from_bus].feeder_id
    groups = _feeder_groups(topology, fleet)
    schedules: dict[str, np.ndarray] = {}
    order: list[str] = []
    for feeder in topology.feeder_ids():
        devices = groups[feeder]
        if feeder != critical_feeder:
            r_act = _aggregate(residual_act, topology.feeder_buses(feeder), t_steps)
            r_react = _aggregate(residual_react, topology.feeder_buses(feeder), t_steps)
            _sequential_dispatch(devices, r_act, r_react, config, schedules, order)
            continue
        first = [d for d in devices if d.bus_id in down]
        rest = [d for d in devices if d.bus_id not in down]
        r_act = _aggregate(residual_act, down, t_steps)
        r_react = _aggregate(residual_react, down, t_steps)
        r_act, r_react = _sequential_dispatch(
            first, r_act, r_react, config, schedules, order
        )
        # feeder residual including the already scheduled downstream group
        f_act = _aggregate(residual_act, topology.feeder_buses(feeder), t_steps)
        f_react = _aggregate(residual_react, topology.feeder_buses(feeder), t_steps)
        for dev in first:
            u = schedules[dev.device_id].astype(float)
            f_act = f_act + dev.model.p * u
            f_react = f_react + dev.model.q * u
        _sequential_dispatch(rest, f_act, f_react, config, schedules, order)
    return _result_from_schedules(
        AlgorithmKind.CRITICAL_LINE, topology, fleet, residual_act, residual_react,
        schedules, time.perf_counter() - start, order,
        {"critical_line": critical}, t_steps,
    )


def dispatch(
    kind: str,
    topology: Topology,
    fleet: list[DispatchDevice],
    residual_act: dict[str, np.ndarray],
    residual_react: dict[str, np.ndarray],
    config: DispatchConfig = DispatchConfig(),
    critical: str | None = None,
) -> DispatchResult:
    if kind == AlgorithmKind.OPTIMAL_GRID:
        return optimal_grid(topology, fleet, residual_act, residual_react, config)
    if kind == AlgorithmKind.HEURISTIC_GRID:
        return heuristic_grid(topology, fleet, residual_act, residual_react, config)
    if kind == AlgorithmKind.OPTIMAL_LINE:
        return optimal_line(topology, fleet, residual_act, residual_react, config)
    if kind == AlgorithmKind.HEURISTIC_LINE:
        return heuristic_line(topology, fleet, residual_act, residual_react, config)
    if kind == AlgorithmKind.CRITICAL_LINE:
        return critical_line(
            topology, critical, fleet, residual_act, residual_react, config
        )
    raise ConfigError(f"unknown algorithm kind {kind}")


def _infer_steps(residual_act: dict[str, np.ndarray], fleet: list[DispatchDevice]) -> int:
    for series in residual_act.values():
        return len(series)
    for dev in fleet:
        return dev.model.t_steps
    raise ConfigError("cannot infer horizon: no residuals and no devices")


def conservation_gap(
    result: DispatchResult,
    residual_act: dict[str, np.ndarray],
    fleet: list[DispatchDevice],
) -> float:
    """Energy bookkeeping: controlled residual minus (noncontrollable +
    scheduled device consumption), summed over buses and steps."""
    total_controlled = sum(float(np.sum(v)) for v in result.controlled_act.values())
    total_base = sum(float(np.sum(v)) for v in residual_act.values())
    total_devices = sum(
        float(dev.model.p * np.sum(result.schedules[dev.device_id])) for dev in fleet
    )
    return abs(total_controlled - total_base - total_devices)
