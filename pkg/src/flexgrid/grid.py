"""Radial network topology: buses, lines, transformers, per-unit conversion.

The network is a forest of LV feeders, each rooted at the LV bus of its
feeding transformer; all transformer HV sides connect to the single slack
bus on the MV level. Topologies are immutable after loading.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

from .errors import TopologyError

DEFAULT_BASE_MVA = 0.5


@dataclass(frozen=True)
class Bus:
    id: str
    feeder_id: str
    nominal_kv: float
    parent_line_id: str | None = None  # filled in during validation


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    r_ohm_per_km: float
    x_ohm_per_km: float
    length_km: float
    i_max_a: float
    b_sh_pu: float = 0.0

    def __post_init__(self):
        if min(self.r_ohm_per_km, self.x_ohm_per_km, self.length_km) <= 0:
            raise TopologyError(f"line {self.id}: r, x and length must be positive")

    def impedance_ohm(self) -> complex:
        return complex(self.r_ohm_per_km, self.x_ohm_per_km) * self.length_km

    def impedance_pu(self, base_kv: float, base_mva: float) -> complex:
        return self.impedance_ohm() / (base_kv**2 / base_mva)

    def admittance_pu(self, base_kv: float, base_mva: float) -> tuple[float, float]:
        """Series admittance (g, b) from the total per-unit impedance."""
        z = self.impedance_pu(base_kv, base_mva)
        y = 1.0 / z
        return y.real, y.imag


@dataclass(frozen=True)
class Transformer:
    id: str
    hv_bus: str
    lv_bus: str
    hv_kv: float
    lv_kv: float
    s_rated_mva: float
    u_k_pct: float  # short-circuit voltage
    u_r_pct: float  # copper losses
    tap_ratio: float = 1.0
    phase_shift_deg: float = 0.0

    def __post_init__(self):
        if not 0 <= self.u_r_pct < self.u_k_pct:
            raise TopologyError(
                f"transformer {self.id}: requires 0 <= u_r ({self.u_r_pct}) < u_k ({self.u_k_pct})"
            )

    @property
    def complex_tap(self) -> complex:
        phi = math.radians(self.phase_shift_deg)
        return self.tap_ratio * complex(math.cos(phi), math.sin(phi))


def transformer_impedance(trafo: Transformer, system_base_mva: float) -> tuple[float, float]:
    """Per-unit (r, x) on the system base from nameplate percentages."""
    scale = system_base_mva / trafo.s_rated_mva
    r_own = trafo.u_r_pct / 100.0
    z_own = trafo.u_k_pct / 100.0
    x_own = math.sqrt(z_own**2 - r_own**2)
    return r_own * scale, x_own * scale


@dataclass(frozen=True)
class Topology:
    buses: dict[str, Bus]
    lines: dict[str, Line]
    transformers: dict[str, Transformer]
    slack_bus: str
    base_mva: float = DEFAULT_BASE_MVA
    meta: dict = field(default_factory=dict)
    # derived, filled by _validate
    children: dict[str, list[str]] = field(default_factory=dict)  # bus -> child line ids
    depth: dict[str, int] = field(default_factory=dict)  # bus -> hops below its feeder root
    _downstream: dict[str, frozenset[str]] = field(default_factory=dict)

    def feeder_ids(self) -> list[str]:
        return sorted({b.feeder_id for b in self.buses.values() if b.id != self.slack_bus})

    def feeder_buses(self, feeder_id: str) -> list[str]:
        return sorted(
            b.id
            for b in self.buses.values()
            if b.feeder_id == feeder_id and b.id != self.slack_bus
        )

    def feeder_root(self, feeder_id: str) -> str:
        for trafo in self.transformers.values():
            if self.buses[trafo.lv_bus].feeder_id == feeder_id:
                return trafo.lv_bus
        raise TopologyError(f"feeder {feeder_id} has no transformer")

    def feeder_of_transformer(self, trafo_id: str) -> str:
        return self.buses[self.transformers[trafo_id].lv_bus].feeder_id

    def line_depth(self, line_id: str) -> int:
        return self.depth[self.lines[line_id].to_bus]


def downstream_buses(topology: Topology, line_id: str) -> frozenset[str]:
    """Buses on the far side of the line from the feeder, incl. its to_bus."""
    if line_id not in topology.lines:
        raise TopologyError(f"unknown line id: {line_id}")
    return topology._downstream[line_id]


def _validate(
    buses: dict[str, Bus],
    lines: dict[str, Line],
    transformers: dict[str, Transformer],
    slack_bus: str,
    base_mva: float,
    meta: dict,
) -> Topology:
    if slack_bus not in buses:
        raise TopologyError(f"slack bus {slack_bus} not among buses")
    for line in lines.values():
        for end in (line.from_bus, line.to_bus):
            if end not in buses:
                raise TopologyError(f"line {line.id}: unknown bus {end}")
        if buses[line.from_bus].feeder_id != buses[line.to_bus].feeder_id:
            raise TopologyError(f"line {line.id}: endpoints lie in different feeders")
    roots: dict[str, str] = {}
    for trafo in transformers.values():
        if trafo.hv_bus != slack_bus:
            raise TopologyError(f"transformer {trafo.id}: HV side must be the slack bus")
        if trafo.lv_bus not in buses:
            raise TopologyError(f"transformer {trafo.id}: unknown LV bus {trafo.lv_bus}")
        feeder = buses[trafo.lv_bus].feeder_id
        if feeder in roots:
            raise TopologyError(f"feeder {feeder} fed by more than one transformer")
        roots[feeder] = trafo.lv_bus

    # orient every feeder tree away from its root
    adjacency: dict[str, list[tuple[str, str]]] = {b: [] for b in buses}
    for line in lines.values():
        adjacency[line.from_bus].append((line.id, line.to_bus))
        adjacency[line.to_bus].append((line.id, line.from_bus))

    children: dict[str, list[str]] = {b: [] for b in buses}
    depth: dict[str, int] = {slack_bus: 0}
    parent_line: dict[str, str | None] = {slack_bus: None}
    oriented: dict[str, Line] = {}
    visited: set[str] = {slack_bus}
    for feeder, root in sorted(roots.items()):
        if root in visited:
            raise TopologyError(f"feeder root {root} reachable twice")
        visited.add(root)
        depth[root] = 0
        parent_line[root] = None
        stack = [root]
        while stack:
            bus = stack.pop()
            for line_id, other in sorted(adjacency[bus]):
                if line_id in oriented:
                    continue
                if other in visited:
                    raise TopologyError(
                        f"cycle detected: line {line_id} closes a loop at bus {other}"
                    )
                line = lines[line_id]
                if line.to_bus != other:  # normalize orientation parent -> child
                    line = Line(
                        id=line.id, from_bus=bus, to_bus=other,
                        r_ohm_per_km=line.r_ohm_per_km, x_ohm_per_km=line.x_ohm_per_km,
                        length_km=line.length_km, i_max_a=line.i_max_a, b_sh_pu=line.b_sh_pu,
                    )
                oriented[line_id] = line
                children[bus].append(line_id)
                visited.add(other)
                depth[other] = depth[bus] + 1
                parent_line[other] = line_id
                stack.append(other)

    dangling = set(buses) - visited
    if dangling:
        raise TopologyError(f"dangling bus(es) not reachable from any feeder root: {sorted(dangling)}")
    if len(oriented) != len(lines):  # unreachable with the checks above, kept as a guard
        raise TopologyError("some lines were not oriented during validation")
    for feeder, root in roots.items():
        n_buses = sum(
            1 for b in buses.values() if b.feeder_id == buses[root].feeder_id and b.id != slack_bus
        )
        n_lines = sum(
            1 for ln in oriented.values() if buses[ln.from_bus].feeder_id == feeder
        )
        if n_lines != n_buses - 1:
            raise TopologyError(
                f"feeder {feeder} is not radial: {n_lines} lines for {n_buses} buses"
            )

    buses = {
        b.id: Bus(b.id, b.feeder_id, b.nominal_kv, parent_line.get(b.id))
        for b in buses.values()
    }
    downstream: dict[str, frozenset[str]] = {}

    def collect(bus: str) -> set[str]:
        acc = {bus}
        for line_id in children[bus]:
            sub = collect(oriented[line_id].to_bus)
            downstream[line_id] = frozenset(sub)
            acc |= sub
        return acc

    for root in roots.values():
        collect(root)

    return Topology(
        buses=buses, lines=oriented, transformers=dict(transformers),
        slack_bus=slack_bus, base_mva=base_mva, meta=meta,
        children=children, depth=depth, _downstream=downstream,
    )


def topology_from_dict(raw: dict) -> Topology:
    """Build and validate a topology from its JSON form."""
    try:
        slack = raw["slack"]["bus"]
        bus_entries = raw["buses"]
        line_entries = raw["lines"]
        trafo_entries = raw["transformers"]
    except (KeyError, TypeError) as exc:
        raise TopologyError(f"topology file missing section: {exc}") from exc

    buses: dict[str, Bus] = {}
    for e in bus_entries:
        bus = Bus(id=str(e["id"]), feeder_id=str(e["feeder"]), nominal_kv=float(e["kv"]))
        if bus.id in buses:
            raise TopologyError(f"duplicate bus id {bus.id}")
        buses[bus.id] = bus
    lines: dict[str, Line] = {}
    for e in line_entries:
        line = Line(
            id=str(e["id"]), from_bus=str(e["from"]), to_bus=str(e["to"]),
            r_ohm_per_km=float(e["r"]), x_ohm_per_km=float(e["x"]),
            length_km=float(e["len_km"]), i_max_a=float(e["imax_a"]),
            b_sh_pu=float(e.get("bsh", 0.0)),
        )
        if line.id in lines:
            raise TopologyError(f"duplicate line id {line.id}")
        lines[line.id] = line
    transformers: dict[str, Transformer] = {}
    for e in trafo_entries:
        trafo = Transformer(
            id=str(e["id"]), hv_bus=str(e.get("hv_bus", slack)), lv_bus=str(e["lv_bus"]),
            hv_kv=float(e["hv_kv"]), lv_kv=float(e["lv_kv"]),
            s_rated_mva=float(e["s_mva"]), u_k_pct=float(e["uk_pct"]),
            u_r_pct=float(e["ur_pct"]), tap_ratio=float(e.get("tap", 1.0)),
            phase_shift_deg=float(e.get("phase_deg", 0.0)),
        )
        if trafo.id in transformers:
            raise TopologyError(f"duplicate transformer id {trafo.id}")
        transformers[trafo.id] = trafo
    if len({*buses} & {*lines} & {*transformers}):
        raise TopologyError("bus/line/transformer ids overlap")
    base_mva = float(raw.get("base_mva", DEFAULT_BASE_MVA))
    return _validate(buses, lines, transformers, slack, base_mva, raw.get("meta", {}))


def load_topology(path) -> Topology:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"topology file does not parse: {exc}") from exc
    return topology_from_dict(raw)


def default_topology() -> Topology:
    """The bundled 41-bus network: three LV feeders behind MV/LV transformers."""
    ref = resources.files("flexgrid.data").joinpath("topology.json")
    return topology_from_dict(json.loads(ref.read_text()))
