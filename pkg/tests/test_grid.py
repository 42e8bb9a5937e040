import json
import math

import pytest

from flexgrid.errors import TopologyError
from flexgrid.grid import (
    Transformer,
    default_topology,
    downstream_buses,
    load_topology,
    topology_from_dict,
    transformer_impedance,
)


def minimal_doc():
    return {
        "base_mva": 0.5,
        "slack": {"bus": "mv", "kv": 20.0},
        "buses": [
            {"id": "mv", "feeder": "MV", "kv": 20.0},
            {"id": "a", "feeder": "F1", "kv": 0.4},
            {"id": "b", "feeder": "F1", "kv": 0.4},
        ],
        "lines": [
            {"id": "L1", "from": "a", "to": "b", "r": 0.4, "x": 0.07, "len_km": 0.03, "imax_a": 200}
        ],
        "transformers": [
            {"id": "T1", "hv_bus": "mv", "lv_bus": "a", "hv_kv": 20.0, "lv_kv": 0.4,
             "s_mva": 0.5, "uk_pct": 4.0, "ur_pct": 1.0}
        ],
    }


class TestLoading:
    def test_default_topology_counts(self):
        topo = default_topology()
        lv_buses = [b for b in topo.buses.values() if b.id != topo.slack_bus]
        assert len(lv_buses) == 41
        assert len(topo.lines) == 38
        assert len(topo.transformers) == 3

    def test_two_bus_minimal(self):
        topo = topology_from_dict(minimal_doc())
        assert downstream_buses(topo, "L1") == frozenset({"b"})

    def test_cycle_names_back_edge(self):
        doc = minimal_doc()
        doc["buses"].append({"id": "c", "feeder": "F1", "kv": 0.4})
        doc["lines"] += [
            {"id": "L2", "from": "b", "to": "c", "r": 0.4, "x": 0.07, "len_km": 0.03, "imax_a": 200},
            {"id": "L3", "from": "c", "to": "a", "r": 0.4, "x": 0.07, "len_km": 0.03, "imax_a": 200},
        ]
        with pytest.raises(TopologyError, match="cycle"):
            topology_from_dict(doc)

    def test_dangling_bus_named(self):
        doc = minimal_doc()
        doc["buses"].append({"id": "orphan", "feeder": "F1", "kv": 0.4})
        with pytest.raises(TopologyError, match="orphan"):
            topology_from_dict(doc)

    def test_duplicate_ids(self):
        doc = minimal_doc()
        doc["buses"].append({"id": "a", "feeder": "F1", "kv": 0.4})
        with pytest.raises(TopologyError, match="duplicate"):
            topology_from_dict(doc)

    def test_parse_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(TopologyError, match="parse"):
            load_topology(path)

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "topo.json"
        path.write_text(json.dumps(minimal_doc()))
        topo = load_topology(path)
        assert topo.slack_bus == "mv"


class TestRadiality:
    def test_line_count_per_feeder(self):
        topo = default_topology()
        for feeder in topo.feeder_ids():
            buses = topo.feeder_buses(feeder)
            lines = [
                ln for ln in topo.lines.values()
                if topo.buses[ln.from_bus].feeder_id == feeder
            ]
            assert len(lines) == len(buses) - 1

    def test_unique_path_to_root(self):
        topo = default_topology()
        for feeder in topo.feeder_ids():
            root = topo.feeder_root(feeder)
            for bus in topo.feeder_buses(feeder):
                hops = 0
                cur = bus
                while cur != root:
                    parent = topo.buses[cur].parent_line_id
                    assert parent is not None
                    cur = topo.lines[parent].from_bus
                    hops += 1
                    assert hops <= len(topo.buses)


class TestDownstream:
    def test_leaf_line(self):
        topo = default_topology()
        assert downstream_buses(topo, "218956") == frozenset({"b41"})

    def test_feeder_root_line_not_whole_feeder(self):
        topo = default_topology()
        # b01's child lines partition F1 minus the root bus
        union = set()
        for line_id in topo.children["b01"]:
            part = downstream_buses(topo, line_id)
            assert union.isdisjoint(part)
            union |= part
        assert union | {"b01"} == set(topo.feeder_buses("F1"))

    def test_matches_bfs_after_edge_removal(self):
        topo = default_topology()
        for line_id, line in topo.lines.items():
            # oracle: reachability from to_bus with the line removed
            adj = {}
            for other in topo.lines.values():
                if other.id == line_id:
                    continue
                adj.setdefault(other.from_bus, []).append(other.to_bus)
                adj.setdefault(other.to_bus, []).append(other.from_bus)
            seen = {line.to_bus}
            stack = [line.to_bus]
            while stack:
                for nxt in adj.get(stack.pop(), []):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            assert downstream_buses(topo, line_id) == frozenset(seen)

    def test_sibling_disjoint_union_parent(self):
        topo = default_topology()
        for bus_id, child_lines in topo.children.items():
            if not child_lines or topo.buses[bus_id].parent_line_id is None:
                continue
            union = set()
            for line_id in child_lines:
                part = downstream_buses(topo, line_id)
                assert union.isdisjoint(part)
                union |= part
            parent = topo.buses[bus_id].parent_line_id
            assert union | {bus_id} == downstream_buses(topo, parent)

    def test_unknown_line(self):
        with pytest.raises(TopologyError):
            downstream_buses(default_topology(), "nope")


class TestTransformerImpedance:
    def test_nameplate_on_own_base(self):
        trafo = Transformer(
            id="218979", hv_bus="mv", lv_bus="a", hv_kv=20.0, lv_kv=0.4,
            s_rated_mva=0.55, u_k_pct=4.09, u_r_pct=0.993,
        )
        r, x = transformer_impedance(trafo, system_base_mva=0.55)
        assert r == pytest.approx(0.00993)
        assert x == pytest.approx(math.sqrt(0.0409**2 - 0.00993**2), rel=1e-9)
        assert x == pytest.approx(0.03968, abs=5e-6)

    def test_zero_copper_losses(self):
        trafo = Transformer(
            id="t", hv_bus="mv", lv_bus="a", hv_kv=20.0, lv_kv=0.4,
            s_rated_mva=0.5, u_k_pct=4.0, u_r_pct=0.0,
        )
        r, x = transformer_impedance(trafo, 0.5)
        assert r == 0.0
        assert x == pytest.approx(0.04)

    def test_linear_in_base(self):
        trafo = Transformer(
            id="t", hv_bus="mv", lv_bus="a", hv_kv=20.0, lv_kv=0.4,
            s_rated_mva=0.5, u_k_pct=4.0, u_r_pct=1.0,
        )
        r1, x1 = transformer_impedance(trafo, 0.5)
        r2, x2 = transformer_impedance(trafo, 1.0)
        assert (r2, x2) == (pytest.approx(2 * r1), pytest.approx(2 * x1))

    def test_invalid_nameplate(self):
        with pytest.raises(TopologyError):
            Transformer(
                id="t", hv_bus="mv", lv_bus="a", hv_kv=20.0, lv_kv=0.4,
                s_rated_mva=0.5, u_k_pct=1.0, u_r_pct=2.0,
            )


class TestPerUnit:
    def test_round_trip(self):
        topo = default_topology()
        base_kv, base_mva = 0.4, topo.base_mva
        for line in topo.lines.values():
            z_pu = line.impedance_pu(base_kv, base_mva)
            z_ohm = z_pu * base_kv**2 / base_mva
            assert abs(z_ohm - line.impedance_ohm()) < 1e-12

    def test_admittance_inverse(self):
        topo = default_topology()
        line = topo.lines["219009"]
        g, b = line.admittance_pu(0.4, 0.5)
        z = line.impedance_pu(0.4, 0.5)
        assert complex(g, b) * z == pytest.approx(1.0 + 0.0j, abs=1e-12)
