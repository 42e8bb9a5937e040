import numpy as np
import pytest

from flexgrid.algorithms import (
    AlgorithmKind,
    DispatchConfig,
    DispatchDevice,
    _line_objective,
    conservation_gap,
    critical_line,
    dispatch,
    heuristic_grid,
    heuristic_line,
    optimal_grid,
    optimal_line,
)
from flexgrid.devices import DeviceKind, DeviceParams, ExogenousSeries
from flexgrid.grid import topology_from_dict
from flexgrid.scheduling import (
    DeviceModel,
    ObjectiveKind,
    PowerMode,
    ScheduleProblem,
    VariableMode,
)


def chain_topology(n_chain=3):
    """mv - T1 - busA - busB - busC ... radial chain on one feeder."""
    names = [f"bus{chr(ord('A') + i)}" for i in range(n_chain)]
    buses = [{"id": "mv", "feeder": "MV", "kv": 20.0}] + [
        {"id": n, "feeder": "F1", "kv": 0.4} for n in names
    ]
    lines = [
        {"id": f"l{i}", "from": names[i], "to": names[i + 1], "r": 0.4, "x": 0.07,
         "len_km": 0.03, "imax_a": 200}
        for i in range(n_chain - 1)
    ]
    return topology_from_dict(
        {
            "base_mva": 0.5,
            "slack": {"bus": "mv", "kv": 20.0},
            "buses": buses,
            "lines": lines,
            "transformers": [
                {"id": "T1", "hv_bus": "mv", "lv_bus": names[0], "hv_kv": 20.0,
                 "lv_kv": 0.4, "s_mva": 0.5, "uk_pct": 4.0, "ur_pct": 1.0}
            ],
        }
    )


def unit_dispatch_device(device_id, bus_id, t_steps=3):
    """Must-run-exactly-once unit load: P = 1, Q = 0, storage gain 1/step."""
    params = DeviceParams(
        kind=DeviceKind.NIGHT_STORAGE_HEATER, p_rated=1.0, load_factor=1.0,
        t_set=2.4, t_db=2.4, t_ss=20.0, c_use=0.0, c_sol=0.0, c_los=0.0, c_inp=1.0,
    )
    exo = ExogenousSeries.constant(t_steps, tem=20.0)
    return DispatchDevice(device_id, bus_id, DeviceModel(params, 0.5, exo, device_id=device_id))


def toy_fixture():
    """Three buses in a chain; five must-run units at the end bus, three at
    the middle bus; residuals chosen so the joint optimum keeps the feeder
    exchange peak at 7 and the backward sweep turns -8 into -3 then -1."""
    topo = chain_topology(3)
    residual_act = {
        "busA": np.array([1.0, 4.0, 3.0]),
        "busB": np.array([0.0, 0.0, 4.0]),
        "busC": np.array([-8.0, -1.0, 0.0]),
    }
    residual_react = {b: np.zeros(3) for b in residual_act}
    fleet = [unit_dispatch_device(f"c{i}", "busC") for i in range(5)] + [
        unit_dispatch_device(f"b{i}", "busB") for i in range(3)
    ]
    config = DispatchConfig(power_mode=PowerMode.ACTIVE)
    return topo, fleet, residual_act, residual_react, config


class TestToyFixture:
    def test_optimal_grid_peak_exchange_seven(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        result = optimal_grid(topo, fleet, r_act, r_react, config)
        exchange = result.feeder_exchange_act["F1"]
        assert np.max(np.abs(exchange)) == pytest.approx(7.0)
        # every unit ran exactly once
        for dev in fleet:
            assert result.schedules[dev.device_id].sum() == 1

    def test_heuristic_line_peak_transformations(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        result = heuristic_line(topo, fleet, r_act, r_react, config)
        # end bus: -8 turned into -3 (all five units in the first step)
        end_bus = result.controlled_act["busC"]
        assert end_bus == pytest.approx([-3.0, -1.0, 0.0])
        # next bus: accumulated peaks (-3, 4) become -1 via two units in the
        # first step and one in the second
        mid = result.controlled_act["busB"]
        assert mid == pytest.approx([2.0, 1.0, 4.0])
        accumulated = end_bus + mid
        assert accumulated == pytest.approx([-1.0, 0.0, 4.0])
        assert np.min(accumulated) == pytest.approx(-1.0)

    def test_heuristic_line_tradeoff_vs_optimal_grid(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        line_result = heuristic_line(topo, fleet, r_act, r_react, config)
        grid_result = optimal_grid(topo, fleet, r_act, r_react, config)
        no_control_flows = []
        controlled_flows = []
        for line_id in topo.lines:
            down = sorted(
                b for b in ("busA", "busB", "busC")
                if b in __import__("flexgrid.grid", fromlist=["downstream_buses"]).downstream_buses(topo, line_id)
            )
            no_control_flows.append(np.abs(sum(r_act[b] for b in down)).max())
            controlled_flows.append(
                np.abs(sum(line_result.controlled_act[b] for b in down)).max()
            )
        assert sum(controlled_flows) <= sum(no_control_flows)
        grid_peak = np.max(np.abs(grid_result.feeder_exchange_act["F1"]))
        line_peak = np.max(np.abs(line_result.feeder_exchange_act["F1"]))
        assert line_peak >= grid_peak


class TestDegenerateEquivalences:
    def test_single_device_optimal_equals_heuristic(self):
        topo = chain_topology(2)
        r_act = {"busA": np.array([2.0, -3.0, 1.0]), "busB": np.zeros(3)}
        r_react = {b: np.zeros(3) for b in r_act}
        fleet = [unit_dispatch_device("d0", "busB")]
        config = DispatchConfig(power_mode=PowerMode.ACTIVE)
        a = optimal_grid(topo, fleet, r_act, r_react, config)
        b = heuristic_grid(topo, fleet, r_act, r_react, config)
        assert np.array_equal(a.schedules["d0"], b.schedules["d0"])

    def test_single_bus_chain_line_equals_grid_heuristic(self):
        topo = chain_topology(1)
        r_act = {"busA": np.array([-2.0, 1.0, 0.0])}
        r_react = {"busA": np.zeros(3)}
        fleet = [unit_dispatch_device("d0", "busA")]
        config = DispatchConfig(power_mode=PowerMode.ACTIVE)
        a = heuristic_line(topo, fleet, r_act, r_react, config)
        b = heuristic_grid(topo, fleet, r_act, r_react, config)
        assert np.array_equal(a.schedules["d0"], b.schedules["d0"])

    def test_no_critical_line_is_heuristic_grid(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        a = critical_line(topo, None, fleet, r_act, r_react, config)
        b = heuristic_grid(topo, fleet, r_act, r_react, config)
        assert a.algorithm == AlgorithmKind.CRITICAL_LINE
        for dev in fleet:
            assert np.array_equal(a.schedules[dev.device_id], b.schedules[dev.device_id])
        for bus in a.controlled_act:
            assert np.array_equal(a.controlled_act[bus], b.controlled_act[bus])

    def test_critical_at_feeder_root_matches_heuristic_grid(self):
        # root bus carries nothing, so the root line aggregates the feeder
        topo = chain_topology(3)
        r_act = {
            "busA": np.zeros(3),
            "busB": np.array([1.0, -4.0, 2.0]),
            "busC": np.array([-2.0, 0.5, 1.0]),
        }
        r_react = {b: np.zeros(3) for b in r_act}
        fleet = [unit_dispatch_device("d0", "busB"), unit_dispatch_device("d1", "busC")]
        config = DispatchConfig(power_mode=PowerMode.ACTIVE)
        a = critical_line(topo, "l0", fleet, r_act, r_react, config)
        b = heuristic_grid(topo, fleet, r_act, r_react, config)
        for dev in fleet:
            assert np.array_equal(a.schedules[dev.device_id], b.schedules[dev.device_id])

    def test_unknown_devices_bus_or_line(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        from flexgrid.errors import TopologyError

        with pytest.raises(TopologyError):
            critical_line(topo, "nope", fleet, r_act, r_react, config)


class TestOptimalLine:
    def test_single_loaded_bus_equals_optimal_grid(self):
        topo = chain_topology(2)
        r_act = {"busA": np.zeros(3), "busB": np.array([-2.0, 1.0, 0.5])}
        r_react = {b: np.zeros(3) for b in r_act}
        fleet = [unit_dispatch_device("d0", "busB")]
        config = DispatchConfig(power_mode=PowerMode.ACTIVE)
        a = optimal_line(topo, fleet, r_act, r_react, config)
        b = optimal_grid(topo, fleet, r_act, r_react, config)
        assert np.array_equal(a.schedules["d0"], b.schedules["d0"])

    def test_matches_exhaustive_on_chain(self):
        topo = chain_topology(3)
        r_act = {
            "busA": np.array([0.5, -1.0, 2.0]),
            "busB": np.array([1.0, 0.0, -3.0]),
            "busC": np.array([-2.0, 1.5, 0.0]),
        }
        r_react = {b: np.zeros(3) for b in r_act}
        fleet = [unit_dispatch_device("d0", "busC")]
        config = DispatchConfig(power_mode=PowerMode.ACTIVE)
        result = optimal_line(topo, fleet, r_act, r_react, config)

        # brute force over 2^T on the line-flow objective
        from flexgrid.grid import downstream_buses

        best_val, best_u = np.inf, None
        dev = fleet[0]
        for code in range(8):
            u = np.array([(code >> 2) & 1, (code >> 1) & 1, code & 1], dtype=float)
            flows = []
            for line_id in topo.lines:
                down = downstream_buses(topo, line_id)
                flow = sum(r_act[b] for b in down if b in r_act)
                if dev.bus_id in down:
                    flow = flow + dev.model.p * u
                flows.append(flow)
            x = dev.model.states(u)
            slack = dev.model.slacks_for_states(x).sum()
            val = sum(float(np.sum(f**2)) for f in flows) + slack
            if val < best_val - 1e-12:
                best_val, best_u = val, u
        assert np.array_equal(result.schedules["d0"], best_u.astype(int))

    def test_relaxed_path_feasible_and_not_better_than_exact(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        relaxed = optimal_line(
            topo, fleet, r_act, r_react,
            DispatchConfig(power_mode=PowerMode.ACTIVE,
                           variable_mode=VariableMode.RELAXED_ROUNDED),
        )
        for dev in fleet:
            u = relaxed.schedules[dev.device_id]
            assert dev.model.violations(u.astype(float)).sum() == pytest.approx(0.0, abs=1e-9)


class TestInvariants:
    def test_residual_conservation_all_algorithms(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        for kind in AlgorithmKind.ALL:
            result = dispatch(
                kind, topo, fleet, r_act, r_react, config,
                critical="l1" if kind == AlgorithmKind.CRITICAL_LINE else None,
            )
            assert conservation_gap(result, r_act, fleet) < 1e-9, kind

    def test_dominance_optimal_vs_heuristic_grid(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        a = optimal_grid(topo, fleet, r_act, r_react, config)
        b = heuristic_grid(topo, fleet, r_act, r_react, config)

        def grid_objective(result):
            total = 0.0
            for feeder, series in result.feeder_exchange_act.items():
                total += float(np.sum(series**2))
            return total

        assert grid_objective(a) <= grid_objective(b) + 1e-9

    def test_determinism(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        a = heuristic_line(topo, fleet, r_act, r_react, config)
        b = heuristic_line(topo, fleet, r_act, r_react, config)
        for dev in fleet:
            assert np.array_equal(a.schedules[dev.device_id], b.schedules[dev.device_id])
        assert a.device_order == b.device_order

    def test_comfort_all_algorithms(self):
        topo, fleet, r_act, r_react, config = toy_fixture()
        for kind in AlgorithmKind.ALL:
            result = dispatch(
                kind, topo, fleet, r_act, r_react, config,
                critical="l1" if kind == AlgorithmKind.CRITICAL_LINE else None,
            )
            for dev in fleet:
                u = result.schedules[dev.device_id].astype(float)
                assert dev.model.violations(u).sum() == pytest.approx(0.0, abs=1e-9), kind
