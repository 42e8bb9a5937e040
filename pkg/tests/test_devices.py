import math

import numpy as np
import pytest

from flexgrid.devices import (
    NOMINAL_PARAMS,
    DeviceKind,
    DeviceParams,
    DeviceState,
    ExogenousSeries,
    affine_coefficients,
    build_fleet_device,
    closed_form_state,
    load_fleet,
    randomize_params,
    reactive_rating,
    simulate_uncontrolled,
    step_state,
    step_terms,
    thermostat,
)
from flexgrid.errors import ConfigError

HEATER = NOMINAL_PARAMS[DeviceKind.NIGHT_STORAGE_HEATER]
BOILER = NOMINAL_PARAMS[DeviceKind.STORAGE_WATER_BOILER]
FRIDGE = NOMINAL_PARAMS[DeviceKind.FRIDGE]


def random_exo(rng, t_steps):
    return ExogenousSeries(
        tem=rng.uniform(-15, 30, t_steps),
        sol=rng.uniform(0, 600, t_steps),
        wat=rng.uniform(0, 40, t_steps),
        occ=rng.uniform(0, 1, t_steps),
    )


def iterate_states(params, x0, exo, switches, dt_hours=0.25):
    """Independent oracle: run the recursion one step at a time."""
    state = DeviceState(x=x0, v=1)
    for t, u in enumerate(switches):
        state = step_state(state, step_terms(params, state, exo.at(t), int(u), 1, dt_hours))
    return state.x


class TestStepTerms:
    def test_heater_input_at_rated_power(self):
        exo = ExogenousSeries.constant(1, tem=20.0)
        terms = step_terms(HEATER, DeviceState(x=570.0), exo.at(0), u=1, v=1)
        assert terms.inp == pytest.approx(6.458, abs=1e-12)

    def test_switch_off_forces_zero_input(self):
        exo = ExogenousSeries.constant(1, tem=-5.0, sol=100.0, wat=10.0)
        for kind, params in NOMINAL_PARAMS.items():
            terms = step_terms(params, DeviceState(x=params.t_set), exo.at(0), u=0, v=1)
            assert terms.inp == 0.0, kind
            terms = step_terms(params, DeviceState(x=params.t_set), exo.at(0), u=1, v=0)
            assert terms.inp == 0.0, kind

    def test_fridge_terms_hand_recursion(self):
        exo = ExogenousSeries.constant(1, tem=20.0, occ=1.0)
        terms = step_terms(FRIDGE, DeviceState(x=7.0), exo.at(0), u=0, v=1, dt_hours=0.25)
        assert terms.out == pytest.approx(-0.0015)
        assert terms.loss == pytest.approx(-0.003 * 0.25 * (20.0 - 7.0))
        # -out - loss warms the box
        assert -terms.out - terms.loss == pytest.approx(0.01125)

    def test_heat_pump_derating_endpoints(self):
        hp = NOMINAL_PARAMS[DeviceKind.HEAT_PUMP]
        cold = ExogenousSeries.constant(1, tem=hp.t_lol - 5.0)
        warm = ExogenousSeries.constant(1, tem=hp.t_hol + 5.0)
        mid = ExogenousSeries.constant(1, tem=0.5 * (hp.t_lol + hp.t_hol))
        full = step_terms(hp, DeviceState(x=42.0), cold.at(0), 1, 1).inp
        assert full == pytest.approx(hp.c_inp * hp.p_rated)
        assert step_terms(hp, DeviceState(x=42.0), warm.at(0), 1, 1).inp == pytest.approx(0.0)
        assert step_terms(hp, DeviceState(x=42.0), mid.at(0), 1, 1).inp == pytest.approx(full / 2)

    def test_cooling_sign_convention(self):
        exo = ExogenousSeries.constant(1, tem=30.0, sol=200.0, occ=1.0)
        for kind in (DeviceKind.FRIDGE, DeviceKind.FREEZER, DeviceKind.AIR_CONDITIONER):
            params = NOMINAL_PARAMS[kind]
            below_ambient = DeviceState(x=params.t_set - 1.0)
            terms = step_terms(params, below_ambient, exo.at(0), 1, 1)
            assert terms.inp <= 0.0
            assert -terms.out - terms.loss >= 0.0

    def test_heating_input_nonnegative(self):
        exo = ExogenousSeries.constant(1, tem=-10.0)
        for kind in (
            DeviceKind.NIGHT_STORAGE_HEATER,
            DeviceKind.STORAGE_WATER_BOILER,
            DeviceKind.HEAT_PUMP,
        ):
            terms = step_terms(NOMINAL_PARAMS[kind], DeviceState(x=60.0), exo.at(0), 1, 1)
            assert terms.inp >= 0.0


class TestStepState:
    def test_pure_injection(self):
        from flexgrid.devices import StepTerms

        assert step_state(DeviceState(x=500.0), StepTerms(0, 0, 6.458)).x == pytest.approx(506.458)

    def test_zero_terms_identity(self):
        from flexgrid.devices import StepTerms

        state = DeviceState(x=64.2, v=0)
        out = step_state(state, StepTerms(0.0, 0.0, 0.0))
        assert out.x == state.x and out.v == state.v

    def test_boiler_arithmetic(self):
        from flexgrid.devices import StepTerms

        out = step_state(DeviceState(x=60.0), StepTerms(out=1.2, loss=0.1, inp=5.03))
        assert out.x == pytest.approx(63.73)


class TestThermostat:
    def test_heating_switch_points(self):
        # band [560, 580]
        assert thermostat(HEATER, DeviceState(x=559.0, v=0)) == 1
        assert thermostat(HEATER, DeviceState(x=581.0, v=1)) == 0
        assert thermostat(HEATER, DeviceState(x=570.0, v=1)) == 1
        assert thermostat(HEATER, DeviceState(x=570.0, v=0)) == 0

    def test_cooling_mirror(self):
        band = FRIDGE.comfort_band
        assert thermostat(FRIDGE, DeviceState(x=band.t_up + 0.1, v=0)) == 1
        assert thermostat(FRIDGE, DeviceState(x=band.t_low - 0.1, v=1)) == 0
        assert thermostat(FRIDGE, DeviceState(x=band.midpoint, v=1)) == 1


class TestUncontrolledSimulation:
    def test_duty_cycle_confinement(self):
        for kind, params in NOMINAL_PARAMS.items():
            # ambient the device can actually work against
            tem = 30.0 if kind.is_cooling else 0.0
            exo = ExogenousSeries.constant(192, tem=tem, occ=0.5, wat=2.0)
            band = params.comfort_band
            traj = simulate_uncontrolled(params, band.midpoint, exo)
            drift = np.abs(np.diff(traj.x)).max()
            assert traj.x.min() >= band.t_low - drift - 1e-9, kind
            assert traj.x.max() <= band.t_up + drift + 1e-9, kind

    def test_band_escape_warns(self):
        from flexgrid.devices import ModelInconsistencyWarning

        ac = NOMINAL_PARAMS[DeviceKind.AIR_CONDITIONER]
        exo = ExogenousSeries.constant(96, tem=0.0)  # AC cannot heat
        with pytest.warns(ModelInconsistencyWarning):
            simulate_uncontrolled(ac, ac.comfort_band.midpoint, exo)

    def test_zero_dynamics_stays_off_at_top(self):
        params = DeviceParams(
            kind=DeviceKind.NIGHT_STORAGE_HEATER, p_rated=5.0, load_factor=0.9,
            t_set=580.0, t_db=20.0, t_ss=20.0, c_use=0.0, c_sol=0.0, c_los=0.0, c_inp=1.2916,
        )
        exo = ExogenousSeries.constant(20, tem=20.0)
        traj = simulate_uncontrolled(params, 580.0, exo, v0=1)
        assert traj.v.sum() == 0
        assert np.all(traj.x == 580.0)

    def test_energy_bookkeeping(self):
        rng = np.random.default_rng(7)
        exo = ExogenousSeries(
            tem=rng.uniform(-10, 10, 96), sol=rng.uniform(0, 300, 96),
            wat=rng.uniform(0, 20, 96), occ=rng.uniform(0, 1, 96),
        )
        traj = simulate_uncontrolled(HEATER, 570.0, exo)
        on_steps = int((traj.u * traj.v).sum())
        assert traj.p_kw.sum() * 0.25 == pytest.approx(HEATER.p_rated * on_steps * 0.25)
        assert on_steps > 0


class TestClosedForm:
    def test_single_step_base_case(self):
        rng = np.random.default_rng(3)
        for params in NOMINAL_PARAMS.values():
            exo = random_exo(rng, 1)
            x0 = params.comfort_band.midpoint
            assert closed_form_state(params, x0, exo, [1]) == pytest.approx(
                iterate_states(params, x0, exo, [1]), rel=1e-12
            )

    def test_boiler_three_steps(self):
        rng = np.random.default_rng(11)
        exo = random_exo(rng, 3)
        got = closed_form_state(BOILER, 60.0, exo, [1, 0, 1])
        assert got == pytest.approx(iterate_states(BOILER, 60.0, exo, [1, 0, 1]), rel=1e-12)

    def test_lossless_telescoping(self):
        params = DeviceParams(
            kind=DeviceKind.STORAGE_WATER_BOILER, p_rated=4.0, load_factor=0.9,
            t_set=70.0, t_db=25.0, t_ss=20.0, c_use=0.0142, c_sol=0.0, c_los=0.0, c_inp=1.26,
        )
        rng = np.random.default_rng(5)
        exo = random_exo(rng, 6)
        u = [1, 1, 0, 1, 0, 0]
        expected = 60.0 + sum(
            params.c_inp * params.p_rated * u[t] - params.c_use * exo.wat[t]
            for t in range(6)
        )
        assert closed_form_state(params, 60.0, exo, u) == pytest.approx(expected, rel=1e-12)

    def test_matches_iteration_all_kinds(self):
        rng = np.random.default_rng(42)
        for params in NOMINAL_PARAMS.values():
            for _ in range(25):
                t_steps = int(rng.integers(1, 50))
                exo = random_exo(rng, t_steps)
                u = rng.integers(0, 2, t_steps)
                dt = float(rng.choice([0.25, 0.5, 1.0]))
                x0 = params.comfort_band.midpoint
                exact = iterate_states(params, x0, exo, u, dt)
                got = closed_form_state(params, x0, exo, u, dt)
                assert got == pytest.approx(exact, rel=1e-9, abs=1e-9)

    def test_affine_form_matches_step_terms(self):
        rng = np.random.default_rng(9)
        for params in NOMINAL_PARAMS.values():
            exo = random_exo(rng, 8)
            lam, w, beta = affine_coefficients(params, exo)
            state = DeviceState(x=params.comfort_band.midpoint, v=1)
            for t in range(8):
                u = int(rng.integers(0, 2))
                nxt = step_state(state, step_terms(params, state, exo.at(t), u, 1))
                affine = (1.0 - lam) * state.x + w[t] + beta[t] * u
                assert affine == pytest.approx(nxt.x, rel=1e-12, abs=1e-12)
                state = nxt


class TestQPConsistency:
    def test_all_nominal_sets(self):
        for params in NOMINAL_PARAMS.values():
            expected = params.p_rated * math.sqrt(1.0 / params.load_factor**2 - 1.0)
            assert params.q_rated == pytest.approx(expected, rel=1e-6)

    def test_reference_values(self):
        assert HEATER.q_rated == pytest.approx(2.4216, abs=1e-4)
        ac = NOMINAL_PARAMS[DeviceKind.AIR_CONDITIONER]
        assert ac.q_rated == pytest.approx(2.667, abs=1e-3)

    def test_bad_load_factor(self):
        with pytest.raises(ConfigError):
            reactive_rating(5.0, 0.0)


class TestRandomize:
    def test_deterministic(self):
        a = randomize_params(HEATER, seed=123)
        b = randomize_params(HEATER, seed=123)
        assert a == b
        assert randomize_params(HEATER, seed=124) != a

    def test_bounds_monte_carlo(self):
        for seed in range(2000):
            p = randomize_params(FRIDGE, seed)
            for name in ("c_use", "c_los", "c_inp", "t_db", "p_rated"):
                nominal = getattr(FRIDGE, name)
                assert 0.9 * nominal - 1e-12 <= getattr(p, name) <= 1.1 * nominal + 1e-12

    def test_q_over_p_ratio_preserved(self):
        p = randomize_params(HEATER, seed=77)
        assert p.q_rated / p.p_rated == pytest.approx(HEATER.q_rated / HEATER.p_rated, rel=1e-12)


class TestFleetFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "fleet.json"
        path.write_text(
            '[{"kind": "fridge", "bus": "b03", "seed": 5},'
            ' {"kind": "heat_pump", "bus": "b07", "seed": null,'
            '  "overrides": {"p_rated": 6.0, "t_lol": -5.0}}]'
        )
        fleet = load_fleet(path)
        assert fleet[0].bus_id == "b03"
        assert fleet[0].params != NOMINAL_PARAMS[DeviceKind.FRIDGE]
        assert fleet[1].params.p_rated == 6.0
        assert fleet[1].params.t_lol == -5.0
        # q recomputed for the overridden rating
        assert fleet[1].params.q_rated == pytest.approx(reactive_rating(6.0, 0.8))

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            build_fleet_device({"kind": "fridge", "bus": "b1", "overrides": {"nope": 1}}, 0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            build_fleet_device({"kind": "toaster", "bus": "b1"}, 0)
