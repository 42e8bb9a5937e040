"""Storage models for thermostatically constrained flexible loads.

Every device is an on/off electric load feeding a thermal storage whose
internal temperature x evolves per step as

    x[t+1] = x[t] - out[t] - loss[t] + inp[t]

with kind-specific usage (out), insulation/exchange (loss) and electric
input (inp) terms. Heating kinds (night storage heater, storage water
boiler, heat pump) produce positive terms; cooling kinds (fridge, freezer,
air conditioner) produce the mirrored negative terms, so the recursion
above is shared by all kinds.

Unit conventions: usage and input coefficients are per 15-minute step and
scale with dt_hours / 0.25, loss coefficients are per hour and scale with
dt_hours.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError

BASE_STEP_HOURS = 0.25


class DeviceKind(str, Enum):
    NIGHT_STORAGE_HEATER = "night_storage_heater"
    STORAGE_WATER_BOILER = "storage_water_boiler"
    HEAT_PUMP = "heat_pump"
    FRIDGE = "fridge"
    FREEZER = "freezer"
    AIR_CONDITIONER = "air_conditioner"

    @property
    def is_cooling(self) -> bool:
        return self in _COOLING_KINDS


_COOLING_KINDS = frozenset(
    {DeviceKind.FRIDGE, DeviceKind.FREEZER, DeviceKind.AIR_CONDITIONER}
)


def reactive_rating(p_rated: float, load_factor: float) -> float:
    """Reactive power rating Q = P * sqrt(1/cos(phi)^2 - 1)."""
    if not 0.0 < load_factor <= 1.0:
        raise ConfigError(f"load factor must be in (0, 1], got {load_factor}")
    return p_rated * math.sqrt(1.0 / load_factor**2 - 1.0)


@dataclass(frozen=True)
class DeviceParams:
    """Coefficients, comfort band and power rating of one flexible load.

    c_use is the usage coefficient (room-heating coefficient for the heat
    pump); c_use_wat is the heat pump's hot-water usage coefficient and zero
    for every other kind. t_lol / t_hol bound the heat pump's input derating
    range and are ignored elsewhere.
    """

    kind: DeviceKind
    p_rated: float  # kW
    load_factor: float  # cos(phi)
    t_set: float  # deg C
    t_db: float  # deg C, dead-band width
    t_ss: float  # deg C, steady-state reference
    c_use: float
    c_sol: float
    c_los: float  # per-hour loss fraction
    c_inp: float  # deg C per kW per 15-min step
    c_use_wat: float = 0.0
    t_lol: float = -10.0
    t_hol: float = 20.0
    q_rated: float = field(default=-1.0)

    def __post_init__(self):
        if self.q_rated < 0:
            object.__setattr__(
                self, "q_rated", reactive_rating(self.p_rated, self.load_factor)
            )
        if self.t_db <= 0:
            raise ConfigError(f"dead-band width must be positive, got {self.t_db}")
        if self.kind == DeviceKind.HEAT_PUMP and not self.t_hol > self.t_lol:
            raise ConfigError(
                f"heat pump derating range invalid: t_lol={self.t_lol}, t_hol={self.t_hol}"
            )

    @property
    def comfort_band(self) -> "ComfortBand":
        return ComfortBand(t_low=self.t_set - self.t_db, t_up=self.t_set)


class ComfortBand(NamedTuple):
    t_low: float
    t_up: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_low + self.t_up)


@dataclass(frozen=True)
class ExogenousSeries:
    """Per-step forecasts: ambient temperature (deg C), solar irradiance
    (W/m2), hot water demand (liters/step) and household occupancy (0..1)."""

    tem: np.ndarray
    sol: np.ndarray
    wat: np.ndarray
    occ: np.ndarray

    def __post_init__(self):
        lengths = {len(self.tem), len(self.sol), len(self.wat), len(self.occ)}
        if len(lengths) != 1:
            raise ConfigError(f"exogenous series lengths differ: {sorted(lengths)}")
        if np.any(self.sol < 0) or np.any(self.wat < 0):
            raise ConfigError("solar irradiance and water demand must be >= 0")
        if np.any(self.occ < 0) or np.any(self.occ > 1):
            raise ConfigError("occupancy must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.tem)

    def at(self, t: int) -> "ExoSample":
        return ExoSample(
            float(self.tem[t]), float(self.sol[t]), float(self.wat[t]), float(self.occ[t])
        )

    @staticmethod
    def constant(t_steps: int, tem=10.0, sol=0.0, wat=0.0, occ=1.0) -> "ExogenousSeries":
        return ExogenousSeries(
            tem=np.full(t_steps, float(tem)),
            sol=np.full(t_steps, float(sol)),
            wat=np.full(t_steps, float(wat)),
            occ=np.full(t_steps, float(occ)),
        )


class ExoSample(NamedTuple):
    tem: float
    sol: float
    wat: float
    occ: float


class ModelInconsistencyWarning(UserWarning):
    """The thermostat could not hold the storage inside its comfort band
    (e.g. a cooling device in an ambient colder than the band)."""


class StepTerms(NamedTuple):
    """Signed additive terms of one recursion step (cooling kinds negative)."""

    out: float
    loss: float
    inp: float


@dataclass
class DeviceState:
    x: float  # internal storage temperature, deg C
    v: int = 1  # internal controller switch


def heat_pump_derating(params: DeviceParams, tem: float) -> float:
    """Linear input derating: 1 at/below t_lol, 0 at/above t_hol."""
    span = params.t_hol - params.t_lol
    return 1.0 - min(max((tem - params.t_lol) / span, 0.0), 1.0)


def step_terms(
    params: DeviceParams,
    state: DeviceState,
    exo: ExoSample,
    u: int,
    v: int,
    dt_hours: float = BASE_STEP_HOURS,
) -> StepTerms:
    """Evaluate the out/loss/inp terms of one step for any device kind."""
    if dt_hours <= 0:
        raise ConfigError(f"dt_hours must be positive, got {dt_hours}")
    k = dt_hours / BASE_STEP_HOURS
    on = float(u) * float(v)
    kind = params.kind
    if kind == DeviceKind.NIGHT_STORAGE_HEATER:
        out = max(0.0, params.c_use * (params.t_ss - exo.tem) - params.c_sol * exo.sol) * k
        loss = params.c_los * (state.x - params.t_ss) * dt_hours
        inp = params.c_inp * params.p_rated * on * k
    elif kind == DeviceKind.STORAGE_WATER_BOILER:
        out = params.c_use * exo.wat * k
        loss = params.c_los * (state.x - params.t_ss) * dt_hours
        inp = params.c_inp * params.p_rated * on * k
    elif kind == DeviceKind.HEAT_PUMP:
        out = (
            max(0.0, params.c_use * (params.t_ss - exo.tem) - params.c_sol * exo.sol)
            + params.c_use_wat * exo.wat
        ) * k
        loss = params.c_los * (state.x - params.t_ss) * dt_hours
        inp = params.c_inp * params.p_rated * heat_pump_derating(params, exo.tem) * on * k
    elif kind in (DeviceKind.FRIDGE, DeviceKind.FREEZER):
        out = -params.c_use * exo.occ * k
        loss = -params.c_los * (params.t_ss - state.x) * dt_hours
        inp = -params.c_inp * params.p_rated * on * k
    elif kind == DeviceKind.AIR_CONDITIONER:
        out = -params.c_use * exo.occ * k
        loss = -(params.c_los * (exo.tem - state.x) + params.c_sol * exo.sol) * dt_hours
        inp = -params.c_inp * params.p_rated * on * k
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown device kind: {kind}")
    return StepTerms(out=out, loss=loss, inp=inp)


def step_state(state: DeviceState, terms: StepTerms) -> DeviceState:
    """Apply one recursion step; the controller switch v is untouched."""
    return DeviceState(x=state.x - terms.out - terms.loss + terms.inp, v=state.v)


def thermostat(params: DeviceParams, state: DeviceState) -> int:
    """Hysteresis controller over the comfort band.

    Heating kinds switch on at/below t_low and off at/above t_up; cooling
    kinds mirror. Inside the band the previous switch value holds.
    """
    band = params.comfort_band
    if params.kind.is_cooling:
        if state.x >= band.t_up:
            return 1
        if state.x <= band.t_low:
            return 0
    else:
        if state.x <= band.t_low:
            return 1
        if state.x >= band.t_up:
            return 0
    return state.v


@dataclass
class Trajectory:
    x: np.ndarray  # length T+1, x[0] = initial state
    u: np.ndarray  # length T
    v: np.ndarray  # length T
    p_kw: np.ndarray  # length T
    q_kvar: np.ndarray  # length T


def simulate_uncontrolled(
    params: DeviceParams,
    x0: float,
    exo: ExogenousSeries,
    dt_hours: float = BASE_STEP_HOURS,
    v0: int = 0,
) -> Trajectory:
    """Run the device on its internal thermostat alone (u == 1 throughout)."""
    t_steps = len(exo)
    x = np.empty(t_steps + 1)
    v = np.empty(t_steps, dtype=np.int8)
    x[0] = x0
    state = DeviceState(x=x0, v=v0)
    for t in range(t_steps):
        state.v = thermostat(params, state)
        v[t] = state.v
        state = step_state(state, step_terms(params, state, exo.at(t), 1, state.v, dt_hours))
        x[t + 1] = state.x
    u = np.ones(t_steps, dtype=np.int8)
    on = u * v
    band = params.comfort_band
    drift = float(np.abs(np.diff(x)).max()) if t_steps else 0.0
    if x.min() < band.t_low - drift - 1e-9 or x.max() > band.t_up + drift + 1e-9:
        warnings.warn(
            f"{params.kind.value}: thermostat simulation left the comfort band "
            f"[{band.t_low:.3g}, {band.t_up:.3g}] beyond one-step drift",
            ModelInconsistencyWarning,
            stacklevel=2,
        )
    return Trajectory(
        x=x, u=u, v=v, p_kw=params.p_rated * on, q_kvar=params.q_rated * on
    )


def affine_coefficients(
    params: DeviceParams, exo: ExogenousSeries, dt_hours: float = BASE_STEP_HOURS
) -> tuple[float, np.ndarray, np.ndarray]:
    """Rewrite the step recursion as x[t+1] = (1-lam)*x[t] + w[t] + beta[t]*u[t].

    The switch-independent drift w and the input gain beta fold together the
    kind-specific out/loss/inp formulas; beta is time-varying only for the
    heat pump (ambient-dependent derating). This is the form every scheduling
    constraint is built from.
    """
    k = dt_hours / BASE_STEP_HOURS
    lam = params.c_los * dt_hours
    kind = params.kind
    tem, sol, wat, occ = exo.tem, exo.sol, exo.wat, exo.occ
    t_steps = len(exo)
    gain = params.c_inp * params.p_rated * k
    if kind == DeviceKind.NIGHT_STORAGE_HEATER:
        out = np.maximum(0.0, params.c_use * (params.t_ss - tem) - params.c_sol * sol) * k
        w = lam * params.t_ss - out
        beta = np.full(t_steps, gain)
    elif kind == DeviceKind.STORAGE_WATER_BOILER:
        w = lam * params.t_ss - params.c_use * wat * k
        beta = np.full(t_steps, gain)
    elif kind == DeviceKind.HEAT_PUMP:
        out = (
            np.maximum(0.0, params.c_use * (params.t_ss - tem) - params.c_sol * sol)
            + params.c_use_wat * wat
        ) * k
        w = lam * params.t_ss - out
        span = params.t_hol - params.t_lol
        derate = 1.0 - np.clip((tem - params.t_lol) / span, 0.0, 1.0)
        beta = gain * derate
    elif kind in (DeviceKind.FRIDGE, DeviceKind.FREEZER):
        w = lam * params.t_ss + params.c_use * occ * k
        beta = np.full(t_steps, -gain)
    elif kind == DeviceKind.AIR_CONDITIONER:
        w = lam * tem + params.c_sol * sol * dt_hours + params.c_use * occ * k
        beta = np.full(t_steps, -gain)
    else:  # pragma: no cover
        raise ConfigError(f"unknown device kind: {kind}")
    return lam, np.asarray(w, dtype=float), np.asarray(beta, dtype=float)


def closed_form_state(
    params: DeviceParams,
    x0: float,
    exo: ExogenousSeries,
    switches: Sequence[int] | np.ndarray,
    dt_hours: float = BASE_STEP_HOURS,
) -> float:
    """Storage temperature after applying the given switch sequence.

    Evaluates the induction expansion of the recursion directly,
    x_m = x0*(1-lam)^m + sum_n (w[n] + beta[n]*u[n]) * (1-lam)^(m-1-n),
    without iterating intermediate states.
    """
    u = np.asarray(switches, dtype=float)
    m = len(u)
    if m > len(exo):
        raise ConfigError("switch sequence longer than exogenous series")
    lam, w, beta = affine_coefficients(params, exo, dt_hours)
    decay = (1.0 - lam) ** np.arange(m - 1, -1, -1)
    return float(x0 * (1.0 - lam) ** m + np.dot(w[:m] + beta[:m] * u, decay))


_RANDOMIZED_FIELDS = ("c_use", "c_use_wat", "c_sol", "c_los", "c_inp", "t_db", "p_rated")


def randomize_params(nominal: DeviceParams, seed: int) -> DeviceParams:
    """Scale each coefficient and capacity by an independent U(0.9, 1.1) factor.

    The reactive rating is recomputed from the scaled active rating so the
    load factor is preserved. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    factors = rng.uniform(0.9, 1.1, size=len(_RANDOMIZED_FIELDS))
    updates = {
        name: getattr(nominal, name) * f for name, f in zip(_RANDOMIZED_FIELDS, factors)
    }
    updates["q_rated"] = reactive_rating(updates["p_rated"], nominal.load_factor)
    return replace(nominal, **updates)


# Nominal parameter sets. Heater c_use is calibrated so that a full day of
# usage at -10 degC ambient with no solar gain discharges 600 degC
# (96 steps * c_use * (t_ss - (-10)) = 600). Steady-state references default
# to a 20 degC indoor ambient.
NOMINAL_PARAMS: dict[DeviceKind, DeviceParams] = {
    DeviceKind.NIGHT_STORAGE_HEATER: DeviceParams(
        kind=DeviceKind.NIGHT_STORAGE_HEATER,
        p_rated=5.0, load_factor=0.9, t_set=580.0, t_db=20.0, t_ss=20.0,
        c_use=600.0 / 96.0 / 30.0, c_sol=0.001, c_los=0.01, c_inp=1.2916,
    ),
    DeviceKind.STORAGE_WATER_BOILER: DeviceParams(
        kind=DeviceKind.STORAGE_WATER_BOILER,
        p_rated=4.0, load_factor=0.9, t_set=70.0, t_db=25.0, t_ss=20.0,
        c_use=0.0142, c_sol=0.0, c_los=0.0125, c_inp=1.26,
    ),
    DeviceKind.HEAT_PUMP: DeviceParams(
        kind=DeviceKind.HEAT_PUMP,
        p_rated=5.0, load_factor=0.8, t_set=45.0, t_db=5.0, t_ss=20.0,
        c_use=0.01, c_use_wat=0.006, c_sol=0.001, c_los=0.001, c_inp=0.456,
        t_lol=-10.0, t_hol=20.0,
    ),
    DeviceKind.FRIDGE: DeviceParams(
        kind=DeviceKind.FRIDGE,
        p_rated=0.8, load_factor=0.7, t_set=8.5, t_db=1.5, t_ss=20.0,
        c_use=0.0015, c_sol=0.0, c_los=0.003, c_inp=0.3201,
    ),
    DeviceKind.FREEZER: DeviceParams(
        kind=DeviceKind.FREEZER,
        p_rated=1.0, load_factor=0.7, t_set=-16.5, t_db=1.5, t_ss=20.0,
        c_use=0.001, c_sol=0.0, c_los=0.004, c_inp=0.2967,
    ),
    DeviceKind.AIR_CONDITIONER: DeviceParams(
        kind=DeviceKind.AIR_CONDITIONER,
        p_rated=2.0, load_factor=0.6, t_set=21.0, t_db=1.5, t_ss=20.0,
        c_use=0.0017, c_sol=0.00016, c_los=0.02, c_inp=0.2829,
    ),
}


@dataclass(frozen=True)
class FleetDevice:
    device_id: str
    bus_id: str
    params: DeviceParams


def build_fleet_device(entry: dict, index: int) -> FleetDevice:
    """Build one fleet entry: nominal kind -> named overrides -> seeded
    randomization (skipped when seed is absent/null)."""
    try:
        kind = DeviceKind(entry["kind"])
        bus_id = str(entry["bus"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"fleet entry {index}: {exc}") from exc
    params = NOMINAL_PARAMS[kind]
    overrides = entry.get("overrides", {})
    unknown = set(overrides) - {
        f.name for f in params.__dataclass_fields__.values()  # type: ignore[attr-defined]
    } - {"q_rated"}
    if unknown - {"kind"}:
        raise ConfigError(f"fleet entry {index}: unknown override(s) {sorted(unknown)}")
    if overrides:
        clean = {k: v for k, v in overrides.items() if k != "kind"}
        if "p_rated" in clean and "q_rated" not in clean:
            clean["q_rated"] = -1.0  # recompute from the overridden rating
        params = replace(params, **clean)
    seed = entry.get("seed")
    if seed is not None:
        params = randomize_params(params, int(seed))
    return FleetDevice(
        device_id=str(entry.get("id", f"dev{index:03d}")), bus_id=bus_id, params=params
    )


def load_fleet(path) -> list[FleetDevice]:
    """Read a device fleet specification file (JSON list of entries)."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ConfigError("fleet file must contain a JSON list")
    return [build_fleet_device(entry, i) for i, entry in enumerate(raw)]
