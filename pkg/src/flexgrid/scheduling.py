"""Binary on/off scheduling of flexible loads against a residual profile.

The comfort constraints are substituted into pure functions of the switch
vector u via the induction form of the storage recursion, so every problem
is "objective over u in {0,1}^T (or [0,1]^T) plus elastic band penalties".
Slacks never appear as free variables: given u, the optimal slack of each
constraint row is its weighted violation, which keeps every solver path
exact and cheap.

Solver paths:
  * exact: depth-first branch-and-bound with comfort-bound and per-step
    objective pruning (binary mode within the bit budget),
  * relaxed: cyclic coordinate descent over u in [0,1]^T with exact
    one-dimensional minimization per coordinate, followed by thresholding
    at 0.5 and a greedy violation-reducing bit repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .devices import BASE_STEP_HOURS, DeviceParams, ExogenousSeries, affine_coefficients
from .errors import ConfigError, SolverError

DEFAULT_W1 = 1e6
DEFAULT_W2 = 1e3
EXACT_BITS_SINGLE = 20
EXACT_BITS_JOINT = 24
STATIONARITY_TOL = 1e-8
MAX_CD_PASSES = 400
REPAIR_TOL = 1e-9


class ObjectiveKind(str, Enum):
    SUM_NORM_QUADRATIC = "sum_norm_quadratic"
    EUCLIDEAN_NORM = "euclidean_norm"
    MAX_NORM = "max_norm"
    APPROX_LINEAR_GRADIENT = "approx_linear_gradient"


class PowerMode(str, Enum):
    ACTIVE = "active"
    REACTIVE = "reactive"
    BOTH = "both"


class VariableMode(str, Enum):
    BINARY = "binary"
    RELAXED_ROUNDED = "relaxed_rounded"


@dataclass(frozen=True)
class ControlMode:
    """Comfort handling: full external control, or respect for the internal
    controller which tightens the upper bound by the dead-band range (softer
    weight w2). Weights price slack in the objective."""

    internal_controller: bool = False
    w1: float = DEFAULT_W1
    w2: float = DEFAULT_W2

    def __post_init__(self):
        if self.w1 <= 0 or self.w2 <= 0:
            raise ConfigError("slack weights must be positive")


class DeviceModel:
    """One device's scheduling view: affine state map plus elastic bounds.

    states(u)[r] is the storage temperature after steps 0..r, i.e. x_{r+1}.
    The constraint rows r = 0..T-1 bound exactly those states; the last row
    carries the terminal at-least-half-full lower bound.
    """

    def __init__(
        self,
        params: DeviceParams,
        x0: float,
        exo: ExogenousSeries,
        control: ControlMode = ControlMode(),
        dt_hours: float = BASE_STEP_HOURS,
        device_id: str = "dev",
    ):
        self.params = params
        self.x0 = float(x0)
        self.exo = exo
        self.control = control
        self.dt_hours = dt_hours
        self.device_id = device_id
        self.t_steps = len(exo)
        self.p = params.p_rated
        self.q = params.q_rated

        lam, w, beta = affine_coefficients(params, exo, dt_hours)
        self.lam = lam
        self.w = w
        self.beta = beta
        t = self.t_steps
        self.pw = (1.0 - lam) ** np.arange(t + 1)

        # zero-input states x_1..x_T
        alpha = np.empty(t)
        cur = self.x0
        for n in range(t):
            cur = cur * (1.0 - lam) + w[n]
            alpha[n] = cur
        self.alpha = alpha

        # switch gain matrix: gamma[n, r] = beta[n] * (1-lam)^(r-n) for r >= n
        idx = np.arange(t)
        expo = idx[None, :] - idx[:, None]
        gamma = np.where(expo >= 0, beta[:, None] * (1.0 - lam) ** np.clip(expo, 0, None), 0.0)
        self.gamma = gamma

        # zero-initial-state accumulations for reachability queries:
        # x_j = pw[j-s]*(x_s - acc[s]) + acc[j] under all-off / all-on switching
        acc0 = np.zeros(t + 1)
        acc1 = np.zeros(t + 1)
        c0 = c1 = 0.0
        for n in range(t):
            c0 = c0 * (1.0 - lam) + w[n]
            c1 = c1 * (1.0 - lam) + w[n] + beta[n]
            acc0[n + 1] = c0
            acc1[n + 1] = c1
        self._acc_off = acc0
        self._acc_on = acc1

        band = params.comfort_band
        lower = np.full(t, band.t_low)
        upper = np.full(t, band.t_up)
        w_lo = np.full(t, control.w1)
        w_up = np.full(t, control.w1)
        if control.internal_controller:
            # keep the optimizer away from the switch-off margin of the
            # internal hysteresis (mirrored for cooling kinds), softer weight
            if params.kind.is_cooling:
                lower[:] = band.t_low + params.t_db
                w_lo[:] = control.w2
            else:
                upper[:] = band.t_up - params.t_db
                w_up[:] = control.w2
        # terminal row: storage at least half full within the effective band;
        # "full" is hot for heating kinds and cold for cooling kinds
        midpoint = 0.5 * (lower[-1] + upper[-1])
        if params.kind.is_cooling:
            upper[-1] = midpoint
        else:
            lower[-1] = midpoint
        self.lower, self.upper = lower, upper
        self.w_lo, self.w_up = w_lo, w_up

    def states(self, u: np.ndarray) -> np.ndarray:
        """x_1..x_T for a switch vector (binary or fractional)."""
        return self.alpha + np.asarray(u, dtype=float) @ self.gamma

    def violations(self, u: np.ndarray) -> np.ndarray:
        """Unweighted band violations (deg C) per constraint row."""
        x = self.states(u)
        return np.maximum(0.0, self.lower - x) + np.maximum(0.0, x - self.upper)

    def slacks_for_states(self, x: np.ndarray, integer_slacks: bool = False) -> np.ndarray:
        """Exact optimal slack per row given the states (elastic constraints)."""
        a = np.maximum(
            self.w_lo * np.maximum(0.0, self.lower - x),
            self.w_up * np.maximum(0.0, x - self.upper),
        )
        if integer_slacks:
            a = np.ceil(a - 1e-12)
            np.maximum(a, 0.0, out=a)
        return a

    def reachable(self, t: int, x_t: float, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) achievable states x_j for rows j > t, given x_t."""
        off = self.pw[rows - t] * (x_t - self._acc_off[t]) + self._acc_off[rows]
        on = self.pw[rows - t] * (x_t - self._acc_on[t]) + self._acc_on[rows]
        return np.minimum(off, on), np.maximum(off, on)


def feasibility_bounds(
    params: DeviceParams,
    x0: float,
    exo: ExogenousSeries,
    control: ControlMode = ControlMode(),
    dt_hours: float = BASE_STEP_HOURS,
) -> DeviceModel:
    """Per-step linear constraints over u, as a DeviceModel.

    The returned object exposes alpha (constant part), gamma (coefficients of
    u per constraint row), the lower/upper bound vectors and the slack
    weights; states(u) and violations(u) evaluate the rows directly.
    """
    return DeviceModel(params, x0, exo, control, dt_hours)


@dataclass
class ScheduleProblem:
    r_act: np.ndarray
    r_react: np.ndarray
    devices: list[DeviceModel]
    objective: ObjectiveKind = ObjectiveKind.SUM_NORM_QUADRATIC
    power_mode: PowerMode = PowerMode.BOTH
    variable_mode: VariableMode = VariableMode.BINARY
    integer_slacks: bool = False
    dt_hours: float = BASE_STEP_HOURS
    exact_bits_single: int = EXACT_BITS_SINGLE
    exact_bits_joint: int = EXACT_BITS_JOINT
    max_cd_passes: int = MAX_CD_PASSES
    stationarity_tol: float = STATIONARITY_TOL

    def __post_init__(self):
        self.r_act = np.asarray(self.r_act, dtype=float)
        self.r_react = np.asarray(self.r_react, dtype=float)
        t = len(self.r_act)
        if len(self.r_react) != t:
            raise ConfigError("active and reactive residual profiles differ in length")
        for dev in self.devices:
            if dev.t_steps != t:
                raise ConfigError(
                    f"device {dev.device_id}: horizon {dev.t_steps} != residual length {t}"
                )

    @property
    def t_steps(self) -> int:
        return len(self.r_act)

    def restricted_to(self, index: int, r_act=None, r_react=None) -> "ScheduleProblem":
        """Single-device sub-problem, optionally against an updated residual."""
        return ScheduleProblem(
            r_act=self.r_act if r_act is None else r_act,
            r_react=self.r_react if r_react is None else r_react,
            devices=[self.devices[index]],
            objective=self.objective, power_mode=self.power_mode,
            variable_mode=self.variable_mode, integer_slacks=self.integer_slacks,
            dt_hours=self.dt_hours, exact_bits_single=self.exact_bits_single,
            exact_bits_joint=self.exact_bits_joint, max_cd_passes=self.max_cd_passes,
            stationarity_tol=self.stationarity_tol,
        )


@dataclass
class Schedule:
    u: np.ndarray  # (n_devices, T) binary
    slacks: np.ndarray  # (n_devices, T)
    objective: float
    core_objective: float
    total_violation_degc: float
    max_violation_degc: float
    relaxed_fallback: bool = False
    stats: dict = field(default_factory=dict)


def _gradient_profile(r: np.ndarray) -> np.ndarray:
    # first gradient is zero by convention: r[-1] := r[0]
    return np.diff(r, prepend=r[0])


def objective_value(
    kind: ObjectiveKind,
    power_mode: PowerMode,
    r_act: np.ndarray,
    r_react: np.ndarray,
    p_ratings: np.ndarray,
    q_ratings: np.ndarray,
    u: np.ndarray,
    slacks: np.ndarray | float = 0.0,
) -> float:
    """Objective for a switch matrix u (n_devices x T) plus slack total."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    total_act = r_act + p_ratings @ u
    total_react = r_react + q_ratings @ u
    slack_total = float(np.sum(slacks))
    core = 0.0
    if kind == ObjectiveKind.SUM_NORM_QUADRATIC:
        if power_mode in (PowerMode.ACTIVE, PowerMode.BOTH):
            core += float(np.sum(total_act**2))
        if power_mode in (PowerMode.REACTIVE, PowerMode.BOTH):
            core += float(np.sum(total_react**2))
    elif kind == ObjectiveKind.EUCLIDEAN_NORM:
        if power_mode in (PowerMode.ACTIVE, PowerMode.BOTH):
            core += float(np.linalg.norm(total_act))
        if power_mode in (PowerMode.REACTIVE, PowerMode.BOTH):
            core += float(np.linalg.norm(total_react))
    elif kind == ObjectiveKind.MAX_NORM:
        if power_mode in (PowerMode.ACTIVE, PowerMode.BOTH):
            core += float(np.max(np.abs(total_act)))
        if power_mode in (PowerMode.REACTIVE, PowerMode.BOTH):
            core += float(np.max(np.abs(total_react)))
    elif kind == ObjectiveKind.APPROX_LINEAR_GRADIENT:
        if power_mode in (PowerMode.ACTIVE, PowerMode.BOTH):
            core += float(np.sum(np.abs(_gradient_profile(r_act) + p_ratings @ u)))
        if power_mode in (PowerMode.REACTIVE, PowerMode.BOTH):
            core += float(np.sum(np.abs(_gradient_profile(r_react) + q_ratings @ u)))
    else:  # pragma: no cover
        raise ConfigError(f"unknown objective kind {kind}")
    return core + slack_total


def evaluate_schedule(problem: ScheduleProblem, u: np.ndarray) -> Schedule:
    """Canonical evaluation: states, exact slacks, core and total objective.

    Every solver reports incumbents through this single code path so that
    exact solvers and the enumeration oracle agree bit-for-bit.
    """
    u = np.atleast_2d(np.asarray(u))
    slacks = np.empty((len(problem.devices), problem.t_steps))
    viols = np.empty_like(slacks)
    for i, dev in enumerate(problem.devices):
        x = dev.states(u[i])
        slacks[i] = dev.slacks_for_states(x, problem.integer_slacks)
        viols[i] = np.maximum(0.0, dev.lower - x) + np.maximum(0.0, x - dev.upper)
    p_ratings = np.array([d.p for d in problem.devices])
    q_ratings = np.array([d.q for d in problem.devices])
    core = objective_value(
        problem.objective, problem.power_mode, problem.r_act, problem.r_react,
        p_ratings, q_ratings, u, 0.0,
    )
    return Schedule(
        u=u.astype(np.int8) if np.all((u == 0) | (u == 1)) else u,
        slacks=slacks,
        objective=core + float(np.sum(slacks)),
        core_objective=core,
        total_violation_degc=float(np.sum(viols)),
        max_violation_degc=float(np.max(viols)) if viols.size else 0.0,
    )


# ---------------------------------------------------------------------------
# enumeration oracle
# ---------------------------------------------------------------------------

def brute_force_oracle(problem: ScheduleProblem, max_bits: int = EXACT_BITS_JOINT) -> Schedule:
    """Exhaustive minimum over all binary switch matrices.

    Enumerates assignments in lexicographic order of the device-major
    flattened switch vector and keeps the first optimum, which fixes the
    canonical tie-break.
    """
    n_dev = len(problem.devices)
    t = problem.t_steps
    bits = n_dev * t
    if bits > max_bits:
        raise SolverError(f"oracle budget exceeded: {bits} bits > {max_bits}")
    p_ratings = np.array([d.p for d in problem.devices])
    q_ratings = np.array([d.q for d in problem.devices])
    use_act = problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH)
    use_react = problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH)
    r_act = problem.r_act
    r_react = problem.r_react
    if problem.objective == ObjectiveKind.APPROX_LINEAR_GRADIENT:
        r_act = _gradient_profile(r_act)
        r_react = _gradient_profile(r_react)

    best_val = math.inf
    best_index = -1
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    chunk = 1 << 16
    for start in range(0, 1 << bits, chunk):
        stop = min(start + chunk, 1 << bits)
        codes = np.arange(start, stop, dtype=np.uint64)
        u_flat = ((codes[:, None] >> shifts[None, :]) & 1).astype(float)
        u_all = u_flat.reshape(len(codes), n_dev, t)
        slack_total = np.zeros(len(codes))
        for i, dev in enumerate(problem.devices):
            x = dev.alpha[None, :] + u_all[:, i, :] @ dev.gamma
            a = np.maximum(
                dev.w_lo * np.maximum(0.0, dev.lower - x),
                dev.w_up * np.maximum(0.0, x - dev.upper),
            )
            if problem.integer_slacks:
                a = np.maximum(np.ceil(a - 1e-12), 0.0)
            slack_total += a.sum(axis=1)
        total_act = r_act[None, :] + np.tensordot(u_all, p_ratings, axes=([1], [0]))
        total_react = r_react[None, :] + np.tensordot(u_all, q_ratings, axes=([1], [0]))
        core = np.zeros(len(codes))
        if problem.objective == ObjectiveKind.SUM_NORM_QUADRATIC:
            if use_act:
                core += np.sum(total_act**2, axis=1)
            if use_react:
                core += np.sum(total_react**2, axis=1)
        elif problem.objective == ObjectiveKind.EUCLIDEAN_NORM:
            if use_act:
                core += np.sqrt(np.sum(total_act**2, axis=1))
            if use_react:
                core += np.sqrt(np.sum(total_react**2, axis=1))
        elif problem.objective == ObjectiveKind.MAX_NORM:
            if use_act:
                core += np.max(np.abs(total_act), axis=1)
            if use_react:
                core += np.max(np.abs(total_react), axis=1)
        else:
            if use_act:
                core += np.sum(np.abs(total_act), axis=1)
            if use_react:
                core += np.sum(np.abs(total_react), axis=1)
        values = core + slack_total
        local = int(np.argmin(values))
        if values[local] < best_val:
            best_val = float(values[local])
            best_index = start + local
    u_best = ((np.uint64(best_index) >> shifts) & 1).astype(np.int8).reshape(n_dev, t)
    schedule = evaluate_schedule(problem, u_best)
    schedule.stats = {"method": "brute_force", "evaluated": 1 << bits}
    return schedule


# ---------------------------------------------------------------------------
# exact branch and bound
# ---------------------------------------------------------------------------

def _per_step_core_tables(problem: ScheduleProblem, p: float, q: float):
    """Per-step core contributions for u in {0, 1} of a single device."""
    use_act = problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH)
    use_react = problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH)
    r_act, r_react = problem.r_act, problem.r_react
    if problem.objective == ObjectiveKind.APPROX_LINEAR_GRADIENT:
        r_act = _gradient_profile(r_act)
        r_react = _gradient_profile(r_react)
    act0, act1 = r_act, r_act + p
    react0, react1 = r_react, r_react + q
    if problem.objective == ObjectiveKind.SUM_NORM_QUADRATIC:
        fa, fr = np.square, np.square
    elif problem.objective in (ObjectiveKind.EUCLIDEAN_NORM, ObjectiveKind.MAX_NORM):
        fa, fr = np.square, np.square  # combined later via sqrt / max
    else:
        fa, fr = np.abs, np.abs
    tables = {
        "act": (fa(act0) if use_act else None, fa(act1) if use_act else None),
        "react": (fr(react0) if use_react else None, fr(react1) if use_react else None),
    }
    return tables


class _SingleDeviceBnB:
    """Depth-first search over u_0..u_{T-1}, zero branch first.

    Lower bounds combine (a) the best achievable per-step core for the
    remaining steps, (b) slacks already fixed by the prefix, and (c) the
    unavoidable violation of future rows given the reachable state interval.
    """

    def __init__(self, problem: ScheduleProblem):
        if len(problem.devices) != 1:
            raise SolverError("single-device solver got a multi-device problem")
        self.problem = problem
        self.dev = problem.devices[0]
        self.t_steps = problem.t_steps
        self.obj = problem.objective
        self.tables = _per_step_core_tables(problem, self.dev.p, self.dev.q)
        self._prepare_suffixes()

    def _prepare_suffixes(self):
        t = self.t_steps
        self.suffix = {}
        for name, (tab0, tab1) in self.tables.items():
            if tab0 is None:
                continue
            mins = np.minimum(tab0, tab1)
            if self.obj == ObjectiveKind.MAX_NORM:
                suff = np.zeros(t + 1)
                for s in range(t - 1, -1, -1):
                    suff[s] = max(suff[s + 1], mins[s])
            else:
                suff = np.concatenate([np.cumsum(mins[::-1])[::-1], [0.0]])
            self.suffix[name] = suff

    def _core_lb(self, t: int, acc: dict) -> float:
        lb = 0.0
        if self.obj == ObjectiveKind.SUM_NORM_QUADRATIC:
            for name, suff in self.suffix.items():
                lb += acc[name] + suff[t]
        elif self.obj == ObjectiveKind.EUCLIDEAN_NORM:
            for name, suff in self.suffix.items():
                lb += math.sqrt(acc[name] + suff[t])
        elif self.obj == ObjectiveKind.MAX_NORM:
            for name, suff in self.suffix.items():
                lb += math.sqrt(max(acc[name], suff[t]))
        else:
            for name, suff in self.suffix.items():
                lb += acc[name] + suff[t]
        return lb

    def _slack_future_lb(self, t: int, x_cur: float) -> float:
        if t >= self.t_steps:
            return 0.0
        dev = self.dev
        rows = np.arange(t + 1, self.t_steps + 1)
        x_min, x_max = dev.reachable(t, x_cur, rows)
        lo, up = dev.lower[rows - 1], dev.upper[rows - 1]
        unavoidable = dev.w_lo[rows - 1] * np.maximum(0.0, lo - x_max) + dev.w_up[
            rows - 1
        ] * np.maximum(0.0, x_min - up)
        return float(unavoidable.sum())

    def solve(self) -> Schedule:
        t_steps = self.t_steps
        dev = self.dev
        prob = self.problem
        incumbent: Schedule | None = None
        incumbent_val = math.inf
        u = np.zeros(t_steps, dtype=np.int8)
        nodes = 0

        use_names = [n for n, s in self.tables.items() if s[0] is not None]

        def recurse(t: int, x_cur: float, acc: dict, slack_fixed: float):
            nonlocal incumbent, incumbent_val, nodes
            nodes += 1
            margin = 1e-9 * (1.0 + abs(incumbent_val)) if incumbent_val < math.inf else 0.0
            lb = self._core_lb(t, acc) + slack_fixed + self._slack_future_lb(t, x_cur)
            if lb >= incumbent_val + margin:
                return
            if t == t_steps:
                cand = evaluate_schedule(prob, u[None, :])
                if cand.objective < incumbent_val:
                    incumbent = cand
                    incumbent_val = cand.objective
                return
            for choice in (0, 1):
                u[t] = choice
                x_next = x_cur * (1.0 - dev.lam) + dev.w[t] + dev.beta[t] * choice
                a_row = max(
                    dev.w_lo[t] * max(0.0, dev.lower[t] - x_next),
                    dev.w_up[t] * max(0.0, x_next - dev.upper[t]),
                )
                if prob.integer_slacks:
                    a_row = max(math.ceil(a_row - 1e-12), 0.0)
                acc_next = dict(acc)
                for name in use_names:
                    tab = self.tables[name][choice]
                    if self.obj == ObjectiveKind.MAX_NORM:
                        acc_next[name] = max(acc_next[name], tab[t])
                    else:
                        acc_next[name] = acc_next[name] + tab[t]
                recurse(t + 1, x_next, acc_next, slack_fixed + a_row)
            u[t] = 0

        acc0 = {name: 0.0 for name in use_names}
        recurse(0, dev.x0, acc0, 0.0)
        assert incumbent is not None
        incumbent.stats = {"method": "branch_and_bound", "nodes": nodes}
        return incumbent


class _JointBnB:
    """Exact joint search, device-major bit order, zero branch first.

    The core bound relaxes undecided device contributions per step to the
    interval [0, sum of free ratings]; the slack bound reuses the
    single-device reachable-interval argument per device.
    """

    def __init__(self, problem: ScheduleProblem):
        self.problem = problem
        self.devs = problem.devices
        self.n_dev = len(self.devs)
        self.t_steps = problem.t_steps
        self.obj = problem.objective
        self.use_act = problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH)
        self.use_react = problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH)
        r_act, r_react = problem.r_act, problem.r_react
        if self.obj == ObjectiveKind.APPROX_LINEAR_GRADIENT:
            r_act = _gradient_profile(r_act)
            r_react = _gradient_profile(r_react)
        self.base_act = r_act
        self.base_react = r_react
        self.helpers = [_SingleDeviceBnB(problem.restricted_to(i)) for i in range(self.n_dev)]

    def _interval_min(self, fixed: np.ndarray, span: np.ndarray) -> np.ndarray:
        # min over y in [fixed, fixed+span] of y^2 (or |y|)
        inside = (fixed <= 0.0) & (fixed + span >= 0.0)
        best = np.minimum(np.abs(fixed), np.abs(fixed + span))
        best = np.where(inside, 0.0, best)
        if self.obj in (
            ObjectiveKind.SUM_NORM_QUADRATIC,
            ObjectiveKind.EUCLIDEAN_NORM,
            ObjectiveKind.MAX_NORM,
        ):
            return best**2
        return best

    def _core_lb(self, added_act, added_react, free_p, free_q) -> float:
        lb = 0.0
        if self.use_act:
            per = self._interval_min(self.base_act + added_act, free_p)
            if self.obj == ObjectiveKind.EUCLIDEAN_NORM:
                lb += math.sqrt(per.sum())
            elif self.obj == ObjectiveKind.MAX_NORM:
                lb += math.sqrt(per.max())
            else:
                lb += per.sum()
        if self.use_react:
            per = self._interval_min(self.base_react + added_react, free_q)
            if self.obj == ObjectiveKind.EUCLIDEAN_NORM:
                lb += math.sqrt(per.sum())
            elif self.obj == ObjectiveKind.MAX_NORM:
                lb += math.sqrt(per.max())
            else:
                lb += per.sum()
        return lb

    def solve(self) -> Schedule:
        prob = self.problem
        n_dev, t_steps = self.n_dev, self.t_steps
        u = np.zeros((n_dev, t_steps), dtype=np.int8)
        incumbent: Schedule | None = None
        incumbent_val = math.inf
        nodes = 0
        added_act = np.zeros(t_steps)
        added_react = np.zeros(t_steps)
        free_p = np.zeros(t_steps)
        free_q = np.zeros(t_steps)
        for dev in self.devs:
            free_p += dev.p
            free_q += dev.q

        def slack_lb_future(d: int, t: int, x_d: float) -> float:
            total = self.helpers[d]._slack_future_lb(t, x_d)
            for later in range(d + 1, n_dev):
                total += self.helpers[later]._slack_future_lb(0, self.devs[later].x0)
            return total

        def recurse(d: int, t: int, x_d: float, slack_fixed: float):
            nonlocal incumbent, incumbent_val, nodes
            nodes += 1
            if t == t_steps:
                if d + 1 == n_dev:
                    cand = evaluate_schedule(prob, u)
                    if cand.objective < incumbent_val:
                        incumbent = cand
                        incumbent_val = cand.objective
                    return
                recurse(d + 1, 0, self.devs[d + 1].x0, slack_fixed)
                return
            margin = 1e-9 * (1.0 + abs(incumbent_val)) if incumbent_val < math.inf else 0.0
            lb = (
                self._core_lb(added_act, added_react, free_p, free_q)
                + slack_fixed
                + slack_lb_future(d, t, x_d)
            )
            if lb >= incumbent_val + margin:
                return
            dev = self.devs[d]
            free_p[t] -= dev.p
            free_q[t] -= dev.q
            for choice in (0, 1):
                u[d, t] = choice
                if choice:
                    added_act[t] += dev.p
                    added_react[t] += dev.q
                x_next = x_d * (1.0 - dev.lam) + dev.w[t] + dev.beta[t] * choice
                a_row = max(
                    dev.w_lo[t] * max(0.0, dev.lower[t] - x_next),
                    dev.w_up[t] * max(0.0, x_next - dev.upper[t]),
                )
                if prob.integer_slacks:
                    a_row = max(math.ceil(a_row - 1e-12), 0.0)
                recurse(d, t + 1, x_next, slack_fixed + a_row)
                if choice:
                    added_act[t] -= dev.p
                    added_react[t] -= dev.q
            u[d, t] = 0
            free_p[t] += dev.p
            free_q[t] += dev.q

        recurse(0, 0, self.devs[0].x0, 0.0)
        assert incumbent is not None
        incumbent.stats = {"method": "joint_branch_and_bound", "nodes": nodes}
        return incumbent


# ---------------------------------------------------------------------------
# relaxed coordinate descent
# ---------------------------------------------------------------------------

class _CoordinateDescent:
    """Cyclic coordinate descent on u in [0,1]^(n_dev x T).

    Slacks are eliminated exactly (each row's optimal slack is its weighted
    violation), so the working objective is core(u) + penalty(u): convex for
    the sum/euclidean/max norms. Each coordinate is minimized exactly for the
    quadratic sum norm via the piecewise-linear derivative, and by bisection
    on a monotone subgradient otherwise.
    """

    def __init__(self, problem: ScheduleProblem, u0: np.ndarray | None = None):
        self.problem = problem
        self.devs = problem.devices
        self.n_dev = len(self.devs)
        self.t_steps = problem.t_steps
        self.obj = problem.objective
        self.use_act = problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH)
        self.use_react = problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH)
        r_act, r_react = problem.r_act, problem.r_react
        if self.obj == ObjectiveKind.APPROX_LINEAR_GRADIENT:
            r_act = _gradient_profile(r_act)
            r_react = _gradient_profile(r_react)
        if u0 is None:
            # start from feasible lazy schedules: descent then works on the
            # smooth core instead of crawling out of the slack penalty
            self.u = np.array(
                [project_feasible(dev) for dev in self.devs], dtype=float
            ).reshape(self.n_dev, self.t_steps)
        else:
            self.u = np.asarray(u0, dtype=float).copy()
        self.total_act = r_act + np.array([d.p for d in self.devs]) @ self.u
        self.total_react = r_react + np.array([d.q for d in self.devs]) @ self.u
        self.x = [dev.states(self.u[i]) for i, dev in enumerate(self.devs)]

    def objective_now(self) -> float:
        core = 0.0
        if self.obj == ObjectiveKind.SUM_NORM_QUADRATIC:
            if self.use_act:
                core += float(np.sum(self.total_act**2))
            if self.use_react:
                core += float(np.sum(self.total_react**2))
        elif self.obj == ObjectiveKind.EUCLIDEAN_NORM:
            if self.use_act:
                core += float(np.linalg.norm(self.total_act))
            if self.use_react:
                core += float(np.linalg.norm(self.total_react))
        elif self.obj == ObjectiveKind.MAX_NORM:
            if self.use_act:
                core += float(np.max(np.abs(self.total_act)))
            if self.use_react:
                core += float(np.max(np.abs(self.total_react)))
        else:
            if self.use_act:
                core += float(np.sum(np.abs(self.total_act)))
            if self.use_react:
                core += float(np.sum(np.abs(self.total_react)))
        slack = 0.0
        for i, dev in enumerate(self.devs):
            slack += float(np.sum(dev.slacks_for_states(self.x[i])))
        return core + slack

    def _penalty_breakpoints(self, i: int, t: int):
        """Sorted derivative breakpoints of the penalty along coordinate (i,t)."""
        dev = self.devs[i]
        rows = slice(t, dev.t_steps)  # rows affected by u_t: x_{t+1}..x_T
        g = dev.gamma[t, rows]
        if not g.size or g[0] == 0.0:
            return np.empty(0), np.empty(0), 0.0
        xb = self.x[i][rows] - g * self.u[i, t]
        c_lo = (dev.lower[rows] - xb) / g
        c_up = (dev.upper[rows] - xb) / g
        w_lo = dev.w_lo[rows] * np.abs(g)
        w_up = dev.w_up[rows] * np.abs(g)
        if g[0] > 0:
            # derivative starts at -sum(w_lo), rises by w_lo at c_lo, w_up at c_up
            bps = np.concatenate([c_lo, c_up])
            deltas = np.concatenate([w_lo, w_up])
            base = -float(np.sum(w_lo))
        else:
            bps = np.concatenate([c_up, c_lo])
            deltas = np.concatenate([w_up, w_lo])
            base = -float(np.sum(w_up))
        order = np.argsort(bps, kind="stable")
        return bps[order], deltas[order], base

    def _minimize_coordinate(self, i: int, t: int) -> float:
        dev = self.devs[i]
        p, q = dev.p, dev.q
        ra = self.total_act[t] - p * self.u[i, t]
        rr = self.total_react[t] - q * self.u[i, t]
        bps, deltas, base = self._penalty_breakpoints(i, t)
        cum = np.cumsum(deltas) if len(deltas) else np.empty(0)

        def pen_slope(c: float) -> float:
            if not len(bps):
                return 0.0
            k = int(np.searchsorted(bps, c, side="right"))
            return base + (cum[k - 1] if k > 0 else 0.0)

        if self.obj == ObjectiveKind.SUM_NORM_QUADRATIC:
            a, b = self._quad_coefficients(i, t, ra, rr)
            return self._solve_pwq(a, b, bps, cum, base)

        def subgrad(c: float) -> float:
            s = pen_slope(c)
            if self.obj == ObjectiveKind.EUCLIDEAN_NORM:
                if self.use_act:
                    sa = self._sumsq_act - (self.total_act[t]) ** 2 + (ra + p * c) ** 2
                    s += p * (ra + p * c) / math.sqrt(sa) if sa > 0 else 0.0
                if self.use_react:
                    sr = self._sumsq_react - (self.total_react[t]) ** 2 + (rr + q * c) ** 2
                    s += q * (rr + q * c) / math.sqrt(sr) if sr > 0 else 0.0
            elif self.obj == ObjectiveKind.MAX_NORM:
                if self.use_act:
                    val = abs(ra + p * c)
                    if val >= self._maxrest_act[t]:
                        s += p * (1.0 if ra + p * c >= 0 else -1.0)
                if self.use_react:
                    val = abs(rr + q * c)
                    if val >= self._maxrest_react[t]:
                        s += q * (1.0 if rr + q * c >= 0 else -1.0)
            else:  # approx linear gradient
                if self.use_act:
                    v = ra + p * c
                    s += p * (0.0 if v == 0 else math.copysign(1.0, v))
                if self.use_react:
                    v = rr + q * c
                    s += q * (0.0 if v == 0 else math.copysign(1.0, v))
            return s

        if subgrad(0.0) >= 0.0:
            return 0.0
        if subgrad(1.0) <= 0.0:
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if subgrad(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    @staticmethod
    def _solve_pwq(a: float, b: float, bps, cum, base) -> float:
        """Minimize (a/2)c^2 + b*c + piecewise-linear penalty over [0, 1].

        The derivative a*c + b + S(c) is nondecreasing; S jumps at the sorted
        breakpoints. Find the zero crossing segment-wise.
        """
        if not len(bps):
            if a <= 0:
                return 0.0 if b >= 0 else 1.0
            return min(1.0, max(0.0, -b / a))
        inside = (bps > 0.0) & (bps < 1.0)
        pts = bps[inside]
        s_before_first = base + (cum[np.searchsorted(bps, 0.0, side="right") - 1]
                                 if np.searchsorted(bps, 0.0, side="right") > 0 else 0.0)
        # slope value on each segment [seg_start, seg_end)
        seg_edges = np.concatenate([[0.0], pts, [1.0]])
        if len(pts):
            idx = np.searchsorted(bps, pts, side="right") - 1
            s_values = np.concatenate([[s_before_first], base + cum[idx]])
        else:
            s_values = np.array([s_before_first])
        # derivative at segment start
        d_start = a * seg_edges[:-1] + b + s_values
        if d_start[0] >= 0.0:
            return 0.0
        d_end = a * seg_edges[1:] + b + s_values
        crossing = np.nonzero(d_end >= 0.0)[0]
        if not len(crossing):
            return 1.0
        k = int(crossing[0])
        if a <= 0:
            return float(seg_edges[k + 1]) if d_start[k] < 0 else float(seg_edges[k])
        c = (-(b + s_values[k])) / a
        return float(min(max(c, seg_edges[k]), seg_edges[k + 1]))

    def _quad_coefficients(self, i: int, t: int, ra: float, rr: float) -> tuple[float, float]:
        """Quadratic core along coordinate (i, t): core(c) = (a/2)c^2 + b*c + const."""
        dev = self.devs[i]
        a = b = 0.0
        if self.use_act:
            a += 2 * dev.p * dev.p
            b += 2 * dev.p * ra
        if self.use_react:
            a += 2 * dev.q * dev.q
            b += 2 * dev.q * rr
        return a, b

    def _apply_update(self, i: int, t: int, delta: float):
        dev = self.devs[i]
        self.total_act[t] += dev.p * delta
        self.total_react[t] += dev.q * delta
        self.x[i][t:] += dev.gamma[t, t:] * delta

    def _refresh_norm_caches(self):
        if self.obj == ObjectiveKind.EUCLIDEAN_NORM:
            self._sumsq_act = float(np.sum(self.total_act**2))
            self._sumsq_react = float(np.sum(self.total_react**2))
        elif self.obj == ObjectiveKind.MAX_NORM:
            abs_act = np.abs(self.total_act)
            abs_react = np.abs(self.total_react)
            self._maxrest_act = _max_excluding(abs_act)
            self._maxrest_react = _max_excluding(abs_react)

    def run(self, first_free: int = 0) -> tuple[np.ndarray, dict]:
        """Descend over devices >= first_free (earlier ones stay frozen)."""
        prob = self.problem
        prev = self.objective_now()
        for passes in range(1, prob.max_cd_passes + 1):
            self._refresh_norm_caches()
            max_move = 0.0
            for i in range(first_free, self.n_dev):
                for t in range(self.t_steps):
                    old = self.u[i, t]
                    new = self._minimize_coordinate(i, t)
                    if new == old:
                        continue
                    max_move = max(max_move, abs(new - old))
                    self.u[i, t] = new
                    self._apply_update(i, t, new - old)
                    if self.obj in (ObjectiveKind.EUCLIDEAN_NORM, ObjectiveKind.MAX_NORM):
                        self._refresh_norm_caches()
            cur = self.objective_now()
            # stationary when the objective stalls or the iterate stops moving
            if prev - cur < prob.stationarity_tol * (1.0 + abs(cur)) or max_move < 1e-9:
                return self.u, {"method": "coordinate_descent", "passes": passes}
            prev = cur
        raise SolverError(
            f"coordinate descent did not reach stationarity in {prob.max_cd_passes} passes"
        )


def _max_excluding(values: np.ndarray) -> np.ndarray:
    """max over all entries except the own index (0 for singleton)."""
    n = len(values)
    if n == 1:
        return np.zeros(1)
    prefix = np.maximum.accumulate(values)
    suffix = np.maximum.accumulate(values[::-1])[::-1]
    out = np.empty(n)
    out[0] = suffix[1]
    out[-1] = prefix[-2]
    if n > 2:
        out[1:-1] = np.maximum(prefix[:-2], suffix[2:])
    return out


# ---------------------------------------------------------------------------
# rounding and repair
# ---------------------------------------------------------------------------

def round_and_repair(u_frac: np.ndarray, device: DeviceModel) -> np.ndarray:
    """Threshold at 0.5 (ties round up), then greedily flip single bits while
    any comfort bound stays violated and a flip strictly reduces the total
    violation. Ties go to the earliest step. Bounded by T^2 flips."""
    u = (np.asarray(u_frac, dtype=float) >= 0.5).astype(np.int8)
    t_steps = len(u)
    max_flips = t_steps * t_steps
    flips = 0
    while True:
        x = device.states(u)
        viol = np.maximum(0.0, device.lower - x) + np.maximum(0.0, x - device.upper)
        total = float(viol.sum())
        if total <= REPAIR_TOL:
            return u
        deltas = 1.0 - 2.0 * u  # flip direction per bit
        x_flipped = x[None, :] + deltas[:, None] * device.gamma
        v = np.maximum(0.0, device.lower[None, :] - x_flipped) + np.maximum(
            0.0, x_flipped - device.upper[None, :]
        )
        totals = v.sum(axis=1)
        best = int(np.argmin(totals))
        if totals[best] >= total - 1e-12:
            return u  # no single flip helps further
        u[best] ^= 1
        flips += 1
        if flips > max_flips:
            raise SolverError("bit repair exceeded T^2 flips; termination argument violated")


def project_feasible(device: DeviceModel, u_pref: np.ndarray | None = None) -> np.ndarray:
    """Greedy band projection: follow the preferred bits where possible,
    override a bit when it would leave the comfort band or make some future
    row unreachable (extremal trajectories must still bracket every bound).
    With no preference this yields the maximally lazy feasible schedule."""
    t_steps = device.t_steps
    u = np.zeros(t_steps, dtype=np.int8)
    x = device.x0
    for t in range(t_steps):
        pref = 0 if u_pref is None else int(u_pref[t] >= 0.5)
        chosen = None
        for choice in (pref, 1 - pref):
            x_next = x * (1.0 - device.lam) + device.w[t] + device.beta[t] * choice
            if not (device.lower[t] - 1e-12 <= x_next <= device.upper[t] + 1e-12):
                continue
            if t + 1 < t_steps:
                rows = np.arange(t + 2, t_steps + 1)
                x_min, x_max = device.reachable(t + 1, x_next, rows)
                if np.any(x_max < device.lower[rows - 1] - 1e-12) or np.any(
                    x_min > device.upper[rows - 1] + 1e-12
                ):
                    continue
            chosen = choice
            break
        if chosen is None:
            # both choices doom some row; take the lesser immediate violation
            cands = []
            for choice in (pref, 1 - pref):
                x_next = x * (1.0 - device.lam) + device.w[t] + device.beta[t] * choice
                viol = max(0.0, device.lower[t] - x_next) + max(0.0, x_next - device.upper[t])
                cands.append((viol, choice, x_next))
            cands.sort(key=lambda c: (c[0],))
            _, chosen, x_next = cands[0]
        else:
            x_next = x * (1.0 - device.lam) + device.w[t] + device.beta[t] * chosen
        u[t] = chosen
        x = x_next
    return u


PAIR_SWAP_BITS = 64


def _pair_swap_sum(problem: ScheduleProblem, u: np.ndarray, i: int,
                   max_moves: int) -> bool:
    """Move on-steps of device i (swap one on with one off bit) while that
    strictly lowers the quadratic-sum objective. Vectorized over all pairs;
    valid for any horizon. Returns True if the schedule changed."""
    dev = problem.devices[i]
    p_ratings = np.array([d.p for d in problem.devices])
    q_ratings = np.array([d.q for d in problem.devices])
    use_act = problem.power_mode in (PowerMode.ACTIVE, PowerMode.BOTH)
    use_react = problem.power_mode in (PowerMode.REACTIVE, PowerMode.BOTH)
    total_act = problem.r_act + p_ratings @ u
    total_react = problem.r_react + q_ratings @ u
    x = dev.states(u[i].astype(float))
    slack_now = float(dev.slacks_for_states(x, problem.integer_slacks).sum())
    changed = False
    for _ in range(max_moves):
        ons = np.flatnonzero(u[i] == 1)
        offs = np.flatnonzero(u[i] == 0)
        if not len(ons) or not len(offs):
            return changed
        gain_off = np.zeros(len(ons))
        gain_on = np.zeros(len(offs))
        if use_act:
            gain_off += (total_act[ons] - dev.p) ** 2 - total_act[ons] ** 2
            gain_on += (total_act[offs] + dev.p) ** 2 - total_act[offs] ** 2
        if use_react:
            gain_off += (total_react[ons] - dev.q) ** 2 - total_react[ons] ** 2
            gain_on += (total_react[offs] + dev.q) ** 2 - total_react[offs] ** 2
        best_delta, best_pair, best_slack = -1e-12, None, slack_now
        for ai, a in enumerate(ons):
            x_mid = x - dev.gamma[a]
            cand = x_mid[None, :] + dev.gamma[offs]
            slack_cand = np.maximum(
                dev.w_lo * np.maximum(0.0, dev.lower - cand),
                dev.w_up * np.maximum(0.0, cand - dev.upper),
            ).sum(axis=1)
            if problem.integer_slacks:
                slack_cand = np.maximum(
                    np.ceil(slack_cand - 1e-12), 0.0
                )  # coarse but conservative
            delta = gain_off[ai] + gain_on + (slack_cand - slack_now)
            k = int(np.argmin(delta))
            if delta[k] < best_delta:
                best_delta = float(delta[k])
                best_pair = (int(a), int(offs[k]))
                best_slack = float(slack_cand[k])
        if best_pair is None:
            return changed
        a, b = best_pair
        u[i, a], u[i, b] = 0, 1
        total_act[a] -= dev.p
        total_act[b] += dev.p
        total_react[a] -= dev.q
        total_react[b] += dev.q
        x = x - dev.gamma[a] + dev.gamma[b]
        slack_now = best_slack
        changed = True
    return changed


def improve_bits(
    problem: ScheduleProblem, u: np.ndarray, max_rounds: int | None = None
) -> np.ndarray:
    """Deterministic local descent on the full objective (core + slacks).

    Applied after rounding: flips the best strictly improving single bit
    until a sweep leaves the schedule unchanged. The neighborhood also
    contains on/off pair swaps, which move an on-step without changing the
    on-count: exact and vectorized for the quadratic sum norm at any size,
    exhaustive for the other norms on small instances. The slack weights
    make comfort-degrading moves unprofitable.
    """
    u = np.atleast_2d(np.asarray(u)).astype(np.int8).copy()
    n_dev = len(problem.devices)
    bits = n_dev * problem.t_steps
    if max_rounds is None:
        max_rounds = 64 if bits <= PAIR_SWAP_BITS else 6
    current = evaluate_schedule(problem, u).objective
    for _ in range(max_rounds):
        changed = False
        for i in range(n_dev):
            while True:
                candidates = np.repeat(u[None, :, :], problem.t_steps, axis=0)
                idx = np.arange(problem.t_steps)
                candidates[idx, i, idx] ^= 1
                values = np.array(
                    [evaluate_schedule(problem, cand).objective for cand in candidates]
                )
                best = int(np.argmin(values))
                if values[best] >= current - 1e-12:
                    break
                u[i, best] ^= 1
                current = values[best]
                changed = True
            if problem.objective == ObjectiveKind.SUM_NORM_QUADRATIC:
                if _pair_swap_sum(problem, u, i, max_moves=4 * problem.t_steps):
                    current = evaluate_schedule(problem, u).objective
                    changed = True
        if problem.objective != ObjectiveKind.SUM_NORM_QUADRATIC and bits <= PAIR_SWAP_BITS:
            flat = u.reshape(-1)
            ons = np.flatnonzero(flat == 1)
            offs = np.flatnonzero(flat == 0)
            best_val, best_pair = current, None
            for a in ons:
                for b in offs:
                    flat[a], flat[b] = 0, 1
                    val = evaluate_schedule(problem, u).objective
                    flat[a], flat[b] = 1, 0
                    if val < best_val - 1e-12:
                        best_val, best_pair = val, (a, b)
            if best_pair is not None:
                flat[best_pair[0]], flat[best_pair[1]] = 0, 1
                current = best_val
                changed = True
        if not changed:
            break
    return u


def distribute_coarse(duties: np.ndarray, k: int) -> np.ndarray:
    """Spread fractional duties over k fine steps each: round(duty*k) on-steps
    placed earliest-first inside every coarse block."""
    if k < 1:
        raise ConfigError("coarse factor must be >= 1")
    duties = np.clip(np.asarray(duties, dtype=float), 0.0, 1.0)
    out = np.zeros(len(duties) * k, dtype=np.int8)
    for i, d in enumerate(duties):
        n_on = int(np.floor(d * k + 0.5))
        out[i * k : i * k + n_on] = 1
    return out


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def solve_single_device(problem: ScheduleProblem) -> Schedule:
    """Schedule one device. Binary mode within the bit budget is solved
    exactly by branch-and-bound; otherwise the relaxed path (coordinate
    descent, rounding, repair) runs and oversize binary requests are flagged."""
    if len(problem.devices) != 1:
        raise SolverError("solve_single_device expects exactly one device")
    relaxed_fallback = False
    if problem.variable_mode == VariableMode.BINARY:
        if problem.t_steps <= problem.exact_bits_single:
            return _SingleDeviceBnB(problem).solve()
        relaxed_fallback = True
    u_frac, stats = _CoordinateDescent(problem).run()
    u_bin = round_and_repair(u_frac[0], problem.devices[0])
    u_bin = improve_bits(problem, u_bin[None, :])
    schedule = evaluate_schedule(problem, u_bin)
    if schedule.total_violation_degc > REPAIR_TOL:
        # comfort wins over residual gains: take the band projection of the
        # current bits whenever it removes the remaining violation
        proj = project_feasible(problem.devices[0], u_bin[0])
        alt = evaluate_schedule(problem, proj[None, :])
        if alt.total_violation_degc <= REPAIR_TOL or alt.objective < schedule.objective:
            schedule = alt
    schedule.relaxed_fallback = relaxed_fallback
    schedule.stats = stats
    return schedule


def solve_multi_device(problem: ScheduleProblem) -> Schedule:
    """Jointly schedule all devices of a problem.

    Exact joint branch-and-bound runs while n_devices*T fits the joint bit
    budget in binary mode. The relaxed path rounds device-by-device:
    after each device is fixed and repaired, descent re-runs over the still
    fractional devices against the updated totals.
    """
    n_dev = len(problem.devices)
    if n_dev == 0:
        raise SolverError("problem has no devices")
    if n_dev == 1:
        return solve_single_device(problem)
    bits = n_dev * problem.t_steps
    relaxed_fallback = False
    if problem.variable_mode == VariableMode.BINARY:
        if bits <= problem.exact_bits_joint:
            return _JointBnB(problem).solve()
        relaxed_fallback = True
    cd = _CoordinateDescent(problem)
    u_frac, stats = cd.run()
    u_out = np.zeros((n_dev, problem.t_steps), dtype=np.int8)
    passes_total = stats["passes"]
    for i in range(n_dev):
        u_out[i] = round_and_repair(u_frac[i], problem.devices[i])
        if i + 1 < n_dev:
            u_frac[i] = u_out[i]
            cd = _CoordinateDescent(problem, u0=u_frac)
            u_frac, st = cd.run(first_free=i + 1)
            passes_total += st["passes"]
    u_out = improve_bits(problem, u_out)
    schedule = evaluate_schedule(problem, u_out)
    schedule.relaxed_fallback = relaxed_fallback
    schedule.stats = {"method": "relaxed_round_fix", "passes": passes_total}
    return schedule
