"""Rolling-horizon MPC dispatch of the grid/PV/wind/battery park.

Each step builds an N-hour LP: generation cost objective, hourly power
balance, SOC recursion with charge/discharge efficiencies, renewable output
capped by availability states that either follow the identified linear
dynamics (MPC modes) or stay frozen at their initial values (benchmark).
Only the first hour of each subproblem is committed; the genuine cost is
the cost of the committed decisions, as opposed to the fictional horizon
objectives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import lpcore
from .sysid import HistoryLog, StateSpaceModel, fit_state_space

MODE_BENCHMARK = "benchmark"
MODE_MPC = "mpc"
MODE_DYNAMIC = "mpc-dynamic"
MODES = (MODE_BENCHMARK, MODE_MPC, MODE_DYNAMIC)

_VARS_PER_HOUR = 8  # grid, pv, wind, charge, discharge, soc, pv_cap, wind_cap


class DispatchError(RuntimeError):
    pass


class CostError(ValueError):
    pass


@dataclass
class DispatchParams:
    horizon: int = 8
    c_grid: float = 1.0          # $/kWh
    c_pv: float = 0.4
    c_wind: float = 0.5
    c_bat: float = 1.0
    eta_charge: float = 0.95
    eta_discharge: float = 0.99
    e_max: float = 100.0         # kWh
    p_bat_max: float = 50.0      # kW
    soc0: float = 0.5
    pv_capacity: float = 600.0   # kW
    wind_capacity: float = 500.0
    refit_period: int = 8        # hours between dynamic re-inference
    refit_window: int = 24       # sliding history window for refits (0 = all)
    commit_load: str = "forecast"  # balance load at the committed hour
    slack_price_factor: float = 10.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for nm in ("c_grid", "c_pv", "c_wind", "c_bat"):
            if getattr(self, nm) < 0:
                raise ValueError(f"{nm} must be >= 0")
        for nm in ("eta_charge", "eta_discharge"):
            v = getattr(self, nm)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{nm} must lie in (0, 1]")
        if self.e_max <= 0 or self.p_bat_max < 0:
            raise ValueError("battery sizes must be positive")
        if not 0.0 <= self.soc0 <= 1.0:
            raise ValueError("soc0 must lie in [0, 1]")
        if self.commit_load not in ("forecast", "realized"):
            raise ValueError("commit_load must be 'forecast' or 'realized'")


@dataclass
class HourDecision:
    hour: int
    load: float          # load the balance equation was struck against
    grid: float
    pv: float
    wind: float
    charge: float
    discharge: float
    soc: float
    pv_cap: float        # availability state carried by the subproblem
    wind_cap: float
    balance_slack: float = 0.0
    realized_load: float | None = None

    @property
    def p_bat(self) -> float:
        return self.discharge - self.charge

    def cost(self, params: DispatchParams) -> float:
        return (params.c_grid * self.grid + params.c_pv * self.pv
                + params.c_wind * self.wind
                + params.c_bat * (self.charge + self.discharge))


@dataclass
class DaySchedule:
    mode: str
    decisions: list[HourDecision]
    objectives: list[float]       # fictional horizon objective per subproblem
    cost: float                   # genuine cost of the committed decisions
    refit_hours: list[int] = field(default_factory=list)
    slack_energy: float = 0.0


class PerfectForesight:
    """Load source that returns the true day curve, wrapping cyclically
    past the end of the day."""

    def __init__(self, day_load):
        self.day = np.asarray(day_load, dtype=float).reshape(-1)
        if self.day.size != 24:
            raise ValueError("day_load must hold 24 values")

    def lookahead(self, k: int, n: int) -> np.ndarray:
        idx = (k + np.arange(n)) % 24
        return self.day[idx]

    def realized(self, k: int) -> float:
        return float(self.day[k % 24])


class RecursiveForecast:
    """One-step forecaster rolled forward recursively.

    At hour k the realized history (pre-day tail plus the day's first k
    hours) feeds the lag window; predicted values are fed back for the
    remaining horizon.
    """

    def __init__(self, forest, feature_spec, history_load, day_load):
        from . import forecaster  # lazy: avoids import cycle in tooling
        self._predict = lambda row: forecaster.predict(forest, row)
        self.spec = feature_spec
        self.history = np.asarray(history_load, dtype=float).reshape(-1)
        self.day = np.asarray(day_load, dtype=float).reshape(-1)
        self.start_hour = len(self.history) % 24
        if self.history.size < feature_spec.lag:
            raise ValueError("history shorter than the lag window")

    def lookahead(self, k: int, n: int) -> np.ndarray:
        buf = np.concatenate([self.history, self.day[:k]])
        out = np.empty(n)
        for j in range(n):
            lags = buf[-self.spec.lag:]
            hour = (self.start_hour + k + j) % 24
            row = np.concatenate([lags, [hour]]) if self.spec.include_hour else lags
            out[j] = self._predict(row)
            buf = np.append(buf, out[j])
        return out

    def realized(self, k: int) -> float:
        return float(self.day[k % 24])


def build_subproblem(k: int, n: int, load_forecast, x_k, m: StateSpaceModel | None,
                     soc_k: float, params: DispatchParams,
                     with_slack: bool = False) -> lpcore.LpProblem:
    """LP for hours k .. k+n-1.

    Variables per hour: grid, pv, wind, charge, discharge, soc, pv_cap,
    wind_cap.  ``m`` None freezes the availability states at ``x_k``
    (benchmark); otherwise they follow x(t+1) = A x(t) + B u(t) from x_k.
    ``with_slack`` appends penalized balance/cap slacks used as an
    infeasibility guard.
    """
    load = np.asarray(load_forecast, dtype=float).reshape(-1)
    if load.size != n:
        raise lpcore.BuildError(f"forecast length {load.size} != horizon {n}")
    if not np.all(np.isfinite(load)):
        raise lpcore.BuildError("forecast contains non-finite values")
    x_k = np.asarray(x_k, dtype=float).reshape(2)
    if not np.all(np.isfinite(x_k)):
        raise lpcore.BuildError("state x_k must be finite")
    if not 0.0 <= soc_k <= 1.0 + 1e-12:
        raise lpcore.BuildError(f"soc_k {soc_k} outside [0, 1]")

    nv = _VARS_PER_HOUR * n
    n_slack = 3 * n if with_slack else 0  # balance, pv cap, wind cap per hour
    ntot = nv + n_slack

    def col(t, off):
        return _VARS_PER_HOUR * t + off

    G, PV, WD, CH, DIS, SOC, PCAP, WCAP = range(8)

    c = np.zeros(ntot)
    names = []
    for t in range(n):
        c[col(t, G)] = params.c_grid
        c[col(t, PV)] = params.c_pv
        c[col(t, WD)] = params.c_wind
        c[col(t, CH)] = params.c_bat
        c[col(t, DIS)] = params.c_bat
        names += [f"{nm}{k + t}" for nm in
                  ("grid", "pv", "wind", "ch", "dis", "soc", "pvcap", "wcap")]
    if with_slack:
        pen = params.slack_price_factor * params.c_grid
        for t in range(n):
            c[nv + 3 * t: nv + 3 * t + 3] = pen
            names += [f"sbal{k + t}", f"spv{k + t}", f"swd{k + t}"]

    a_eq = []
    b_eq = []
    # power balance per hour: grid + pv + wind + dis - ch (+ slack) = load
    for t in range(n):
        row = np.zeros(ntot)
        row[col(t, G)] = 1.0
        row[col(t, PV)] = 1.0
        row[col(t, WD)] = 1.0
        row[col(t, DIS)] = 1.0
        row[col(t, CH)] = -1.0
        if with_slack:
            row[nv + 3 * t] = 1.0
        a_eq.append(row)
        b_eq.append(load[t])
    # SOC recursion
    for t in range(n):
        row = np.zeros(ntot)
        row[col(t, SOC)] = 1.0
        row[col(t, CH)] = -params.eta_charge / params.e_max
        row[col(t, DIS)] = 1.0 / (params.eta_discharge * params.e_max)
        if t == 0:
            a_eq.append(row)
            b_eq.append(soc_k)
        else:
            row[col(t - 1, SOC)] = -1.0
            a_eq.append(row)
            b_eq.append(0.0)
    # availability state rows: fixed (benchmark) or the identified dynamics
    for t in range(n):
        for i, cap_off in enumerate((PCAP, WCAP)):
            row = np.zeros(ntot)
            row[col(t, cap_off)] = 1.0
            if m is None or t == 0:
                a_eq.append(row)
                b_eq.append(x_k[i])
            else:
                row[col(t - 1, PCAP)] = -m.a[i, 0]
                row[col(t - 1, WCAP)] = -m.a[i, 1]
                row[col(t - 1, PV)] = -m.b[i, 0]
                row[col(t - 1, WD)] = -m.b[i, 1]
                a_eq.append(row)
                b_eq.append(0.0)

    # renewable output below its availability state
    a_ub = []
    b_ub = []
    for t in range(n):
        for out_off, cap_off, s_off in ((PV, PCAP, 1), (WD, WCAP, 2)):
            row = np.zeros(ntot)
            row[col(t, out_off)] = 1.0
            row[col(t, cap_off)] = -1.0
            if with_slack:
                row[nv + 3 * t + s_off] = -1.0
            a_ub.append(row)
            b_ub.append(0.0)

    lb = np.zeros(ntot)
    ub = np.full(ntot, np.inf)
    for t in range(n):
        ub[col(t, CH)] = params.p_bat_max
        ub[col(t, DIS)] = params.p_bat_max
        ub[col(t, SOC)] = 1.0
        lb[col(t, PCAP)] = -np.inf  # pinned by the state rows
        lb[col(t, WCAP)] = -np.inf

    return lpcore.LpProblem(c=c, a_eq=np.asarray(a_eq), b_eq=np.asarray(b_eq),
                            a_ub=np.asarray(a_ub), b_ub=np.asarray(b_ub),
                            lb=lb, ub=ub, names=names)


def _extract_hour(sol: lpcore.LpSolution, t: int) -> dict:
    x = sol.x
    base = _VARS_PER_HOUR * t
    return {
        "grid": float(x[base + 0]), "pv": float(x[base + 1]),
        "wind": float(x[base + 2]), "charge": float(x[base + 3]),
        "discharge": float(x[base + 4]), "soc": float(x[base + 5]),
        "pv_cap": float(x[base + 6]), "wind_cap": float(x[base + 7]),
    }


def _solve_subproblem(builder, hour: int):
    """Solve, retrying once with the penalized-slack guard on infeasibility."""
    prob = builder(False)
    sol = lpcore.solve(prob)
    slack = 0.0
    if sol.status != lpcore.OPTIMAL:
        prob = builder(True)
        sol = lpcore.solve(prob)
        if sol.status != lpcore.OPTIMAL:
            raise DispatchError(f"subproblem at hour {hour} is {sol.status}")
        idx = [i for i, nm in enumerate(prob.names)
               if nm.startswith(("sbal", "spv", "swd"))]
        slack = float(np.sum(sol.x[idx]))
    return sol, slack


def run_mpc(day_load, m0: StateSpaceModel, mode: str, params: DispatchParams,
            h: HistoryLog | None = None, x0=None) -> DaySchedule:
    """Roll hours 0..23: solve the horizon subproblem, commit the first hour,
    advance SOC and the availability state, optionally re-infer (A, B)."""
    if mode not in (MODE_MPC, MODE_DYNAMIC):
        raise ValueError(f"run_mpc mode must be {MODE_MPC} or {MODE_DYNAMIC}")
    if x0 is None:
        if h is None or len(h) == 0:
            raise DispatchError("x0 not given and history empty")
        x0 = m0.step(h.x[-1], h.u[-1])
    x = np.clip(np.asarray(x0, dtype=float).reshape(2),
                [0.0, 0.0], [params.pv_capacity, params.wind_capacity])

    log = HistoryLog(h.hours.copy(), h.x.copy(), h.u.copy()) if h is not None \
        else HistoryLog()
    day_start = int(log.hours[-1]) + 1 if len(log) else 0

    model = m0
    soc = params.soc0
    decisions: list[HourDecision] = []
    objectives: list[float] = []
    refit_hours: list[int] = []
    slack_total = 0.0

    for k in range(24):
        if (mode == MODE_DYNAMIC and k > 0 and params.refit_period > 0
                and k % params.refit_period == 0):
            window = log if params.refit_window <= 0 else log.tail(params.refit_window)
            try:
                model = fit_state_space(window)
                refit_hours.append(k)
            except Exception:
                pass  # too little history: keep the previous model

        forecast = np.asarray(day_load.lookahead(k, params.horizon), dtype=float)
        realized = day_load.realized(k)
        if params.commit_load == "realized":
            forecast = forecast.copy()
            forecast[0] = realized

        sol, slack = _solve_subproblem(
            lambda ws: build_subproblem(k, params.horizon, forecast, x, model,
                                        soc, params, with_slack=ws),
            hour=k)
        vals = _extract_hour(sol, 0)
        dec = HourDecision(hour=k, load=float(forecast[0]),
                           realized_load=realized, balance_slack=slack, **vals)
        decisions.append(dec)
        objectives.append(float(sol.objective))
        slack_total += slack

        soc = dec.soc
        u = np.array([dec.pv, dec.wind])
        x = np.clip(model.step(x, u), [0.0, 0.0],
                    [params.pv_capacity, params.wind_capacity])
        log.append(day_start + k, [dec.pv_cap, dec.wind_cap], u)

    sched = DaySchedule(mode=mode, decisions=decisions, objectives=objectives,
                        cost=0.0, refit_hours=refit_hours,
                        slack_energy=slack_total)
    sched.cost = genuine_cost(sched, params)
    return sched


def run_benchmark(day_load, params: DispatchParams, caps0) -> DaySchedule:
    """Rolling loop without the state-transition constraint: availability
    stays frozen at ``caps0`` for the whole day."""
    caps0 = np.clip(np.asarray(caps0, dtype=float).reshape(2),
                    [0.0, 0.0], [params.pv_capacity, params.wind_capacity])
    soc = params.soc0
    decisions: list[HourDecision] = []
    objectives: list[float] = []
    slack_total = 0.0
    for k in range(24):
        forecast = np.asarray(day_load.lookahead(k, params.horizon), dtype=float)
        realized = day_load.realized(k)
        if params.commit_load == "realized":
            forecast = forecast.copy()
            forecast[0] = realized
        sol, slack = _solve_subproblem(
            lambda ws: build_subproblem(k, params.horizon, forecast, caps0, None,
                                        soc, params, with_slack=ws),
            hour=k)
        vals = _extract_hour(sol, 0)
        dec = HourDecision(hour=k, load=float(forecast[0]),
                           realized_load=realized, balance_slack=slack, **vals)
        decisions.append(dec)
        objectives.append(float(sol.objective))
        slack_total += slack
        soc = dec.soc

    sched = DaySchedule(mode=MODE_BENCHMARK, decisions=decisions,
                        objectives=objectives, cost=0.0,
                        slack_energy=slack_total)
    sched.cost = genuine_cost(sched, params)
    return sched


def solve_day_known_caps(load, pv_max, wind_max, soc0: float,
                         params: DispatchParams) -> list[HourDecision]:
    """Single-shot day dispatch with availability known per hour (no state
    model); used to manufacture identification history."""
    load = np.asarray(load, dtype=float).reshape(-1)
    pv_max = np.asarray(pv_max, dtype=float).reshape(-1)
    wind_max = np.asarray(wind_max, dtype=float).reshape(-1)
    n = load.size
    if not (pv_max.size == n and wind_max.size == n):
        raise DispatchError("day series lengths differ")

    nv = 6 * n  # grid, pv, wind, charge, discharge, soc

    def col(t, off):
        return 6 * t + off

    c = np.zeros(nv)
    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    for t in range(n):
        c[col(t, 0)] = params.c_grid
        c[col(t, 1)] = params.c_pv
        c[col(t, 2)] = params.c_wind
        c[col(t, 3)] = params.c_bat
        c[col(t, 4)] = params.c_bat
        ub[col(t, 1)] = pv_max[t]
        ub[col(t, 2)] = wind_max[t]
        ub[col(t, 3)] = params.p_bat_max
        ub[col(t, 4)] = params.p_bat_max
        ub[col(t, 5)] = 1.0

    a_eq = np.zeros((2 * n, nv))
    b_eq = np.zeros(2 * n)
    for t in range(n):
        a_eq[t, col(t, 0)] = 1.0
        a_eq[t, col(t, 1)] = 1.0
        a_eq[t, col(t, 2)] = 1.0
        a_eq[t, col(t, 4)] = 1.0
        a_eq[t, col(t, 3)] = -1.0
        b_eq[t] = load[t]
        r = n + t
        a_eq[r, col(t, 5)] = 1.0
        a_eq[r, col(t, 3)] = -params.eta_charge / params.e_max
        a_eq[r, col(t, 4)] = 1.0 / (params.eta_discharge * params.e_max)
        if t == 0:
            b_eq[r] = soc0
        else:
            a_eq[r, col(t - 1, 5)] = -1.0

    sol = lpcore.solve(lpcore.LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, lb=lb, ub=ub))
    if sol.status != lpcore.OPTIMAL:
        raise DispatchError(f"day dispatch is {sol.status}")
    out = []
    for t in range(n):
        out.append(HourDecision(
            hour=t, load=float(load[t]), grid=float(sol.x[col(t, 0)]),
            pv=float(sol.x[col(t, 1)]), wind=float(sol.x[col(t, 2)]),
            charge=float(sol.x[col(t, 3)]), discharge=float(sol.x[col(t, 4)]),
            soc=float(sol.x[col(t, 5)]), pv_cap=float(pv_max[t]),
            wind_cap=float(wind_max[t])))
    return out


def genuine_cost(s: DaySchedule, params: DispatchParams) -> float:
    """Realized cost of the committed decisions over the full day;
    1 h steps make kW read as kWh."""
    if len(s.decisions) != 24:
        raise CostError(f"schedule holds {len(s.decisions)} hours, expected 24")
    return float(sum(d.cost(params) for d in s.decisions))


SCHEDULE_HEADER = "hour,load,grid,pv,wind,charge,discharge,soc,cost"


def write_schedule_csv(path, s: DaySchedule, params: DispatchParams,
                       extra_cols: dict | None = None) -> None:
    header = SCHEDULE_HEADER
    extras = extra_cols or {}
    for name in extras:
        header += "," + name
    with open(path, "w") as f:
        f.write(header + "\n")
        for i, d in enumerate(s.decisions):
            row = "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g" % (
                d.hour, d.load, d.grid, d.pv, d.wind, d.charge, d.discharge,
                d.soc, d.cost(params))
            for name in extras:
                row += ",%.10g" % extras[name][i]
            f.write(row + "\n")


def write_summary(path, s: DaySchedule) -> None:
    payload = {
        "mode": s.mode,
        "genuine_cost": s.cost,
        "refit_hours": s.refit_hours,
        "slack_energy": s.slack_energy,
        "subproblem_objectives": s.objectives,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
