"""Identification of the renewable-availability dynamics
x(t+1) = A x(t) + B u(t), with x = [pv_max, wind_max] and u = [pv, wind].

The state is fully measured here, so prediction-error minimization reduces
to ordinary least squares on the one-step residuals; rank-deficient
regressors get the minimum-norm solution.  ``bootstrap_history`` manufactures
the (x, u) history by dispatching each day of a dataset against its known
availability caps, without any state-transition constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tscore import Dataset


class FitError(ValueError):
    pass


class BootstrapError(RuntimeError):
    pass


MIN_PAIRS = 5


@dataclass
class StateSpaceModel:
    a: np.ndarray                      # 2x2 state transition
    b: np.ndarray                      # 2x2 control
    residual_mean: float = 0.0         # mean ||one-step residual||
    residual_max: float = 0.0
    n_pairs: int = 0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(2, 2)
        self.b = np.asarray(self.b, dtype=float).reshape(2, 2)
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise FitError("model matrices must be finite")

    def step(self, x, u) -> np.ndarray:
        return self.a @ np.asarray(x, dtype=float) + self.b @ np.asarray(u, dtype=float)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.a))))


@dataclass
class HistoryLog:
    """Hourly (state, control) pairs with consecutive hour indices."""

    hours: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    x: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    u: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        self.hours = np.asarray(self.hours, dtype=int)
        self.x = np.asarray(self.x, dtype=float).reshape(-1, 2)
        self.u = np.asarray(self.u, dtype=float).reshape(-1, 2)
        if not (self.hours.size == self.x.shape[0] == self.u.shape[0]):
            raise FitError("history arrays must have equal length")
        if self.hours.size > 1 and not np.all(np.diff(self.hours) == 1):
            raise FitError("history hours must be consecutive")

    def __len__(self):
        return self.hours.size

    def append(self, hour: int, x, u) -> None:
        if len(self) and hour != self.hours[-1] + 1:
            raise FitError(f"hour {hour} does not follow {self.hours[-1]}")
        self.hours = np.append(self.hours, int(hour))
        self.x = np.vstack([self.x, np.asarray(x, dtype=float).reshape(1, 2)])
        self.u = np.vstack([self.u, np.asarray(u, dtype=float).reshape(1, 2)])

    def tail(self, n: int) -> "HistoryLog":
        return HistoryLog(self.hours[-n:], self.x[-n:], self.u[-n:])


def fit_state_space(h: HistoryLog) -> StateSpaceModel:
    """Least-squares fit of (A, B) from one-step transitions in the log."""
    n = len(h)
    if n < MIN_PAIRS:
        raise FitError(f"need at least {MIN_PAIRS} pairs, got {n}")
    if not (np.all(np.isfinite(h.x)) and np.all(np.isfinite(h.u))):
        raise FitError("history contains non-finite values")

    Z = np.hstack([h.x[:-1], h.u[:-1]])          # (n-1, 4)
    Y = h.x[1:]                                   # (n-1, 2)
    theta, *_ = np.linalg.lstsq(Z, Y, rcond=None)  # minimum-norm on rank deficiency
    a = theta[:2].T
    b = theta[2:].T

    resid = Y - Z @ theta
    norms = np.linalg.norm(resid, axis=1)
    return StateSpaceModel(
        a=a, b=b,
        residual_mean=float(norms.mean()),
        residual_max=float(norms.max()),
        n_pairs=n,
    )


def refit_window(h: HistoryLog, hour_from: int, hour_to: int) -> StateSpaceModel:
    """fit_state_space restricted to log hours in [hour_from, hour_to]."""
    mask = (h.hours >= hour_from) & (h.hours <= hour_to)
    idx = np.nonzero(mask)[0]
    if idx.size < MIN_PAIRS:
        raise FitError(
            f"window [{hour_from}, {hour_to}] holds {idx.size} pairs, "
            f"need {MIN_PAIRS}"
        )
    return fit_state_space(HistoryLog(h.hours[idx], h.x[idx], h.u[idx]))


def simulate(m: StateSpaceModel, x0, u_seq) -> np.ndarray:
    """Iterate x(t+1) = A x(t) + B u(t); returns len(u_seq)+1 states."""
    x0 = np.asarray(x0, dtype=float).reshape(2)
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, 2)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(u_seq))):
        raise FitError("simulate requires finite inputs")
    out = np.empty((u_seq.shape[0] + 1, 2))
    out[0] = x0
    for t in range(u_seq.shape[0]):
        out[t + 1] = m.step(out[t], u_seq[t])
    return out


def bootstrap_history(ds: Dataset, params) -> HistoryLog:
    """Dispatch every day of ``ds`` with known availability caps (no state
    model) and log ([pv_max, wind_max], [pv, wind]) per hour; the battery
    SOC carries over between days."""
    from . import dispatch  # local import: dispatch also consumes this module

    n = len(ds)
    if n % 24 != 0:
        raise BootstrapError(f"dataset length {n} is not whole days")
    log = HistoryLog()
    soc = params.soc0
    for d in range(n // 24):
        lo = d * 24
        day = slice(lo, lo + 24)
        try:
            decs = dispatch.solve_day_known_caps(
                load=ds.load.values[day],
                pv_max=ds.pv_max.values[day],
                wind_max=ds.wind_max.values[day],
                soc0=soc,
                params=params,
            )
        except dispatch.DispatchError as exc:
            raise BootstrapError(f"day starting hour {lo}: {exc}") from exc
        for t in range(24):
            log.append(lo + t,
                       [ds.pv_max.values[lo + t], ds.wind_max.values[lo + t]],
                       [decs[t].pv, decs[t].wind])
        soc = decs[-1].soc
    return log


HISTORY_HEADER = "hour,pv_max,wind_max,pv,wind"


def write_history_csv(path, h: HistoryLog) -> None:
    with open(path, "w") as f:
        f.write(HISTORY_HEADER + "\n")
        for i in range(len(h)):
            f.write("%d,%.10g,%.10g,%.10g,%.10g\n"
                    % (h.hours[i], h.x[i, 0], h.x[i, 1], h.u[i, 0], h.u[i, 1]))


def read_history_csv(path) -> HistoryLog:
    with open(path) as f:
        header = f.readline().strip()
        if header != HISTORY_HEADER:
            raise FitError(f"bad history header {header!r}")
        rows = [line.split(",") for line in f if line.strip()]
    arr = np.asarray([[float(v) for v in r] for r in rows])
    return HistoryLog(arr[:, 0].astype(int), arr[:, 1:3], arr[:, 3:5])


def write_model(path, m: StateSpaceModel) -> None:
    with open(path, "w") as f:
        f.write("# state-space model x(t+1) = A x(t) + B u(t)\n")
        f.write("A %.17g %.17g %.17g %.17g\n" % tuple(m.a.ravel()))
        f.write("B %.17g %.17g %.17g %.17g\n" % tuple(m.b.ravel()))
        f.write("residual_mean %.10g\n" % m.residual_mean)
        f.write("residual_max %.10g\n" % m.residual_max)
        f.write("n_pairs %d\n" % m.n_pairs)
        f.write("spectral_radius %.10g\n" % m.spectral_radius())


def read_model(path) -> StateSpaceModel:
    vals = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, *rest = line.split()
            vals[key] = [float(v) for v in rest]
    try:
        return StateSpaceModel(
            a=np.asarray(vals["A"]).reshape(2, 2),
            b=np.asarray(vals["B"]).reshape(2, 2),
            residual_mean=vals.get("residual_mean", [0.0])[0],
            residual_max=vals.get("residual_max", [0.0])[0],
            n_pairs=int(vals.get("n_pairs", [0])[0]),
        )
    except KeyError as exc:
        raise FitError(f"model file missing field {exc}") from exc
