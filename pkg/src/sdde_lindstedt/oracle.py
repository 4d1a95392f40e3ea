"""Direct integration of delay equations and order fitting.

Used to check expansions from the outside: nothing here touches jets.
"""

from __future__ import annotations

import csv
import math
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DegenerateError, HistoryError, ShapeError
from .fourier import evaluate

__all__ = [
    "HistorySegment",
    "integrate_sdde",
    "series_trajectory",
    "compare_trajectory",
    "fit_order",
    "write_trajectory_csv",
    "write_comparison_csv",
]


class HistorySegment:
    """Cubic Hermite interpolant on equispaced knots t0, t0 + dt, ..."""

    def __init__(self, t0: float, dt: float, values, slopes):
        v = np.asarray(values, dtype=float)
        s = np.asarray(slopes, dtype=float)
        if v.ndim != 2 or v.shape != s.shape or len(v) < 2:
            raise ShapeError("values and slopes must be matching (m >= 2, n) arrays")
        self.t0, self.dt = float(t0), float(dt)
        self.values, self.slopes = v, s

    @property
    def t1(self) -> float:
        return self.t0 + (len(self.values) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        slack = 1e-12 * self.dt
        if t < self.t0 - slack or t > self.t1 + slack:
            raise HistoryError(f"t = {t:.6g} outside [{self.t0:.6g}, {self.t1:.6g}]",
                               t=float(t), t0=self.t0, t1=self.t1)
        x = (t - self.t0) / self.dt
        i = min(max(int(math.floor(x)), 0), len(self.values) - 2)
        return _hermite(self.values[i], self.slopes[i], self.values[i + 1],
                        self.slopes[i + 1], x - i, self.dt)


def _hermite(y0, f0, y1, f1, h: float, dt: float):
    h2, h3 = h * h, h * h * h
    return ((2 * h3 - 3 * h2 + 1) * y0 + (h3 - 2 * h2 + h) * dt * f0
            + (-2 * h3 + 3 * h2) * y1 + (h3 - h2) * dt * f1)


def _fd_slope(func: Callable, t: float, h: float) -> np.ndarray:
    return (func(t - 2 * h) - 8 * func(t - h) + 8 * func(t + h) - func(t + 2 * h)) / (12 * h)


def _sample_history(history, t0: float, dt: float, span: float, derivative=None) -> HistorySegment:
    m = max(int(math.ceil(span / dt)), 1) + 1
    times = t0 - dt * np.arange(m - 1, -1, -1)
    vals = np.array([np.atleast_1d(np.asarray(history(t), dtype=float)) for t in times])
    if derivative is None:
        h = 1e-3 * dt
        slopes = np.array([_fd_slope(lambda u: np.atleast_1d(np.asarray(history(u), float)), t, h)
                           for t in times])
    else:
        slopes = np.array([np.atleast_1d(np.asarray(derivative(t), dtype=float)) for t in times])
    return HistorySegment(times[0], dt, vals, slopes)


def integrate_sdde(model, eps: float, history, T: float, dt: float, *, t0: float = 0.0,
                   span: float | None = None, history_derivative=None, passes: int = 4,
                   implicit_tol: float = 1e-12, max_iter: int = 200) -> HistorySegment:
    """Classical RK4 with delayed states read from a cubic Hermite history.

    ``history`` is a HistorySegment ending at t0 or a callable t -> state.
    When a lookback lands inside the current step the step is repeated with
    the interpolant built from the previous pass.
    """
    n = model.n
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    if isinstance(history, HistorySegment):
        hist = history
        if abs(hist.t1 - t0) > 1e-12 * max(1.0, abs(t0)) or abs(hist.dt - dt) > 1e-15:
            raise HistoryError("history segment must end at t0 with the same step")
    else:
        if span is None:
            span = 1.0 if model.form == "A" else 10.0
        hist = _sample_history(history, t0, dt, span, history_derivative)
    steps = int(round(T / dt))
    m0 = len(hist.values)
    vals = np.empty((m0 + steps, n))
    slopes = np.empty((m0 + steps, n))
    vals[:m0], slopes[:m0] = hist.values, hist.slopes
    tstart = hist.t0
    # the solution may have a derivative jump at t0; the history keeps its own slope
    left_end = hist.slopes[-1].copy()
    state = {"last": m0 - 1, "inside": None, "used": False}

    def lookup(tau: float) -> np.ndarray:
        k = state["last"]
        tk = tstart + k * dt
        if tau <= tk + 1e-12 * dt:
            if tau < tstart - 1e-12 * dt:
                raise HistoryError(f"lookback to t = {tau:.6g} precedes the history start "
                                   f"{tstart:.6g}", t=float(tau), start=tstart)
            x = (tau - tstart) / dt
            i = min(max(int(math.floor(x)), 0), k - 1)
            right = left_end if i + 1 == m0 - 1 else slopes[i + 1]
            return _hermite(vals[i], slopes[i], vals[i + 1], right, x - i, dt)
        if tau > tk + dt * (1 + 1e-12):
            raise HistoryError("advanced argument: lookback beyond the current step", t=float(tau))
        state["used"] = True
        h = (tau - tk) / dt
        inside = state["inside"]
        if inside is None:
            return vals[k] + (tau - tk) * slopes[k]
        return _hermite(vals[k], slopes[k], inside[0], inside[1], h, dt)

    def delayed(t: float, y: np.ndarray) -> list:
        ylist = list(y)
        zs = []
        for r in model.delays:
            if model.implicit:
                s = 0.0
                for it in range(max_iter):
                    z = lookup(t - s)
                    s_new = float(eps * r(ylist, list(z)))
                    change = abs(s_new - s)
                    s = s_new
                    if change <= implicit_tol * max(1.0, abs(s)):
                        break
                else:
                    raise ConvergenceError("implicit delay iteration did not converge",
                                           last_change=change, t=float(t))
                z = lookup(t - s)
            else:
                lag = float(r(ylist))
                if model.form == "A":
                    lag *= eps
                if lag < 0:
                    raise HistoryError("negative delay", t=float(t), delay=lag)
                z = lookup(t - lag)
            if model.form == "B":
                z = eps * z
            zs.append(list(z))
        return zs

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        out = model.f(list(y), delayed(t, y), eps)
        if len(out) != n:
            raise ShapeError("vector field returned the wrong number of components")
        return np.array([float(c) for c in out])

    slopes[m0 - 1] = rhs(tstart + (m0 - 1) * dt, vals[m0 - 1])
    for k in range(m0 - 1, m0 - 1 + steps):
        state["last"] = k
        tk = tstart + k * dt
        y, f0 = vals[k], slopes[k]
        state["inside"] = None
        prev = None
        for _ in range(max(passes, 1)):
            state["used"] = False
            k1 = f0
            k2 = rhs(tk + dt / 2, y + dt / 2 * k1)
            k3 = rhs(tk + dt / 2, y + dt / 2 * k2)
            k4 = rhs(tk + dt, y + dt * k3)
            y1 = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            state["inside"] = (y1, k4 if prev is None else prev[1])
            f1 = rhs(tk + dt, y1)
            state["inside"] = (y1, f1)
            if not state["used"]:
                break
            if prev is not None and np.max(np.abs(y1 - prev[0])) <= 1e-15 * (1 + np.max(np.abs(y1))):
                break
            prev = (y1, f1)
        vals[k + 1], slopes[k + 1] = y1, f1
    return HistorySegment(tstart, dt, vals, slopes)


def series_trajectory(result, eps: float, *, order: int | None = None, theta0=None,
                      s0: float = 0.0):
    """t -> truncated-series solution; works for torus and cycle expansions."""
    if hasattr(result, "lam"):
        W, om, lam = result.truncation(eps) if order is None else _cycle_trunc(result, eps, order)
        th0 = 0.0 if theta0 is None else float(np.atleast_1d(theta0)[0])

        def traj(t):
            t = np.asarray(t, dtype=float)
            th = (th0 + om * t)[None]
            s = s0 * np.exp(lam * t)
            acc = 0.0
            for p in reversed(range(W.P + 1)):
                acc = acc * s + evaluate(W.layers[p], th)
            return acc
        return traj
    K, om = result.truncation(eps, order)
    d = K.d
    th0 = np.zeros(d) if theta0 is None else np.atleast_1d(np.asarray(theta0, dtype=float))

    def traj(t):
        t = np.asarray(t, dtype=float)
        th = th0.reshape((d,) + (1,) * t.ndim) + om.reshape((d,) + (1,) * t.ndim) * t
        if t.ndim == 0:
            return evaluate(K, th.reshape(d))
        return evaluate(K, th)
    return traj


def _cycle_trunc(result, eps, order):
    W = result.W.truncate(order)(eps)
    return W, float(result.omega.truncate(order)(eps)), float(result.lam.truncate(order)(eps))


def compare_trajectory(model, result, eps: float, T: float, *, dt: float = 1e-3,
                       order: int | None = None, theta0=None, s0: float = 0.0,
                       return_segment: bool = False):
    """Sup over the step knots in [0, T] of |integrated - series| trajectories."""
    traj = series_trajectory(result, eps, order=order, theta0=theta0, s0=s0)
    probe = traj(np.linspace(-2.0, 2.0, 64))
    rmax = max(float(np.max(np.abs(np.asarray(r([probe[i] for i in range(model.n)])))))
               for r in model.delays) if model.delays and not model.implicit else 2.0
    lag = (abs(eps) if model.form == "A" else 1.0) * rmax
    span = 1.5 * lag + 4 * dt
    seg = integrate_sdde(model, eps, lambda t: traj(t), T, dt, span=span)
    times = seg.times
    mask = times >= -1e-12
    ref = traj(times[mask])
    dist = float(np.max(np.abs(seg.values[mask].T - ref)))
    return (dist, seg) if return_segment else dist


def fit_order(samples) -> tuple:
    """Least-squares line through (log eps, log defect): (slope, log C, max deviation)."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2 or len(arr) < 3:
        raise DegenerateError("need at least three (eps, defect) samples")
    eps, defect = arr[:, 0], arr[:, 1]
    if np.any(defect <= 0) or np.any(eps <= 0):
        raise DegenerateError("defects and eps must be positive for a log-log fit",
                              nonpositive=int(np.sum(defect <= 0) + np.sum(eps <= 0)))
    x, y = np.log(eps), np.log(defect)
    slope, intercept = np.polyfit(x, y, 1)
    dev = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), float(intercept), dev


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path, segment: HistorySegment) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"y{i + 1}" for i in range(segment.n)])
        for t, row in zip(segment.times, segment.values):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def write_comparison_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "sup_distance"])
        for eps, dist in rows:
            w.writerow([_fmt(eps), _fmt(dist)])
