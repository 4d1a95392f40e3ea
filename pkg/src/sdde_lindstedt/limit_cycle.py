"""Limit cycles and isochrones of delay equations as eps-jets.

W(theta, s) = sum_p s^p W^(p)(theta) parameterizes a neighbourhood of the
cycle so that t -> W(theta0 + omega t, s0 exp(lambda t)) solves the
equation.  Every unknown is an eps-jet; one quasi-Newton step maps a
residual O(eps^m) to O(eps^2m).

Internally a function of (eps, theta, s) is a nested jet: an outer series
in ``eps`` whose coefficients are series in ``s`` whose coefficients are
samples on a theta grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .divisors import DIVISOR_FLOOR, solve_cohomology, solve_shifted
from .errors import ConsistencyError, DegenerateError, SeedError, ShapeError
from .fourier import ModeEvaluator, TorusFourier, _box, deriv
from .jets import EpsSeries, exp, reciprocal
from .lindstedt import SDDEModel, _Grid, normalize

__all__ = [
    "FourierTaylor",
    "CycleExpansion",
    "cycle_residual",
    "quasi_newton_step",
    "run_newton",
    "cycle_defect_numeric",
    "cycle_residual_scan",
    "solve_order_by_order",
    "residual_orders",
    "phase_normalized_cycle",
]


class FourierTaylor:
    """Polynomial in s of degree P with TorusFourier coefficients."""

    __slots__ = ("layers",)

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ShapeError("need at least one layer")
        K = layers[0].cutoff
        if any(u.cutoff != K or u.n != layers[0].n or u.d != layers[0].d for u in layers):
            raise ShapeError("layers must share cutoff and range")
        self.layers = layers

    @property
    def P(self) -> int:
        return len(self.layers) - 1

    @property
    def cutoff(self) -> int:
        return self.layers[0].cutoff

    @property
    def n(self) -> int:
        return self.layers[0].n

    @classmethod
    def zeros(cls, n: int, P: int, cutoff: int, d: int = 1) -> "FourierTaylor":
        return cls([TorusFourier.zeros(d, n, cutoff) for _ in range(P + 1)])

    def __add__(self, other):
        if isinstance(other, FourierTaylor):
            return FourierTaylor([a + b for a, b in zip(self.layers, other.layers)])
        return NotImplemented

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return FourierTaylor([-u for u in self.layers])

    def __mul__(self, c):
        if np.ndim(c) == 0 and not isinstance(c, (FourierTaylor, EpsSeries)):
            return FourierTaylor([u * c for u in self.layers])
        return NotImplemented

    __rmul__ = __mul__

    def max_abs(self, layers: int | None = None) -> float:
        top = self.P if layers is None else min(layers, self.P)
        return max(u.max_abs() for u in self.layers[:top + 1])

    def __call__(self, theta, s):
        th = np.asarray(theta, dtype=float)
        acc = None
        for p in reversed(range(self.P + 1)):
            v = self.layers[p](th)
            acc = v if acc is None else acc * s + v
        return acc

    def to_json(self) -> dict:
        return {"P": self.P, "layers": [u.to_json() for u in self.layers]}

    @classmethod
    def from_json(cls, obj: dict) -> "FourierTaylor":
        return cls([TorusFourier.from_json(u) for u in obj["layers"]])

    def __repr__(self):
        return f"FourierTaylor(P={self.P}, n={self.n}, cutoff={self.cutoff})"


@dataclass
class CycleExpansion:
    W: EpsSeries
    omega: EpsSeries
    lam: EpsSeries
    step_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    model_name: str = "custom"

    @property
    def order(self) -> int:
        return self.W.order

    def truncation(self, eps: float):
        W = self.W(eps)
        return W, float(self.omega(eps)), float(self.lam(eps))

    def to_json(self) -> dict:
        return {
            "model": self.model_name,
            "order": self.order,
            "W": self.W.to_json(),
            "omega": self.omega.to_json(),
            "lambda": self.lam.to_json(),
            "step_history": self.step_history,
            "diagnostics": self.diagnostics,
        }


# ------------------------------------------------------------------ nested jets
def _inner(values) -> EpsSeries:
    return EpsSeries(list(values), "s")


def _nested(per_order_layers, N: int, P: int) -> EpsSeries:
    """Outer eps-series of inner s-series from arrays [j][p]."""
    return EpsSeries([_inner(per_order_layers[j][:P + 1]) for j in range(N + 1)])


def _lift(arrays, P: int) -> EpsSeries:
    """Nested jet constant in s."""
    zero = np.zeros_like(arrays[0])
    return EpsSeries([_inner([a] + [zero] * P) for a in arrays])


def _leaf(x, j: int, p: int):
    t = x.terms[j] if isinstance(x, EpsSeries) and x.var == "eps" else x
    return t.terms[p] if isinstance(t, EpsSeries) else t


def _split(x: EpsSeries, n: int) -> list:
    return [x.map(lambda inner, i=i: inner.map(lambda a: a[i])) for i in range(n)]


def _stack(items, like: EpsSeries) -> EpsSeries:
    N, P = like.order, like.terms[0].order
    shape = np.shape(like.terms[0].terms[0])[1:]
    def leaf(c, j, p):
        if isinstance(c, EpsSeries):
            return np.broadcast_to(np.asarray(_leaf(c, j, p), dtype=float), shape)
        return np.broadcast_to(np.asarray(c if (j == 0 and p == 0) else 0.0, dtype=float), shape)
    return EpsSeries([_inner([np.stack([leaf(c, j, p) for c in items]) for p in range(P + 1)])
                      for j in range(N + 1)])


def _s_times(x: EpsSeries, p: int) -> EpsSeries:
    if p == 0:
        return x
    return x.map(lambda inner: inner.times_var(p))


def _innermost(x):
    while isinstance(x, EpsSeries):
        x = x.terms[0]
    return x


def _zero_innermost(x: EpsSeries) -> EpsSeries:
    """Copy with the eps^0 s^0 coefficient set to zero."""
    first = x.terms[0]
    inner = EpsSeries([np.zeros_like(first.terms[0])] + first.terms[1:], first.var)
    return EpsSeries([inner] + x.terms[1:], x.var)


# ------------------------------------------------------------------ residual core
def _defect_core(model: SDDEModel, layers, om_terms, lam_terms, eps, N: int, grid: _Grid):
    """Nested jet of DW L - F(W) with leaves of shape (n, G).

    ``layers[j][p]`` is the TorusFourier of W at eps-order j and s-degree p.
    ``eps`` is the outer jet variable or a number (then N = 0 and ``layers``
    hold the summed series).
    """
    n = model.n
    P = len(layers[0]) - 1
    vals = [[grid.values(u) for u in row] for row in layers]
    dvals = [[grid.values(deriv(u, 0)) for u in row] for row in layers]
    W = _nested(vals, N, P)
    Wt = _nested(dvals, N, P)
    zero = np.zeros_like(vals[0][0])
    sWs = _nested([[p * vals[j][p] for p in range(P + 1)] for j in range(N + 1)], N, P)
    om = EpsSeries([float(x) for x in om_terms[:N + 1]])
    lam = EpsSeries([float(x) for x in lam_terms[:N + 1]])
    lhs = om * Wt + lam * sWs
    comps = _split(W, n)
    jet_eps = isinstance(eps, EpsSeries)
    zs = []
    for r in model.delays:
        rv = r(comps)
        if not isinstance(rv, EpsSeries):
            rv = _lift([np.broadcast_to(np.asarray(rv, float), zero.shape[1:])] +
                       [np.zeros(zero.shape[1:])] * N, P)
        tdelay = eps * rv if model.form == "A" else rv
        shift = om * tdelay
        base = np.asarray(_innermost(shift), dtype=float)
        rest = _zero_innermost(shift)
        if jet_eps and model.form == "A":
            degree = N
        else:
            degree = N + P
        if np.any(base != 0.0):
            ev = ModeEvaluator(1, layers[0][0].cutoff, (grid.points[0] - base)[None])
        else:
            ev = None
        powers = [None] * (degree + 1)
        neg = -rest
        acc = None
        for m in range(1, degree + 1):
            acc = neg if acc is None else acc * neg
            powers[m] = acc * (1.0 / math.factorial(m))
        contraction = lam * tdelay
        z = None
        for p in range(P + 1):
            cur = [layers[j][p] for j in range(N + 1)]
            piece = None
            for m in range(degree + 1):
                vals_m = [(u if m == 0 else _deriv_n(u, m)) for u in cur]
                arr = [grid.values(u) if ev is None else ev(u) for u in vals_m]
                term = _lift(arr, P)
                if m:
                    term = powers[m] * term
                piece = term if piece is None else piece + term
            if p:
                piece = piece * exp(contraction * (-float(p)))
                piece = _s_times(piece, p)
            z = piece if z is None else z + piece
        if model.form == "B":
            z = eps * z
        zs.append(_split(z, n))
    F = model.f(comps, zs, eps)
    if len(F) != n:
        raise ShapeError("vector field returned the wrong number of components")
    return lhs - _stack(F, W), Wt, W


def _deriv_n(u: TorusFourier, m: int) -> TorusFourier:
    for _ in range(m):
        u = deriv(u, 0)
    return u


def _layers_of(W: EpsSeries) -> list:
    return [w.layers for w in W.terms]


def _fit_nested(x: EpsSeries, grid: _Grid) -> EpsSeries:
    return EpsSeries([FourierTaylor([grid.fit(a) for a in inner.terms]) for inner in x.terms])


def _check_model(model: SDDEModel):
    if model.structure != "limit_cycle":
        raise ConsistencyError("model is not declared as a limit-cycle model",
                               structure=model.structure)
    if model.d != 1 or model.n != 2:
        raise ShapeError("limit-cycle expansions need n = 2, d = 1")


def cycle_residual(model: SDDEModel, W: EpsSeries, omega: EpsSeries, lam: EpsSeries,
                   grid_size: int | None = None) -> EpsSeries:
    """E = DW L_{omega,lambda} - F(W) as an eps-jet of FourierTaylor."""
    _check_model(model)
    N = min(W.order, omega.order, lam.order)
    grid = _Grid(1, W.terms[0].cutoff, grid_size)
    E, _, _ = _defect_core(model, _layers_of(W), omega.terms, lam.terms,
                           EpsSeries.variable(N), N, grid)
    return _fit_nested(E, grid)


# ------------------------------------------------------------------ Newton step
def _divided(Et: list, om: np.ndarray, lam: np.ndarray, ks: np.ndarray, p: int, h: int):
    """A(eps) = Et(eps) / (2 pi i omega(eps) k + lambda(eps)(p - h)) per mode k."""
    N = len(Et) - 1
    D = [2j * np.pi * om[j] * ks + lam[j] * (p - h) for j in range(N + 1)]
    exceptional = (ks == 0) & (p == h)
    safe0 = np.where(exceptional, 1.0, D[0])
    bound = min(abs(lam[0]), 2 * np.pi * abs(om[0]))
    if np.any(np.abs(safe0[~exceptional]) < bound * (1 - 1e-9)):
        raise ConsistencyError("divisor below its theoretical lower bound")
    y = [1.0 / safe0]
    for m in range(1, N + 1):
        y.append(-y[0] * sum(D[i] * y[m - i] for i in range(1, m + 1)))
    A = []
    for m in range(N + 1):
        acc = sum(Et[i] * y[m - i] for i in range(m + 1))
        A.append(np.where(exceptional, 0.0, acc))
    counter = [float(np.real(e[exceptional][0])) if np.any(exceptional) else 0.0 for e in Et]
    return A, counter


def _sweep(model: SDDEModel, W: EpsSeries, omega: EpsSeries, lam: EpsSeries,
           grid: _Grid, cond_bound: float):
    """One constant-coefficient correction; returns the input residual as well."""
    N = min(W.order, omega.order, lam.order)
    K = W.terms[0].cutoff
    P = W.terms[0].P
    E, Wt, Wn = _defect_core(model, _layers_of(W), omega.terms, lam.terms,
                             EpsSeries.variable(N), N, grid)
    Ws = Wn.map(lambda inner: EpsSeries([(p + 1) * inner.terms[p + 1] for p in range(P)]
                                        + [np.zeros_like(inner.terms[0])], "s"))
    t0, t1 = _split(Wt, 2)
    s0, s1 = _split(Ws, 2)
    e0, e1 = _split(E, 2)
    det = t0 * s1 - t1 * s0
    d00 = np.abs(_innermost(det))
    scale = np.max(np.abs(_innermost(Wt))) * np.max(np.abs(_innermost(Ws)))
    cond = float(scale / max(np.min(d00), 1e-300))
    if cond > cond_bound:
        raise DegenerateError("DW is ill-conditioned", condition=cond)
    inv = reciprocal(det, floor=0.0)
    Et = [(s1 * e0 - s0 * e1) * inv, (t0 * e1 - t1 * e0) * inv]
    ks = _box(1, K)[0][0]
    om = np.array([float(x) for x in omega.terms[:N + 1]])
    la = np.array([float(x) for x in lam.terms[:N + 1]])
    A_nested = []
    counters = {}
    for h in range(2):
        per_layer = []
        for p in range(P + 1):
            coeffs = [grid.fit(_leaf(Et[h], j, p)).coeffs[0] for j in range(N + 1)]
            A, counter = _divided(coeffs, om, la, ks, p, h)
            if p == h:
                counters[h] = counter
            per_layer.append([TorusFourier(a[None], 1, real=False)._like(a[None], real=True)
                              for a in A])
        A_nested.append(_nested([[grid.values(per_layer[p][j])[0] for p in range(P + 1)]
                                 for j in range(N + 1)], N, P))
    delta = Wt * _stack_scalar(A_nested[0]) + Ws * _stack_scalar(A_nested[1])
    D = _fit_nested(delta, grid)
    alpha = np.array(counters[0])
    beta = np.array(counters[1])
    W_new = EpsSeries([a - b for a, b in zip(W.terms[:N + 1], D.terms)])
    return (W_new, EpsSeries(list(om - alpha)), EpsSeries(list(la - beta)),
            _fit_nested(E, grid), alpha, beta, cond)


def _scale(W: EpsSeries, layers: int) -> float:
    return max(1.0, max(w.max_abs(layers) for w in W.terms))


def quasi_newton_step(model: SDDEModel, W: EpsSeries, omega: EpsSeries, lam: EpsSeries,
                      grid_size: int | None = None, *, sweeps: int | None = None,
                      cond_bound: float = 1e8, tol: float = 1e-9,
                      check_layers: int | None = None):
    """Newton correction of (W, omega, lambda) on eps-jets.

    Each sweep solves the constant-coefficient equations in the frame DW and
    subtracts DW A, alpha, beta.  The term neglected by a single sweep is
    O(eps) times the correction because the delayed argument sees A at a
    shifted point, so one sweep gains one eps-order.  With ``sweeps=None``
    the step runs m sweeps, m being the current residual order, which solves
    the linearized problem through order 2m and doubles the correct orders.

    Returns (W', omega', lambda', info).
    """
    _check_model(model)
    N = min(W.order, omega.order, lam.order)
    grid = _Grid(1, W.terms[0].cutoff, grid_size)
    top = W.terms[0].P - 1 if check_layers is None else check_layers
    top = max(top, 0)
    Wn, om_n, lam_n, E, alpha, beta, cond = _sweep(model, W, omega, lam, grid, cond_bound)
    m, _ = residual_orders(E, top, tol * _scale(W, top))
    if sweeps is None:
        sweeps = max(1, min(2 * m, N + 1) - m)
    for _ in range(sweeps - 1):
        Wn, om_n, lam_n, _, _, _, c = _sweep(model, Wn, om_n, lam_n, grid, cond_bound)
        cond = max(cond, c)
    info = {"E": E, "alpha": alpha, "beta": beta, "condition": cond,
            "sweeps": sweeps, "input_order": m}
    return Wn, om_n, lam_n, info


def _stack_scalar(x: EpsSeries) -> EpsSeries:
    """Give scalar leaves a leading axis so they broadcast against (n, G) leaves."""
    return x.map(lambda inner: inner.map(lambda a: a[None]))


# ------------------------------------------------------------------ driver
def residual_orders(E: EpsSeries, layers: int, tol: float) -> tuple:
    """(first eps-order whose coefficient exceeds tol on layers <= ``layers``, norms)."""
    norms = [t.max_abs(layers) for t in E.terms]
    for j, v in enumerate(norms):
        if v > tol:
            return j, norms
    return len(norms), norms


def run_newton(model: SDDEModel, seed, N: int, *, steps: int | None = None,
               grid_size: int | None = None, tol: float = 1e-9,
               check_layers: int | None = None, sweeps: int | None = None) -> CycleExpansion:
    """Iterate Newton steps from an exact eps = 0 seed (W0, omega0, lambda0).

    ``step_history`` records the residual eps-order after each step, measured
    on s-layers <= ``check_layers`` (default P - 1; the top layer lags one
    sweep because its s-derivative is truncated).
    """
    _check_model(model)
    W0, om0, lam0 = seed
    if lam0 == 0:
        raise SeedError("the normal exponent must be nonzero")
    if steps is None:
        steps = math.ceil(math.log2(N + 1)) if N > 0 else 0
    zeros = FourierTaylor.zeros(W0.n, W0.P, W0.cutoff)
    W = EpsSeries([W0] + [zeros] * N)
    om = EpsSeries([float(om0)] + [0.0] * N)
    lam = EpsSeries([float(lam0)] + [0.0] * N)
    top = max(W0.P - 1, 0) if check_layers is None else check_layers
    E = cycle_residual(model, W, om, lam, grid_size)
    seed_res = E.terms[0].max_abs()
    if seed_res > 1e-8 * max(1.0, W0.max_abs()):
        raise SeedError("seed does not solve the eps = 0 equation", residual=seed_res)
    order, norms = residual_orders(E, top, tol * _scale(W, top))
    history = [{"step": 0, "residual_order": order, "norms": norms}]
    for k in range(1, steps + 1):
        W, om, lam, info = quasi_newton_step(model, W, om, lam, grid_size, sweeps=sweeps,
                                             tol=tol, check_layers=top)
        E = cycle_residual(model, W, om, lam, grid_size)
        order, norms = residual_orders(E, top, tol * _scale(W, top))
        history.append({"step": k, "residual_order": order, "norms": norms,
                        "sweeps": info["sweeps"], "condition": info["condition"]})
    diag = {"seed_residual": seed_res, "steps": steps, "checked_layers": top,
            "final_residual_norms": history[-1]["norms"]}
    return CycleExpansion(W, om, lam, history, diag, model.name)


# ------------------------------------------------------------------ numeric defect
def cycle_defect_numeric(model: SDDEModel, W: FourierTaylor, omega: float, lam: float,
                         eps: float, grid_size: int | None = None) -> FourierTaylor:
    """s-jet of DW L - F(W) at a fixed numeric eps, using direct delayed evaluation."""
    _check_model(model)
    grid = _Grid(1, W.cutoff, grid_size)
    E, _, _ = _defect_core(model, [W.layers], [omega], [lam], float(eps), 0, grid)
    return FourierTaylor([grid.fit(a) for a in E.terms[0].terms])


def cycle_residual_scan(model: SDDEModel, expansion: CycleExpansion, eps_values, *,
                        layers: int | None = None, samples: int | None = None) -> list:
    """Rows (eps, sup defect, rms defect) over the theta grid and s-layers <= ``layers``."""
    rows = []
    for eps in eps_values:
        W, om, la = expansion.truncation(float(eps))
        top = W.P if layers is None else layers
        D = cycle_defect_numeric(model, W, om, la, float(eps))
        S = samples or 2 * W.cutoff + 1
        vals = np.stack([u.to_grid(S) for u in D.layers[:top + 1]])
        rows.append((float(eps), float(np.max(np.abs(vals))),
                     float(np.sqrt(np.mean(np.sum(vals ** 2, axis=1))))))
    return rows


# ------------------------------------------------------------------ order by order
def solve_order_by_order(model: SDDEModel, seed, N: int, grid_size: int | None = None,
                         floor: float = DIVISOR_FLOOR) -> CycleExpansion:
    """Solve the same constant-coefficient equations one eps-order at a time.

    Each order uses the eps = 0 frame DW0 and the scalar solvers of
    :mod:`sdde_lindstedt.divisors`; it serves as an independent route to the
    Newton iteration.
    """
    _check_model(model)
    W0, om0, lam0 = seed
    P, K = W0.P, W0.cutoff
    grid = _Grid(1, K, grid_size)
    zeros = FourierTaylor.zeros(2, P, K)
    Ws, oms, lams = [W0], [float(om0)], [float(lam0)]
    vals0 = [grid.values(u) for u in W0.layers]
    Wt0 = _inner([grid.values(deriv(u, 0)) for u in W0.layers])
    Ws0 = _inner([(p + 1) * vals0[p + 1] for p in range(P)] + [np.zeros_like(vals0[0])])
    t0, t1 = [Wt0.map(lambda a, i=i: a[i]) for i in range(2)]
    s0, s1 = [Ws0.map(lambda a, i=i: a[i]) for i in range(2)]
    inv = reciprocal(t0 * s1 - t1 * s0, floor=0.0)
    for n in range(1, N + 1):
        Wser = EpsSeries(Ws + [zeros])
        E, _, _ = _defect_core(model, _layers_of(Wser), oms + [0.0], lams + [0.0],
                               EpsSeries.variable(n), n, grid)
        En = E.terms[n]
        e0, e1 = En.map(lambda a: a[0]), En.map(lambda a: a[1])
        Et = [(s1 * e0 - s0 * e1) * inv, (t0 * e1 - t1 * e0) * inv]
        A = [[None] * (P + 1) for _ in range(2)]
        alpha = beta = 0.0
        for h in range(2):
            for p in range(P + 1):
                g = grid.fit(Et[h].terms[p])
                if p == h:
                    A[h][p], avg = solve_cohomology(g, [om0], floor)
                    if h == 0:
                        alpha = float(np.real(avg[0]))
                    else:
                        beta = float(np.real(avg[0]))
                else:
                    A[h][p] = solve_shifted(g, [om0], -lam0 * (p - h), floor)
        A1 = _inner([grid.values(u)[0] for u in A[0]])
        A2 = _inner([grid.values(u)[0] for u in A[1]])
        delta = Wt0 * A1.map(lambda a: a[None]) + Ws0 * A2.map(lambda a: a[None])
        Ws.append(-FourierTaylor([grid.fit(a) for a in delta.terms]))
        oms.append(-alpha)
        lams.append(-beta)
    return CycleExpansion(EpsSeries(Ws), EpsSeries(oms), EpsSeries(lams), [],
                          {"method": "order_by_order"}, model.name)


def phase_normalized_cycle(expansion: CycleExpansion) -> EpsSeries:
    """The s = 0 layer series with its phase fixed by the tangent normalization."""
    K = EpsSeries([w.layers[0] for w in expansion.W.terms])
    return normalize(K)[0]
