"""Small-divisor diagnostics and the linear cohomology-type solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NearResonanceError, ShapeError
from .fourier import TorusFourier, _box, average, deriv_dir
from .jets import EpsSeries

__all__ = [
    "DiophantineWitness",
    "check_diophantine",
    "solve_cohomology",
    "solve_shifted",
    "solve_jordan_chain",
    "solve_cohomology_eps",
    "DIVISOR_FLOOR",
]

DIVISOR_FLOOR = 1e-10


@dataclass(frozen=True)
class DiophantineWitness:
    omega: tuple
    gamma: float
    tau: float
    kmax: int
    min_product: float
    worst_k: tuple
    passed: bool
    subexp_decay: tuple = field(default=(), repr=False)

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "kmax": self.kmax,
            "min_product": self.min_product,
            "worst_k": list(self.worst_k),
            "passed": self.passed,
            "subexp_decay": [None if not math.isfinite(x) else x for x in self.subexp_decay],
        }


def _shell(d: int, m: int) -> np.ndarray:
    """All k in Z^d with |k|_1 = m whose first nonzero entry is positive."""
    if d == 1:
        return np.array([[m]]) if m > 0 else np.zeros((1, 1), dtype=int)
    rows = []
    for k0 in range(-m, m + 1):
        rest = m - abs(k0)
        sub = _full_shell(d - 1, rest)
        if k0 == 0:
            sub = sub[_first_positive(sub)]
        elif k0 < 0:
            continue
        rows.append(np.hstack([np.full((len(sub), 1), k0), sub]))
    return np.vstack(rows) if rows else np.zeros((0, d), dtype=int)


def _full_shell(d: int, m: int) -> np.ndarray:
    if d == 1:
        return np.array([[m], [-m]]) if m > 0 else np.zeros((1, 1), dtype=int)
    rows = []
    for k0 in range(-m, m + 1):
        sub = _full_shell(d - 1, m - abs(k0))
        rows.append(np.hstack([np.full((len(sub), 1), k0), sub]))
    return np.vstack(rows)


def _first_positive(ks: np.ndarray) -> np.ndarray:
    keep = np.zeros(len(ks), dtype=bool)
    for i, k in enumerate(ks):
        nz = k[k != 0]
        keep[i] = nz.size > 0 and nz[0] > 0
    return keep


def check_diophantine(omega, gamma: float = 0.1, tau: float | None = None,
                      kmax: int = 100) -> DiophantineWitness:
    """Exhaustive scan of |omega . k| |k|_1^tau over 0 < |k|_1 <= kmax."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    d = w.size
    tau = float(d if tau is None else tau)
    if kmax < 1 or gamma <= 0 or tau <= 0:
        raise ValueError("need kmax >= 1, gamma > 0, tau > 0")
    best = math.inf
    worst = None
    decay = []
    for m in range(1, kmax + 1):
        ks = _shell(d, m)
        if len(ks) == 0:
            decay.append(-math.inf)
            continue
        dots = np.abs(ks @ w)
        prods = dots * float(m) ** tau
        i = int(np.argmin(prods))
        if prods[i] < best:
            best = float(prods[i])
            worst = tuple(int(x) for x in ks[i])
        dmin = float(np.min(dots))
        decay.append(math.inf if dmin == 0.0 else math.log(1.0 / dmin) / m)
    return DiophantineWitness(tuple(float(x) for x in w), float(gamma), tau, int(kmax),
                              best, worst, bool(best >= gamma), tuple(decay))


def _divisors(g: TorusFourier, omega0) -> tuple[np.ndarray, np.ndarray]:
    w = np.atleast_1d(np.asarray(omega0, dtype=float))
    if w.shape != (g.d,):
        raise ShapeError(f"frequency must have length {g.d}")
    ks, mask = _box(g.d, g.cutoff)
    return 2j * np.pi * np.tensordot(w, ks, axes=1), mask


def _raise_small(div: np.ndarray, active: np.ndarray, floor: float, g: TorusFourier, what: str):
    bad = active & (np.abs(div) < floor)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        k = [int(i) - g.cutoff for i in idx]
        raise NearResonanceError(f"{what}: divisor {abs(div[tuple(idx)]):.3e} below floor at k={k}",
                                 k=k, divisor=float(abs(div[tuple(idx)])))


def solve_cohomology(g: TorusFourier, omega0, floor: float = DIVISOR_FLOOR):
    """Solve omega0 . d/dtheta w = g - <g> with <w> = 0; returns (w, <g>)."""
    div, mask = _divisors(g, omega0)
    centre = (g.cutoff,) * g.d
    active = mask & np.any(g.coeffs != 0, axis=0)
    active[centre] = False
    _raise_small(div, active, floor, g, "cohomology")
    safe = np.where(active, div, 1.0)
    c = np.where(active, g.coeffs / safe, 0.0)
    return g._like(c), average(g)


def solve_shifted(g: TorusFourier, omega0, mu: complex, floor: float = DIVISOR_FLOOR) -> TorusFourier:
    """Solve (omega0 . d/dtheta - mu) w = g mode by mode."""
    if mu == 0:
        avg = average(g)
        if np.any(np.abs(avg) > 0):
            raise NearResonanceError("mu = 0 with nonzero average; use solve_cohomology",
                                     average=np.asarray(avg))
        return solve_cohomology(g, omega0, floor)[0]
    div, mask = _divisors(g, omega0)
    div = div - mu
    active = mask & np.any(g.coeffs != 0, axis=0)
    _raise_small(div, active, floor, g, "shifted")
    c = np.where(active, g.coeffs / np.where(active, div, 1.0), 0.0)
    real = g.real and np.isreal(mu)
    return g._like(c, real=real)


def solve_jordan_chain(g_list, omega0, lam: complex, floor: float = DIVISOR_FLOOR):
    """Solve omega0.d w^i - lam w^i - w^{i+1} - ... - w^m = g^i for i = m, ..., 1."""
    m = len(g_list)
    w = [None] * m
    for i in range(m - 1, -1, -1):
        rhs = g_list[i]
        for j in range(i + 1, m):
            rhs = rhs + w[j]
        try:
            w[i] = solve_shifted(rhs, omega0, lam, floor)
        except NearResonanceError as exc:
            exc.info["chain_index"] = i + 1
            raise
    return w


def solve_cohomology_eps(eta: EpsSeries, omega: EpsSeries, floor: float = DIVISOR_FLOOR):
    """Solve omega(eps) . d/dtheta phi = eta - c order by order.

    Returns (phi, counterterms) with every phi_n of zero average; the
    counterterms are the averages that exact solvability would require to
    vanish.
    """
    N = min(eta.order, omega.order)
    om = [np.atleast_1d(np.asarray(o, dtype=float)) for o in omega.terms[:N + 1]]
    phi, ct = [], []
    for n in range(N + 1):
        rhs = eta.terms[n]
        for j in range(1, n + 1):
            rhs = rhs - deriv_dir(phi[n - j], om[j])
        try:
            p, avg = solve_cohomology(rhs, om[0], floor)
        except NearResonanceError as exc:
            exc.info["order"] = n
            raise
        phi.append(p)
        ct.append(avg)
    return EpsSeries(phi), EpsSeries(ct)
