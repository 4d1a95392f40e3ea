"""Order-by-order Lindstedt expansion of invariant tori of delay equations.

A model supplies the vector field ``f(y, zs, eps)`` and delay maps; both are
written with the elementary functions of :mod:`sdde_lindstedt.jets` so the
same code runs on plain arrays (direct evaluation) and on eps-jets whose
coefficients are arrays sampled on a torus grid (the expansion).

Two delay forms are supported.  In form ``"A"`` the delayed slot is
``y(t - eps r)`` so on the torus it reads ``K(theta - eps omega r(K))``.  In
form ``"B"`` the delay is O(1) but the delayed state enters scaled by eps:
``eps K(theta - omega r(K))``.  With ``implicit=True`` (form A only) the
delay ``s`` solves ``s = eps r(y(t), y(t - s))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .divisors import (DIVISOR_FLOOR, check_diophantine, solve_cohomology, solve_jordan_chain,
                       solve_shifted)
from .errors import (ConvergenceError, DegenerateError, DiophantineError, NearResonanceError,
                     ObstructionError, SeedError, ShapeError)
from .fourier import ModeEvaluator, TorusFourier, average, deriv, deriv_dir, grid_points, shift_const
from .jets import EpsSeries, implicit_delay_jet, shift_jet, taylor_shift

__all__ = [
    "SDDEModel",
    "ExpansionResult",
    "Frame",
    "expand_invariance",
    "hamiltonian_frame",
    "reducible_frame",
    "solve_linearized_hamiltonian",
    "solve_linearized_reducible",
    "normalize",
    "residual_scan",
    "linearization",
    "invariance_residual_terms",
    "delay_jets",
    "delayed_states",
    "standard_symplectic",
]

STRUCTURES = ("generic", "hamiltonian", "reducible", "limit_cycle")


def standard_symplectic(d: int) -> np.ndarray:
    """J = [[0, I], [-I, 0]], so that y' = J grad H for y = (x, p)."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [-eye, zero]])


@dataclass(frozen=True)
class SDDEModel:
    """A delay equation with jet-evaluable right-hand side.

    ``f(y, zs, eps)`` takes the current state ``y`` (list of n components),
    the delayed states ``zs`` (list of ell such lists) and ``eps``; it returns
    a list of n components.  Each entry of ``delays`` maps a state to a time
    delay, or ``(y, z)`` to one when ``implicit`` is set.
    """

    n: int
    d: int
    f: Callable
    delays: tuple = ()
    form: str = "A"
    implicit: bool = False
    structure: str = "generic"
    J: np.ndarray | None = None
    M: TorusFourier | None = None
    Lambda: np.ndarray | None = None
    allow_twist: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(self.delays))
        if self.form not in ("A", "B"):
            raise ShapeError(f"unknown delay form {self.form!r}")
        if self.structure not in STRUCTURES:
            raise ShapeError(f"unknown structure {self.structure!r}")
        if self.implicit and self.form != "A":
            raise ShapeError("implicit delays are supported in form A only")
        if self.structure == "hamiltonian":
            if self.n != 2 * self.d:
                raise ShapeError("hamiltonian structure requires n = 2d", n=self.n, d=self.d)
            if self.J is None:
                object.__setattr__(self, "J", standard_symplectic(self.d))
            if np.shape(self.J) != (self.n, self.n):
                raise ShapeError("J must be n x n")
        if self.structure == "reducible" and self.Lambda is not None:
            if np.shape(self.Lambda) != (self.n, self.n):
                raise ShapeError("Lambda must be n x n")

    @property
    def ell(self) -> int:
        return len(self.delays)

    def with_frame(self, M: TorusFourier, Lambda) -> "SDDEModel":
        return replace(self, M=M, Lambda=np.asarray(Lambda, dtype=float))


# ------------------------------------------------------------------ sampling
class _Grid:
    def __init__(self, d: int, cutoff: int, size: int | None = None):
        self.d, self.cutoff = d, cutoff
        self.size = int(size or 4 * cutoff + 4)
        if self.size < 2 * cutoff + 1:
            raise ShapeError("grid too coarse for the cutoff")
        self.points = grid_points(d, self.size)
        self.shape = (self.size,) * d

    def values(self, u: TorusFourier) -> np.ndarray:
        return u.to_grid(self.size)

    def fit(self, arr) -> TorusFourier:
        return TorusFourier.from_grid(np.real_if_close(arr, tol=1e6), self.d, self.cutoff)

    def mean(self, arr) -> np.ndarray:
        return np.mean(arr, axis=tuple(range(-self.d, 0)))


def _as_series(x, N: int, like) -> EpsSeries:
    if isinstance(x, EpsSeries):
        return x.truncate(N)
    return EpsSeries.constant(np.broadcast_to(np.asarray(x, dtype=float), like).copy(), N)


def _deriv_multi(u: TorusFourier, alpha) -> TorusFourier:
    for axis, a in enumerate(alpha):
        for _ in range(a):
            u = deriv(u, axis)
    return u


def _split(s: EpsSeries, n: int):
    return [EpsSeries([t[i] for t in s.terms]) for i in range(n)]


def _stack(items, N: int, like) -> list:
    ser = [_as_series(c, N, like) for c in items]
    return [np.stack([s.terms[j] for s in ser]) for j in range(N + 1)]


def _call_f(model: SDDEModel, y, zs, eps):
    out = model.f(y, zs, eps)
    if len(out) != model.n:
        raise ShapeError(f"vector field returned {len(out)} components, expected {model.n}")
    return out


def _jet_setup(model: SDDEModel, Kterms, omterms, N: int, grid: _Grid):
    Kterms = list(Kterms)[:N + 1]
    om = [np.atleast_1d(np.asarray(o, dtype=float)) for o in list(omterms)[:N + 1]]
    Kg = [grid.values(t) for t in Kterms]
    y = _split(EpsSeries(Kg), model.n)
    om_s = [EpsSeries([o[i] for o in om]) for i in range(model.d)]
    return Kterms, om, Kg, y, om_s


def _derivs_on(Kterms, grid: _Grid, evaluator=None):
    d = Kterms[0].d
    cache = {}

    def derivs(alpha):
        alpha = tuple(alpha) + (0,) * (d - len(alpha))
        if alpha not in cache:
            parts = [_deriv_multi(t, alpha) for t in Kterms]
            vals = [grid.values(p) if evaluator is None else evaluator(p) for p in parts]
            cache[alpha] = EpsSeries(vals)
        return cache[alpha]
    return derivs


def delay_jets(model: SDDEModel, Kterms, omterms, N: int, grid: _Grid) -> list:
    """Time-delay jets s_j(eps) on the grid for a form-A model.

    Explicit delays give eps r_j(K); implicit ones solve
    s = eps r_j(K, K(theta - omega s)) to order N.
    """
    if model.form != "A":
        raise ShapeError("time-delay jets are defined for form A")
    n, d = model.n, model.d
    Kterms, om, Kg, y, om_s = _jet_setup(model, Kterms, omterms, N, grid)
    derivs = _derivs_on(Kterms, grid)
    eps = EpsSeries.variable(N)
    out = []
    for r in model.delays:
        if model.implicit:
            def G_(s, r=r):
                rest = [om_s[i] * s for i in range(d)]
                z = _split(taylor_shift(derivs, rest, N), n)
                return _as_series(r(y, z), N, grid.shape)
            out.append(implicit_delay_jet(G_, N, start=np.zeros(grid.shape)))
        else:
            out.append(eps * _as_series(r(y), N, grid.shape))
    return out


def delayed_states(model: SDDEModel, Kterms, omterms, N: int, grid: _Grid) -> list:
    """Jets of the delayed arguments, one list of n component series per delay."""
    n, d = model.n, model.d
    Kterms, om, Kg, y, om_s = _jet_setup(model, Kterms, omterms, N, grid)
    eps = EpsSeries.variable(N)
    zs = []
    if model.form == "A":
        derivs = _derivs_on(Kterms, grid)
        for s in delay_jets(model, Kterms, om, N, grid):
            rest = [om_s[i] * s for i in range(d)]
            zs.append(_split(taylor_shift(derivs, rest, N), n))
        return zs
    y0 = [Kg[0][i] for i in range(n)]
    for r in model.delays:
        r0 = np.broadcast_to(np.asarray(r(y0), dtype=float), grid.shape)
        sigma0 = om[0].reshape((d,) + (1,) * d) * r0
        ev = ModeEvaluator(d, Kterms[0].cutoff, grid.points - sigma0)
        rv = _as_series(r(y), N, grid.shape)
        rest = []
        for i in range(d):
            full = om_s[i] * rv
            rest.append(EpsSeries([np.zeros(grid.shape)] + full.terms[1:N + 1]))
        z = _split(taylor_shift(_derivs_on(Kterms, grid, ev), rest, N), n)
        zs.append([eps * c for c in z])
    return zs


def invariance_residual_terms(model: SDDEModel, Kterms: Sequence[TorusFourier],
                              omterms: Sequence, N: int, grid: _Grid) -> list:
    """Grid samples of the eps-coefficients of F(K) - omega . dK, orders 0..N."""
    n, d = model.n, model.d
    Kterms, om, Kg, y, om_s = _jet_setup(model, Kterms, omterms, N, grid)
    zs = delayed_states(model, Kterms, om, N, grid) if model.ell else []
    F = _stack(_call_f(model, y, zs, EpsSeries.variable(N)), N, grid.shape)
    lhs = [np.zeros((n,) + grid.shape) for _ in range(N + 1)]
    dK = [[grid.values(deriv(t, i)) for t in Kterms] for i in range(d)]
    for i in range(d):
        for a in range(N + 1):
            for b in range(N + 1 - a):
                lhs[a + b] = lhs[a + b] + om[a][i] * dK[i][b]
    return [F[j] - lhs[j] for j in range(N + 1)]


def linearization(model: SDDEModel, K0: TorusFourier, grid: _Grid) -> np.ndarray:
    """A(theta) = derivative of the eps = 0 field along K0, shape (n, n, G, ..)."""
    n = model.n
    y0 = grid.values(K0)
    zero = np.zeros(grid.shape)
    A = np.zeros((n, n) + grid.shape)
    for j in range(n):
        y = [EpsSeries([y0[i], np.full(grid.shape, 1.0 if i == j else 0.0)]) for i in range(n)]
        if model.form == "A":
            zs = [y] * model.ell
        else:
            zs = [[EpsSeries([zero, zero]) for _ in range(n)]] * model.ell
        out = _call_f(model, y, zs, 0.0)
        for i in range(n):
            c = out[i]
            A[i, j] = c.terms[1] if isinstance(c, EpsSeries) and c.order >= 1 else 0.0
    return A


# ------------------------------------------------------------------ frames
@dataclass
class Frame:
    """Change of variables u = M w reducing the linearized equation."""

    kind: str
    omega0: np.ndarray
    grid: _Grid
    A: np.ndarray
    DK0: np.ndarray
    M: np.ndarray
    Minv: np.ndarray
    condition: float
    reduced_block_check: float
    L: TorusFourier | None = None
    Lambda: np.ndarray | None = None
    schur: tuple | None = None
    jordan: bool = False
    allow_twist: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def M_fourier(self) -> TorusFourier:
        return self.grid.fit(self.M)


def _tangent(K0: TorusFourier, grid: _Grid) -> np.ndarray:
    return np.stack([grid.values(deriv(K0, i)) for i in range(K0.d)], axis=1)


def _pointwise(fn, arr: np.ndarray, d: int) -> np.ndarray:
    moved = np.moveaxis(arr, (0, 1), (-2, -1))
    out = fn(moved)
    return np.moveaxis(out, (-2, -1), (0, 1))


def _mm(a, b):
    return np.einsum("ij...,jk...->ik...", a, b)


def _mv(a, v):
    return np.einsum("ij...,j...->i...", a, v)


def _frame_derivative(M: np.ndarray, omega0, grid: _Grid) -> np.ndarray:
    # full grid resolution: frame entries are not band-limited to the working cutoff
    Mf = TorusFourier.from_grid(M, grid.d, (grid.size - 1) // 2)
    return grid.values(deriv_dir(Mf, omega0))


def _as_grid(model_or_A, K0, grid):
    if isinstance(model_or_A, SDDEModel):
        return linearization(model_or_A, K0, grid)
    A = np.asarray(model_or_A, dtype=float)
    if A.shape[2:] != grid.shape:
        raise ShapeError("linearization samples do not match the grid")
    return A


def hamiltonian_frame(K0: TorusFourier, omega0, f0_jet, J=None, grid=None,
                      size: int | None = None) -> Frame:
    """Frame M = [DK0, J^{-1} DK0 N] with N = (DK0^T DK0)^{-1}.

    ``f0_jet`` is the model (its linearization is computed) or linearization
    samples on the grid.  The reduced generator B = M^{-1}(A M - omega0.dM)
    should have only an upper-right block L; ``reduced_block_check`` is the
    largest entry of the other three blocks.
    """
    g = grid if isinstance(grid, _Grid) else _Grid(K0.d, K0.cutoff, size)
    d, n = K0.d, K0.n
    if n != 2 * d:
        raise ShapeError("hamiltonian frame requires n = 2d")
    J = standard_symplectic(d) if J is None else np.asarray(J, dtype=float)
    om = np.atleast_1d(np.asarray(omega0, dtype=float))
    A = _as_grid(f0_jet, K0, g)
    DK = _tangent(K0, g)
    gram = np.einsum("ai...,aj...->ij...", DK, DK)
    sv = np.linalg.svd(np.moveaxis(DK, (0, 1), (-2, -1)), compute_uv=False)
    if float(np.min(sv)) < 1e-10 * max(1.0, float(np.max(sv))):
        raise DegenerateError("DK0 is rank deficient", min_singular_value=float(np.min(sv)))
    Ninv = _pointwise(np.linalg.inv, gram, d)
    comp = _mm(np.einsum("ab,bj...->aj...", np.linalg.inv(J), DK), Ninv)
    M = np.concatenate([DK, comp], axis=1)
    Minv = _pointwise(np.linalg.inv, M, d)
    B = _mm(Minv, _mm(A, M) - _frame_derivative(M, om, g))
    check = max(float(np.max(np.abs(B[:, :d]))), float(np.max(np.abs(B[d:, d:]))))
    cond = float(np.max(np.linalg.cond(np.moveaxis(M, (0, 1), (-2, -1)))))
    L = g.fit(B[:d, d:])
    return Frame("hamiltonian", om, g, A, DK, M, Minv, cond, check, L=L,
                 diagnostics={"mean_L": np.real(average(L)).reshape(d, d).tolist()})


def reducible_frame(K0: TorusFourier, omega0, f0_jet, M: TorusFourier, Lambda,
                    allow_twist: bool = False, grid=None,
                    size: int | None = None) -> Frame:
    """Validate a user frame with A M - omega0.dM = M Lambda and prepare the solve."""
    g = grid if isinstance(grid, _Grid) else _Grid(K0.d, K0.cutoff, size)
    d, n = K0.d, K0.n
    om = np.atleast_1d(np.asarray(omega0, dtype=float))
    Lam = np.asarray(Lambda, dtype=float)
    if Lam.shape != (n, n) or M.n != n * n:
        raise ShapeError("frame must be n x n")
    if np.max(np.abs(Lam[:, :d]), initial=0.0) > 1e-12:
        raise DegenerateError("the first d columns of Lambda must vanish")
    A = _as_grid(f0_jet, K0, g)
    Mg = g.values(M.reshape((n, n)))
    Minv = _pointwise(np.linalg.inv, Mg, d)
    cond = float(np.max(np.linalg.cond(np.moveaxis(Mg, (0, 1), (-2, -1)))))
    defect = _mm(A, Mg) - _frame_derivative(Mg, om, g) - np.einsum("ij...,jk->ik...", Mg, Lam)
    DK = _tangent(K0, g)
    tangent_defect = float(np.max(np.abs(Mg[:, :d] - DK)))
    LNN = Lam[d:, d:]
    m = n - d
    diag = np.diag(LNN)
    upper = LNN[np.triu_indices(m, 1)]
    jordan = m > 1 and np.allclose(np.tril(LNN, -1), 0.0, atol=0.0) \
        and np.all(diag == diag[0]) and np.all(upper == 1.0)
    if jordan:
        T, Q = LNN.astype(complex), np.eye(m, dtype=complex)
    else:
        T, Q = scipy.linalg.schur(LNN.astype(complex), output="complex")
    zeros = [i for i in range(m) if abs(T[i, i]) < 1e-12]
    if zeros and not allow_twist:
        raise DegenerateError("Lambda has more than d zero eigenvalues",
                              extra_zero_directions=len(zeros))
    return Frame("reducible", om, g, A, DK, Mg, Minv, cond, float(np.max(np.abs(defect))),
                 Lambda=Lam, schur=(T, Q), jordan=bool(jordan), allow_twist=allow_twist,
                 diagnostics={"eigenvalues": [[float(z.real), float(z.imag)] for z in np.diag(T)],
                              "tangent_column_defect": tangent_defect})


def _linear_residual(frame: Frame, u: TorusFourier, wn, R: TorusFourier) -> TorusFourier:
    g = frame.grid
    lhs = g.values(deriv_dir(u, frame.omega0)) - _mv(frame.A, g.values(u)) \
        + np.einsum("ai...,i->a...", frame.DK0, wn)
    return R - g.fit(lhs)


def _const_apply(mat, u: TorusFourier, real: bool) -> TorusFourier:
    c = np.tensordot(np.asarray(mat), u.coeffs, axes=(1, 0))
    if real:
        out = TorusFourier(c, u.d, real=False, check=False)
        return out._like(c, real=True)
    return TorusFourier(c, u.d, real=False, check=False)


def _obstruction_gate(obs, R: TorusFourier, tol: float, raise_on: bool, what: str):
    size = float(np.max(np.abs(obs), initial=0.0))
    if raise_on and size > tol * max(1.0, R.max_abs()):
        raise ObstructionError(f"{what} average does not vanish", obstruction=np.asarray(obs),
                               magnitude=size)
    return size


def _hamiltonian_core(R, frame: Frame, floor, tol, strict):
    g, d = frame.grid, len(frame.omega0)
    Rt = g.values(R)
    Rt = _mv(frame.Minv, Rt)
    R1, R2 = g.fit(Rt[:d]), g.fit(Rt[d:])
    obs = average(R2)
    size = _obstruction_gate(obs, R, tol, strict, "normal-block")
    W2, _ = solve_cohomology(R2, frame.omega0, floor)
    Lg = g.values(frame.L).reshape((d, d) + g.shape)
    rhs1 = R1 + g.fit(_mv(Lg, g.values(W2)))
    W1, wn = solve_cohomology(rhs1, frame.omega0, floor)
    W = np.concatenate([g.values(W1), g.values(W2)])
    return g.fit(_mv(frame.M, W)), np.real(wn), size


def _reducible_core(R, frame: Frame, floor, tol, strict):
    g, d = frame.grid, len(frame.omega0)
    n = frame.M.shape[0]
    m = n - d
    Rt = g.fit(_mv(frame.Minv, g.values(R)))
    coeffs = Rt.coeffs
    RT = TorusFourier(coeffs[:d], R.d, check=False)
    RN = TorusFourier(coeffs[d:], R.d, check=False)
    T, Q = frame.schur
    obstruction = 0.0
    if m:
        gN = _const_apply(Q.conj().T, RN, real=False)
        parts = [TorusFourier(gN.coeffs[i:i + 1], R.d, real=False, check=False)
                 for i in range(m)]
        if frame.jordan:
            v = solve_jordan_chain(parts, frame.omega0, T[0, 0], floor)
        else:
            v = [None] * m
            for i in range(m - 1, -1, -1):
                rhs = parts[i]
                for j in range(i + 1, m):
                    if T[i, j] != 0:
                        rhs = rhs + v[j] * T[i, j]
                if abs(T[i, i]) < 1e-12:
                    size = _obstruction_gate(average(rhs), R, tol, strict, "twist-direction")
                    obstruction = max(obstruction, size)
                    v[i] = solve_cohomology(rhs, frame.omega0, floor)[0]
                else:
                    v[i] = solve_shifted(rhs, frame.omega0, T[i, i], floor)
        V = TorusFourier(np.concatenate([p.coeffs for p in v]), R.d, real=False, check=False)
        wN = _const_apply(Q, V, real=True)
        LTN = frame.Lambda[:d, d:]
        rhsT = RT + _const_apply(LTN, wN, real=True)
    else:
        wN = None
        rhsT = RT
    wT, wn = solve_cohomology(rhsT, frame.omega0, floor)
    W = g.values(wT) if wN is None else np.concatenate([g.values(wT), g.values(wN)])
    return g.fit(_mv(frame.M, W)), np.real(wn), obstruction


def _refined(core, R: TorusFourier, frame: Frame, floor, tol, strict, refine):
    u, wn, obs = core(R, frame, floor, tol, strict)
    for _ in range(refine):
        r = _linear_residual(frame, u, wn, R)
        du, dw, _ = core(r, frame, floor, tol, False)
        u, wn = u + du, wn + dw
    return u, wn, obs


def solve_linearized_hamiltonian(R: TorusFourier, frame: Frame, omega0=None, *,
                                 floor: float = DIVISOR_FLOOR, obstruction_tol: float = 1e-9,
                                 strict: bool = True, refine: int = 2):
    """Solve omega0.du - A u + DK0 omega_n = R in the symplectic frame.

    Returns (u, omega_n, obstruction) where obstruction is the average of the
    normal block, which must vanish (ObstructionError when ``strict``).
    """
    if frame.kind != "hamiltonian":
        raise ShapeError("frame is not hamiltonian")
    return _refined(_hamiltonian_core, R, frame, floor, obstruction_tol, strict, refine)


def solve_linearized_reducible(R: TorusFourier, frame: Frame, omega0=None, *,
                               floor: float = DIVISOR_FLOOR, obstruction_tol: float = 1e-9,
                               strict: bool = True, refine: int = 2):
    """Solve the same equation through a frame with A M - omega0.dM = M Lambda."""
    if frame.kind != "reducible":
        raise ShapeError("frame is not reducible")
    return _refined(_reducible_core, R, frame, floor, obstruction_tol, strict, refine)


# ------------------------------------------------------------------ driver
@dataclass
class ExpansionResult:
    K: EpsSeries
    omega: EpsSeries
    residual_by_order: list
    diagnostics: dict
    model_name: str = "custom"
    form: str = "A"

    @property
    def order(self) -> int:
        return self.K.order

    def truncation(self, eps: float, order: int | None = None):
        N = self.order if order is None else order
        K = self.K.truncate(N)(eps)
        om = self.omega.truncate(N)(eps)
        return K, np.atleast_1d(np.asarray(om, dtype=float))

    def to_json(self) -> dict:
        return {
            "model": self.model_name,
            "form": self.form,
            "order": self.order,
            "K": self.K.to_json(),
            "omega": EpsSeries([np.atleast_1d(np.asarray(o, dtype=float))
                                for o in self.omega.terms]).to_json(),
            "residual_by_order": [float(x) for x in self.residual_by_order],
            "diagnostics": self.diagnostics,
        }


def _tangent_projection(K0: TorusFourier, grid: _Grid):
    DK = _tangent(K0, grid)
    gram = grid.mean(np.einsum("ai...,aj...->ij...", DK, DK))
    if np.linalg.cond(gram) > 1e12:
        raise DegenerateError("tangent Gram matrix is singular", gram=gram)
    return DK, np.linalg.inv(gram)


def _remove_phase(u: TorusFourier, K0: TorusFourier, grid: _Grid, DK, gram_inv):
    sigma = gram_inv @ grid.mean(np.einsum("ai...,a...->i...", DK, grid.values(u)))
    for i in range(K0.d):
        u = u - deriv(K0, i) * float(sigma[i])
    return u, sigma


def expand_invariance(model: SDDEModel, K0: TorusFourier, omega0, N: int, *,
                      grid_size: int | None = None, gamma: float = 0.1, tau: float | None = None,
                      kmax: int = 100, floor: float = DIVISOR_FLOOR, strategy: str | None = None,
                      seed_tol: float = 1e-8, obstruction_tol: float = 1e-9,
                      refine: int = 2) -> ExpansionResult:
    """Compute K_0..K_N and omega_0..omega_N order by order."""
    om0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    d, n = model.d, model.n
    if K0.d != d or K0.n != n or om0.shape != (d,):
        raise ShapeError("seed does not match the model dimensions")
    if N < 0:
        raise ValueError("order must be non-negative")
    grid = _Grid(d, K0.cutoff, grid_size)
    diag: dict = {"cutoff": K0.cutoff, "grid": grid.size}
    if d >= 2:
        wit = check_diophantine(om0, gamma, tau, kmax)
        diag["diophantine"] = wit.to_json()
        if not wit.passed:
            raise DiophantineError("frequency fails the Diophantine check", witness=wit.to_json())
    elif om0[0] == 0.0:
        raise DiophantineError("zero frequency")

    res0 = invariance_residual_terms(model, [K0], [om0], 0, grid)[0]
    scale = max(1.0, float(np.max(np.abs(grid.values(deriv_dir(K0, om0))))))
    seed_res = float(np.max(np.abs(res0)))
    diag["seed_residual"] = seed_res
    if seed_res > seed_tol * scale:
        raise SeedError("seed does not solve the eps = 0 equation", residual=seed_res)

    strategy = strategy or model.structure
    if strategy == "hamiltonian":
        frame = hamiltonian_frame(K0, om0, model, model.J if model.J is not None else None,
                                  grid=grid)
        solver = solve_linearized_hamiltonian
        if frame.reduced_block_check > 1e-6 * scale:
            raise SeedError("symplectic frame does not reduce the linearization",
                            reduced_block_check=frame.reduced_block_check)
    elif strategy == "reducible":
        if model.M is None or model.Lambda is None:
            raise ShapeError("reducible strategy needs M and Lambda on the model")
        frame = reducible_frame(K0, om0, model, model.M, model.Lambda,
                                allow_twist=model.allow_twist, grid=grid)
        solver = solve_linearized_reducible
        if frame.reduced_block_check > 1e-6 * scale:
            raise SeedError("frame does not conjugate the linearization to Lambda",
                            frame_defect=frame.reduced_block_check)
    else:
        raise DegenerateError(f"no linear solver for structure {strategy!r}")
    diag["strategy"] = strategy
    diag["frame_check"] = frame.reduced_block_check
    diag["frame_condition"] = frame.condition
    diag.update({f"frame_{k}": v for k, v in frame.diagnostics.items()})

    DK, gram_inv = _tangent_projection(K0, grid)
    Ks, oms = [K0], [om0]
    residuals = [seed_res]
    per_order = []
    zero = K0 * 0.0
    for order in range(1, N + 1):
        terms = invariance_residual_terms(model, Ks + [zero], oms + [np.zeros(d)], order, grid)
        R = grid.fit(terms[order])
        try:
            u, wn, obs = solver(R, frame, floor=floor, obstruction_tol=obstruction_tol,
                                refine=refine)
        except (NearResonanceError, ObstructionError) as exc:
            exc.info["order"] = order
            raise
        u, sigma = _remove_phase(u, K0, grid, DK, gram_inv)
        Ks.append(u)
        oms.append(np.asarray(wn, dtype=float))
        check = invariance_residual_terms(model, Ks, oms, order, grid)[order]
        residuals.append(float(np.max(np.abs(check))))
        per_order.append({"order": order, "rhs_norm": R.max_abs(),
                          "omega_norm": float(np.linalg.norm(wn)),
                          "obstruction": obs, "phase_removed": sigma.tolist()})
    diag["orders"] = per_order
    return ExpansionResult(EpsSeries(Ks), EpsSeries(oms), residuals, diag, model.name, model.form)


# ------------------------------------------------------------------ normalization
def normalize(Kseries: EpsSeries, K0: TorusFourier | None = None, grid_size: int | None = None):
    """Shift the phase, K(theta) -> K(theta - sigma(eps)), so <DK0^T K_j> = 0 for j >= 1.

    Returns the shifted series and the list sigma_1..sigma_N.
    """
    K0 = Kseries.terms[0] if K0 is None else K0
    d = K0.d
    grid = _Grid(d, K0.cutoff, grid_size)
    DK, gram_inv = _tangent_projection(K0, grid)
    N = Kseries.order
    sig = [np.zeros(d) for _ in range(N + 1)]

    def shifted():
        delta = EpsSeries([TorusFourier.constant(s, d, 0) for s in sig])
        return shift_jet(Kseries, delta, method="taylor")

    for j in range(1, N + 1):
        Xj = shifted().terms[j]
        sig[j] = gram_inv @ grid.mean(np.einsum("ai...,a...->i...", DK, grid.values(Xj)))
    return shifted(), sig[1:]


# ------------------------------------------------------------------ residual scan
def _direct_defect(model: SDDEModel, K: TorusFourier, om: np.ndarray, eps: float,
                   samples: int | None = None, max_iter: int = 200) -> np.ndarray:
    d, n = model.d, model.n
    S = samples or 2 * K.cutoff + 1
    pts = grid_points(d, S)
    y = K.to_grid(S)
    yl = [y[i] for i in range(n)]
    zs = []
    for r in model.delays:
        if model.form == "A" and not model.implicit:
            shift = eps * om.reshape((d,) + (1,) * d) * np.asarray(r(yl))
            z = ModeEvaluator(d, K.cutoff, pts - shift)(K)
        elif model.form == "A":
            s = np.zeros(pts.shape[1:])
            for _ in range(max_iter):
                z = ModeEvaluator(d, K.cutoff, pts - om.reshape((d,) + (1,) * d) * s)(K)
                s_new = eps * np.broadcast_to(np.asarray(r(yl, [z[i] for i in range(n)])),
                                              s.shape)
                change = float(np.max(np.abs(s_new - s)))
                s = s_new
                if change <= 1e-15 * max(1.0, float(np.max(np.abs(s)))):
                    break
            else:
                raise ConvergenceError("implicit delay iteration did not converge",
                                       last_change=change)
            z = ModeEvaluator(d, K.cutoff, pts - om.reshape((d,) + (1,) * d) * s)(K)
        else:
            shift = om.reshape((d,) + (1,) * d) * np.asarray(r(yl))
            z = eps * ModeEvaluator(d, K.cutoff, pts - shift)(K)
        zs.append([z[i] for i in range(n)])
    F = _call_f(model, yl, zs, eps)
    F = np.stack([np.broadcast_to(np.asarray(c, dtype=float), pts.shape[1:]) for c in F])
    lhs = sum(om[i] * deriv(K, i).to_grid(S) for i in range(d))
    return lhs - F


def residual_scan(model: SDDEModel, result: ExpansionResult, eps_values, *,
                  order: int | None = None, samples: int | None = None) -> list:
    """Rows (eps, sup defect, rms defect) of the truncated series' invariance defect."""
    rows = []
    for eps in eps_values:
        K, om = result.truncation(float(eps), order)
        D = _direct_defect(model, K, om, float(eps), samples)
        sup = float(np.max(np.abs(D)))
        l2 = float(np.sqrt(np.mean(np.sum(D ** 2, axis=0))))
        rows.append((float(eps), sup, l2))
    return rows
