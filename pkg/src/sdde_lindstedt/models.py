"""Bundled delay-equation models and their eps = 0 seeds.

Frequencies are in torus units: the seed orbit has period 1/omega0 in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.special

from . import jets as J
from .errors import SeedError, ShapeError
from .fourier import TorusFourier
from .lindstedt import SDDEModel, standard_symplectic

__all__ = [
    "ModelCatalogEntry",
    "quartic_oscillator_sdde",
    "vdp_delay",
    "electro_toy",
    "linear_reducible_toy",
    "catalog",
    "get_model",
    "GOLDEN",
]

GOLDEN = (5 ** 0.5 - 1) / 2
_J0 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass
class ModelCatalogEntry:
    id: str
    model: SDDEModel
    seed: Callable
    doc: str
    info: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return {"id": self.id, "doc": self.doc, "n": self.model.n, "d": self.model.d,
                "ell": self.model.ell, "form": self.model.form,
                "structure": self.model.structure, "info": self.info}


def _fit(func, d: int, cutoff: int, samples: int = 256) -> TorusFourier:
    return TorusFourier.from_function(func, d, cutoff, grid=max(samples, 4 * cutoff + 4))


# ------------------------------------------------------------------ quartic
def quartic_frequency(a: float) -> float:
    """Frequency (cycles per unit time) of x'' + x + x^3 = 0 at amplitude a."""
    Om = np.sqrt(1.0 + a * a)
    m = a * a / (2.0 * (1.0 + a * a))
    return float(Om / (4.0 * scipy.special.ellipk(m)))


def quartic_seed(a: float, cutoff: int = 16):
    """Exact orbit x = a cn(Om t | m), p = x', sampled and fitted."""
    if a <= 0:
        raise SeedError("amplitude must be positive", amplitude=a)
    Om = np.sqrt(1.0 + a * a)
    m = a * a / (2.0 * (1.0 + a * a))
    Kq = scipy.special.ellipk(m)

    def orbit(th):
        sn, cn, dn, _ = scipy.special.ellipj(4.0 * Kq * th[0], m)
        return np.stack([a * cn, -a * Om * sn * dn])
    return _fit(orbit, 1, cutoff), np.array([quartic_frequency(a)])


def quartic_oscillator_sdde(a: float = 0.8, c: float = 0.5, cutoff: int = 40,
                            **_) -> ModelCatalogEntry:
    """x' = p rho, p' = -(x + x^3) rho, rho = 1 + c (x(t - eps r) - x), r = 1 + x^2."""

    def f(y, zs, eps):
        x, p = y
        rho = 1.0 + c * (zs[0][0] - x)
        return [p * rho, -(x + x * x * x) * rho]

    def r(y):
        return 1.0 + y[0] * y[0]

    model = SDDEModel(n=2, d=1, f=f, delays=(r,), form="A", structure="hamiltonian",
                      name="quartic", params={"a": a, "c": c, "cutoff": cutoff})
    h = 1e-4
    twist = (quartic_frequency(a + h) - quartic_frequency(a - h)) / (2 * h)
    return ModelCatalogEntry(
        "quartic", model, lambda: quartic_seed(a, cutoff),
        "Hamiltonian quartic oscillator with an energy-preserving delayed time change",
        {"angular_frequency": 2 * np.pi * quartic_frequency(a), "twist": twist})


# ------------------------------------------------------------------ reducible toys
def _circle_seed(cutoff: int, n: int = 2):
    def orbit(th):
        out = [np.cos(2 * np.pi * th[0]), np.sin(2 * np.pi * th[0])]
        return np.stack(out + [np.zeros_like(th[0])] * (n - 2))
    return _fit(orbit, 1, cutoff)


def _circle_frame(K0: TorusFourier, n: int) -> TorusFourier:
    """Columns DK0, K0 and (for n = 3) the constant e3."""
    def frame(th):
        c, s = np.cos(2 * np.pi * th[0]), np.sin(2 * np.pi * th[0])
        z, o = np.zeros_like(c), np.ones_like(c)
        cols = [[-2 * np.pi * s, 2 * np.pi * c], [c, s]]
        if n == 3:
            cols = [col + [z] for col in cols] + [[z, z, o]]
        return np.array([[cols[j][i] for j in range(n)] for i in range(n)])
    return _fit(frame, 1, K0.cutoff)


def linear_reducible_toy(variant: str = "diagonal", mu: float = -1.0, omega0: float = 1.0,
                         c: float = 0.3, beta: float = 0.5, a: float = 1.0,
                         cutoff: int = 32, **_) -> ModelCatalogEntry:
    """Circle cycles with an explicit frame; variants diagonal, jordan, hamiltonian."""
    w = 2 * np.pi * omega0

    if variant in ("diagonal", "jordan"):
        n = 2 if variant == "diagonal" else 3

        def r(y):
            return 1.0 + 0.5 * y[0] * y[0]

        def f(y, zs, eps):
            x1, x2 = y[0], y[1]
            bump = c * (J.sin(zs[0][0]) - J.sin(x1))
            if n == 2:
                q = 0.5 * (x1 * x1 + x2 * x2 - 1.0)
                return [-w * x2 + mu * q * x1 + bump, w * x1 + mu * q * x2 + 0.5 * x1 * bump]
            y3 = y[2]
            q = 0.5 * (x1 * x1 + x2 * x2 - 1.0)
            amp = (mu * q + y3) / (2.0 * q + 1.0)
            return [-w * x2 + amp * x1 + bump, w * x1 + amp * x2 + x1 * bump,
                    mu * y3 + 0.5 * bump]

        if n == 2:
            Lam = np.diag([0.0, mu])
        else:
            Lam = np.array([[0.0, 0.0, 0.0], [0.0, mu, 1.0], [0.0, 0.0, mu]])
        K0 = _circle_seed(cutoff, n)
        model = SDDEModel(n=n, d=1, f=f, delays=(r,), form="A", structure="reducible",
                          M=_circle_frame(K0, n), Lambda=Lam,
                          name=f"reducible_{variant}",
                          params={"variant": variant, "mu": mu, "omega0": omega0, "c": c})
        if mu == 0:
            raise ShapeError("normal exponent must be nonzero")
        return ModelCatalogEntry(model.name, model, lambda: (K0, np.array([omega0])),
                                 "cycle with constant-coefficient normal dynamics",
                                 {"spectrum": np.diag(Lam).tolist(),
                                  "min_shifted_divisor": abs(mu)})

    if variant == "hamiltonian":
        I0 = 0.5 * a * a
        F1 = 1.0 + beta * I0
        om = F1 / (2 * np.pi)

        def r(y):
            return 1.0 + 0.5 * y[0] * y[0]

        def f(y, zs, eps):
            x, p = y
            dF = 1.0 + beta * 0.5 * (x * x + p * p)
            rho = 1.0 + c * (zs[0][0] - x)
            return [dF * p * rho, -dF * x * rho]

        def orbit(th):
            return np.stack([a * np.cos(2 * np.pi * th[0]), -a * np.sin(2 * np.pi * th[0])])
        K0 = _fit(orbit, 1, cutoff)

        def frame(th):
            cs, sn = np.cos(2 * np.pi * th[0]), np.sin(2 * np.pi * th[0])
            col1 = [-2 * np.pi * a * sn, -2 * np.pi * a * cs]
            col2 = [a * cs / (2 * np.pi * a * a), -a * sn / (2 * np.pi * a * a)]
            return np.array([[col1[0], col2[0]], [col1[1], col2[1]]])
        Lam = np.array([[0.0, beta / (4 * np.pi ** 2)], [0.0, 0.0]])
        model = SDDEModel(n=2, d=1, f=f, delays=(r,), form="A", structure="hamiltonian",
                          M=_fit(frame, 1, cutoff), Lambda=Lam, allow_twist=True,
                          name="reducible_hamiltonian",
                          params={"variant": variant, "beta": beta, "a": a, "c": c})
        return ModelCatalogEntry(model.name, model, lambda: (K0, np.array([om])),
                                 "integrable twist oscillator with both frames available",
                                 {"twist": beta / (4 * np.pi ** 2)})
    raise ShapeError(f"unknown variant {variant!r}")


# ------------------------------------------------------------------ electrodynamics
def _coulomb(delta):
    return delta * J.power(delta * delta, -1.5)


def electro_toy(q1q2: float = 0.05, angular=(1.0, 1.0 / GOLDEN), amplitudes=(0.3, 0.25),
                separation: float = 4.0, mass: float = 1.0, implicit: bool = False,
                relativistic: bool = True, cutoff: int = 12, **_) -> ModelCatalogEntry:
    """Two charges on a line in harmonic traps, coupled through retarded fields.

    State y = (x1, x2, u1, u2) with velocities v_i = Om_i u_i, which makes the
    eps = 0 traps canonical with round orbits.  Particle i feels the other
    one at the retarded time t - s_i; only the retardation correction of the
    Coulomb force is kept, so the traps are decoupled at eps = 0.
    """
    Om = np.asarray(angular, dtype=float)
    om = Om / (2 * np.pi)
    kappa = 2.0 * mass * Om ** 2
    centers = np.array([-0.5 * separation, 0.5 * separation])
    amps = np.asarray(amplitudes, dtype=float)
    if separation - amps.sum() <= 1e-3:
        raise SeedError("seed orbits collide", separation=separation)

    def rel_mass(v, eps):
        if not relativistic:
            return 2.0 * mass
        g = 1.0 - eps * eps * v * v
        return mass * J.power(g, -1.5) + mass * J.power(g, -0.5)

    def f(y, zs, eps):
        x1, x2, u1, u2 = y
        z12 = zs[0][1]
        z21 = zs[1][0]
        F1 = -kappa[0] * (x1 - centers[0]) + q1q2 * (_coulomb(x1 - z12) - _coulomb(x1 - x2))
        F2 = -kappa[1] * (x2 - centers[1]) + q1q2 * (_coulomb(x2 - z21) - _coulomb(x2 - x1))
        return [Om[0] * u1, Om[1] * u2,
                F1 * J.reciprocal(Om[0] * rel_mass(Om[0] * u1, eps)),
                F2 * J.reciprocal(Om[1] * rel_mass(Om[1] * u2, eps))]

    if implicit:
        def r1(y, z):
            return J.sqrt((y[0] - z[1]) * (y[0] - z[1]))

        def r2(y, z):
            return J.sqrt((y[1] - z[0]) * (y[1] - z[0]))
    else:
        def r1(y):
            return J.sqrt((y[0] - y[1]) * (y[0] - y[1]))

        def r2(y):
            return J.sqrt((y[1] - y[0]) * (y[1] - y[0]))

    def orbit(th):
        x = [centers[i] + amps[i] * np.cos(2 * np.pi * th[i]) for i in range(2)]
        v = [-amps[i] * np.sin(2 * np.pi * th[i]) for i in range(2)]
        return np.stack(x + v)

    K0 = _fit(orbit, 2, cutoff, samples=4 * cutoff + 4)
    model = SDDEModel(n=4, d=2, f=f, delays=(r1, r2), form="A", implicit=implicit,
                      structure="hamiltonian", name="electro",
                      params={"q1q2": q1q2, "implicit": implicit, "relativistic": relativistic})
    return ModelCatalogEntry("electro", model, lambda: (K0, om.copy()),
                             "two retarded charges in harmonic traps",
                             {"min_separation": float(separation - amps.sum())})


# ------------------------------------------------------------------ van der Pol with delayed feedback
def _spectral_diff(size: int) -> np.ndarray:
    """d/dtheta on ``size`` equispaced samples of a 1-periodic function (odd size)."""
    k = np.fft.fftfreq(size, 1.0 / size)
    eye = np.eye(size)
    return np.real(np.fft.ifft(2j * np.pi * k[:, None] * np.fft.fft(eye, axis=0), axis=0))


def _vdp_field(mu: float):
    def f0(x, v):
        return np.array([v, mu * (1 - x * x) * v - x])

    def jac(x, v):
        return np.array([[np.zeros_like(x), np.ones_like(x)],
                         [-2 * mu * x * v - 1, mu * (1 - x * x)]])
    return f0, jac


def vdp_cycle_seed(mu: float = 0.5, P: int = 4, cutoff: int = 128, s_scale: float = 0.3,
                   tol: float = 1e-12):
    """Unperturbed cycle, its normal exponent and the isochron layers up to s^P.

    Returns (W0, omega0, lambda0) with W0 a FourierTaylor.
    """
    from scipy.integrate import solve_ivp
    from .limit_cycle import FourierTaylor

    f0, jac = _vdp_field(mu)
    rhs = lambda t, y: f0(y[0], y[1])
    sol = solve_ivp(rhs, (0, 60), [2.0, 0.0], rtol=1e-11, atol=1e-12)
    y0 = sol.y[:, -1]

    def section(t, y):
        return y[1]
    section.direction = -1
    sol = solve_ivp(rhs, (0, 40), y0, rtol=1e-12, atol=1e-13, events=section, dense_output=True)
    times = sol.t_events[0]
    if len(times) < 3:
        raise SeedError("no periodic orbit found by shooting")
    t0, T = times[1], times[2] - times[1]

    G = 2 * cutoff + 1
    th = np.arange(G) / G
    Z = sol.sol(t0 + th * T)
    Dm = _spectral_diff(G)
    om = 1.0 / T
    # collocation Newton for omega dK = f0(K) with a phase condition
    ref = Dm @ Z[0], Dm @ Z[1]
    for _ in range(30):
        F = np.concatenate([om * (Dm @ Z[0]) - f0(*Z)[0], om * (Dm @ Z[1]) - f0(*Z)[1]])
        A = jac(*Z)
        Jm = np.zeros((2 * G + 1, 2 * G + 1))
        for i in range(2):
            for j in range(2):
                Jm[i * G:(i + 1) * G, j * G:(j + 1) * G] = (om * Dm if i == j else 0.0) - np.diag(A[i, j])
            Jm[i * G:(i + 1) * G, -1] = Dm @ Z[i]
        Jm[-1, :G], Jm[-1, G:2 * G] = ref[0], ref[1]
        F = np.concatenate([F, [0.0]])
        step = np.linalg.lstsq(Jm, -F, rcond=None)[0]
        Z = Z + step[:2 * G].reshape(2, G)
        om += step[-1]
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise SeedError("cycle polish did not converge")
    A = jac(*Z)
    lam = float(np.mean(A[0, 0] + A[1, 1]))
    if lam >= 0:
        raise SeedError("cycle is not attracting", exponent=lam)

    def block(shift: float) -> np.ndarray:
        M = np.zeros((2 * G, 2 * G))
        for i in range(2):
            for j in range(2):
                M[i * G:(i + 1) * G, j * G:(j + 1) * G] = ((om * Dm + shift * np.eye(G)) if i == j else 0.0) - np.diag(A[i, j])
        return M

    _, sv, vt = np.linalg.svd(block(lam))
    v = vt[-1].reshape(2, G)
    v *= s_scale / np.max(np.abs(v))
    if v[0, 0] < 0:
        v = -v
    layers = [Z, v]
    for p in range(2, P + 1):
        y = [J.EpsSeries([layers[q][i] for q in range(p)] + [np.zeros(G)], "s") for i in range(2)]
        x, w = y
        fp = [w, mu * (1 - x * x) * w - x]
        rhs_p = np.concatenate([fp[0].terms[p], fp[1].terms[p]])
        layers.append(np.linalg.solve(block(p * lam), rhs_p).reshape(2, G))
    fit = [TorusFourier.from_grid(np.real(a), 1, cutoff) for a in layers]
    return FourierTaylor(fit), float(om), lam


def vdp_delay(mu: float = 0.5, kappa: float = 1.0, P: int = 4, cutoff: int = 128,
              s_scale: float = 0.3) -> ModelCatalogEntry:
    """x'' - mu(1 - x^2)x' + x = eps kappa x(t - r), r = 1 + x^2/2."""

    def f(y, zs, eps):
        x, v = y
        return [v, mu * (1 - x * x) * v - x + kappa * zs[0][0]]

    def r(y):
        return 1 + 0.5 * y[0] * y[0]

    model = SDDEModel(n=2, d=1, f=f, delays=(r,), form="B", name="vdp", structure="limit_cycle",
                      params={"mu": mu, "kappa": kappa, "P": P, "cutoff": cutoff})
    seed = lru_cache(maxsize=1)(lambda: vdp_cycle_seed(mu, P, cutoff, s_scale))
    return ModelCatalogEntry("vdp", model, seed,
                             "van der Pol oscillator with state-dependent delayed feedback",
                             {"mu": mu, "kappa": kappa, "P": P})


# ------------------------------------------------------------------ catalog
def _builders():
    return {
        "quartic": quartic_oscillator_sdde,
        "vdp": vdp_delay,
        "electro": electro_toy,
        "reducible_diagonal": lambda **kw: linear_reducible_toy("diagonal", **kw),
        "reducible_jordan": lambda **kw: linear_reducible_toy("jordan", **kw),
        "reducible_hamiltonian": lambda **kw: linear_reducible_toy("hamiltonian", **kw),
    }


def catalog() -> list:
    return sorted(_builders())


def get_model(model_id: str, **params) -> ModelCatalogEntry:
    builders = _builders()
    if model_id not in builders:
        raise ShapeError(f"unknown model id {model_id!r}", known=sorted(builders))
    return builders[model_id](**params)
