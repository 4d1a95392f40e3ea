"""Truncated formal power series ("jets") in a small parameter.

:class:`EpsSeries` holds ``c_0 + c_1 x + ... + c_N x^N`` where the
coefficients may be numbers, numpy arrays (evaluated pointwise),
:class:`~sdde_lindstedt.fourier.TorusFourier` objects, or another
:class:`EpsSeries` in a different variable.  Nesting is how the isochrone
code gets bivariate jets in (eps, s): the outer series is in ``"eps"`` and
its coefficients are series in ``"s"``.

The elementary functions below (:func:`exp`, :func:`sin`, :func:`sqrt`, ...)
accept plain numbers/arrays as well as series, so model vector fields are
written once and can be evaluated numerically or as jets.
"""

from __future__ import annotations

import math
from itertools import product as iproduct
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError, SingularJetError
from .fourier import TorusFourier, deriv, prod

__all__ = [
    "EpsSeries",
    "jet_mul",
    "jet_apply",
    "shift_jet",
    "implicit_delay_jet",
    "taylor_shift",
    "exp",
    "sin",
    "cos",
    "sqrt",
    "power",
    "reciprocal",
    "absval",
    "SINGULAR_FLOOR",
]

SINGULAR_FLOOR = 1e-6

# outer variables have smaller levels
_LEVELS = {"eps": 0, "h": 0, "s": 1}


def _level(var: str) -> int:
    return _LEVELS.get(var, 0)


class EpsSeries:
    """Truncated power series in ``var`` with generic coefficients."""

    __slots__ = ("terms", "var")
    __array_priority__ = 100
    __array_ufunc__ = None  # numpy operators defer to the reflected series methods

    def __init__(self, terms: Sequence, var: str = "eps"):
        if len(terms) == 0:
            raise ShapeError("a series needs at least one term")
        self.terms = list(terms)
        self.var = var

    # ---------------------------------------------------------------- basics
    @property
    def order(self) -> int:
        return len(self.terms) - 1

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, j):
        return self.terms[j]

    def __iter__(self):
        return iter(self.terms)

    def __repr__(self):
        return f"EpsSeries(var={self.var!r}, order={self.order}, terms={self.terms!r})"

    @classmethod
    def variable(cls, order: int, var: str = "eps", value=1.0) -> "EpsSeries":
        """The series ``value * x`` truncated at ``order``."""
        terms = [0.0] * (order + 1)
        if order >= 1:
            terms[1] = value
        return cls(terms, var)

    @classmethod
    def constant(cls, value, order: int, var: str = "eps") -> "EpsSeries":
        return cls([value] + [_zero_like(value)] * order, var)

    def truncate(self, order: int) -> "EpsSeries":
        if order > self.order:
            return EpsSeries(self.terms + [_zero_like(self.terms[0])] * (order - self.order),
                             self.var)
        return EpsSeries(self.terms[:order + 1], self.var)

    def times_var(self, power: int = 1) -> "EpsSeries":
        """Multiply by ``x**power`` keeping the same truncation order."""
        z = _zero_like(self.terms[0])
        return EpsSeries([z] * power + self.terms[:len(self.terms) - power], self.var)

    def map(self, fn: Callable) -> "EpsSeries":
        return EpsSeries([fn(t) for t in self.terms], self.var)

    def map_leaves(self, fn: Callable) -> "EpsSeries":
        """Apply ``fn`` to the innermost (non-series) coefficients."""
        return EpsSeries([t.map_leaves(fn) if isinstance(t, EpsSeries) else fn(t)
                          for t in self.terms], self.var)

    def __call__(self, x):
        """Evaluate at a numeric value of the variable (Horner)."""
        acc = self.terms[-1]
        for t in reversed(self.terms[:-1]):
            acc = acc * x + t
        return acc

    evaluate = __call__

    # ------------------------------------------------------------ json
    def to_json(self) -> dict:
        first = self.terms[0]
        if isinstance(first, TorusFourier):
            space, terms = "torus_fourier", [t.to_json() for t in self.terms]
        elif hasattr(first, "layers"):
            space, terms = "fourier_taylor", [t.to_json() for t in self.terms]
        elif np.ndim(first) == 0:
            space, terms = "scalar", [float(t) for t in self.terms]
        else:
            space = "vector"
            terms = [[float(x) for x in np.ravel(t)] for t in self.terms]
        return {"order": self.order, "space": space, "terms": terms}

    @classmethod
    def from_json(cls, obj: dict) -> "EpsSeries":
        space, terms = obj["space"], obj["terms"]
        if space == "torus_fourier":
            items = [TorusFourier.from_json(t) for t in terms]
        elif space == "fourier_taylor":
            from .limit_cycle import FourierTaylor
            items = [FourierTaylor.from_json(t) for t in terms]
        elif space == "scalar":
            items = [float(t) for t in terms]
        elif space == "vector":
            items = [np.array(t, dtype=float) for t in terms]
        else:
            raise ShapeError(f"unknown series space {space!r}")
        if len(items) != obj["order"] + 1:
            raise ShapeError("term count does not match the order")
        return cls(items)

    # ------------------------------------------------------------ arithmetic
    def _outer(self, other) -> bool:
        return isinstance(other, EpsSeries) and _level(other.var) < _level(self.var)

    def __add__(self, other):
        if isinstance(other, EpsSeries) and other.var == self.var:
            m = min(self.order, other.order)
            return EpsSeries([a + b for a, b in zip(self.terms[:m + 1], other.terms[:m + 1])],
                             self.var)
        if self._outer(other):
            return other.__add__(self)
        return EpsSeries([self.terms[0] + other] + self.terms[1:], self.var)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        return EpsSeries([-t for t in self.terms], self.var)

    def __sub__(self, other):
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, EpsSeries) and other.var == self.var:
            return _cauchy(self, other)
        if self._outer(other):
            return other.__mul__(self)
        return EpsSeries([t * other for t in self.terms], self.var)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, EpsSeries):
            return self * reciprocal(other)
        return EpsSeries([t / other for t in self.terms], self.var)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            return _int_power(self, int(p))
        return power(self, p)


def _zero_like(t):
    if isinstance(t, EpsSeries):
        return t.map_leaves(_zero_like)
    if isinstance(t, TorusFourier):
        return t * 0.0
    return np.zeros_like(t) if isinstance(t, np.ndarray) else 0.0 * t


def _cauchy(a: EpsSeries, b: EpsSeries) -> EpsSeries:
    m = min(a.order, b.order)
    out = []
    for n in range(m + 1):
        # pair k with n - k so that a * b and b * a round identically
        acc = None
        for k in range((n + 1) // 2):
            t = a.terms[k] * b.terms[n - k] + a.terms[n - k] * b.terms[k]
            acc = t if acc is None else acc + t
        if n % 2 == 0:
            t = a.terms[n // 2] * b.terms[n // 2]
            acc = t if acc is None else acc + t
        out.append(acc)
    return EpsSeries(out, a.var)


def _int_power(a: EpsSeries, p: int) -> EpsSeries:
    result = EpsSeries.constant(_one_like(a.terms[0]), a.order, a.var)
    base = a
    while p:
        if p & 1:
            result = result * base
        p >>= 1
        if p:
            base = base * base
    return result


def _one_like(t):
    if isinstance(t, EpsSeries):
        return EpsSeries.constant(_one_like(t.terms[0]), t.order, t.var)
    if isinstance(t, TorusFourier):
        return TorusFourier.constant(np.ones(t.n), t.d, t.cutoff, shape=t.shape)
    return np.ones_like(t) if isinstance(t, np.ndarray) else 1.0


def jet_mul(a: EpsSeries, b: EpsSeries) -> EpsSeries:
    """Cauchy product truncated at the smaller order."""
    if isinstance(a, EpsSeries) and isinstance(b, EpsSeries) and a.var != b.var \
            and _level(a.var) == _level(b.var):
        raise ShapeError(f"cannot multiply series in {a.var!r} and {b.var!r}")
    return a * b


# ------------------------------------------------------------ composition
def _base_value(x):
    """Innermost constant coefficient (used for sign and floor checks)."""
    while isinstance(x, EpsSeries):
        x = x.terms[0]
    return x


def _check_floor(c0, floor: float, what: str):
    v = _base_value(c0)
    if isinstance(v, TorusFourier):
        return
    mags = np.abs(np.asarray(v))
    if mags.size and float(np.min(mags)) < floor:
        raise SingularJetError(f"{what}: constant term below floor {floor:g}",
                               min_abs=float(np.min(mags)))


def jet_apply(phi: str, a, p: float | None = None, floor: float = SINGULAR_FLOOR):
    """Compose the analytic map ``phi`` with a series (or plain value).

    ``phi`` is one of ``exp, sin, cos, power, reciprocal, sqrt, abs``.
    Nested series are handled recursively through the constant term.
    """
    if not isinstance(a, EpsSeries):
        return _numeric(phi, a, p, floor)
    c = a.terms
    N = a.order
    if phi == "exp":
        e = [jet_apply("exp", c[0], floor=floor)]
        for n in range(1, N + 1):
            e.append(_sum(k * c[k] * e[n - k] for k in range(1, n + 1)) * (1.0 / n))
        return EpsSeries(e, a.var)
    if phi in ("sin", "cos"):
        s = [jet_apply("sin", c[0], floor=floor)]
        co = [jet_apply("cos", c[0], floor=floor)]
        for n in range(1, N + 1):
            s.append(_sum(k * c[k] * co[n - k] for k in range(1, n + 1)) * (1.0 / n))
            co.append(_sum(k * c[k] * s[n - k] for k in range(1, n + 1)) * (-1.0 / n))
        return EpsSeries(s if phi == "sin" else co, a.var)
    if phi == "reciprocal":
        _check_floor(c[0], floor, "reciprocal")
        y0 = jet_apply("reciprocal", c[0], floor=floor)
        y = [y0]
        for n in range(1, N + 1):
            y.append(-(y0 * _sum(c[k] * y[n - k] for k in range(1, n + 1))))
        return EpsSeries(y, a.var)
    if phi == "sqrt":
        _check_floor(c[0], floor, "sqrt")
        y0 = jet_apply("sqrt", c[0], floor=floor)
        inv = jet_apply("reciprocal", 2.0 * y0, floor=floor)
        y = [y0]
        for n in range(1, N + 1):
            acc = c[n]
            if n >= 2:
                acc = acc - _sum(y[k] * y[n - k] for k in range(1, n))
            y.append(acc * inv)
        return EpsSeries(y, a.var)
    if phi == "power":
        if p is None:
            raise ValueError("power needs an exponent")
        if float(p).is_integer() and p >= 0:
            return _int_power(a, int(p))
        _check_floor(c[0], floor, "power")
        y0 = jet_apply("power", c[0], p=p, floor=floor)
        inv0 = jet_apply("reciprocal", c[0], floor=floor)
        y = [y0]
        for n in range(1, N + 1):
            acc = _sum((p * k - (n - k)) * c[k] * y[n - k] for k in range(1, n + 1))
            y.append(acc * inv0 * (1.0 / n))
        return EpsSeries(y, a.var)
    if phi == "abs":
        _check_floor(c[0], floor, "abs")
        sign = np.sign(np.real(_base_value(c[0])))
        return a * sign
    raise ValueError(f"unsupported map {phi!r}")


def _sum(items):
    acc = None
    for t in items:
        acc = t if acc is None else acc + t
    return acc


def _numeric(phi, x, p, floor):
    if isinstance(x, TorusFourier):
        raise ShapeError("elementary maps of TorusFourier constants are not supported")
    if phi == "exp":
        return np.exp(x)
    if phi == "sin":
        return np.sin(x)
    if phi == "cos":
        return np.cos(x)
    if phi == "reciprocal":
        return 1.0 / x
    if phi == "sqrt":
        return np.sqrt(x)
    if phi == "power":
        return np.power(x, p)
    if phi == "abs":
        return np.abs(x)
    raise ValueError(f"unsupported map {phi!r}")


def exp(x):
    return jet_apply("exp", x)


def sin(x):
    return jet_apply("sin", x)


def cos(x):
    return jet_apply("cos", x)


def sqrt(x, floor: float = SINGULAR_FLOOR):
    return jet_apply("sqrt", x, floor=floor)


def power(x, p: float, floor: float = SINGULAR_FLOOR):
    return jet_apply("power", x, p=p, floor=floor)


def reciprocal(x, floor: float = SINGULAR_FLOOR):
    return jet_apply("reciprocal", x, floor=floor)


def absval(x, floor: float = SINGULAR_FLOOR):
    return jet_apply("abs", x, floor=floor)


# ------------------------------------------------------------ angular shifts
def _multi_indices(d: int, degree: int):
    for alpha in iproduct(range(degree + 1), repeat=d):
        if sum(alpha) <= degree:
            yield alpha


def _is_zero_leafwise(x) -> bool:
    v = _base_value(x)
    if isinstance(v, TorusFourier):
        return v.max_abs() == 0.0
    return not np.any(np.asarray(v))


def taylor_shift(derivs: Callable, rest: Sequence | None, degree: int):
    """Return sum_alpha (-rest)^alpha / alpha! * derivs(alpha).

    ``derivs(alpha)`` gives the alpha-th partial derivative of the function
    being shifted, already evaluated at the base points; ``rest`` is a list
    of d series with vanishing constant term.  The expansion stops at total
    degree ``degree``, beyond which all terms are truncated anyway.
    """
    if rest is None:
        return derivs((0,))
    d = len(rest)
    for r in rest:
        if isinstance(r, EpsSeries) and not _is_zero_leafwise(r.terms[0]):
            raise ShapeError("shift jet must vanish at order 0")
    powers = [[None] * (degree + 1) for _ in range(d)]
    acc = None
    for alpha in _multi_indices(d, degree):
        coef = None
        for i, a_i in enumerate(alpha):
            if a_i == 0:
                continue
            if powers[i][a_i] is None:
                powers[i][a_i] = (-rest[i]) ** a_i
            coef = powers[i][a_i] if coef is None else coef * powers[i][a_i]
        term = derivs(alpha)
        fact = 1.0 / math.prod(math.factorial(a) for a in alpha)
        if coef is not None:
            term = coef * term * fact
        acc = term if acc is None else acc + term
    return acc


def _deriv_multi(u: TorusFourier, alpha) -> TorusFourier:
    for axis, a in enumerate(alpha):
        for _ in range(a):
            u = deriv(u, axis)
    return u


def shift_jet(K: EpsSeries, delta: EpsSeries, method: str = "auto",
              mode_threshold: int = 64) -> EpsSeries:
    """Jet of theta -> K(theta - delta(theta)) for an O(eps) shift ``delta``.

    ``K`` is a series of TorusFourier; ``delta`` a series of d-vector valued
    TorusFourier with zero constant term.  ``method`` selects the Taylor form
    sum_m (-delta . d/dtheta)^m K / m!  or per-mode multiplication by the jet
    of exp(-2 pi i k . delta); ``auto`` picks by the number of stored modes.
    """
    K0 = K.terms[0]
    d = K0.d
    if delta.terms[0].max_abs() != 0.0:
        raise ShapeError("shift_jet needs delta with zero order-0 term; use shift_const first")
    N = min(K.order, delta.order)
    cut = K0.cutoff
    if all(t.max_abs() == 0.0 for t in delta.terms[:N + 1]):
        return K.truncate(N)
    comps = [EpsSeries([t.component(i) for t in delta.terms[:N + 1]]) for i in range(d)]
    if method == "auto":
        nmodes = int(np.count_nonzero(np.any(K0.coeffs != 0, axis=0)))
        method = "modes" if nmodes <= mode_threshold else "taylor"
    if method == "taylor":
        def derivs(alpha):
            return EpsSeries([_deriv_multi(t, alpha) for t in K.terms[:N + 1]])
        out = taylor_shift(derivs, [c.map(lambda t: t.with_cutoff(cut)) for c in comps], N)
        return out.map(lambda t: t.with_cutoff(cut))
    if method == "modes":
        return _shift_by_modes(K.truncate(N), comps, cut)
    raise ValueError(f"unknown method {method!r}")


def _shift_by_modes(K: EpsSeries, comps, cut: int) -> EpsSeries:
    K0 = K.terms[0]
    d, N = K0.d, K.order
    active = np.zeros(K0.coeffs.shape[1:], dtype=bool)
    for t in K.terms:
        active |= np.any(t.coeffs != 0, axis=0)
    ks = np.argwhere(active) - cut
    result = EpsSeries([K0 * 0.0] * (N + 1))
    for k in ks:
        # a = -2 pi i k . delta, a scalar TorusFourier jet with a_0 = 0
        a_terms = []
        for j in range(N + 1):
            acc = None
            for i in range(d):
                if k[i] == 0:
                    continue
                t = comps[i].terms[j] * (-2j * np.pi * k[i])
                acc = t if acc is None else acc + t
            a_terms.append(acc if acc is not None else TorusFourier.zeros(d, 1, cut))
        e = [TorusFourier.constant([1.0], d, cut)]
        for n in range(1, N + 1):
            e.append(_sum(prod(a_terms[m], e[n - m], cut) * (m / n) for m in range(1, n + 1)))
        wave = TorusFourier.from_modes({tuple(k): 1.0}, d, 1, cut, real=False)
        ek = [prod(wave, t, cut) for t in e]
        kc = [TorusFourier.constant(t.coeff(k), d, cut) for t in K.terms]
        piece = EpsSeries(ek) * EpsSeries(kc)
        result = result + piece
    if K0.real:
        result = result.map(lambda t: TorusFourier(_real_sym(t), d, real=True,
                                                   shape=K0.shape, check=False))
    return result.map(lambda t: t.reshape(K0.shape) if t.n == K0.n else t)


def _real_sym(t: TorusFourier):
    c = t.coeffs
    return 0.5 * (c + np.conj(np.flip(c, axis=tuple(range(1, c.ndim)))))


# ------------------------------------------------------------ implicit delays
def implicit_delay_jet(G: Callable, order: int, var: str = "eps", start=None) -> EpsSeries:
    """Solve s = x * G(s) with s(0) = 0 as a jet of the given order.

    Each pass s <- x * G(s) fixes one more coefficient exactly, so exactly
    ``order`` passes are made.
    """
    zero = 0.0 if start is None else start
    s = EpsSeries.constant(zero, order, var)
    for _ in range(order):
        g = G(s)
        if not isinstance(g, EpsSeries):
            g = EpsSeries.constant(g, order, var)
        s = g.truncate(order).times_var(1)
    return s
