"""Truncated vector-valued Fourier series on the torus T^d = R^d / Z^d.

A :class:`TorusFourier` stores the coefficients of

    u(theta) = sum_{|k|_1 <= K} u_k exp(2 pi i k . theta)

in a dense box ``[-K, K]^d`` whose modes outside the l1 ball are kept at
zero.  Values are immutable; every operation returns a new object.

Products are computed by sampling on an alias-free grid, so the retained
coefficients coincide with the exact truncated convolution up to FFT
round-off.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConsistencyError, ShapeError

__all__ = [
    "TorusFourier",
    "add",
    "prod",
    "dot",
    "deriv",
    "deriv_dir",
    "shift_const",
    "average",
    "norm_xi",
    "evaluate",
    "grid_points",
]

IMAG_TOL = 1e-12


@lru_cache(maxsize=64)
def _box(d: int, cutoff: int):
    """Mode vectors of the box, shape (d, 2K+1, ..., 2K+1), and the l1 mask."""
    axes = [np.arange(-cutoff, cutoff + 1)] * d
    ks = np.array(np.meshgrid(*axes, indexing="ij"))
    mask = np.abs(ks).sum(axis=0) <= cutoff
    ks.setflags(write=False)
    mask.setflags(write=False)
    return ks, mask


@lru_cache(maxsize=64)
def _ball_modes(d: int, cutoff: int) -> np.ndarray:
    ks, mask = _box(d, cutoff)
    return ks[:, mask].T.copy()


def grid_points(d: int, size: int) -> np.ndarray:
    """Equispaced grid on T^d as an array of shape (d, size, ..., size)."""
    axes = [np.arange(size) / size] * d
    return np.array(np.meshgrid(*axes, indexing="ij"))


def _mode_axes(d: int) -> tuple:
    return tuple(range(-d, 0))


def _reflect(c: np.ndarray, d: int) -> np.ndarray:
    return np.flip(c, axis=_mode_axes(d))


class TorusFourier:
    """Truncated Fourier series ``T^d -> C^n`` (or ``R^n`` when ``real``).

    ``shape`` is the value shape; it defaults to ``(n,)`` and may be a
    matrix shape such as ``(n, n)`` for frames.  Internally the coefficient
    array has shape ``(n, 2K+1, ..., 2K+1)`` with n = prod(shape).
    """

    __slots__ = ("coeffs", "d", "cutoff", "real", "xi", "shape")

    def __init__(self, coeffs, d: int, real: bool = True, xi: float | None = None,
                 shape: Sequence[int] | None = None, check: bool = True):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != d + 1:
            raise ShapeError(f"expected {d + 1}-dim coefficient array, got {c.ndim}")
        side = c.shape[1]
        if side % 2 != 1 or any(s != side for s in c.shape[1:]):
            raise ShapeError("coefficient box must be cubic with odd side")
        cutoff = side // 2
        _, mask = _box(d, cutoff)
        c = np.where(mask, c, 0.0)
        n = c.shape[0]
        shp = (n,) if shape is None else tuple(int(s) for s in shape)
        if int(np.prod(shp)) != n:
            raise ShapeError(f"value shape {shp} incompatible with n={n}")
        if real and check:
            asym = np.max(np.abs(c - np.conj(_reflect(c, d)))) if c.size else 0.0
            if asym != 0.0:
                raise ConsistencyError("real_flag set but coefficients are not conjugate-symmetric",
                                       asymmetry=float(asym))
        c.setflags(write=False)
        self.coeffs = c
        self.d = d
        self.cutoff = cutoff
        self.real = bool(real)
        self.xi = xi
        self.shape = shp

    # ------------------------------------------------------------------ builders
    @classmethod
    def zeros(cls, d: int, n: int, cutoff: int, shape=None) -> "TorusFourier":
        return cls(np.zeros((n,) + (2 * cutoff + 1,) * d), d, shape=shape)

    @classmethod
    def constant(cls, value, d: int, cutoff: int, shape=None) -> "TorusFourier":
        v = np.atleast_1d(np.asarray(value)).reshape(-1)
        c = np.zeros((v.size,) + (2 * cutoff + 1,) * d, dtype=complex)
        c[(slice(None),) + (cutoff,) * d] = v
        return cls(c, d, real=bool(np.all(np.imag(v) == 0)), shape=shape)

    @classmethod
    def from_modes(cls, modes: Mapping, d: int, n: int, cutoff: int,
                   real: bool = True) -> "TorusFourier":
        """Build from ``{k: coefficient}``; with ``real`` the -k partners are filled in."""
        c = np.zeros((n,) + (2 * cutoff + 1,) * d, dtype=complex)
        for k, val in modes.items():
            kk = tuple(int(x) for x in np.atleast_1d(k))
            if len(kk) != d:
                raise ShapeError(f"mode {kk} has wrong length for d={d}")
            if sum(abs(x) for x in kk) > cutoff:
                continue
            idx = tuple(x + cutoff for x in kk)
            val = np.broadcast_to(np.asarray(val, dtype=complex), (n,))
            c[(slice(None),) + idx] = val
            if real:
                c[(slice(None),) + tuple(cutoff - x for x in kk)] = np.conj(val)
        if real:
            c = _symmetrize(c, d)
        return cls(c, d, real=real)

    @classmethod
    def from_grid(cls, values, d: int, cutoff: int, real: bool | None = None) -> "TorusFourier":
        """Interpolate samples on :func:`grid_points`; the last ``d`` axes are the grid."""
        v = np.asarray(values)
        if real is None:
            real = not np.iscomplexobj(v)
        shape = v.shape[:-d] if v.ndim > d else (1,)
        flat = v.reshape((int(np.prod(shape)),) + v.shape[v.ndim - d:])
        return cls(_grid_to_coeffs(flat, d, cutoff, real), d, real=real, shape=shape,
                   check=False)

    @classmethod
    def from_function(cls, func, d: int, cutoff: int, grid: int | None = None,
                      real: bool = True, shape=None) -> "TorusFourier":
        """Sample ``func(theta)`` (theta of shape (d, ...)) and interpolate."""
        G = grid or (2 * cutoff + 1) * 2
        vals = np.asarray(func(grid_points(d, G)))
        out = cls.from_grid(vals, d, cutoff, real=real)
        return out if shape is None else out.reshape(shape)

    # ---------------------------------------------------------------- properties
    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def coeff(self, k) -> np.ndarray:
        kk = tuple(int(x) for x in np.atleast_1d(k))
        if sum(abs(x) for x in kk) > self.cutoff:
            return np.zeros(self.n, dtype=complex)
        return self.coeffs[(slice(None),) + tuple(x + self.cutoff for x in kk)].copy()

    def modes(self) -> np.ndarray:
        return _ball_modes(self.d, self.cutoff)

    def _like(self, coeffs, real=None, shape=None) -> "TorusFourier":
        r = self.real if real is None else real
        if r:
            coeffs = _symmetrize(coeffs, self.d)
        return TorusFourier(coeffs, self.d, real=r, xi=self.xi,
                            shape=self.shape if shape is None else shape, check=False)

    def with_cutoff(self, cutoff: int) -> "TorusFourier":
        """Pad or truncate to a new cutoff."""
        K = self.cutoff
        if cutoff == K:
            return self
        new = np.zeros((self.n,) + (2 * cutoff + 1,) * self.d, dtype=complex)
        m = min(K, cutoff)
        src = (slice(None),) + (slice(K - m, K + m + 1),) * self.d
        dst = (slice(None),) + (slice(cutoff - m, cutoff + m + 1),) * self.d
        new[dst] = self.coeffs[src]
        return TorusFourier(new, self.d, real=self.real, xi=self.xi, shape=self.shape,
                            check=False)

    def component(self, i) -> "TorusFourier":
        idx = int(np.ravel_multi_index(tuple(np.atleast_1d(i)), self.shape)) \
            if len(self.shape) > 1 else int(i)
        return TorusFourier(self.coeffs[idx:idx + 1], self.d, real=self.real, xi=self.xi,
                            check=False)

    def reshape(self, shape) -> "TorusFourier":
        return TorusFourier(self.coeffs, self.d, real=self.real, xi=self.xi, shape=shape,
                            check=False)

    @staticmethod
    def stack(parts: Sequence["TorusFourier"]) -> "TorusFourier":
        K = max(p.cutoff for p in parts)
        ps = [p.with_cutoff(K) for p in parts]
        c = np.concatenate([p.coeffs for p in ps], axis=0)
        return TorusFourier(c, ps[0].d, real=all(p.real for p in ps), check=False)

    # ---------------------------------------------------------------- arithmetic
    def __add__(self, other):
        if isinstance(other, TorusFourier):
            return add(self, other)
        if np.isscalar(other) or np.ndim(other) == 1:
            return add(self, TorusFourier.constant(np.broadcast_to(other, (self.n,)),
                                                   self.d, self.cutoff, shape=self.shape))
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return TorusFourier(-self.coeffs, self.d, real=self.real, xi=self.xi,
                            shape=self.shape, check=False)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TorusFourier):
            return prod(self, other, cutoff=max(self.cutoff, other.cutoff))
        a = np.asarray(other)
        if a.ndim == 0:
            real = self.real and np.isrealobj(a)
            return TorusFourier(self.coeffs * a, self.d, real=real, xi=self.xi,
                                shape=self.shape, check=False)
        if a.ndim == 1 and a.size == self.n:
            real = self.real and np.isrealobj(a)
            c = self.coeffs * a.reshape((-1,) + (1,) * self.d)
            return TorusFourier(c, self.d, real=real, xi=self.xi, shape=self.shape,
                                check=False)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.ndim(other) == 0:
            return self * (1.0 / other)
        return NotImplemented

    def conj(self) -> "TorusFourier":
        return TorusFourier(np.conj(_reflect(self.coeffs, self.d)), self.d, real=self.real,
                            shape=self.shape, check=False)

    # ------------------------------------------------------------------- samples
    def to_grid(self, size: int) -> np.ndarray:
        """Values on :func:`grid_points` (d, size); shape ``self.shape + (size,)*d``."""
        vals = _coeffs_to_grid(self.coeffs, self.d, size)
        if self.real:
            vals = vals.real
        return vals.reshape(self.shape + vals.shape[1:])

    def __call__(self, theta):
        return evaluate(self, theta)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def __repr__(self):
        return (f"TorusFourier(d={self.d}, n={self.n}, cutoff={self.cutoff}, "
                f"real={self.real})")

    # ---------------------------------------------------------------------- json
    def to_json(self) -> dict:
        ks, mask = _box(self.d, self.cutoff)
        nz = mask & np.any(self.coeffs != 0, axis=0)
        entries = []
        for idx in zip(*np.nonzero(nz)):
            c = self.coeffs[(slice(None),) + idx]
            entries.append({"k": [int(ks[(j,) + idx]) for j in range(self.d)],
                            "re": [float(x) for x in c.real],
                            "im": [float(x) for x in c.imag]})
        out = {"d": self.d, "n": self.n, "cutoff": self.cutoff, "real": self.real,
               "coeffs": entries}
        if self.shape != (self.n,):
            out["shape"] = list(self.shape)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TorusFourier":
        d, n, K = int(obj["d"]), int(obj["n"]), int(obj["cutoff"])
        c = np.zeros((n,) + (2 * K + 1,) * d, dtype=complex)
        for e in obj["coeffs"]:
            idx = tuple(int(x) + K for x in e["k"])
            c[(slice(None),) + idx] = np.array(e["re"]) + 1j * np.array(e["im"])
        return cls(c, d, real=bool(obj["real"]), shape=obj.get("shape"))


# ---------------------------------------------------------------------- helpers
def _symmetrize(c: np.ndarray, d: int) -> np.ndarray:
    return 0.5 * (c + np.conj(_reflect(c, d)))


def _coeffs_to_grid(c: np.ndarray, d: int, size: int) -> np.ndarray:
    K = c.shape[1] // 2
    if size < 2 * K + 1:
        raise ShapeError(f"grid of {size} points cannot resolve cutoff {K}")
    full = np.zeros((c.shape[0],) + (size,) * d, dtype=complex)
    mid = size // 2
    full[(slice(None),) + (slice(mid - K, mid + K + 1),) * d] = c
    full = np.fft.ifftshift(full, axes=_mode_axes(d))
    return np.fft.ifftn(full, axes=_mode_axes(d)) * size ** d


def _grid_to_coeffs(v: np.ndarray, d: int, cutoff: int, real: bool) -> np.ndarray:
    size = v.shape[-1]
    if size < 2 * cutoff + 1:
        raise ShapeError(f"grid of {size} points cannot resolve cutoff {cutoff}")
    c = np.fft.fftshift(np.fft.fftn(v, axes=_mode_axes(d)), axes=_mode_axes(d)) / size ** d
    mid = size // 2
    c = c[(slice(None),) + (slice(mid - cutoff, mid + cutoff + 1),) * d]
    _, mask = _box(d, cutoff)
    c = np.where(mask, c, 0.0)
    if real:
        c = _symmetrize(c, d)
    return c


def _check_pair(u: TorusFourier, v: TorusFourier):
    if u.d != v.d:
        raise ShapeError(f"torus dimensions differ: {u.d} vs {v.d}")


# ------------------------------------------------------------------- operations
def add(u: TorusFourier, v: TorusFourier) -> TorusFourier:
    _check_pair(u, v)
    if u.n != v.n:
        raise ShapeError(f"range dimensions differ: {u.n} vs {v.n}")
    K = max(u.cutoff, v.cutoff)
    c = u.with_cutoff(K).coeffs + v.with_cutoff(K).coeffs
    return TorusFourier(c, u.d, real=u.real and v.real, shape=u.shape, check=False)


def prod(u: TorusFourier, v: TorusFourier, cutoff: int | None = None) -> TorusFourier:
    """Truncated convolution.

    Ranges combine componentwise when equal, or by broadcasting when one
    side is scalar-valued.  The default product cutoff is twice the larger
    input cutoff.
    """
    _check_pair(u, v)
    if u.n == v.n:
        shape = u.shape
    elif u.n == 1:
        shape = v.shape
    elif v.n == 1:
        shape = u.shape
    else:
        raise ShapeError(f"incompatible ranges for product: {u.n} and {v.n}")
    Kout = 2 * max(u.cutoff, v.cutoff) if cutoff is None else int(cutoff)
    G = u.cutoff + v.cutoff + Kout + 1
    G = max(G, 2 * Kout + 1)
    vals = _coeffs_to_grid(u.coeffs, u.d, G) * _coeffs_to_grid(v.coeffs, v.d, G)
    real = u.real and v.real
    if real:
        vals = vals.real
    c = _grid_to_coeffs(vals, u.d, Kout, real)
    return TorusFourier(c, u.d, real=real, shape=shape, check=False)


def dot(u: TorusFourier, v: TorusFourier, cutoff: int | None = None) -> TorusFourier:
    """Bilinear pairing sum_i u_i v_i (no conjugation); scalar-valued result."""
    p = prod(u, v, cutoff)
    c = p.coeffs.sum(axis=0, keepdims=True)
    return TorusFourier(c, u.d, real=p.real, check=False)


def deriv(u: TorusFourier, axis: int = 0) -> TorusFourier:
    """Partial derivative with respect to theta_axis."""
    ks, _ = _box(u.d, u.cutoff)
    c = u.coeffs * (2j * np.pi * ks[axis])
    return u._like(c)


def deriv_dir(u: TorusFourier, w) -> TorusFourier:
    """The operator w . d/dtheta: mode k is multiplied by 2 pi i (w . k)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (u.d,):
        raise ShapeError(f"frequency vector must have length {u.d}")
    ks, _ = _box(u.d, u.cutoff)
    wk = np.tensordot(w, ks, axes=1)
    return u._like(u.coeffs * (2j * np.pi * wk))


def shift_const(u: TorusFourier, delta) -> TorusFourier:
    """Represent theta -> u(theta - delta)."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.shape != (u.d,):
        raise ShapeError(f"shift must have length {u.d}")
    ks, _ = _box(u.d, u.cutoff)
    phase = np.exp(-2j * np.pi * np.tensordot(delta, ks, axes=1))
    return u._like(u.coeffs * phase)


def average(u: TorusFourier) -> np.ndarray:
    """The k = 0 coefficient (real when ``u.real``)."""
    c = u.coeffs[(slice(None),) + (u.cutoff,) * u.d]
    return c.real.copy() if u.real else c.copy()


def norm_xi(u: TorusFourier, xi: float = 0.0) -> float:
    """sum_k exp(2 pi xi |k|_1) ||u_k|| with Euclidean coefficient norms."""
    ks, mask = _box(u.d, u.cutoff)
    weights = np.exp(2 * np.pi * xi * np.abs(ks).sum(axis=0))
    mags = np.sqrt(np.sum(np.abs(u.coeffs) ** 2, axis=0))
    return float(np.sum(np.where(mask, weights * mags, 0.0)))


class ModeEvaluator:
    """Cached exponential matrix for evaluating many series at fixed points."""

    def __init__(self, d: int, cutoff: int, points):
        pts = np.asarray(points, dtype=float).reshape(d, -1)
        self.d, self.cutoff = d, cutoff
        self.point_shape = np.shape(points)[1:]
        self.modes = _ball_modes(d, cutoff)
        self.matrix = np.exp(2j * np.pi * (self.modes @ pts)).T  # (m, M)
        _, mask = _box(d, cutoff)
        self._mask = mask

    def __call__(self, u: TorusFourier) -> np.ndarray:
        if u.cutoff != self.cutoff:
            u = u.with_cutoff(self.cutoff)
        flat = u.coeffs[:, self._mask]  # (n, M)
        vals = flat @ self.matrix.T  # (n, m)
        if u.real:
            scale = np.sum(np.abs(flat)) + 1e-300
            if np.max(np.abs(vals.imag), initial=0.0) > IMAG_TOL * scale:
                raise ConsistencyError("imaginary residue on a real series")
            vals = vals.real
        return vals.reshape(u.shape + self.point_shape)


def evaluate(u: TorusFourier, theta) -> np.ndarray:
    """Evaluate at one point (length-d) or many points (shape (d, ...))."""
    th = np.asarray(theta, dtype=float)
    single = th.ndim <= 1
    if single:
        th = th.reshape(u.d, 1)
    out = ModeEvaluator(u.d, u.cutoff, th)(u)
    return out[..., 0] if single else out
