import csv
import math

import numpy as np
import pytest

from sdde_lindstedt.errors import DegenerateError, HistoryError
from sdde_lindstedt.lindstedt import SDDEModel
from sdde_lindstedt.oracle import (HistorySegment, compare_trajectory, fit_order, integrate_sdde,
                                   write_comparison_csv, write_trajectory_csv)


def decay_ode():
    return SDDEModel(n=1, d=1, f=lambda y, zs, eps: [-y[0]])


def unit_delay():
    # form B with eps = 1 turns the delayed slot into y(t - 1)
    return SDDEModel(n=1, d=1, form="B", delays=(lambda y: 1.0,),
                     f=lambda y, zs, eps: [-zs[0][0]])


def test_linear_ode():
    seg = integrate_sdde(decay_ode(), 0.0, lambda t: np.array([math.exp(-t)]), 1.0, 1e-3,
                         span=0.01)
    assert abs(seg.values[-1, 0] - math.exp(-1)) <= 1e-8


def test_method_of_steps():
    seg = integrate_sdde(unit_delay(), 1.0, lambda t: np.array([1.0]), 2.0, 1e-3, span=1.0,
                         history_derivative=lambda t: np.array([0.0]))
    for t in np.linspace(0, 2, 41):
        exact = 1 - t if t <= 1 else 1 - t + (t - 1) ** 2 / 2
        assert abs(seg(t)[0] - exact) <= 1e-8


def test_integrator_order_four():
    errs = []
    for dt in (0.1, 0.05, 0.025):
        seg = integrate_sdde(decay_ode(), 0.0, lambda t: np.array([math.exp(-t)]), 2.0, dt,
                             span=dt)
        errs.append((dt, abs(seg.values[-1, 0] - math.exp(-2))))
    assert abs(fit_order(errs)[0] - 4) <= 0.2


def test_richardson_quartic(quartic):
    entry, K0, om0 = quartic
    from sdde_lindstedt.oracle import series_trajectory
    from sdde_lindstedt.lindstedt import expand_invariance
    r = expand_invariance(entry.model, K0, om0, 1)
    hist = series_trajectory(r, 0.05)
    T = 1.0
    finals = [integrate_sdde(entry.model, 0.05, hist, T, dt, span=1.0).values[-1]
              for dt in (0.02, 0.01, 0.005)]
    d1 = np.max(np.abs(finals[0] - finals[1]))
    d2 = np.max(np.abs(finals[1] - finals[2]))
    assert 16 / 1.5 <= d1 / d2 <= 16 * 1.5


def test_dense_output_at_knots():
    seg = integrate_sdde(decay_ode(), 0.0, lambda t: np.array([math.exp(-t)]), 0.5, 0.01,
                         span=0.02)
    for t, v in zip(seg.times[::7], seg.values[::7]):
        assert np.array_equal(seg(t), v)


def test_history_errors():
    seg = HistorySegment(0.0, 0.1, np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(HistoryError):
        seg(0.3)
    with pytest.raises(HistoryError):
        integrate_sdde(unit_delay(), 1.0, lambda t: np.array([1.0]), 0.5, 0.01, span=0.5)


def test_implicit_delay_relation():
    # s = eps (1 + z^2 / 2) with z = y(t - s)
    seen = []

    def r(y, z):
        return 1.0 + 0.5 * z[0] * z[0]

    def f(y, zs, eps):
        seen.append(zs[0][0])
        return [-0.5 * zs[0][0]]
    model = SDDEModel(n=1, d=1, delays=(r,), implicit=True, f=f)
    eps = 0.1
    seg = integrate_sdde(model, eps, lambda t: np.array([math.cos(t)]), 1.0, 1e-2, span=0.5,
                         history_derivative=lambda t: np.array([-math.sin(t)]))
    # check the relation at a knot directly with the dense output
    t = 0.73
    s = 0.0
    for _ in range(100):
        s = eps * r(None, seg(t - s))
    assert abs(s - eps * r(None, seg(t - s))) <= 1e-12


def test_compare_trajectory_eps_zero_and_ratio(quartic):
    entry, K0, om0 = quartic
    from sdde_lindstedt.lindstedt import expand_invariance
    r = expand_invariance(entry.model, K0, om0, 2)
    period = 1.0 / om0[0]
    assert compare_trajectory(entry.model, r, 0.0, period, dt=2e-3) <= 1e-9
    far = compare_trajectory(entry.model, r, 1e-2, period, dt=2e-3, order=0)
    near = compare_trajectory(entry.model, r, 1e-2, period, dt=2e-3, order=1)
    assert near < far


def test_fit_order_examples(rng):
    eps = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    s, c, dev = fit_order(list(zip(eps, 3 * eps ** 4)))
    assert abs(s - 4) <= 1e-12 and abs(c - math.log(3)) <= 1e-10 and dev <= 1e-12
    noisy = 3 * eps ** 4 * (1 + 0.05 * rng.uniform(-1, 1, size=4))
    assert abs(fit_order(list(zip(eps, noisy)))[0] - 4) <= 0.1
    assert abs(fit_order(list(zip(eps, np.full(4, 2.5))))[0]) <= 1e-12
    with pytest.raises(DegenerateError):
        fit_order([(1e-3, 1.0), (2e-3, 0.0), (4e-3, 1.0)])
    with pytest.raises(DegenerateError):
        fit_order([(1e-3, 1.0), (2e-3, 1.0)])


def test_csv_writers(tmp_path):
    seg = HistorySegment(0.0, 0.5, [[1.0, 2.0], [3.0, 0.1]], [[0.0, 0.0], [0.0, 0.0]])
    write_trajectory_csv(tmp_path / "t.csv", seg)
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "y1", "y2"] and float(rows[2][2]) == 0.1
    write_comparison_csv(tmp_path / "c.csv", [(1e-3, 1 / 3)])
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["eps", "sup_distance"] and float(rows[1][1]) == 1 / 3
