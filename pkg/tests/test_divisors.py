import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_trig
from sdde_lindstedt.divisors import (check_diophantine, solve_cohomology, solve_cohomology_eps,
                                     solve_jordan_chain, solve_shifted)
from sdde_lindstedt.errors import NearResonanceError
from sdde_lindstedt.fourier import TorusFourier, add, average, deriv_dir
from sdde_lindstedt.jets import EpsSeries

PHI = 0.6180339887


def cos1(cut=4, real=True):
    return TorusFourier.from_modes({1: 0.5}, 1, 1, cut, real=real)


def maxdiff(u, v):
    return float(np.max(np.abs(u.coeffs - v.coeffs)))


def test_diophantine_resonant():
    w = check_diophantine([1.0, 0.5], gamma=0.01, tau=2, kmax=10)
    assert not w.passed and w.min_product == 0.0
    assert tuple(abs(x) for x in w.worst_k) == (1, 2) and w.worst_k[0] * w.worst_k[1] < 0


def test_diophantine_one_dimensional():
    w = check_diophantine([PHI], gamma=0.5, tau=1, kmax=100)
    assert w.passed and abs(w.min_product - PHI) < 1e-12 and abs(w.worst_k[0]) == 1


def test_diophantine_golden_fast():
    t = time.perf_counter()
    w = check_diophantine([1.0, (5 ** 0.5 - 1) / 2], gamma=0.3, tau=1, kmax=200)
    assert time.perf_counter() - t <= 1.0
    assert w.passed
    assert 0 < sum(abs(x) for x in w.worst_k) <= 200
    k = np.array(w.worst_k)
    assert abs(abs(k @ [1.0, (5 ** 0.5 - 1) / 2]) * np.abs(k).sum() - w.min_product) < 1e-12


def test_diophantine_decay_record():
    w = check_diophantine([1.0, PHI], kmax=20)
    assert len(w.subexp_decay) == 20 and all(np.isfinite(w.subexp_decay))
    assert set(w.to_json()) >= {"gamma", "tau", "kmax", "min_product", "worst_k", "passed"}


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.integers(2, 30))
def test_diophantine_monotone(a, b, kmax):
    big = check_diophantine([a, b], gamma=1e-3, tau=2, kmax=kmax)
    small = check_diophantine([a, b], gamma=1e-3, tau=2, kmax=kmax - 1)
    assert small.min_product >= big.min_product
    if big.passed:
        assert small.passed


def test_cohomology_constant_and_single_mode():
    w, avg = solve_cohomology(TorusFourier.constant(1.7, 1, 4), [PHI])
    assert w.max_abs() == 0 and np.allclose(avg, 1.7)
    w, avg = solve_cohomology(cos1(), [PHI])
    want = TorusFourier.from_modes({1: -0.5j / (2 * np.pi * PHI)}, 1, 1, 4)
    assert maxdiff(w, want) < 1e-15 and np.allclose(avg, 0)


def test_cohomology_roundtrip(rng):
    g = random_trig(rng, d=2, n=2, cutoff=6)
    om = [1.0, PHI]
    w, avg = solve_cohomology(g, om)
    assert np.all(w.coeff((0, 0)) == 0)
    back = add(deriv_dir(w, om), TorusFourier.constant(avg, 2, 6))
    assert maxdiff(back, g) <= 1e-12


def test_cohomology_near_resonance():
    g = TorusFourier.from_modes({(1, -2): 1.0}, 2, 1, 3)
    with pytest.raises(NearResonanceError) as exc:
        solve_cohomology(g, [1.0, 0.5])
    assert [abs(x) for x in exc.value.info["k"]] == [1, 2]


def test_shifted_examples():
    w = solve_shifted(TorusFourier.constant(3.0, 1, 2), [PHI], -2.0)
    assert np.allclose(w.coeff(0), 1.5)
    w = solve_shifted(cos1(), [PHI], 1.0)
    assert abs(w.coeff(1)[0] - 0.5 / (2j * np.pi * PHI - 1)) < 1e-15
    assert abs(w.coeff(-1)[0] - 0.5 / (-2j * np.pi * PHI - 1)) < 1e-15
    assert maxdiff(deriv_dir(w, [PHI]) - w, cos1()) <= 1e-12
    assert solve_shifted(TorusFourier.zeros(1, 1, 3), [PHI], 0.4).max_abs() == 0


def test_shifted_zero_mu_requires_zero_average():
    with pytest.raises(NearResonanceError):
        solve_shifted(TorusFourier.constant(1.0, 1, 2), [PHI], 0.0)


def test_jordan_chain_examples(rng):
    g = random_trig(rng, cutoff=5)
    (w,) = solve_jordan_chain([g], [PHI], 0.7)
    assert maxdiff(w, solve_shifted(g, [PHI], 0.7)) == 0
    a, b = TorusFourier.constant(0.3, 1, 2), TorusFourier.constant(-1.1, 1, 2)
    w1, w2 = solve_jordan_chain([a, b], [PHI], 1.0)
    assert np.allclose(w2.coeff(0), 1.1) and np.allclose(w1.coeff(0), -0.3 - 1.1)
    gs = [random_trig(rng, d=2, cutoff=4) for _ in range(3)]
    ws = solve_jordan_chain(gs, [1.0, PHI], 0.4 + 0.2j)
    for i in range(3):
        lhs = deriv_dir(ws[i], [1.0, PHI]) - (0.4 + 0.2j) * ws[i]
        for j in range(i + 1, 3):
            lhs = lhs - ws[j]
        assert maxdiff(lhs, gs[i]) <= 1e-12


def test_jordan_chain_annotates_index():
    g = TorusFourier.constant(1.0, 1, 2)
    with pytest.raises(NearResonanceError) as exc:
        solve_jordan_chain([g, g], [PHI], 1e-12)
    assert exc.value.info["chain_index"] == 2


def test_cohomology_eps_examples(rng):
    N = 3
    zero = TorusFourier.zeros(1, 1, 8)
    eta = EpsSeries([cos1(8)] + [zero] * N)
    phi, ct = solve_cohomology_eps(eta, EpsSeries([np.array([PHI])] + [np.zeros(1)] * N))
    assert maxdiff(phi.terms[0], solve_cohomology(cos1(8), [PHI])[0]) == 0
    assert all(t.max_abs() == 0 for t in phi.terms[1:])
    om1 = 0.3
    phi, ct = solve_cohomology_eps(EpsSeries([cos1(8), zero]),
                                   EpsSeries([np.array([PHI]), np.array([om1])]))
    # single mode: phi_1 = -(om1 / PHI) phi_0
    assert maxdiff(phi.terms[1], phi.terms[0] * (-om1 / PHI)) <= 1e-12
    assert maxdiff(deriv_dir(phi.terms[1], [PHI]), -deriv_dir(phi.terms[0], [om1])) <= 1e-12


def test_cohomology_eps_series_roundtrip(rng):
    N, cut = 5, 16
    etas = []
    for _ in range(N + 1):
        g = random_trig(rng, d=2, cutoff=cut // 2).with_cutoff(cut)
        etas.append(g - TorusFourier.constant(average(g), 2, cut))
    om = [np.array([1.0, PHI])] + [rng.normal(size=2) * 0.3 for _ in range(N)]
    phi, ct = solve_cohomology_eps(EpsSeries(etas), EpsSeries(om))
    for n in range(N + 1):
        acc = None
        for j in range(n + 1):
            t = deriv_dir(phi.terms[n - j], om[j])
            acc = t if acc is None else acc + t
        assert maxdiff(acc, etas[n]) <= 1e-12
        assert np.all(phi.terms[n].coeff((0, 0)) == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-2, 2), st.floats(-1, 1))
def test_solvers_linear(seed, a, mu):
    rng = np.random.default_rng(seed)
    g, h = random_trig(rng, cutoff=4), random_trig(rng, cutoff=4)
    om = [PHI]
    lhs = solve_cohomology(g * a + h, om)[0]
    rhs = solve_cohomology(g, om)[0] * a + solve_cohomology(h, om)[0]
    assert maxdiff(lhs, rhs) <= 1e-13 * (1 + abs(a))
    if abs(mu) > 1e-3:
        lhs = solve_shifted(g * a + h, om, mu)
        rhs = solve_shifted(g, om, mu) * a + solve_shifted(h, om, mu)
        assert maxdiff(lhs, rhs) <= 1e-13 * (1 + abs(a)) / abs(mu)
