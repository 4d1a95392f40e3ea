import numpy as np
import pytest

from sdde_lindstedt.divisors import check_diophantine
from sdde_lindstedt.errors import SeedError, ShapeError
from sdde_lindstedt.fourier import deriv_dir
from sdde_lindstedt.jets import EpsSeries, implicit_delay_jet, jet_apply
from sdde_lindstedt.lindstedt import (_Grid, delay_jets, expand_invariance,
                                      invariance_residual_terms)
from sdde_lindstedt.limit_cycle import FourierTaylor, cycle_residual
from sdde_lindstedt.models import catalog, get_model, quartic_frequency
from sdde_lindstedt.oracle import fit_order


def test_catalog_ids():
    assert set(catalog()) == {"electro", "quartic", "reducible_diagonal", "reducible_hamiltonian",
                              "reducible_jordan", "vdp"}
    with pytest.raises(ShapeError):
        get_model("nope")


@pytest.mark.parametrize("mid", ["electro", "quartic", "reducible_diagonal",
                                 "reducible_hamiltonian", "reducible_jordan", "vdp"])
def test_seed_gate(mid):
    e = get_model(mid)
    seed = e.seed()
    if e.model.structure == "limit_cycle":
        W0, om0, lam0 = seed
        E = cycle_residual(e.model, EpsSeries([W0]), EpsSeries([om0]), EpsSeries([lam0]))
        assert E.terms[0].max_abs() <= 1e-8 * max(1.0, W0.max_abs())
        assert min(abs(lam0), 2 * np.pi * abs(om0)) > 0.1
        return
    K0, om0 = seed
    grid = _Grid(K0.d, K0.cutoff)
    res = invariance_residual_terms(e.model, [K0], [om0], 0, grid)[0]
    scale = max(1.0, float(np.max(np.abs(grid.values(deriv_dir(K0, om0))))))
    assert float(np.max(np.abs(res))) <= 1e-8 * scale
    if K0.d >= 2:
        assert check_diophantine(om0).passed


def test_quartic_frequency():
    assert abs(2 * np.pi * quartic_frequency(1e-4) - 1) <= 1e-8
    assert quartic_frequency(0.8) > quartic_frequency(0.4) > quartic_frequency(0.1)
    e = get_model("quartic")
    assert e.info.get("twist", 1.0) != 0


def test_vdp_attracting(vdp):
    _, (W0, om0, lam0) = vdp
    assert lam0 < 0 and isinstance(W0, FourierTaylor)


def test_electro_decoupled_newtonian():
    e = get_model("electro", q1q2=0.0, relativistic=False)
    K0, om0 = e.seed()
    r = expand_invariance(e.model, K0, om0, 3)
    assert all(t.max_abs() == 0 for t in r.K.terms[1:])
    assert all(np.all(o == 0) for o in r.omega.terms[1:])


def test_electro_decoupled_relativistic():
    e = get_model("electro", q1q2=0.0)
    K0, om0 = e.seed()
    r = expand_invariance(e.model, K0, om0, 2)
    assert r.K.terms[1].max_abs() == 0
    c = r.K.terms[2].coeffs
    # particle 1 (components 0, 2) only depends on theta_1, particle 2 only on theta_2
    cut = r.K.terms[2].cutoff
    assert np.max(np.abs(np.delete(c[[0, 2]], cut, axis=2))) <= 1e-12
    assert np.max(np.abs(np.delete(c[[1, 3]], cut, axis=1))) <= 1e-12


@pytest.fixture(scope="module")
def electro_pair():
    out = {}
    for implicit in (False, True):
        e = get_model("electro", implicit=implicit)
        K0, om0 = e.seed()
        out[implicit] = (e, expand_invariance(e.model, K0, om0, 2))
    return out


def test_electro_implicit_vs_explicit(electro_pair):
    (_, a), (_, b) = electro_pair[False], electro_pair[True]
    assert np.max(np.abs(a.K.terms[1].coeffs - b.K.terms[1].coeffs)) <= 1e-12
    assert np.allclose(a.omega.terms[1], b.omega.terms[1], atol=1e-12, rtol=0)
    assert np.max(np.abs(a.K.terms[2].coeffs - b.K.terms[2].coeffs)) > 1e-8


def test_electro_implicit_delay_jet_order_one(electro_pair):
    (ea, ra), (eb, rb) = electro_pair[False], electro_pair[True]
    K0 = ra.K.terms[0]
    grid = _Grid(2, K0.cutoff)
    N = 4
    Ks = list(ra.K.terms) + [K0 * 0.0] * (N - 2)
    oms = list(ra.omega.terms) + [np.zeros(2)] * (N - 2)
    sa = delay_jets(ea.model, Ks, oms, N, grid)
    sb = delay_jets(eb.model, Ks, oms, N, grid)
    for x, y in zip(sa, sb):
        assert np.array_equal(x.terms[1], y.terms[1])


def test_electro_implicit_substitution(electro_pair):
    # numeric fixed point at each grid point vs the order-4 jet
    eb, rb = electro_pair[True]
    K0 = rb.K.terms[0]
    om0 = rb.omega.terms[0]
    grid = _Grid(2, K0.cutoff, 25)
    N = 4
    zero = K0 * 0.0
    s1 = delay_jets(eb.model, [K0] + [zero] * N, [om0] + [np.zeros(2)] * N, N, grid)[0]
    from sdde_lindstedt.fourier import ModeEvaluator
    pts = grid.points
    y = grid.values(K0)
    errs = []
    for eps in (5e-3, 1e-2, 2e-2, 4e-2):
        s = np.zeros(grid.shape)
        for _ in range(100):
            z = ModeEvaluator(2, K0.cutoff, pts - om0.reshape(2, 1, 1) * s)(K0)
            s = eps * np.abs(y[0] - z[1])
        errs.append((eps, float(np.max(np.abs(s1(eps) - s)))))
    assert abs(fit_order(errs)[0] - (N + 1)) <= 0.3


def test_implicit_jet_static_particles():
    # static charges: the delay is eps times the distance, nothing more
    s = implicit_delay_jet(lambda s: jet_apply("sqrt", EpsSeries.constant(9.0, 4) + s * 0.0), 4)
    assert np.allclose([complex(t) for t in s.terms], [0, 3, 0, 0, 0])


def test_electro_collision_rejected():
    with pytest.raises(SeedError):
        get_model("electro", separation=0.5)


def test_reducible_spectrum():
    with pytest.raises(ShapeError):
        get_model("reducible_diagonal", mu=0.0)
    e = get_model("reducible_jordan")
    assert e.info["spectrum"] == [0.0, -1.0, -1.0]
