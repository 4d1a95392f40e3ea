import numpy as np
import pytest

from sdde_lindstedt.fourier import TorusFourier
from sdde_lindstedt.models import get_model


def random_trig(rng, d=1, n=1, cutoff=8, real=True, decay=0.5):
    """Random trigonometric polynomial with geometrically decaying modes."""
    shape = (n,) + (2 * cutoff + 1,) * d
    c = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    axes = np.meshgrid(*[np.arange(-cutoff, cutoff + 1)] * d, indexing="ij")
    c *= decay ** sum(np.abs(a) for a in axes)
    u = TorusFourier(c, d, real=False)
    return u._like(u.coeffs, real=True) if real else u


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def quartic():
    entry = get_model("quartic")
    K0, om0 = entry.seed()
    return entry, K0, om0


@pytest.fixture(scope="session")
def quartic_expansion(quartic):
    from sdde_lindstedt.lindstedt import expand_invariance
    entry, K0, om0 = quartic
    return expand_invariance(entry.model, K0, om0, 3)


@pytest.fixture(scope="session")
def vdp():
    entry = get_model("vdp")
    return entry, entry.seed()


@pytest.fixture(scope="session")
def vdp_newton(vdp):
    from sdde_lindstedt.limit_cycle import run_newton
    entry, seed = vdp
    return run_newton(entry.model, seed, 3)
