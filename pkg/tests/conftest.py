import numpy as np
import pytest

from nctorus.algebra import AlgebraElement, TorusGeometry, add, resize, scale


IRRATIONAL = 1.0 / np.sqrt(2.0)


@pytest.fixture(scope="session")
def geom():
    """2-torus with an irrational deformation parameter."""
    return TorusGeometry.two_torus(IRRATIONAL)


@pytest.fixture(scope="session")
def geom0():
    """Commutative 2-torus (grid-oracle territory)."""
    return TorusGeometry.two_torus(0.0)


@pytest.fixture(scope="session")
def geom3():
    return TorusGeometry.from_upper(3, [0.3, 0.2, 0.1])


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)


def coeff_diff(a, b):
    """Max coefficient difference of two elements on the common box."""
    r = max(a.box.radius, b.box.radius)
    return add(resize(a, r), scale(resize(b, r), -1.0)).max_abs()


def matrix_diff(a, b):
    r = max(a.max_radius(), b.max_radius())
    return (a.resize(r) - b.resize(r)).max_abs()


def trig_pair(geometry, axis, amplitude=1.0):
    """The selfadjoint combination V_e + V_{-e} along an axis."""
    e = np.zeros(geometry.n, dtype=int)
    e[axis] = 1
    return scale(
        add(AlgebraElement.basis(geometry, e), AlgebraElement.basis(geometry, -e)),
        amplitude,
    )
