import math

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmaring.domain import RingDomain, SmoothDomain
from cmaring.solver import SolveConfig, solve

settings.register_profile("lab", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("lab")

E = math.e


def complex_matrices(m, scale=1.0):
    parts = arrays(np.float64, (2, m, m),
                   elements=st.floats(-scale, scale, allow_nan=False, allow_infinity=False))
    return parts.map(lambda a: a[0] + 1j * a[1])


@st.composite
def symmetric(draw, max_m=4, scale=2.0):
    m = draw(st.integers(1, max_m))
    X = draw(complex_matrices(m, scale))
    return 0.5 * (X + X.T)


@st.composite
def hermitian_pd(draw, m, lo=0.1, hi=5.0):
    X = draw(complex_matrices(m))
    U, _ = np.linalg.qr(X + 3 * np.eye(m))
    lam = draw(arrays(np.float64, (m,), elements=st.floats(lo, hi)))
    return U @ np.diag(lam) @ U.conj().T


@st.composite
def gauges(draw, max_m=3):
    m = draw(st.integers(1, max_m))
    A = draw(hermitian_pd(m))
    X = draw(complex_matrices(m))
    B = 0.5 * (X + X.T)
    return A, B


def ball_ring(r=1.0, R=E):
    return RingDomain(SmoothDomain.ball(np.zeros(2), r), SmoothDomain.ball(np.zeros(2), R))


def ellipsoid_ring():
    H = np.diag([1.0, 4.0])
    return RingDomain(SmoothDomain.ellipsoid(H), SmoothDomain.ellipsoid(H / 9.0))


@pytest.fixture(scope="session")
def radial_solution():
    ring = ball_ring()
    return ring, solve(ring, None, SolveConfig(eps=0.05, resolution=400), tier="radial")


@pytest.fixture(scope="session")
def ellipsoid_solution():
    ring = ellipsoid_ring()
    return ring, solve(ring, None, SolveConfig(eps=0.1, resolution=129), tier="reinhardt")
