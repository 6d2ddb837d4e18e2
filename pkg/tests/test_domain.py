import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmaring.domain import (GeometryError, RingDomain, SmoothDomain, boundary_graph, build_subsolution,
                            cconvexity_modulus, check_nesting, deformation_family, ring_samples,
                            sphere_samples)
from cmaring.wirtinger import to_real
from conftest import ball_ring, ellipsoid_ring


def graph_by_curve_fit(g, h=1e-3):
    """Second-order graph data from the exact height along w = x and w = iy."""
    xs = h * np.arange(-3, 4)
    hx = np.array([g.height(np.array([x])) for x in xs])
    hy = np.array([g.height(np.array([1j * x])) for x in xs])
    cx = np.polyfit(xs, hx, 4)[-3]
    cy = np.polyfit(xs, hy, 4)[-3]
    # height = (A + Re B) x^2 along x and (A - Re B) y^2 along y
    return 0.5 * (cx + cy), 0.5 * (cx - cy)


def test_ball_graph_matches_curve_fit():
    g = boundary_graph(SmoothDomain.ball(np.zeros(2), 1.0), np.array([0, 1.0]))
    A, reB = graph_by_curve_fit(g)
    assert g.A[0, 0].real == pytest.approx(A, abs=1e-6) == pytest.approx(0.5, abs=1e-6)
    assert g.B[0, 0].real == pytest.approx(reB, abs=1e-6)
    assert np.allclose(g.frame.conj().T @ g.frame, np.eye(2), atol=1e-10)


def test_graph_reconstructs_boundary_points():
    dom = SmoothDomain.ellipsoid(np.diag([1.0, 4.0]))
    g = boundary_graph(dom, np.array([0, 0.5]))
    for w in (0.01, 0.02j, 0.015 - 0.01j):
        z = g.boundary_point(np.array([w]))
        assert abs(dom.rho(z[None])[0]) <= 1e-9


def test_ellipsoid_graph_symbolic():
    # rho = |z1|^2 + 4|z2|^2 - 1 at (0, 1/2): |grad| = 4 (real), tangent Hessian |w|^2,
    # so the graph has A = 1/4 and no holomorphic part
    dom = SmoothDomain.ellipsoid(np.diag([1.0, 4.0]))
    g = boundary_graph(dom, np.array([0, 0.5]))
    assert g.A[0, 0].real == pytest.approx(0.25, abs=1e-12)
    assert abs(g.B[0, 0]) <= 1e-12
    A, reB = graph_by_curve_fit(g)
    assert A == pytest.approx(0.25, abs=1e-6)


@pytest.mark.parametrize("R", [1.0, 2.0, 4.0])
def test_ball_modulus_scales_inversely(R):
    rep = cconvexity_modulus(SmoothDomain.ball(np.zeros(2), R), 200)
    assert rep.modulus == pytest.approx(0.5 / R, rel=1e-9)


def test_modulus_rotation_invariant():
    ball = SmoothDomain.ball(np.zeros(2), 1.0)
    rep = cconvexity_modulus(ball, 500)
    assert np.ptp(rep.margins) <= 0.01 * rep.modulus


def test_ellipsoid_modulus_below_ball():
    ell = SmoothDomain.ellipsoid(np.diag([1.0, 16.0]))
    ball = SmoothDomain.ball(np.zeros(2), 1.0)
    assert cconvexity_modulus(ell, 500).modulus < cconvexity_modulus(ball, 500).modulus


def test_nonconvex_callback_reports_witness():
    # dumbbell along Re z1 with a waist at x1 = 0; at the waist the complex
    # tangent line contains the concave x1 direction
    def rho(u):
        x1 = u[:, 0]
        return (x1**2 - 1) ** 2 + u[:, 1] ** 2 + u[:, 2] ** 2 + u[:, 3] ** 2 - 1.2

    def grad(u):
        x1 = u[:, 0]
        g = 2 * u.copy()
        g[:, 0] = 4 * x1 * (x1**2 - 1)
        return g

    def hess(u):
        H = np.zeros((len(u), 4, 4))
        H[:, 0, 0] = 12 * u[:, 0] ** 2 - 4
        H[:, 1, 1] = H[:, 2, 2] = H[:, 3, 3] = 2
        return H

    dom = SmoothDomain.from_callback(2, rho, grad, hess, center=np.zeros(2), name="dumbbell")
    rep = cconvexity_modulus(dom, 800)
    assert rep.modulus is None
    assert rep.min_margin < 0 and abs(rho(to_real(rep.worst_point)[None])[0]) < 1e-8


def test_boundary_graph_errors():
    ball = SmoothDomain.ball(np.zeros(2), 1.0)
    with pytest.raises(GeometryError):
        boundary_graph(ball, np.array([0, 0.5]))
    with pytest.raises(GeometryError):
        SmoothDomain.ball(np.zeros(2), -1)


def test_ring_requires_nesting():
    with pytest.raises(GeometryError):
        RingDomain(SmoothDomain.ball(np.zeros(2), 2.0), SmoothDomain.ball(np.zeros(2), 1.0))
    ring = ball_ring(1.0, 3.0)
    assert ring.thickness() == pytest.approx(2.0)


@given(st.floats(0.2, 3.0), st.integers(0, 10**6))
def test_projection_distance(radius, seed):
    rng = np.random.default_rng(seed)
    dom = SmoothDomain.ellipsoid(np.diag([1.0, 4.0]) / radius**2)
    z = rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2))
    foot, dist, normal = dom.project(z)
    assert np.abs(dom.rho(foot)).max() <= 1e-8 * (1 + 1 / radius**2)
    assert np.allclose(np.abs(dist), np.linalg.norm(to_real(z) - to_real(foot), axis=1), atol=1e-8)
    assert np.all(np.sign(dist) == np.sign(dom.rho(z)))


def test_sphere_samples_unit():
    s = sphere_samples(2, 100)
    assert np.allclose(np.linalg.norm(s, axis=1), 1)


# --- deformation ---------------------------------------------------------------------

def test_deformation_endpoints():
    ring = ellipsoid_ring()
    one = deformation_family(ring, 1.0)
    H0, _ = one.omega0.quadratic_form()
    assert np.allclose(H0, np.diag([1.0, 4.0]))
    zero = deformation_family(ring, 0.0, r_ball=0.2, R_ball=0.4)
    assert zero.is_concentric_balls()
    assert np.allclose(zero.omega0.quadratic_form()[0], np.eye(2) / 0.04)


def test_deformation_keeps_convexity_and_nesting():
    ring = ellipsoid_ring()
    for t in np.linspace(0, 1, 5):
        r = deformation_family(ring, t)
        assert cconvexity_modulus(r.omega0, 200).modulus is not None
        assert cconvexity_modulus(r.omega1, 200).modulus is not None
    assert check_nesting(ring, grid=21, samples=200) < 0


def test_deformation_rejects_bad_t():
    with pytest.raises(ValueError):
        deformation_family(ellipsoid_ring(), 1.5)


# --- subsolution ---------------------------------------------------------------------

def test_subsolution_valid_on_balls():
    ring = ball_ring(1.0, 3.0)
    res = build_subsolution(ring, c=0.05)
    assert res.valid and res.sigma > 0
    psi = res.psi
    b0 = ring.omega0.boundary_samples(200)
    b1 = ring.omega1.boundary_samples(200)
    assert np.abs(psi.value(b0)).max() <= 1e-6
    assert np.abs(psi.value(b1) - 1).max() <= 1e-6
    z = ring_samples(ring, 500, seed=1)
    assert psi.psh_margin(z).min() >= res.sigma - 1e-12


def test_subsolution_normal_derivative_floor():
    ring = ball_ring(1.0, 3.0)
    res = build_subsolution(ring, c=0.05)
    b0 = ring.omega0.boundary_samples(50)
    u = to_real(b0)
    nrm = u / np.linalg.norm(u, axis=1)[:, None]
    h = 1e-7
    from cmaring.wirtinger import from_real
    dn = (res.psi.value(from_real(u + h * nrm)) - res.psi.value(from_real(u))) / h
    assert dn.min() >= res.sigma * (1 - 1e-3)


def test_subsolution_rejects_large_c():
    res = build_subsolution(ball_ring(1.0, 3.0), c=0.9)
    assert not res.valid
    assert res.condition is not None


def test_subsolution_on_ellipsoid_ring():
    res = build_subsolution(ellipsoid_ring())
    assert res.valid, res.reason
