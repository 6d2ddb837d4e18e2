import numpy as np
import pytest

from cmaring.domain import RingDomain, SmoothDomain
from cmaring.field import AnalyticField
from cmaring.foliation2d import (SingularLeaf, cauchy_riemann_residual, leaf_gauge,
                                 leaf_harmonicity_residual, leaf_rows, leaf_trace, leafwise_mp_check,
                                 phi_z_harmonicity)
from conftest import ball_ring

LOG = AnalyticField.log_hermitian(np.eye(2), 0.5, ring=ball_ring(1.0, np.e))


def bend(z):
    return np.stack([z[:, 0], z[:, 1] + z[:, 0] ** 2], axis=1)


def _bent_jets(z):
    # log|F(z)| with F(z) = (z1, z2 + z1^2): a homogeneous solution whose leaves
    # F^-1(complex lines through 0) are parabolas, not lines
    z = np.atleast_2d(z)
    w = bend(z)
    jw = LOG.jets(w)
    J = np.zeros((len(z), 2, 2), complex)      # J[k, i] = dF_k / dz_i
    J[:, 0, 0] = 1
    J[:, 1, 0] = 2 * z[:, 0]
    J[:, 1, 1] = 1
    grad = np.einsum("nk,nki->ni", jw.grad, J)
    herm = np.einsum("nki,nkl,nlj->nij", J, jw.herm, J.conj())
    holo = np.einsum("nki,nkl,nlj->nij", J, jw.holo, J)
    holo[:, 0, 0] += 2 * jw.grad[:, 1]
    return jw.value, grad, herm, holo


BENT = AnalyticField(2, jet_fn=_bent_jets)


def test_bent_jets_match_finite_differences():
    def f(u):
        z = u[:, :2] + 1j * u[:, 2:]
        return 0.5 * np.log(np.sum(np.abs(bend(z)) ** 2, axis=1))
    fd = AnalyticField.from_callable(2, f, h=1e-4)
    p = np.array([[0.3 + 0.1j, 1.1 - 0.2j]])
    a, b = BENT.jets(p), fd.jets(p)
    assert np.allclose(a.grad, b.grad, atol=1e-7)
    assert np.allclose(a.herm, b.herm, atol=1e-5) and np.allclose(a.holo, b.holo, atol=1e-5)


def test_leaf_gauge_examples():
    g = leaf_gauge(LOG, np.array([0, 1.0 + 0j]))
    assert g.a == pytest.approx(0.5) and abs(g.b) <= 1e-12 and g.Q == pytest.approx(0, abs=1e-12)
    quad = AnalyticField.quadratic(np.eye(2), np.diag([0.5, 0.0]))
    g = leaf_gauge(quad, np.array([0, 1.0 + 0j]))
    assert g.a == pytest.approx(1.0) and abs(g.b) == pytest.approx(0.5) and g.Q == pytest.approx(0.25)


def test_leaf_gauge_unitary_invariance():
    rng = np.random.default_rng(3)
    H = np.diag([1.0, 4.0])
    p = np.array([0.4 + 0.3j, 0.7 - 0.5j])
    g0 = leaf_gauge(AnalyticField.log_hermitian(H), p)
    for _ in range(10):
        U, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        # Phi(U w) = 1/2 log(w^H U^H H U w)
        g1 = leaf_gauge(AnalyticField.log_hermitian(U.conj().T @ H @ U), U.conj().T @ p)
        assert g1.Q == pytest.approx(g0.Q, abs=1e-10)
        assert g1.S_leaf == pytest.approx(g0.S_leaf, rel=1e-10)


def test_straight_leaves_of_log():
    leaf = leaf_trace(LOG, np.array([0.6 + 0.2j, 1.1 - 0.3j]), radius=0.3)
    _, pts = leaf.samples()
    p = leaf.base
    # every sample is a complex multiple of the base point
    assert np.abs(pts[:, 0] * p[1] - pts[:, 1] * p[0]).max() <= 1e-12
    assert leaf_harmonicity_residual(LOG, leaf) <= 1e-10


def test_curved_leaf_against_exact_parabola():
    p = np.array([0.5 + 0.2j, 0.8 - 0.1j])
    leaf = leaf_trace(BENT, p, radius=0.25, steps=8)
    _, pts = leaf.samples()
    assert len(pts) > 10
    wp = bend(p[None])[0]
    w = bend(pts)
    assert np.abs(w[:, 0] * wp[1] - w[:, 1] * wp[0]).max() <= 1e-6
    assert leaf.refinement_ratio >= 8.0
    assert leaf_harmonicity_residual(BENT, leaf) <= 1e-8


def test_curved_leaf_slope_is_holomorphic():
    leaf = leaf_trace(BENT, np.array([0.5 + 0.2j, 0.8 - 0.1j]), radius=0.2, steps=16)
    assert cauchy_riemann_residual(BENT, leaf) <= 1e-6
    assert phi_z_harmonicity(BENT, leaf) <= 1e-5


def test_nonhomogeneous_field_has_unit_residual():
    quad = AnalyticField.quadratic(np.eye(2))
    leaf = leaf_trace(quad, np.array([0.3, 1.0 + 0j]), radius=0.2)
    assert leaf_harmonicity_residual(quad, leaf) == pytest.approx(1.0)


def test_singular_start_raises():
    flat = AnalyticField.quadratic(np.diag([0.0, 1.0]))
    with pytest.raises(SingularLeaf):
        leaf_trace(flat, np.array([0.0, 1.0 + 0j]), radius=0.1)


def test_truncation_at_ring_boundary():
    leaf = leaf_trace(LOG, np.array([0, 1.05 + 0j]), radius=0.5)
    assert leaf.truncated and leaf.valid.any() and not leaf.valid.all()


def test_leafwise_maximum_principles_on_log():
    rng = np.random.default_rng(0)
    leaves = []
    for _ in range(5):
        d = rng.normal(size=2) + 1j * rng.normal(size=2)
        leaves.append(leaf_trace(LOG, 1.6 * d / np.linalg.norm(d), radius=0.2))
    assert leafwise_mp_check(LOG, leaves, "invQ").status == "pass"
    assert leafwise_mp_check(LOG, leaves, "logS").status == "pass"
    with pytest.raises(ValueError):
        leafwise_mp_check(LOG, leaves, "other")


def test_leaf_rows_shape():
    leaf = leaf_trace(LOG, np.array([0.3, 1.4 + 0j]), radius=0.2)
    rows = leaf_rows(LOG, leaf)
    assert len(rows) == int(leaf.valid.sum()) and all(len(r) == 9 for r in rows)


def test_rejects_higher_dimension():
    f = AnalyticField.quadratic(np.eye(3))
    with pytest.raises(ValueError):
        leaf_trace(f, np.array([0, 0, 1.0 + 0j]), radius=0.1)
