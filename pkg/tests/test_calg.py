import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from cmaring import calg
from cmaring.calg import MetricForm, QuadraticGauge
from conftest import complex_matrices, gauges, hermitian_pd, symmetric


# --- modulus -----------------------------------------------------------------

@pytest.mark.parametrize("A, B, expected", [
    ([[1]], [[0]], 1.0),
    ([[1]], [[0.5]], 0.5),
    (2 * np.eye(2), [[0, 1], [1, 0]], 1.0),
])
def test_modulus_examples(A, B, expected):
    assert calg.modulus_of_convexity(QuadraticGauge(A, B)) == pytest.approx(expected, abs=1e-12)


def test_modulus_against_sphere_sampling():
    rng = np.random.default_rng(3)
    q = QuadraticGauge(2 * np.eye(2), [[0, 1], [1, 0]])
    z = rng.normal(size=(200000, 2)) + 1j * rng.normal(size=(200000, 2))
    z /= np.linalg.norm(z, axis=1)[:, None]
    assert q(z).min() == pytest.approx(1.0, abs=1e-3)


def test_nonconvex_marker():
    assert calg.modulus_of_convexity(QuadraticGauge([[1]], [[1.5]])) is None


def test_bad_inputs():
    with pytest.raises(ValueError):
        QuadraticGauge([[1, 1j], [0, 1]], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        QuadraticGauge(np.eye(2), [[0, 1], [2, 0]])
    with pytest.raises(ValueError):
        MetricForm(-np.eye(2))
    with pytest.raises(ValueError):
        QuadraticGauge(np.eye(2), np.zeros((3, 3)))


@given(gauges(), st.sampled_from([0.5, 2.0, 10.0]))
def test_scale_covariance(AB, t):
    A, B = AB
    mod = calg.modulus_of_convexity(QuadraticGauge(A, B))
    assume(mod is not None)
    assert calg.modulus_of_convexity(QuadraticGauge(t * A, t * B)) == pytest.approx(t * mod, rel=1e-9)


@given(gauges(max_m=2))
def test_metric_change_matches_coordinate_change(AB):
    # modulus against G equals the modulus of the pulled-back gauge against I
    A, B = AB
    m = A.shape[0]
    G = A + np.eye(m)
    L = np.linalg.cholesky(G)
    C = np.linalg.inv(L).T  # C^T G conj(C) = I
    q = QuadraticGauge(A, B)
    q2 = QuadraticGauge(C.T @ A @ C.conj(), C.T @ B @ C)
    assert calg.convexity_margin(q, G) == pytest.approx(calg.convexity_margin(q2), abs=1e-9)


# --- degree ------------------------------------------------------------------

@pytest.mark.parametrize("A, B, expected", [
    ([[1]], [[0]], 1.0),
    ([[1]], [[0.5]], 0.5),
    (2 * np.eye(2), np.zeros((2, 2)), 2.0),
])
def test_degree_examples(A, B, expected):
    assert calg.degree_of_convexity(QuadraticGauge(A, B)).degree == pytest.approx(expected, abs=1e-6)


def test_degree_of_nonconvex_is_none():
    assert calg.degree_of_convexity(QuadraticGauge([[1]], [[2.0]])).degree is None


@given(gauges())
def test_modulus_equals_degree(AB):
    A, B = AB
    q = QuadraticGauge(A, B)
    mod = calg.modulus_of_convexity(q)
    deg = calg.degree_of_convexity(q).degree
    if mod is None:
        assert deg is None
    else:
        assert abs(mod - deg) <= 1e-3 + 0.05 * mod


# --- Takagi ------------------------------------------------------------------

def test_takagi_examples():
    U, D = calg.takagi(np.zeros((2, 2)))
    assert np.allclose(D, 0) and np.allclose(U.conj().T @ U, np.eye(2))
    U, D = calg.takagi(np.diag([3.0, 2.0]))
    assert np.allclose(D, [3, 2]) and np.allclose(U @ np.diag(D) @ U.T, np.diag([3.0, 2.0]))
    _, D = calg.takagi(np.array([[0, 1], [1, 0]]))
    assert np.allclose(D, [1, 1])


@given(symmetric(max_m=6, scale=5.0))
def test_takagi_round_trip(B):
    U, D = calg.takagi(B)
    nb = np.linalg.norm(B, 2)
    assert np.abs(U @ np.diag(D) @ U.T - B).max() <= 1e-9 * (1 + nb)
    assert np.allclose(D, np.linalg.svd(B, compute_uv=False), atol=1e-9)
    assert np.allclose(U.conj().T @ U, np.eye(len(B)), atol=1e-10)


def test_takagi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        calg.takagi(np.array([[0, 1], [2, 0]]))


def test_broken_takagi_is_detected():
    B = np.array([[1j, 0.5], [0.5, 2 - 1j]])
    U, D = calg.takagi_skip_conjugation(B)
    assert np.abs(U @ np.diag(D) @ U.T - B).max() > 1e-3


# --- kappa -------------------------------------------------------------------

def test_kappa_examples():
    k = calg.kappa([[1]], [[0.5]])
    assert np.allclose(k.eigenvalues, [0.25]) and k.sigma == pytest.approx(4 / 3)
    k = calg.kappa(2 * np.eye(2), np.eye(2))
    assert np.allclose(k.matrix, np.eye(2) / 4) and k.sigma == pytest.approx(8 / 3)
    k = calg.kappa([[0.5]], [[0]])
    assert k.max == 0 and k.sigma == pytest.approx(1.0)


def test_kappa_needs_positive_definite():
    with pytest.raises(ValueError):
        calg.kappa([[-1]], [[0]])


@given(gauges(max_m=4))
def test_kappa_spectrum_is_real_and_nonnegative(AB):
    A, B = AB
    k = calg.kappa(A, B)
    ev = np.linalg.eigvals(k.matrix)
    tol = 1e-9 * (1 + np.linalg.norm(k.matrix, 2))
    assert np.abs(ev.imag).max() <= tol
    assert np.allclose(np.sort(ev.real), k.eigenvalues, atol=1e-8 * (1 + k.max))
    if k.admissible:
        assert k.sigma >= A.shape[0] - 1e-12


@given(gauges(max_m=3))
def test_kappa_criterion_agrees_with_modulus(AB):
    # two independent routes to strong convexity
    A, B = AB
    k = calg.kappa(A, B)
    mod = calg.convexity_margin(QuadraticGauge(A, B))
    assume(abs(mod) > 1e-8 and abs(k.max - 1) > 1e-8)
    assert (mod > 0) == k.admissible


# --- predicates --------------------------------------------------------------

def test_entrywise_example():
    M = np.full((2, 2), 0.2)
    r = calg.predicate_entrywise(M)
    assert r.hypothesis and r.passed


def test_gauge_to_modulus_example():
    # A = I, K-max = 0.5 (B = sqrt(0.5)), delta = 0.5
    r = calg.predicate_gauge_to_modulus([[1]], [[math.sqrt(0.5) - 1e-9]], 0.49)
    assert r.hypothesis and r.passed
    assert r.witness["modulus"] >= 0.49**2 / 2


def test_half_perturbation_example():
    # modulus just above 0.4; the worst W pushes |B| up
    q = QuadraticGauge([[1.41]], [[1.0]])
    r = calg.predicate_half_perturbation(q, 0.4, 0.2 * np.eye(1), -0.2 * np.eye(1))
    assert r.hypothesis and r.passed
    assert r.witness["perturbed"] == pytest.approx(0.01)


@given(gauges(), st.floats(0.01, 0.99))
def test_gauge_to_modulus_sound(AB, delta):
    r = calg.predicate_gauge_to_modulus(*AB, delta)
    assert r.passed


@given(gauges(), st.floats(0.0, 1.0))
def test_modulus_to_gauge_sound(AB, frac):
    A, B = AB
    mod = calg.convexity_margin(QuadraticGauge(A, B))
    assert calg.predicate_modulus_to_gauge(A, B, frac * max(mod, 0.0)).passed


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(hermitian_pd(m), hermitian_pd(m, 0.01, 2.0),
                                                      complex_matrices(m))))
def test_kappa_monotone(t):
    H, P, X = t
    r = calg.predicate_kappa_monotone(H + P, H, 0.5 * (X + X.T))
    assert r.hypothesis and r.passed


def test_boundary_conversion_and_level_set_predicates():
    assert calg.predicate_boundary_conversion([[0.5]], [[0.0]], 1.0, 0.5).passed
    assert calg.boundary_conversion_factor(2.0) == 0.5
    assert calg.predicate_level_set([[0.5]], [[0.1]], 1.0, 0.3).passed


# --- conversions -------------------------------------------------------------

def test_conversion_examples():
    assert calg.convert_modulus_robustness(0.2, "rob->mod", {"diameter": 10}) == pytest.approx(0.005)
    assert calg.convert_modulus_robustness(0.3, "rob->mod", {"diameter": 0.1}) == pytest.approx(0.3)
    assert calg.convert_modulus_robustness(0.1, "mod->rob", {"C": 100}) == pytest.approx(1e-4)


def test_conversion_errors():
    with pytest.raises(ValueError):
        calg.convert_modulus_robustness(0.1, "rob->mod", {"diameter": 0})
    with pytest.raises(ValueError):
        calg.convert_modulus_robustness(-1, "mod->rob", {"C": 1})
    with pytest.raises(ValueError):
        calg.convert_modulus_robustness(0.1, "sideways", {})


def test_robustness_round_trip_probe():
    grad = np.array([0.0, 0.5])
    A = np.eye(2)
    B = np.diag([0.3, 0.0])
    r = calg.predicate_modulus_to_robustness(grad, A, B, {"diameter": 2.0, "thickness": 0.5})
    assert r.passed and r.witness["robustness"] > 0
