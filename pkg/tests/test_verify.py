import numpy as np
import pytest

from cmaring.domain import build_subsolution
from cmaring.field import AnalyticField, RadialField
from cmaring.solver import harmonic_majorant, nodal_values
from cmaring.verify import (CHECKS, check_boundary_conversion, check_gradient_floor, check_level_sets,
                            check_rank_estimates, check_sandwich, check_sigma_max_principle,
                            diagnostic_IPhi, iphi_from_derivatives, run_checks)
from conftest import ball_ring


@pytest.fixture(scope="module")
def radial_battery(radial_solution):
    ring, rep = radial_solution
    sub = build_subsolution(ring)
    maj = harmonic_majorant(rep.field)
    return {r.check: r for r in run_checks(rep.field, sub=sub, majorant=maj)}


@pytest.mark.parametrize("name", CHECKS)
def test_radial_solution_passes(radial_battery, name):
    r = radial_battery[name]
    assert r.status == "pass", r.to_dict()


def test_reports_are_serialisable(radial_battery):
    import json
    for r in radial_battery.values():
        json.dumps(r.to_dict(), allow_nan=False)


def _flat_spot(rep):
    f = rep.field
    g = f.f.copy()
    mid = slice(len(g) // 2 - 20, len(g) // 2 + 20)
    g[mid] = g[mid.start]
    return RadialField(f.n, f.s, g, eps=f.eps, ring=f.ring)


def test_flat_spot_fails_gradient_floor_with_witness(radial_solution):
    _, rep = radial_solution
    bad = _flat_spot(rep)
    r = check_gradient_floor(bad)
    assert r.status == "fail" and r.witness is not None
    z = np.array([complex(a, b) for a, b in r.witness])
    s = np.log(np.linalg.norm(z))
    assert bad.s[len(bad.s) // 2 - 22] <= s <= bad.s[len(bad.s) // 2 + 22]


def test_saddle_fails_level_sets():
    # strong holomorphic-quadratic part: level sets are not C-convex near z2 = 0
    f = AnalyticField.quadratic(np.eye(2) / 3, np.diag([0.5, 0.0]), const=-1 / 3, ring=ball_ring(1.0, 2.0))
    r = check_level_sets(f, levels=[0.3, 0.6])
    assert r.status == "fail" and r.witness is not None


def test_wrong_boundary_values_not_applicable():
    f = AnalyticField.quadratic(np.eye(2), ring=ball_ring(1.0, 2.0))
    r = check_boundary_conversion(f)
    assert r.status == "not_applicable"


def test_rank_estimates_on_squared_modulus():
    # |z|^2: tr(H^-1) = 2, so it solves the equation at eps = 1/2
    f = AnalyticField.quadratic(np.eye(2), ring=ball_ring(1.0, 2.0))
    r = check_rank_estimates(f, eps=0.5)
    assert r.status == "pass"
    assert r.details["sigma_tilde"] == pytest.approx(1.0)
    assert r.details["det_floor"] == pytest.approx(0.5)
    assert r.details["elementary_floor"] == pytest.approx(1.0)


def test_rank_estimates_handle_singular_hessian():
    f = AnalyticField.log_hermitian(np.eye(2), 0.5, ring=ball_ring(1.0, np.e))
    r = check_rank_estimates(f, eps=1e-12)
    assert np.isfinite(r.margin)


def test_log_green_function_at_eps_zero():
    f = AnalyticField.log_hermitian(np.eye(2), 0.5, ring=ball_ring(1.0, np.e))
    for chk in (check_gradient_floor, check_sigma_max_principle):
        assert chk(f, eps=0.0).status == "pass"


def test_sandwich_detects_violation(radial_solution):
    _, rep = radial_solution
    v = nodal_values(rep.field)
    r = check_sandwich(rep.field, majorant=v - 1e-3)
    assert r.status == "fail" and r.margin == pytest.approx(-1e-3)
    assert check_sandwich(rep.field).status == "not_applicable"


def test_iphi_vanishes_for_quadratics():
    f = AnalyticField.quadratic(np.eye(2))
    r = diagnostic_IPhi(f, np.eye(2), 0.5, np.array([0.3, 1.0 + 0.2j]))
    assert abs(r.value) <= 1e-12


def test_iphi_is_a_sum_of_squares():
    rng = np.random.default_rng(1)
    for _ in range(50):
        X = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        H = X @ X.conj().T + 0.1 * np.eye(2)
        T = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
        T = 0.5 * (T + T.transpose(1, 0, 2))
        assert iphi_from_derivatives(H, T, np.eye(2), 0.3) >= -1e-10


def test_iphi_nonnegative_on_radial_solution(radial_solution):
    _, rep = radial_solution
    for p in (np.array([1.5, 0.0]), np.array([0.9j, 1.3])):
        r = diagnostic_IPhi(rep.field, np.eye(2), 0.05, p)
        assert r.value >= -1e-8


def test_unknown_check(radial_solution):
    _, rep = radial_solution
    with pytest.raises(KeyError):
        run_checks(rep.field, ["no_such_check"])


def test_checks_are_deterministic(radial_solution):
    _, rep = radial_solution
    a = [r.to_dict() for r in run_checks(rep.field, ["gradient_floor", "level_sets"])]
    b = [r.to_dict() for r in run_checks(rep.field, ["gradient_floor", "level_sets"])]
    assert a == b
