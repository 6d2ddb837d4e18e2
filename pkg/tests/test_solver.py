import math

import numpy as np
import pytest

from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from cmaring.domain import GeometryError
from cmaring.solver import (SolveConfig, choose_tier, continuation, full_vs_reference, harmonic_majorant,
                            nodal_values, relative_trace_residual, solve)
from conftest import ball_ring, ellipsoid_ring


def test_radial_residual_and_audit(radial_solution):
    _, rep = radial_solution
    assert rep.success and rep.residual_inf <= 1e-8
    assert rep.audit <= 1e-8 and rep.psd_margin > 0
    jb = rep.field.node_jets("interior")
    assert relative_trace_residual(jb.herm, np.eye(2), 0.05).max() <= 1e-6


def test_radial_boundary_values(radial_solution):
    _, rep = radial_solution
    f = rep.field
    assert f.value(np.array([[1.0, 0]]))[0] == pytest.approx(0, abs=1e-14)
    assert f.value(np.array([[0, np.e]]))[0] == pytest.approx(1, abs=1e-14)


def test_radial_second_order_convergence():
    ring = ball_ring()
    ref = solve(ring, None, SolveConfig(eps=0.05, resolution=3201), tier="radial").field
    z = np.array([[1.5, 0], [0.3j, 2.0]])
    errs = []
    for N in (201, 401):
        f = solve(ring, None, SolveConfig(eps=0.05, resolution=N), tier="radial").field
        errs.append(np.abs(f.value(z) - ref.value(z)).max())
    assert errs[0] / errs[1] >= 3.0


# Shooting oracle for the ball ring 1 < |z| < e.  With s = log|z| and
# w = f'(s) / (2 eps e^{2s}) the profile equation becomes the autonomous
# w' = 2w(2 - w)/(w - 1) on w > 1, and the boundary data fix w(0) through
# eps * 2 * int e^{2s} w ds = 1.

def _shoot(w0, eps=None):
    def rhs(s, y):
        w = y[0]
        return [2 * w * (2 - w) / (w - 1), 2 * math.exp(2 * s) * w]
    sol = solve_ivp(rhs, [0, 1], [w0, 0.0], rtol=1e-12, atol=1e-14, dense_output=True)
    return sol


def _eps_of(w0):
    return 1.0 / _shoot(w0).y[1, -1]


def test_feasibility_limit_matches_shooting():
    eps_max = _eps_of(1 + 1e-9)
    assert eps_max == pytest.approx(0.08147, abs=1e-4)
    ok = solve(ball_ring(), None, SolveConfig(eps=0.98 * eps_max, resolution=400), tier="radial")
    assert ok.success
    from cmaring.solver import SolverError
    with pytest.raises(SolverError):
        solve(ball_ring(), None, SolveConfig(eps=1.05 * eps_max, resolution=400), tier="radial")


def test_radial_matches_shooting_oracle(radial_solution):
    _, rep = radial_solution
    w0 = brentq(lambda w: _eps_of(w) - 0.05, 1 + 1e-9, 50.0, xtol=1e-13)
    sol = _shoot(w0)
    s = np.linspace(0, 1, 41)
    exact = 0.05 * sol.sol(s)[1]
    got = rep.field.profile(s)[0]
    assert np.abs(got - exact).max() <= 1e-4


def test_ellipsoid_exact_quadratic(ellipsoid_solution):
    # (q - 1)/8 solves the problem exactly when eps = 1/10
    _, rep = ellipsoid_solution
    z = rep.field.node_points("all")
    q = np.abs(z[:, 0]) ** 2 + 4 * np.abs(z[:, 1]) ** 2
    assert np.abs(rep.field.value(z) - (q - 1) / 8).max() <= 1e-4
    assert rep.residual_inf <= 1e-8


def test_reinhardt_agrees_with_radial():
    ring = ball_ring()
    rad = solve(ring, None, SolveConfig(eps=0.05, resolution=2000), tier="radial").field
    rein = solve(ring, None, SolveConfig(eps=0.05, resolution=129), tier="reinhardt").field
    z = rein.node_points("all")
    assert np.abs(rein.value(z) - rad.value(z)).max() <= 1e-4


def test_tier_choice():
    assert choose_tier(ball_ring()) == "radial"
    assert choose_tier(ellipsoid_ring()) == "reinhardt"
    assert choose_tier(ball_ring(), np.array([[1, 0.3], [0.3, 1]])) == "full"


@pytest.mark.parametrize("kw", [dict(eps=0.0), dict(eps=0.1, damping=0.0), dict(eps=0.1, residual_tol=-1),
                                dict(eps=0.1, eps_schedule=[0.1, 0.2]), dict(eps=0.1, eps_schedule=[0.3, 0.2]),
                                dict(eps=0.1, initial="random"), dict(eps=0.1, ghost="cubic")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolveConfig(**kw)


def test_radial_rejects_bad_radii():
    from cmaring.solver import solve_radial
    with pytest.raises(GeometryError):
        solve_radial(2.0, 1.0, SolveConfig(eps=0.1))


def test_continuation_increments_shrink():
    cfg = SolveConfig(eps=0.01, eps_schedule=[0.08, 0.04, 0.02, 0.01], resolution=400)
    reps, incs, failure = continuation(ball_ring(), None, cfg)
    assert failure is None and len(reps) == 4
    assert all(r.residual_inf <= 1e-8 for r in reps)
    assert incs[-1] < incs[0]


def test_continuation_reports_infeasible_stage():
    # above about 0.0815 there is no solution on this ring
    cfg = SolveConfig(eps=0.05, eps_schedule=[0.2, 0.05], resolution=200)
    reps, incs, failure = continuation(ball_ring(), None, cfg)
    assert reps == [] and failure.startswith("eps=0.2")


def test_harmonic_majorant_dominates(radial_solution):
    _, rep = radial_solution
    H = harmonic_majorant(rep.field)
    assert np.all(nodal_values(rep.field) <= H + 1e-12)


def test_determinism():
    cfg = SolveConfig(eps=0.1, resolution=33)
    a = solve(ellipsoid_ring(), None, cfg).field.U
    b = solve(ellipsoid_ring(), None, cfg).field.U
    assert np.array_equal(a, b)


@pytest.fixture(scope="module")
def small_full():
    ring = ball_ring()
    return {init: solve(ring, None, SolveConfig(eps=0.05, resolution=12, initial=init), tier="full")
            for init in ("harmonic", "subsolution", "interpolation")}


@pytest.mark.slow
def test_small_full_solve(small_full, radial_solution):
    _, rad = radial_solution
    for rep in small_full.values():
        assert rep.success and rep.residual_inf <= 1e-8 and rep.audit <= 1e-6
        # coarse 4-D grid: only a loose agreement is expected here
        assert full_vs_reference(rep.field, rad.field) <= 0.06


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="with the quadratic ghost rule the SOR sweep count does not "
                   "drop when starting from the subsolution; observed 106 vs 106 at 12^4")
def test_subsolution_start_is_faster(small_full):
    assert small_full["subsolution"].iterations < small_full["harmonic"].iterations
