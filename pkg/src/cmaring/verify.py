"""Sampled checks of the qualitative conclusions on solved or closed-form fields:
gradient floor, maximum principle for the sigma gauge, rank estimates,
C-convexity of level sets, boundary conversion and the sub/super sandwich.

Each inequality is evaluated from field jets; solver residuals never enter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import optimize

from .calg import boundary_conversion_factor, level_set_modulus_bound
from .domain import RingDomain, cconvexity_modulus, sphere_samples
from .field import (FullField, JetBatch, RadialField, ReinhardtField, ScalarField, _frames, gauge_batch)
from .wirtinger import to_real

STATUS = ("pass", "fail", "not_applicable")
TOL_FACTOR = 5.0
ROUNDOFF = 1e-10  # relative floor so exact equalities survive floating point


@dataclass
class CheckReport:
    check: str
    status: str
    margin: float
    tolerance: float
    witness: list | None = None
    details: dict = dfield(default_factory=dict)
    trend: list | None = None

    @property
    def passed(self):
        return self.status != "fail"

    def to_dict(self):
        return {"check": self.check, "status": self.status, "margin": _num(self.margin),
                "tolerance": _num(self.tolerance), "witness": self.witness,
                "details": {k: _num(v) if isinstance(v, float) else v for k, v in sorted(self.details.items())},
                "trend": self.trend}


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _witness(z):
    return [[float(c.real), float(c.imag)] for c in np.asarray(z).ravel()]


def _report(check, margin, tol, witness=None, **details):
    status = "pass" if margin >= -tol else "fail"
    return CheckReport(check, status, float(margin), float(tol),
                       None if witness is None else _witness(witness), details)


def _tol(field, values, region="interior"):
    v = np.asarray(values, float)
    fin = v[np.isfinite(v)]
    floor = ROUNDOFF * (1.0 + (float(np.abs(fin).max()) if fin.size else 0.0))
    return max(TOL_FACTOR * field.second_difference_scale(np.where(np.isfinite(v), v, np.nan), region), floor)


def _eps(field, eps):
    e = field.eps if eps is None else eps
    return 0.0 if e is None else float(e)


def _metric(field, G):
    return field.G if G is None else np.asarray(G, dtype=complex)


def boundary_jets(field) -> JetBatch:
    return JetBatch.concat([field.node_jets("inner"), field.node_jets("outer")])


def _zgz(z, G):
    return np.einsum("ni,ij,nj->n", z, G, z.conj()).real


# --- gradient floor -------------------------------------------------------------------


def check_gradient_floor(field: ScalarField, G=None, eps=None) -> CheckReport:
    """min_interior S >= exp(-sqrt(eps) max_boundary(W + |z|_G^2)) min_boundary S,
    together with the pointwise domination |dPhi|_G^2 >= S."""
    G = _metric(field, G)
    e = _eps(field, eps)
    ji = field.node_jets("interior")
    jb = boundary_jets(field)
    gi = gauge_batch(ji.grad, ji.herm, ji.holo, G, e)
    gb = gauge_batch(jb.grad, jb.herm, jb.holo, G, e)
    if e == 0:
        if field.n != 2:
            return CheckReport("gradient_floor", "not_applicable", 0.0, 0.0, None,
                               {"reason": "eps = 0 needs the leaf form of S, available for n = 2"})
        Si, Sb = leaf_S(ji, G), leaf_S(jb, G)
    else:
        Si, Sb = gi.S, gb.S
    undefined = float(np.mean(~np.isfinite(Si)))
    if undefined > 0.01:
        k = int(np.argmax(~np.isfinite(Si)))
        return CheckReport("gradient_floor", "fail", -math.inf, 0.0, _witness(ji.points[k]),
                           {"reason": "S undefined at more than 1% of samples", "undefined_fraction": undefined})
    Si = np.where(np.isfinite(Si), Si, -math.inf)
    Sb_f = Sb[np.isfinite(Sb)]
    if Sb_f.size == 0:
        return CheckReport("gradient_floor", "not_applicable", 0.0, 0.0, None,
                           {"reason": "S undefined on the boundary"})
    expo = math.exp(-math.sqrt(e) * float((gb.W + _zgz(jb.points, G)).max()))
    bound = expo * float(Sb_f.min())
    k = int(np.argmin(Si))
    floor_margin = float(Si[k]) - bound
    dom = gi.grad_norm**2 - Si
    j = int(np.argmin(dom))
    tol = max(_tol(field, np.where(np.isfinite(gi.S), gi.S, np.nan)),
              _tol(field, np.where(np.isfinite(dom), dom, np.nan)))
    if floor_margin <= dom[j]:
        margin, wit = floor_margin, ji.points[k]
    else:
        margin, wit = float(dom[j]), ji.points[j]
    return _report("gradient_floor", margin, tol, wit, floor_margin=floor_margin,
                   domination_margin=float(dom[j]), bound=bound, min_interior_S=float(Si[k]),
                   min_boundary_S=float(Sb_f.min()), undefined_fraction=undefined)


def leaf_S(jets, G):
    """|Phi_zeta|^2 / G(Z, Zbar) for the kernel vector Z = d_tau - f d_z of the
    complex Hessian, written in the unitary frame whose tau axis is the complex
    normal at each point.  This is the eps = 0 form of S in C^2."""
    nrm = np.linalg.norm(jets.grad, axis=1)
    U = _frames(jets.grad.conj() / nrm[:, None])
    herm = np.einsum("nia,nij,njb->nab", U, jets.herm, U.conj())
    grad_tau = np.einsum("ni,ni->n", jets.grad, U[:, :, 1])
    f = herm[:, 1, 0] / herm[:, 0, 0].real
    Z = U[:, :, 1] - f[:, None] * U[:, :, 0]
    gzz = np.einsum("ni,ij,nj->n", Z, G, Z.conj()).real
    return np.abs(grad_tau) ** 2 / gzz


# --- sigma maximum principle --------------------------------------------------------------


def sigma_functional(gauges, z, G, eps):
    return gauges.sigma + math.sqrt(eps) * (gauges.W + _zgz(z, G)) + eps**0.75 * gauges.V


def check_sigma_max_principle(field: ScalarField, G=None, eps=None) -> CheckReport:
    """Interior max of sigma + sqrt(eps)(W + |z|_G^2) + eps^(3/4) V is at most the
    boundary max, up to the discretisation slack."""
    G = _metric(field, G)
    e = _eps(field, eps)
    ji = field.node_jets("interior")
    jb = boundary_jets(field)
    gi = gauge_batch(ji.grad, ji.herm, ji.holo, G, e)
    gb = gauge_batch(jb.grad, jb.herm, jb.holo, G, e)
    for g, j in ((gi, ji), (gb, jb)):
        bad = ~(g.kappa_max < 1)
        if bad.any():
            k = int(np.argmax(bad))
            return CheckReport("sigma_max_principle", "fail", -math.inf, 0.0, _witness(j.points[k]),
                               {"reason": "kappa reaches 1", "kappa_max": float(g.kappa_max[k])})
    Ei = sigma_functional(gi, ji.points, G, e)
    Eb = sigma_functional(gb, jb.points, G, e)
    k = int(np.argmax(Ei))
    margin = float(Eb.max() - Ei[k])
    tol = _tol(field, Ei)
    return _report("sigma_max_principle", margin, tol, ji.points[k], interior_max=float(Ei[k]),
                   boundary_max=float(Eb.max()), sigma_max=float(gi.sigma.max()))


# --- rank estimates ------------------------------------------------------------------------


def check_rank_estimates(field: ScalarField, G=None, eps=None, sigma_tilde=None) -> CheckReport:
    """det(G^-1 H) >= eps s^(n-1), e_(n-1)(G^-1 H) >= s^(n-1), the complex Hessian
    of exp(Phi) positive and det of it at least |Phi_tau|^2 s^(n-1), where s is the
    smallest tangent eigenvalue measured over the samples."""
    G = _metric(field, G)
    e = _eps(field, eps)
    n = field.n
    ji = field.node_jets("interior")
    gi = gauge_batch(ji.grad, ji.herm, ji.holo, G, e)
    if sigma_tilde is None:
        sigma_tilde = float(np.linalg.eigvalsh(gi.A)[:, 0].min()) if n > 1 else 1.0
    st = sigma_tilde ** (n - 1)
    Gi = np.linalg.inv(G)
    L = np.linalg.cholesky(G)
    Li = np.linalg.inv(L)
    Hn = Li[None] @ ji.herm @ Li.conj().T[None]
    lam = np.linalg.eigvalsh(0.5 * (Hn + np.swapaxes(Hn.conj(), 1, 2)))
    det = np.prod(lam, axis=1)
    # e_(n-1) of the eigenvalues, without dividing by any of them
    e_top = np.array([sum(np.prod(np.delete(row, k)) for k in range(n)) for row in lam])
    Hexp = ji.herm + ji.grad[:, :, None] * ji.grad.conj()[:, None, :]
    Hn = Li[None] @ Hexp @ Li.conj().T[None]
    scale = np.exp(ji.value)
    lam_exp = scale * np.linalg.eigvalsh(0.5 * (Hn + np.swapaxes(Hn.conj(), 1, 2)))[:, 0]
    det_exp = scale**n * np.linalg.det(Gi[None] @ Hexp).real
    subs = {
        "det_floor": det - e * st,
        "elementary_floor": e_top - st,
        "exp_positive": lam_exp,
        "exp_det_floor": det_exp - gi.grad_norm**2 * st,
    }
    worst_name, worst_val, wit = None, math.inf, None
    details = {"sigma_tilde": float(sigma_tilde)}
    tol = 0.0
    for name, arr in subs.items():
        k = int(np.argmin(arr))
        details[name] = float(arr[k])
        if name != "exp_positive":
            tol = max(tol, _tol(field, arr))
        if arr[k] < worst_val:
            worst_name, worst_val, wit = name, float(arr[k]), ji.points[k]
    details["worst"] = worst_name
    rep = _report("rank_estimates", worst_val, tol, wit, **details)
    if details["exp_positive"] <= 0:
        rep.status = "fail"
    return rep


# --- level sets ----------------------------------------------------------------------------


def level_points(field: ScalarField, t, count=400):
    """Points of {Phi = t} found by bisection along rays from the ring centre."""
    ring = field.ring
    if ring is None:
        raise ValueError("field has no ring attached")
    c = ring.omega0.center
    dirs = sphere_samples(field.n, count)
    p0 = ring.omega0.ray_to_boundary(dirs)
    p1 = ring.omega1.ray_to_boundary(dirs)
    l0 = np.linalg.norm(p0 - c, axis=1)
    l1 = np.linalg.norm(p1 - c, axis=1)
    K = 48
    lam = l0[:, None] + (l1 - l0)[:, None] * np.linspace(0, 1, K)[None]
    pts = c + lam[:, :, None] * dirs[:, None, :]
    vals = field.value(pts.reshape(-1, field.n)).reshape(len(dirs), K) - t
    out = []
    for i in range(len(dirs)):
        v = vals[i]
        ok = np.isfinite(v)
        s = np.nonzero(ok[:-1] & ok[1:] & (np.sign(v[:-1]) != np.sign(v[1:])))[0]
        if s.size == 0:
            continue
        k = s[0]
        d = dirs[i]

        def g(x):
            return float(field.value((c + x * d)[None])[0]) - t

        x = optimize.brentq(g, lam[i, k], lam[i, k + 1], xtol=1e-13)
        out.append(c + x * d)
    return np.array(out)


def check_level_sets(field: ScalarField, G=None, levels=None, count=400) -> CheckReport:
    """Strong C-convexity of {Phi = t}: qc-modulus mu on the level set converts
    to the level-set modulus bound mu / max|grad Phi|.  The direct level-set
    modulus (tangent gauge over the real gradient length) is checked against
    that bound as well."""
    G = _metric(field, G)
    levels = [0.1 * k for k in range(1, 10)] if levels is None else list(levels)
    worst, wit, per = math.inf, None, {}
    for t in levels:
        pts = level_points(field, t, count)
        if len(pts) == 0:
            return CheckReport("level_sets", "fail", -math.inf, 0.0, None,
                               {"reason": f"level set {t:g} not found"})
        jb = field.jets(pts)
        g = gauge_batch(jb.grad, jb.herm, jb.holo, G)
        if np.any(g.grad_norm <= 0):
            k = int(np.argmin(g.grad_norm))
            return CheckReport("level_sets", "fail", -math.inf, 0.0, _witness(pts[k]),
                               {"reason": "gradient vanishes on a level set", "level": t})
        mu = float(g.qc_modulus.min())
        grad_r = jb.real_gradient_norm()
        bound = level_set_modulus_bound(mu, float(grad_r.max())) if mu > 0 else mu
        direct = g.modulus / grad_r
        gap = float((direct - bound).min()) if mu > 0 else -math.inf
        per[f"{t:.3g}"] = {"qc_modulus": mu, "bound": bound, "direct_min": float(direct.min()),
                           "direct_minus_bound": gap}
        val = min(bound, gap + bound) if mu > 0 else mu
        if val < worst:
            worst = val
            wit = pts[int(np.argmin(g.qc_modulus))]
    rep = CheckReport("level_sets", "pass" if worst > 0 else "fail", float(worst), 0.0,
                      None if wit is None else _witness(wit), {"levels": per})
    return rep


# --- boundary conversion ---------------------------------------------------------------------


def field_like(field, nodal):
    """Field of the same representation carrying other nodal values."""
    if isinstance(field, RadialField):
        return RadialField(field.n, field.s, nodal, eps=field.eps, ring=field.ring)
    if isinstance(field, ReinhardtField):
        return ReinhardtField(field.map.h0, field.map.h1, field.a, field.r,
                              np.asarray(nodal).reshape(field.U.shape), eps=field.eps, G=field.G,
                              ring=field.ring)
    if isinstance(field, FullField):
        V = field.values.copy()
        V[field.inside] = nodal
        return FullField(field.axes, V, field.inside, eps=field.eps, G=field.G, ring=field.ring)
    raise TypeError("needs a grid field")


def _normal_derivative(jb, dom):
    u = to_real(jb.points)
    nv = dom.grad_real(u)
    nv = nv / np.linalg.norm(nv, axis=1)[:, None]
    g_real = np.concatenate([2 * jb.grad.real, -2 * jb.grad.imag], axis=1)
    return np.einsum("ni,ni->n", g_real, nv)


def check_boundary_conversion(field: ScalarField, ring: RingDomain = None, G=None, sub=None,
                              majorant=None, samples=400) -> CheckReport:
    """qc-modulus on the boundary >= min(1/2, mu_domain) * normal derivative, plus
    normal-derivative floors from the subsolution (inner) and the harmonic
    majorant (outer)."""
    ring = field.ring if ring is None else ring
    G = _metric(field, G)
    jin = field.node_jets("inner")
    jout = field.node_jets("outer")
    bc_err = max(float(np.abs(jin.value).max()), float(np.abs(jout.value - 1).max()))
    if bc_err > 1e-6:
        return CheckReport("boundary_conversion", "not_applicable", 0.0, 0.0, None,
                           {"reason": "boundary values are not 0 inside and 1 outside",
                            "boundary_value_error": bc_err})
    details = {}
    worst, wit = math.inf, None
    mus = {}
    for name, jb, dom in (("inner", jin, ring.omega0), ("outer", jout, ring.omega1)):
        mu = cconvexity_modulus(dom, samples).min_margin
        mus[name] = mu
        phin = _normal_derivative(jb, dom)
        g = gauge_batch(jb.grad, jb.herm, jb.holo, G)
        slack = g.qc_modulus - boundary_conversion_factor(max(mu, 0.0)) * phin
        k = int(np.argmin(slack))
        details[f"{name}_mu_domain"] = float(mu)
        details[f"{name}_conversion_margin"] = float(slack[k])
        details[f"{name}_min_normal_derivative"] = float(phin.min())
        if slack[k] < worst:
            worst, wit = float(slack[k]), jb.points[k]
        if name == "inner":
            if sub is None:
                details["inner_floor"] = "skipped: no subsolution"
            else:
                floor = float(sub.normal_derivative)
                m = float(phin.min()) - floor
                details["inner_floor_margin"] = m
                if m < worst:
                    worst, wit = m, jb.points[int(np.argmin(phin))]
        else:
            if majorant is None:
                details["outer_floor"] = "skipped: no harmonic majorant"
            else:
                Uf = field_like(field, majorant)
                un = _normal_derivative(Uf.node_jets("outer"), dom)
                m = float((phin - un).min())
                details["outer_floor_margin"] = m
                details["outer_hopf_margin"] = float(un.min())
                if m < worst:
                    worst, wit = m, jb.points[int(np.argmin(phin - un))]
    ji = field.node_jets("interior")
    gi = gauge_batch(ji.grad, ji.herm, ji.holo, G)
    tol = _tol(field, gi.qc_modulus)
    return _report("boundary_conversion", worst, tol, wit, **details)


# --- sandwich ----------------------------------------------------------------------------------


def check_sandwich(field: ScalarField, sub=None, majorant=None, slack=1e-6) -> CheckReport:
    """Psi - slack <= Phi <= U + slack at every node, with Psi taken from a
    subsolution build result."""
    from .solver import nodal_values
    z = field.node_points("all")
    grid = isinstance(field, (RadialField, ReinhardtField, FullField))
    phi = nodal_values(field) if grid else field.value(z)
    details = {}
    worst, wit = math.inf, None
    if sub is not None:
        lower = phi - sub.psi.value(z)
        k = int(np.argmin(lower))
        details["below_margin"] = float(lower[k])
        worst, wit = float(lower[k]), z[k]
    if majorant is not None:
        upper = np.asarray(majorant) - phi
        k = int(np.argmin(upper))
        details["above_margin"] = float(upper[k])
        if upper[k] < worst:
            worst, wit = float(upper[k]), z[k]
    if not details:
        return CheckReport("sandwich", "not_applicable", 0.0, slack, None, {"reason": "nothing to compare"})
    return _report("sandwich", worst, slack, wit, **details)


# --- third-derivative diagnostic --------------------------------------------------------------


@dataclass
class IPhiResult:
    value: float
    noise: float
    reliable: bool

    def __float__(self):
        return self.value


def iphi_from_derivatives(herm, T, G, eps):
    """I = L^{pq} Phi_{p vbar i} Phi^{u vbar} Phi_{qbar u jbar} G^{i jbar}
         + L^{pq} Phi_{p vbar jbar} Phi^{u vbar} Phi_{qbar u i} G^{i jbar},
    with T[i, p, v] = Phi_{i p vbar} and L^{pq} = eps^2 (H^-1 G H^-1)[q, p]."""
    Hi = np.linalg.inv(herm)
    Gi = np.linalg.inv(G)
    L = eps**2 * (Hi @ G @ Hi).T
    Hup = Hi.T  # Hup[u, v] = Phi^{u vbar}
    Gup = Gi.T
    t1 = np.einsum("pq,ipv,uv,jqu,ij->", L, T, Hup, T.conj(), Gup)
    t2 = np.einsum("pq,jvp,uv,iuq,ij->", L, T.conj(), Hup, T, Gup)
    return complex(t1 + t2).real


def diagnostic_IPhi(field: ScalarField, G=None, eps=None, p=None, h=1e-3) -> IPhiResult:
    G = _metric(field, G)
    e = _eps(field, eps)
    p = np.asarray(p, dtype=complex)
    j = field.jet(p)
    T1 = field.third_derivatives(p, h)
    T2 = field.third_derivatives(p, 2 * h)
    v1 = iphi_from_derivatives(j.herm, T1, G, e)
    v2 = iphi_from_derivatives(j.herm, T2, G, e)
    noise = abs(v1 - v2)
    return IPhiResult(v1, noise, noise <= max(abs(v1), 1e-14))


# --- batteries ---------------------------------------------------------------------------------

CHECKS = ("gradient_floor", "sigma_max_principle", "rank_estimates", "level_sets",
          "boundary_conversion", "sandwich")


def run_checks(field, names=None, G=None, eps=None, sub=None, majorant=None, levels=None):
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    out = []
    for name in names:
        if name == "gradient_floor":
            out.append(check_gradient_floor(field, G, eps))
        elif name == "sigma_max_principle":
            out.append(check_sigma_max_principle(field, G, eps))
        elif name == "rank_estimates":
            out.append(check_rank_estimates(field, G, eps))
        elif name == "level_sets":
            out.append(check_level_sets(field, G, levels))
        elif name == "boundary_conversion":
            out.append(check_boundary_conversion(field, None, G, sub, majorant))
        elif name == "sandwich":
            out.append(check_sandwich(field, sub, majorant))
    return out
