"""Smooth domains in C^n, rings between two of them, boundary graphs,
C-convexity moduli, deformation families and the glued subsolution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .calg import QuadraticGauge, convexity_margin
from .wirtinger import (complex_gradient, complex_hessians, from_real,
                        hermitian_real_matrix, to_real)


class GeometryError(ValueError):
    """Raised for singular or inadmissible geometry."""


PLASTIC = 1.324717957244746


class SmoothDomain:
    """Bounded domain {rho < 0} with a defining function in real coordinates.

    kind "ball": params center, radius.  kind "ellipsoid": params H, center,
    rho = (z-c)^H H (z-c) - 1.  kind "callback": user functions returning
    rho, its real gradient and its real Hessian for points of shape (N, 2n).
    """

    def __init__(self, n, kind, params, funcs=None):
        self.n = int(n)
        self.kind = kind
        self.params = params
        self._funcs = funcs
        if kind in ("ball", "ellipsoid"):
            H, c = self.quadratic_form()
            if np.abs(H - H.conj().T).max() > 1e-12 * max(1, np.abs(H).max()):
                raise GeometryError("ellipsoid matrix is not Hermitian")
            ev = np.linalg.eigvalsh(H)
            if ev.min() <= 0:
                raise GeometryError("ellipsoid matrix is not positive definite")
            self._M = hermitian_real_matrix(H)
            self._uc = to_real(c)
            w, Q = np.linalg.eigh(self._M)
            self._eig = (w, Q)
        elif kind == "callback":
            if funcs is None:
                raise ValueError("callback domain needs rho functions")
        else:
            raise ValueError(f"unknown domain kind {kind!r}")

    # -- constructors ------------------------------------------------------
    @classmethod
    def ball(cls, center, radius):
        center = np.asarray(center, dtype=complex)
        if radius <= 0:
            raise GeometryError("radius must be positive")
        return cls(len(center), "ball", {"center": center, "radius": float(radius)})

    @classmethod
    def ellipsoid(cls, H, center=None):
        H = np.asarray(H, dtype=complex)
        n = H.shape[0]
        center = np.zeros(n, complex) if center is None else np.asarray(center, dtype=complex)
        return cls(n, "ellipsoid", {"H": H, "center": center})

    @classmethod
    def from_callback(cls, n, rho, grad, hess, center=None, name="callback"):
        center = np.zeros(n, complex) if center is None else np.asarray(center, dtype=complex)
        return cls(n, "callback", {"center": center, "name": name}, funcs=(rho, grad, hess))

    # -- defining function ----------------------------------------------------
    def quadratic_form(self):
        if self.kind == "ball":
            r = self.params["radius"]
            return np.eye(self.n, dtype=complex) / r**2, self.params["center"]
        if self.kind == "ellipsoid":
            return self.params["H"], self.params["center"]
        raise GeometryError("domain has no quadratic defining form")

    @property
    def center(self):
        return self.params["center"]

    def rho_real(self, u):
        u = np.atleast_2d(u)
        if self._funcs is not None:
            return np.asarray(self._funcs[0](u), dtype=float)
        d = u - self._uc
        return np.einsum("...i,ij,...j->...", d, self._M, d) - 1.0

    def grad_real(self, u):
        u = np.atleast_2d(u)
        if self._funcs is not None:
            return np.asarray(self._funcs[1](u), dtype=float)
        return 2.0 * (u - self._uc) @ self._M

    def hess_real(self, u):
        u = np.atleast_2d(u)
        if self._funcs is not None:
            return np.asarray(self._funcs[2](u), dtype=float)
        return np.broadcast_to(2.0 * self._M, (u.shape[0],) + self._M.shape)

    def rho(self, z):
        return self.rho_real(to_real(np.atleast_2d(z)))

    def contains(self, z):
        return self.rho(z) < 0

    def diameter(self):
        if self.kind == "ball":
            return 2.0 * self.params["radius"]
        if self.kind == "ellipsoid":
            return 2.0 / math.sqrt(np.linalg.eigvalsh(self.params["H"]).min())
        pts = self.boundary_samples(4000)
        u = to_real(pts)
        return float(max(np.linalg.norm(u - v, axis=1).max() for v in u[::20]))

    def inradius(self):
        """Radius of the largest ball about the center inside the domain."""
        if self.kind in ("ball", "ellipsoid"):
            H, _ = self.quadratic_form()
            return 1.0 / math.sqrt(np.linalg.eigvalsh(H).max())
        pts = self.boundary_samples(4000)
        return float(np.abs(pts - self.center).sum(axis=1).min())

    # -- sampling and projection -------------------------------------------------
    def ray_to_boundary(self, dirs):
        """Boundary point on the ray center + t d, t > 0, for unit directions d."""
        dirs = np.atleast_2d(np.asarray(dirs, dtype=complex))
        c = self.center
        if self.kind in ("ball", "ellipsoid"):
            H, _ = self.quadratic_form()
            q = np.einsum("ni,ij,nj->n", dirs.conj(), H, dirs).real
            return c + dirs / np.sqrt(q)[:, None]
        out = []
        for d in dirs:
            def f(t):
                return float(self.rho(c + t * d)[0])
            t = 1e-6
            while f(t) < 0:
                t *= 1.5
                if t > 1e8:
                    raise GeometryError("ray does not leave the domain")
            lo = t / 1.5 if t > 1e-6 else 0.0
            out.append(c + optimize.brentq(f, lo, t, xtol=1e-15) * d)
        return np.array(out)

    def boundary_samples(self, count):
        return self.ray_to_boundary(sphere_samples(self.n, count))

    def project(self, z):
        """Closest boundary points, signed distances (positive outside) and
        outward real unit normals at the feet."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        u = to_real(z)
        if self.kind == "ball":
            c = self._uc
            r = self.params["radius"]
            d = u - c
            nrm = np.linalg.norm(d, axis=1)
            nrm_safe = np.where(nrm > 0, nrm, 1.0)
            nvec = d / nrm_safe[:, None]
            nvec[nrm == 0] = np.eye(2 * self.n)[0]
            foot = c + r * nvec
            return from_real(foot), nrm - r, nvec
        if self.kind == "ellipsoid":
            return self._project_ellipsoid(u)
        return self._project_generic(u)

    def _project_ellipsoid(self, u):
        w, Q = self._eig
        v = (u - self._uc) @ Q
        inside = np.einsum("ni,i,ni->n", v, w, v) < 1.0

        def g(lam):
            return np.sum(w * v**2 / (1 + lam[:, None] * w) ** 2, axis=1) - 1.0

        # g is decreasing on (-1/wmax, inf); bracket then bisect + newton polish
        lo = np.where(inside, -1.0 / w.max() * (1 - 1e-15), 0.0)
        hi = np.where(inside, 0.0, 1.0)
        while True:
            bad = (~inside) & (g(hi) > 0)
            if not bad.any():
                break
            hi = np.where(bad, hi * 2.0, hi)
        lam = 0.5 * (lo + hi)
        for _ in range(200):
            val = g(lam)
            lo = np.where(val > 0, lam, lo)
            hi = np.where(val > 0, hi, lam)
            lam = 0.5 * (lo + hi)
            if np.all(hi - lo < 1e-16 * np.maximum(1.0, np.abs(lam))):
                break
        for _ in range(3):
            den = 1 + lam[:, None] * w
            val = np.sum(w * v**2 / den**2, axis=1) - 1.0
            der = -2.0 * np.sum(w**2 * v**2 / den**3, axis=1)
            step = np.where(der != 0, val / np.where(der != 0, der, 1.0), 0.0)
            lam = np.clip(lam - step, lo, hi)
        y = v / (1 + lam[:, None] * w)
        foot = y @ Q.T + self._uc
        gr = self.grad_real(foot)
        nvec = gr / np.linalg.norm(gr, axis=1)[:, None]
        dist = np.linalg.norm(u - foot, axis=1)
        sgn = np.where(inside, -1.0, 1.0)
        return from_real(foot), sgn * dist, nvec

    def _project_generic(self, u):
        feet, dists, normals = [], [], []
        for p in u:
            c = to_real(self.center)
            dvec = p - c
            nd = np.linalg.norm(dvec)
            dvec = dvec / nd if nd > 0 else np.eye(len(p))[0]
            y = to_real(self.ray_to_boundary(from_real(dvec)[None])[0])
            lam = 0.0
            for _ in range(60):
                gr = self.grad_real(y[None])[0]
                H = self.hess_real(y[None])[0]
                r = float(self.rho_real(y[None])[0])
                F = np.concatenate([y - p + lam * gr, [r]])
                J = np.zeros((len(p) + 1, len(p) + 1))
                J[:-1, :-1] = np.eye(len(p)) + lam * H
                J[:-1, -1] = gr
                J[-1, :-1] = gr
                step = np.linalg.solve(J, -F)
                y = y + step[:-1]
                lam = lam + step[-1]
                if np.abs(step).max() < 1e-14:
                    break
            gr = self.grad_real(y[None])[0]
            nv = gr / np.linalg.norm(gr)
            feet.append(y)
            normals.append(nv)
            dists.append(float(np.dot(p - y, nv)))
        return from_real(np.array(feet)), np.array(dists), np.array(normals)

    def distance_jet(self, z):
        """Signed distance s (positive outside) with real gradient and Hessian."""
        foot, s, nvec = self.project(z)
        uf = to_real(foot)
        gr = self.grad_real(uf)
        gn = np.linalg.norm(gr, axis=1)
        Hr = self.hess_real(uf)
        dim = 2 * self.n
        P = np.eye(dim)[None] - nvec[:, :, None] * nvec[:, None, :]
        Wm = P @ Hr @ P / gn[:, None, None]
        Wm = 0.5 * (Wm + np.swapaxes(Wm, 1, 2))
        D2 = Wm @ np.linalg.inv(np.eye(dim)[None] + s[:, None, None] * Wm)
        D2 = 0.5 * (D2 + np.swapaxes(D2, 1, 2))
        return s, nvec, D2

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n}
        if self.kind == "ball":
            d["center"] = _cvec(self.params["center"])
            d["radius"] = self.params["radius"]
        elif self.kind == "ellipsoid":
            d["H"] = _cmat(self.params["H"])
            d["center"] = _cvec(self.params["center"])
        else:
            d["name"] = self.params.get("name", "callback")
        return d


def _cvec(v):
    return [[float(x.real), float(x.imag)] for x in np.asarray(v, dtype=complex)]


def _cmat(M):
    return [_cvec(row) for row in np.asarray(M, dtype=complex)]


def sphere_samples(n, count):
    """Quasi-uniform unit vectors in C^n (deterministic)."""
    k = np.arange(count) + 0.5
    if n == 1:
        return np.exp(2j * np.pi * k / count)[:, None]
    if n == 2:
        # Hopf coordinates: cos^2(eta) uniform makes the measure uniform on S^3
        c2 = k / count
        a1 = 2 * np.pi * ((k / PLASTIC) % 1.0)
        a2 = 2 * np.pi * ((k / PLASTIC**2) % 1.0)
        return np.stack([np.sqrt(c2) * np.exp(1j * a1), np.sqrt(1 - c2) * np.exp(1j * a2)], axis=1)
    rng = np.random.default_rng(12345)
    v = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1)[:, None]


@dataclass
class RingDomain:
    omega0: SmoothDomain
    omega1: SmoothDomain

    def __post_init__(self):
        if self.omega0.n != self.omega1.n:
            raise GeometryError("inner and outer domains live in different dimensions")
        pts = self.omega0.boundary_samples(2000)
        if not np.all(self.omega1.rho(pts) < 0):
            raise GeometryError("closure of the inner domain is not inside the outer domain")

    @property
    def n(self):
        return self.omega0.n

    def contains(self, z):
        return self.omega1.contains(z) & (self.omega0.rho(z) > 0)

    def thickness(self, samples=2000):
        """Smallest distance between the two boundaries (sampled)."""
        pts = self.omega0.boundary_samples(samples)
        _, s, _ = self.omega1.project(pts)
        return float((-s).min())

    def diameter(self):
        return self.omega1.diameter()

    def is_concentric_balls(self):
        a, b = self.omega0, self.omega1
        return (a.kind == "ball" and b.kind == "ball"
                and np.allclose(a.center, 0) and np.allclose(b.center, 0))

    def reinhardt_form(self):
        """Diagonals (h0, h1) when both domains are centred diagonal ellipsoids."""
        out = []
        for d in (self.omega0, self.omega1):
            if d.kind not in ("ball", "ellipsoid"):
                return None
            H, c = d.quadratic_form()
            if not np.allclose(c, 0) or np.abs(H - np.diag(np.diag(H))).max() > 1e-14:
                return None
            out.append(np.diag(H).real.copy())
        return tuple(out)

    def to_dict(self):
        return {"n": self.n, "omega0": self.omega0.to_dict(), "omega1": self.omega1.to_dict()}


# --- boundary graph and C-convexity ---------------------------------------------


@dataclass
class BoundaryGraph:
    point: np.ndarray
    frame: np.ndarray  # columns: tangent e_1..e_{n-1}, then the inward tau direction
    A: np.ndarray
    B: np.ndarray
    grad_norm: float
    domain: SmoothDomain = field(repr=False)

    @property
    def modulus(self):
        """Modulus of convexity of the graph restricted to s = 0 (may be <= 0)."""
        return convexity_margin(QuadraticGauge(self.A, self.B))

    def height(self, w, s=0.0):
        """Exact graph t(w, s) with p + E (w, t + i s) on the boundary."""
        w = np.asarray(w, dtype=complex)
        m = len(w)
        base = self.point + self.frame[:, :m] @ w + 1j * s * self.frame[:, m]

        def f(t):
            return float(self.domain.rho(base + t * self.frame[:, m])[0])

        t = 0.0
        for _ in range(50):
            h = 1e-7 * max(1.0, abs(t))
            d = (f(t + h) - f(t - h)) / (2 * h)
            step = f(t) / d
            t -= step
            if abs(step) < 1e-15:
                break
        return t

    def boundary_point(self, w, s=0.0):
        w = np.asarray(w, dtype=complex)
        m = len(w)
        t = self.height(w, s)
        return self.point + self.frame[:, :m] @ w + (t + 1j * s) * self.frame[:, m]


def unitary_frame(nu):
    """Unitary matrix whose last column is -nu and whose first columns span nu^perp."""
    nu = np.asarray(nu, dtype=complex)
    n = len(nu)
    Q, _ = np.linalg.qr(np.column_stack([nu, np.eye(n, dtype=complex)]))
    Q = Q[:, :n]
    Q[:, 0] *= np.vdot(Q[:, 0], nu) / abs(np.vdot(Q[:, 0], nu))
    return np.column_stack([Q[:, 1:], -Q[:, 0]])


def boundary_graph(dom: SmoothDomain, p) -> BoundaryGraph:
    p = np.asarray(p, dtype=complex)
    u = to_real(p)[None]
    r = float(dom.rho_real(u)[0])
    gr = dom.grad_real(u)[0]
    gn = float(np.linalg.norm(gr))
    scale = max(1.0, float(np.abs(p).max()))
    if abs(r) > 1e-8 * scale * max(gn, 1.0):
        raise GeometryError("point is not on the boundary")
    if gn < 1e-12:
        raise GeometryError("defining function has vanishing gradient")
    nvec = gr / gn
    nu = from_real(nvec)
    E = unitary_frame(nu)
    herm, holo = complex_hessians(dom.hess_real(u)[0])
    m = dom.n - 1
    A = (E.T @ herm @ E.conj())[:m, :m] / gn
    B = (E.T @ holo @ E)[:m, :m] / gn
    return BoundaryGraph(point=p, frame=E, A=A, B=B, grad_norm=gn, domain=dom)


@dataclass
class ConvexityReport:
    modulus: float | None
    min_margin: float
    worst_point: np.ndarray
    margins: np.ndarray = field(repr=False)


def cconvexity_modulus(dom: SmoothDomain, samples=2000) -> ConvexityReport:
    pts = dom.boundary_samples(samples)
    margins = np.array([boundary_graph(dom, p).modulus for p in pts])
    k = int(np.argmin(margins))
    mm = float(margins[k])
    return ConvexityReport(mm if mm > 0 else None, mm, pts[k], margins)


# --- deformation family -----------------------------------------------------------


def deformation_family(ring: RingDomain, t, r_ball=None, R_ball=None) -> RingDomain:
    """Ring at parameter t in [0, 1]: t = 1 is the input, t = 0 two concentric
    balls B_r inside B_R inside the inner domain.  Quadratic forms (or defining
    functions) are interpolated linearly."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    o0, o1 = ring.omega0, ring.omega1
    c = o0.center
    if R_ball is None:
        R_ball = 0.9 * o0.inradius()
    if r_ball is None:
        r_ball = 0.5 * R_ball
    if not 0 < r_ball < R_ball:
        raise GeometryError("need 0 < r < R for the target balls")
    if t == 1.0:
        return RingDomain(o0, o1)
    if t == 0.0:
        return RingDomain(SmoothDomain.ball(c, r_ball), SmoothDomain.ball(c, R_ball))
    out = []
    for dom, rad in ((o0, r_ball), (o1, R_ball)):
        if dom.kind in ("ball", "ellipsoid"):
            H, cc = dom.quadratic_form()
            Ht = t * H + (1 - t) * np.eye(dom.n) / rad**2
            ct = t * cc + (1 - t) * c
            out.append(SmoothDomain.ellipsoid(Ht, ct))
        else:
            target = SmoothDomain.ball(c, rad)
            # normalise the callback so its gradient is comparable to the ball's
            out.append(_blend(dom, target, t))
    ring_t = RingDomain(out[0], out[1])
    for dom in out:
        if dom.kind == "callback":
            rep = cconvexity_modulus(dom, 400)
            if rep.modulus is None:
                raise GeometryError("interpolated domain is not strongly C-convex")
    return ring_t


def _blend(dom, target, t):
    def rho(u):
        return t * dom.rho_real(u) + (1 - t) * target.rho_real(u)

    def grad(u):
        return t * dom.grad_real(u) + (1 - t) * target.grad_real(u)

    def hess(u):
        return t * dom.hess_real(u) + (1 - t) * target.hess_real(u)

    return SmoothDomain.from_callback(dom.n, rho, grad, hess, center=target.center, name="blend")


def check_nesting(ring: RingDomain, grid=21, samples=400, **kw):
    """Nesting of the deformation family: for s < t the inner and outer
    boundaries at s lie inside the corresponding domains at t.  Returns the
    worst margin (max rho) found; negative means nested."""
    ts = np.linspace(0, 1, grid)
    fams = [deformation_family(ring, t, **kw) for t in ts]
    worst = -math.inf
    for i in range(grid - 1):
        a, b = fams[i], fams[i + 1]
        for da, db in ((a.omega0, b.omega0), (a.omega1, b.omega1)):
            pts = da.boundary_samples(samples)
            worst = max(worst, float(db.rho(pts).max()))
    return worst


# --- subsolution ---------------------------------------------------------------------


def pluricomplex_green(dom: SmoothDomain, u):
    """Green function with pole at infinity of a ball or Hermitian ellipsoid,
    V = max(0, log|H^(1/2)(z - c)|), with real gradient and Hessian (valid outside)."""
    if dom.kind not in ("ball", "ellipsoid"):
        raise GeometryError("closed-form Green function needs a ball or ellipsoid")
    M = dom._M
    d = u - dom._uc
    q = np.einsum("ni,ij,nj->n", d, M, d)
    gq = 2.0 * d @ M
    V = 0.5 * np.log(q)
    gV = gq / (2 * q[:, None])
    HV = M[None] / q[:, None, None] - gq[:, :, None] * gq[:, None, :] / (2 * q[:, None, None] ** 2)
    return V, gV, HV


def smooth_abs(x, band):
    """h >= |x| with |h'| <= 1, h'' >= 0, quadratic on |x| < band."""
    ax = np.abs(x)
    inside = ax < band
    h = np.where(inside, x**2 / (2 * band) + band / 2, ax)
    h1 = np.where(inside, x / band, np.sign(x))
    h2 = np.where(inside, 1.0 / band, 0.0)
    return h, h1, h2


@dataclass
class Subsolution:
    ring: RingDomain
    c: float
    band: float
    collar0: float
    collar1: float
    metric: np.ndarray

    def _parts(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        u = to_real(z)
        c = self.c
        V, gV, HV = pluricomplex_green(self.ring.omega0, u)
        r2 = np.sum(u**2, axis=1)
        F = c * (V - c + c**2 * r2)
        gF = c * (gV + 2 * c**2 * u)
        HF = c * (HV + 2 * c**2 * np.eye(u.shape[1])[None])
        return u, F, gF, HF

    def real_jet(self, z):
        """Value, real gradient and real Hessian of the glued function."""
        u, F, gF, HF = self._parts(z)
        c = self.c
        val, grad, hess = F.copy(), gF.copy(), HF.copy()
        s1, n1, D1 = self.ring.omega1.distance_jet(from_real(u))
        s0, n0, D0 = self.ring.omega0.distance_jet(from_real(u))
        in1 = -s1 < self.collar1
        in0 = s0 < self.collar0
        # f1 = (exp(s1/c) - 1)/c + 1 with s1 = -dist to the outer boundary
        e1 = np.exp(s1 / c)
        f1 = (e1 - 1) / c + 1
        g1 = (e1 / c**2)[:, None] * n1
        H1 = (e1 / c**3)[:, None, None] * n1[:, :, None] * n1[:, None, :] + (e1 / c**2)[:, None, None] * D1
        # f0 = exp(-1/c^2) (exp(s0/c) - 1)
        k0 = math.exp(-1.0 / c**2)
        e0 = k0 * np.exp(s0 / c)
        f0 = e0 - k0
        g0 = (e0 / c)[:, None] * n0
        H0 = (e0 / c**2)[:, None, None] * n0[:, :, None] * n0[:, None, :] + (e0 / c)[:, None, None] * D0
        for mask, f, gf, Hf in ((in1, f1, g1, H1), (in0, f0, g0, H0)):
            if not mask.any():
                continue
            x = 0.5 * (F[mask] - f[mask])
            h, h1, h2 = smooth_abs(x, self.band)
            val[mask] = 0.5 * (F[mask] + f[mask]) + h
            dg = gF[mask] - gf[mask]
            grad[mask] = 0.5 * (gF[mask] + gf[mask]) + 0.5 * h1[:, None] * dg
            hess[mask] = (0.5 * (1 + h1)[:, None, None] * HF[mask]
                          + 0.5 * (1 - h1)[:, None, None] * Hf[mask]
                          + 0.25 * h2[:, None, None] * dg[:, :, None] * dg[:, None, :])
        return val, grad, hess

    def value(self, z):
        return self.real_jet(z)[0]

    def jets(self, z):
        val, g, H = self.real_jet(z)
        herm, holo = complex_hessians(H)
        return val, complex_gradient(g), herm, holo

    def psh_margin(self, z):
        """Smallest eigenvalue of the complex Hessian relative to the metric."""
        _, _, herm, _ = self.jets(z)
        Gi_half = np.linalg.inv(np.linalg.cholesky(self.metric))
        M = Gi_half[None] @ herm @ Gi_half.conj().T[None]
        return np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M.conj(), 1, 2)))[:, 0]


@dataclass
class SubsolutionResult:
    valid: bool
    reason: str
    condition: str | None
    psi: Subsolution | None
    sigma: float = 0.0
    normal_derivative: float = 0.0
    margins: dict = field(default_factory=dict)


ORDERING = {
    "outer_boundary": "F < 1 = f1 on the outer boundary",
    "outer_collar": "F > 0 > f1 on the inner edge of the outer collar",
    "inner_collar": "F > f0 on the outer edge of the inner collar",
    "inner_boundary": "F < 0 = f0 on the inner boundary",
}


def build_subsolution(ring: RingDomain, c=0.05, band=None, metric=None, samples=800) -> SubsolutionResult:
    """Glue F = c(V - c + c^2|z|^2) with the distance exponentials near both
    boundaries.  The band of the smoothed maximum is shrunk to half the
    smallest measured ordering gap so that the boundary values stay exact."""
    n = ring.n
    G = np.eye(n) if metric is None else np.asarray(metric, dtype=complex)
    if ring.omega0.kind not in ("ball", "ellipsoid"):
        return SubsolutionResult(False, "inner domain must be a ball or Hermitian ellipsoid",
                                 "unsupported", None)
    if not 0 < c < 1:
        return SubsolutionResult(False, "c must lie in (0, 1)", "parameter", None)
    thick = ring.thickness()
    collar1 = -2.0 * c * math.log(1.0 - c)
    collar0 = 0.25 * thick
    if collar1 >= 0.25 * thick:
        return SubsolutionResult(False, "outer collar wider than a quarter of the ring", "parameter", None)
    psi = Subsolution(ring, c, 1.0, collar0, collar1, G)
    b0 = ring.omega0.boundary_samples(samples)
    b1 = ring.omega1.boundary_samples(samples)
    u0 = to_real(b0)
    u1 = to_real(b1)
    _, F1, _, _ = psi._parts(b1)
    _, F0, _, _ = psi._parts(b0)
    # edges of the collars, moved along the normals
    n1 = ring.omega1.grad_real(u1)
    n1 /= np.linalg.norm(n1, axis=1)[:, None]
    e1 = from_real(u1 - collar1 * n1)
    n0 = ring.omega0.grad_real(u0)
    n0 /= np.linalg.norm(n0, axis=1)[:, None]
    e0 = from_real(u0 + collar0 * n0)
    _, Fe1, _, _ = psi._parts(e1)
    _, Fe0, _, _ = psi._parts(e0)
    s1 = ring.omega1.project(e1)[1]
    s0 = ring.omega0.project(e0)[1]
    f1e = (np.exp(s1 / c) - 1) / c + 1
    f0e = math.exp(-1 / c**2) * (np.exp(s0 / c) - 1)
    gaps = {
        "outer_boundary": float((1.0 - F1).min()),
        "outer_collar": float(min(Fe1.min(), (Fe1 - f1e).min(), -f1e.max())),
        "inner_collar": float((Fe0 - f0e).min()),
        "inner_boundary": float((-F0).min()),
    }
    for key in ("outer_boundary", "outer_collar", "inner_collar", "inner_boundary"):
        if gaps[key] <= 0:
            return SubsolutionResult(False, f"ordering violated: {ORDERING[key]}", key, None,
                                     margins=gaps)
    auto = 0.5 * min(gaps["outer_boundary"], gaps["inner_boundary"],
                     Fe1.min() - f1e.max(), (Fe0 - f0e).min())
    psi.band = min(0.05 * thick if band is None else band, auto)
    zs = ring_samples(ring, 4000, seed=7)
    near0 = from_real(u0 + 0.5 * collar0 * n0)
    near1 = from_real(u1 - 0.5 * collar1 * n1)
    pts = np.concatenate([zs, near0, near1])
    sig = float(psi.psh_margin(pts).min())
    dn = math.exp(-1.0 / c**2) / c
    if sig <= 0:
        return SubsolutionResult(False, "glued function is not strictly plurisubharmonic on samples",
                                 "psh", psi, sig, dn, gaps)
    sigma = min(sig, dn)
    return SubsolutionResult(True, "ok", None, psi, sigma, dn, gaps)


def ring_samples(ring: RingDomain, count, seed=0):
    """Random points of the ring (rejection sampling in the outer bounding box)."""
    rng = np.random.default_rng(seed)
    n = ring.n
    c = ring.omega1.center
    R = 0.5 * ring.omega1.diameter()
    out = []
    total = 0
    while total < count:
        u = rng.uniform(-R, R, size=(4 * count, 2 * n))
        z = from_real(u) + c
        z = z[ring.contains(z)]
        out.append(z)
        total += len(z)
    return np.concatenate(out)[:count]
