"""Scalar fields on rings: pointwise Wirtinger jets and tangent-plane gauges.

Four representations share one interface: closed-form or callable fields,
radial profiles f(log|z|), Reinhardt profiles u(|z1|^2, |z2|^2) on a
boundary-conforming grid, and plain 4-D grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import interpolate

from .calg import KappaSpectrum, kappa
from .wirtinger import complex_gradient, complex_hessians, from_real, real_hessian, to_real

COND_LIMIT = 1e12


# --- jets -----------------------------------------------------------------------------


@dataclass
class Jet:
    point: np.ndarray
    value: float
    grad: np.ndarray
    herm: np.ndarray
    holo: np.ndarray


@dataclass
class JetBatch:
    points: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    herm: np.ndarray
    holo: np.ndarray

    def __len__(self):
        return len(self.value)

    def __getitem__(self, k):
        if isinstance(k, (int, np.integer)):
            return Jet(self.points[k], float(self.value[k]), self.grad[k], self.herm[k], self.holo[k])
        return JetBatch(self.points[k], self.value[k], self.grad[k], self.herm[k], self.holo[k])

    @classmethod
    def from_real(cls, points, value, rgrad, rhess):
        herm, holo = complex_hessians(rhess)
        return cls(points, value, complex_gradient(rgrad), herm, holo)

    @classmethod
    def concat(cls, batches):
        return cls(*(np.concatenate([getattr(b, k) for b in batches])
                     for k in ("points", "value", "grad", "herm", "holo")))

    def min_eig(self, G=None):
        H = self.herm
        if G is not None:
            Li = np.linalg.inv(np.linalg.cholesky(np.asarray(G, dtype=complex)))
            H = Li[None] @ H @ Li.conj().T[None]
        return np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H.conj(), 1, 2)))[:, 0]

    def real_gradient_norm(self):
        return 2.0 * np.linalg.norm(self.grad, axis=1)


def _metric_factor(G, n):
    """C with C^T G conj(C) = I, so z = C w turns G into the identity."""
    G = np.eye(n, dtype=complex) if G is None else np.asarray(G, dtype=complex)
    L = np.linalg.cholesky(G)
    return G, np.linalg.inv(L).T


# --- gauges ---------------------------------------------------------------------------


@dataclass
class GaugeBatch:
    """Tangent-plane gauges at many points, in a G-orthonormal frame whose last
    vector is the normal direction (Phi_tau = |dPhi|_G real positive)."""
    A: np.ndarray
    B: np.ndarray
    grad_norm: np.ndarray
    kappa_max: np.ndarray
    sigma: np.ndarray
    modulus: np.ndarray
    qc_modulus: np.ndarray
    S: np.ndarray
    S_reliable: np.ndarray
    W: np.ndarray
    V: np.ndarray
    frame: np.ndarray = dfield(repr=False)

    @property
    def convex(self):
        return self.modulus > 0


def _frames(nvec):
    """Unitary frames (batched) with last column equal to the unit vectors nvec."""
    N, n = nvec.shape
    M = np.concatenate([nvec[:, :, None], np.broadcast_to(np.eye(n, dtype=complex), (N, n, n))], axis=2)
    Q, _ = np.linalg.qr(M)
    q0 = Q[:, :, 0]
    ph = np.einsum("ni,ni->n", q0.conj(), nvec)
    Q = Q.copy()
    Q[:, :, 0] = q0 * (ph / np.abs(ph))[:, None]
    return np.concatenate([Q[:, :, 1:], Q[:, :, :1]], axis=2)


def _restricted_modulus(A, B):
    m = A.shape[-1]
    if m == 1:
        return A[:, 0, 0].real - np.abs(B[:, 0, 0])
    S = np.block([[A.real + B.real, A.imag - B.imag], [-A.imag - B.imag, A.real - B.real]])
    return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, 1, 2)))[:, 0]


def _kappa_max(A, B):
    m = A.shape[-1]
    if m == 1:
        a = A[:, 0, 0].real
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(a > 0, np.abs(B[:, 0, 0]) ** 2 / a**2, np.inf)
            sig = np.where(k < 1, 1.0 / (1.0 - k), np.inf)
        return k, sig
    lam, Vec = np.linalg.eigh(0.5 * (A + np.swapaxes(A.conj(), 1, 2)))
    ok = lam[:, 0] > 0
    lam_s = np.where(ok[:, None], lam, 1.0)
    Ais = Vec @ (lam_s[:, :, None] ** -0.5 * np.swapaxes(Vec.conj(), 1, 2))
    Bn = Ais @ B @ Ais.conj()
    s = np.linalg.svd(Bn, compute_uv=False)
    ev = s**2
    k = np.where(ok, ev.max(axis=1), np.inf)
    with np.errstate(divide="ignore"):
        sig = np.where(ok & (k < 1), np.sum(1.0 / (1.0 - np.minimum(ev, 1 - 1e-300)), axis=1), np.inf)
    return k, sig


def gauge_batch(grad, herm, holo, G=None, eps=None) -> GaugeBatch:
    grad = np.atleast_2d(np.asarray(grad, dtype=complex))
    herm = np.asarray(herm, dtype=complex).reshape(len(grad), grad.shape[1], grad.shape[1])
    holo = np.asarray(holo, dtype=complex).reshape(herm.shape)
    n = grad.shape[1]
    G, C = _metric_factor(G, n)
    vp = grad @ C
    Hh = C.T[None] @ herm @ C.conj()[None]
    Bh = C.T[None] @ holo @ C[None]
    gn = np.linalg.norm(vp, axis=1)
    safe = np.where(gn > 0, gn, 1.0)
    nvec = vp.conj() / safe[:, None]
    nvec[gn == 0] = np.eye(n)[-1]
    U = _frames(nvec)
    A = (np.swapaxes(U, 1, 2) @ Hh @ U.conj())[:, : n - 1, : n - 1]
    B = (np.swapaxes(U, 1, 2) @ Bh @ U)[:, : n - 1, : n - 1]
    A = 0.5 * (A + np.swapaxes(A.conj(), 1, 2))
    B = 0.5 * (B + np.swapaxes(B, 1, 2))
    mod = _restricted_modulus(A, B)
    kmax, sig = _kappa_max(A, B)
    qc = np.where(mod > 0, np.minimum(gn, mod), -np.inf)
    qc = np.where(gn > 0, qc, -np.inf)
    # S = eps * grad^H herm^-1 grad, via the eigenbasis so flat points give 0
    lam, Q = np.linalg.eigh(0.5 * (herm + np.swapaxes(herm.conj(), 1, 2)))
    w = np.einsum("nki,nk->ni", Q.conj(), grad)
    w2 = np.abs(w) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w2 == 0, 0.0, w2 / lam)
    bad = np.any((lam <= 0) & (w2 > 0), axis=1)
    e = 1.0 if eps is None else float(eps)
    with np.errstate(invalid="ignore"):
        S = np.where(bad, np.nan, e * terms.sum(axis=1))
    scale = np.abs(lam).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lam[:, 0] > 0, scale / lam[:, 0], np.inf)
    Gi = np.linalg.inv(G)
    W = np.einsum("nij,ji->n", herm, Gi).real
    V = np.einsum("nij,jk,nkl,li->n", holo, Gi.conj(), holo.conj(), Gi).real
    return GaugeBatch(A, B, gn, kmax, sig, mod, qc, S, cond < COND_LIMIT, W, V, C[None] @ U)


@dataclass
class TangentGauge:
    A: np.ndarray
    B: np.ndarray
    kappa: KappaSpectrum | None
    S: float | None
    S_reliable: bool
    W: float
    V: float
    grad_norm: float
    modulus: float
    qc_modulus: float | None
    frame: np.ndarray

    @property
    def sigma(self):
        return self.kappa.sigma if self.kappa is not None else math.inf

    @property
    def convex(self):
        return self.qc_modulus is not None


def tangent_gauge_from_jet(grad, herm, holo, G=None, eps=None) -> TangentGauge:
    """Gauge of a single jet.  Raises ValueError when the gradient vanishes."""
    grad = np.asarray(grad, dtype=complex)
    n = len(grad)
    gb = gauge_batch(grad[None], np.asarray(herm)[None], np.asarray(holo)[None], G, eps)
    if gb.grad_norm[0] <= 1e-14:
        raise ValueError("gradient vanishes at the point")
    A, B = gb.A[0], gb.B[0]
    kap = None
    if n > 1 and np.linalg.eigvalsh(A).min() > 0:
        kap = kappa(A, B)
    elif n == 1:
        kap = KappaSpectrum(np.zeros(0), 0.0, True, np.zeros((0, 0)))
    qc = float(gb.qc_modulus[0])
    S = float(gb.S[0]) if eps is not None and np.isfinite(gb.S[0]) else None
    return TangentGauge(A, B, kap, S, bool(gb.S_reliable[0]), float(gb.W[0]), float(gb.V[0]),
                        float(gb.grad_norm[0]), float(gb.modulus[0]),
                        qc if np.isfinite(qc) else None, gb.frame[0])


def four_term_gauge(grad, herm, holo):
    """A and B from the four-term formulas in the given coordinates, with the
    last coordinate playing tau.  Equals the restriction of the Hessians to
    the vectors e_a - (Phi_a / Phi_tau) e_tau, so it works away from the
    frame point as well."""
    grad = np.asarray(grad, dtype=complex)
    herm = np.asarray(herm, dtype=complex)
    holo = np.asarray(holo, dtype=complex)
    n = len(grad)
    if abs(grad[-1]) == 0:
        raise ValueError("Phi_tau vanishes")
    W = np.zeros((n, n - 1), complex)
    W[: n - 1, :] = np.eye(n - 1)
    W[n - 1, :] = -grad[: n - 1] / grad[-1]
    return W.T @ herm @ W.conj(), W.T @ holo @ W


def change_coordinates(grad, herm, holo, P, G=None):
    """Jet data after the linear change z = P w."""
    P = np.asarray(P, dtype=complex)
    out = (P.T @ grad, P.T @ herm @ P.conj(), P.T @ holo @ P)
    if G is None:
        return out
    return out + (P.T @ np.asarray(G, dtype=complex) @ P.conj(),)


# --- field base -------------------------------------------------------------------------


class ScalarField:
    """Common interface.  Subclasses implement jets(z) and node sets."""

    representation = "abstract"

    def __init__(self, n, eps=None, G=None, ring=None):
        self.n = int(n)
        self.eps = eps
        self.G = np.eye(self.n, dtype=complex) if G is None else np.asarray(G, dtype=complex)
        self.ring = ring

    def jets(self, z) -> JetBatch:
        raise NotImplementedError

    def value(self, z):
        return self.jets(z).value

    def jet(self, p) -> Jet:
        return self.jets(np.atleast_2d(np.asarray(p, dtype=complex)))[0]

    # node sets: "interior", "inner" (on the inner boundary), "outer"
    def node_points(self, region="interior"):
        raise NotImplementedError

    def node_jets(self, region="interior") -> JetBatch:
        return self.jets(self.node_points(region))

    def node_values(self, region="interior"):
        return self.node_jets(region).value

    def node_grid_shape(self, region="interior"):
        """Shape the node arrays can be reshaped to for difference estimates, or None."""
        return None

    def second_difference_scale(self, values, region="interior"):
        """Largest absolute second difference of a nodal quantity along grid axes."""
        shape = self.node_grid_shape(region)
        if shape is None:
            return 0.0
        a = np.asarray(values, dtype=float).reshape(shape)
        out = 0.0
        for ax in range(a.ndim):
            if a.shape[ax] < 3:
                continue
            sl = [slice(None)] * a.ndim
            lo, mid, hi = list(sl), list(sl), list(sl)
            lo[ax], mid[ax], hi[ax] = slice(0, -2), slice(1, -1), slice(2, None)
            d2 = a[tuple(hi)] - 2 * a[tuple(mid)] + a[tuple(lo)]
            d2 = d2[np.isfinite(d2)]
            if d2.size:
                out = max(out, float(np.abs(d2).max()))
        return out

    def spacing(self):
        return 0.0

    def third_derivatives(self, z, h=1e-3):
        """T[i, p, v] = Phi_{i p vbar} by central differences of the complex Hessian."""
        z = np.asarray(z, dtype=complex)
        n = self.n
        T = np.zeros((n, n, n), complex)
        for p in range(n):
            e = np.zeros(n, complex)
            e[p] = h
            hx = (self.jet(z + e).herm - self.jet(z - e).herm) / (2 * h)
            hy = (self.jet(z + 1j * e).herm - self.jet(z - 1j * e).herm) / (2 * h)
            T[:, p, :] = 0.5 * (hx - 1j * hy)
        return T

    def to_dict(self):
        raise NotImplementedError


# --- analytic fields ----------------------------------------------------------------------


class AnalyticField(ScalarField):
    """Field given by closed-form complex jets, or by a real callable
    differentiated with central differences."""

    representation = "analytic"

    def __init__(self, n, jet_fn=None, func=None, h=1e-4, eps=None, G=None, ring=None,
                 third_fn=None, name="analytic", params=None, samples=1500, seed=0):
        super().__init__(n, eps, G, ring)
        if (jet_fn is None) == (func is None):
            raise ValueError("give exactly one of jet_fn or func")
        self._jet_fn = jet_fn
        self._func = func
        self._third = third_fn
        self.h = h
        self.name = name
        self.params = params or {}
        self.samples = samples
        self.seed = seed

    # constructors
    @classmethod
    def quadratic(cls, A, B=None, l=None, const=0.0, **kw):
        """Phi = z^T A conj(z) + Re(z^T B z) + Re(l . z) + const."""
        A = np.asarray(A, dtype=complex)
        n = A.shape[0]
        B = np.zeros((n, n), complex) if B is None else np.asarray(B, dtype=complex)
        l = np.zeros(n, complex) if l is None else np.asarray(l, dtype=complex)

        def jf(z):
            N = len(z)
            val = np.einsum("ni,ij,nj->n", z, A, z.conj()).real + np.einsum("ni,ij,nj->n", z, B, z).real
            val = val + (z @ l).real + const
            grad = z.conj() @ A.T + z @ B + 0.5 * l
            return val, grad, np.broadcast_to(A, (N, n, n)).copy(), np.broadcast_to(B, (N, n, n)).copy()

        def tf(z):
            return np.zeros((n, n, n), complex)

        params = {"A": _cm(A), "B": _cm(B), "l": _cv(l), "const": const}
        return cls(n, jet_fn=jf, third_fn=tf, name="quadratic", params=params, **kw)

    @classmethod
    def log_hermitian(cls, H, coef=0.5, shift=0.0, **kw):
        """Phi = coef * log(z^H H z) + shift; log|z| is coef 0.5 with H = I."""
        H = np.asarray(H, dtype=complex)
        n = H.shape[0]

        def parts(z):
            a = z.conj() @ H  # d/dz_i of q
            b = z @ H.T  # d/dzbar_j of q
            q = np.einsum("ni,ni->n", a, z).real
            return a, b, q

        def jf(z):
            a, b, q = parts(z)
            val = coef * np.log(q) + shift
            grad = coef * a / q[:, None]
            herm = coef * (H.T[None] / q[:, None, None] - a[:, :, None] * b[:, None, :] / q[:, None, None] ** 2)
            holo = -coef * a[:, :, None] * a[:, None, :] / q[:, None, None] ** 2
            return val, grad, herm, holo

        def tf(z):
            a, b, q = parts(np.atleast_2d(z))
            a, b, q = a[0], b[0], q[0]
            T = (-np.einsum("vi,p->ipv", H, a) - np.einsum("i,vp->ipv", a, H)) / q**2
            T = T + 2 * np.einsum("i,v,p->ipv", a, b, a) / q**3
            return coef * T

        params = {"H": _cm(H), "coef": coef, "shift": shift}
        return cls(n, jet_fn=jf, third_fn=tf, name="log_hermitian", params=params, **kw)

    @classmethod
    def from_callable(cls, n, func, h=1e-4, **kw):
        """func maps real points (N, 2n) to values (N,)."""
        return cls(n, func=func, h=h, name="callable", **kw)

    def jets(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        if self._jet_fn is not None:
            val, grad, herm, holo = self._jet_fn(z)
            return JetBatch(z, np.asarray(val, float), grad, herm, holo)
        u = to_real(z)
        val, g, H = fd_real_jet(self._func, u, self.h)
        return JetBatch.from_real(z, val, g, H)

    def third_derivatives(self, z, h=1e-3):
        if self._third is not None:
            return self._third(np.asarray(z, dtype=complex))
        return super().third_derivatives(z, h)

    def node_points(self, region="interior"):
        if self.ring is None:
            raise ValueError("analytic field has no ring attached for sampling")
        if region == "interior":
            from .domain import ring_samples
            return ring_samples(self.ring, self.samples, seed=self.seed)
        if region == "all":
            return np.concatenate([self.node_points(r) for r in ("inner", "interior", "outer")])
        dom = self.ring.omega0 if region == "inner" else self.ring.omega1
        return dom.boundary_samples(max(200, self.samples // 3))

    def to_dict(self):
        if self.name == "callable":
            raise ValueError("callable fields cannot be serialised")
        return {"representation": "analytic", "name": self.name, "n": self.n,
                "params": self.params, "eps": self.eps, "G": _cm(self.G)}


def fd_real_jet(func, u, h):
    """Value, gradient and Hessian by second-order central differences."""
    u = np.atleast_2d(u)
    N, d = u.shape
    f0 = np.asarray(func(u), float)
    g = np.zeros((N, d))
    H = np.zeros((N, d, d))
    E = np.eye(d) * h
    fp = [np.asarray(func(u + E[k]), float) for k in range(d)]
    fm = [np.asarray(func(u - E[k]), float) for k in range(d)]
    for k in range(d):
        g[:, k] = (fp[k] - fm[k]) / (2 * h)
        H[:, k, k] = (fp[k] - 2 * f0 + fm[k]) / h**2
        for l in range(k + 1, d):
            fpp = func(u + E[k] + E[l])
            fpm = func(u + E[k] - E[l])
            fmp = func(u - E[k] + E[l])
            fmm = func(u - E[k] - E[l])
            H[:, k, l] = H[:, l, k] = (fpp - fpm - fmp + fmm) / (4 * h * h)
    return f0, g, H


def _cv(v):
    return [[float(x.real), float(x.imag)] for x in np.asarray(v, dtype=complex).ravel()]


def _cm(M):
    M = np.asarray(M, dtype=complex)
    return [_cv(row) for row in M]


def parse_cv(v):
    return np.array([complex(a, b) for a, b in v])


def parse_cm(M):
    return np.array([[complex(a, b) for a, b in row] for row in M])


# --- radial fields ------------------------------------------------------------------------


def one_sided_derivatives(f, h):
    """First and second derivatives of samples on a uniform grid, second order
    everywhere (central inside, one-sided at the ends)."""
    f = np.asarray(f, float)
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    d1[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    d2[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
    d1[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    d1[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    d2[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
    d2[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    return d1, d2


class RadialField(ScalarField):
    """Phi(z) = f(log|z|) sampled on a uniform grid in s = log|z|."""

    representation = "radial"

    def __init__(self, n, s, f, eps=None, ring=None, directions=1):
        super().__init__(n, eps, None, ring)
        self.s = np.asarray(s, float)
        self.f = np.asarray(f, float)
        self.h = float(self.s[1] - self.s[0])
        self.d1, self.d2 = one_sided_derivatives(self.f, self.h)
        self._sp = [interpolate.CubicSpline(self.s, a) for a in (self.f, self.d1, self.d2)]
        self.directions = directions

    def profile(self, s):
        s = np.asarray(s, float)
        if np.any(s < self.s[0] - 1e-12) or np.any(s > self.s[-1] + 1e-12):
            raise ValueError("point outside the radial grid")
        return tuple(sp(s) for sp in self._sp)

    def jets_from_profile(self, z, f, fp, fpp):
        q = np.sum(np.abs(z) ** 2, axis=1)
        si = z.conj() / (2 * q[:, None])
        n = self.n
        s_herm = np.eye(n)[None] / (2 * q[:, None, None]) - z.conj()[:, :, None] * z[:, None, :] / (2 * q[:, None, None] ** 2)
        s_holo = -z.conj()[:, :, None] * z.conj()[:, None, :] / (2 * q[:, None, None] ** 2)
        grad = fp[:, None] * si
        herm = fpp[:, None, None] * si[:, :, None] * si.conj()[:, None, :] + fp[:, None, None] * s_herm
        holo = fpp[:, None, None] * si[:, :, None] * si[:, None, :] + fp[:, None, None] * s_holo
        return JetBatch(z, f, grad, herm, holo)

    def jets(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        s = 0.5 * np.log(np.sum(np.abs(z) ** 2, axis=1))
        f, fp, fpp = self.profile(s)
        return self.jets_from_profile(z, f, fp, fpp)

    def _dirs(self):
        from .domain import sphere_samples
        if self.directions == 1:
            return np.eye(self.n, dtype=complex)[-1:]
        return sphere_samples(self.n, self.directions)

    def node_indices(self, region):
        N = len(self.s)
        return {"interior": np.arange(1, N - 1), "inner": np.array([0]),
                "outer": np.array([N - 1]), "all": np.arange(N)}[region]

    def node_points(self, region="interior"):
        idx = self.node_indices(region)
        dirs = self._dirs()
        r = np.exp(self.s[idx])
        return (r[:, None, None] * dirs[None]).reshape(-1, self.n)

    def node_jets(self, region="interior"):
        idx = self.node_indices(region)
        z = self.node_points(region)
        k = len(self._dirs())
        rep = np.repeat(idx, k)
        return self.jets_from_profile(z, self.f[rep], self.d1[rep], self.d2[rep])

    def node_grid_shape(self, region="interior"):
        return (len(self.node_indices(region)), len(self._dirs()))

    def second_difference_scale(self, values, region="interior"):
        shape = self.node_grid_shape(region)
        a = np.asarray(values, float).reshape(shape)
        if shape[0] < 3:
            return 0.0
        d2 = a[2:] - 2 * a[1:-1] + a[:-2]
        d2 = d2[np.isfinite(d2)]
        return float(np.abs(d2).max()) if d2.size else 0.0

    def spacing(self):
        return self.h

    def to_dict(self):
        return {"representation": "radial", "n": self.n, "eps": self.eps,
                "s": [float(x) for x in self.s], "values": [float(x) for x in self.f],
                "G": _cm(self.G)}


# --- Reinhardt fields ---------------------------------------------------------------------


class ReinhardtMap:
    """Boundary-conforming coordinates (a, r) in [0,1]^2 for a ring between
    {h0 . (x, y) = 1} and {h1 . (x, y) = 1}, x = |z1|^2, y = |z2|^2:
    sigma = (1-r) l0(a) + r l1(a),  l_k(a) = -log(h_k1 (1-a) + h_k2 a),
    x = e^sigma (1-a),  y = e^sigma a."""

    def __init__(self, h0, h1):
        self.h0 = np.asarray(h0, float)
        self.h1 = np.asarray(h1, float)

    def _l(self, h, a):
        L = h[0] * (1 - a) + h[1] * a
        d = h[1] - h[0]
        return -np.log(L), -d / L, d**2 / L**2

    def forward(self, a, r):
        l0, l0a, l0aa = self._l(self.h0, a)
        l1, l1a, l1aa = self._l(self.h1, a)
        sg = (1 - r) * l0 + r * l1
        sa = (1 - r) * l0a + r * l1a
        sr = l1 - l0
        saa = (1 - r) * l0aa + r * l1aa
        sar = l1a - l0a
        E = np.exp(sg)
        x, y = E * (1 - a), E * a
        # derivatives of x = E (1-a) and y = E a; E_r = E sr etc.
        Ea, Er = E * sa, E * sr
        Eaa = E * (sa**2 + saa)
        Ear = E * (sa * sr + sar)
        Err = E * sr**2
        xa, xr = Ea * (1 - a) - E, Er * (1 - a)
        ya, yr = Ea * a + E, Er * a
        xaa, xar, xrr = Eaa * (1 - a) - 2 * Ea, Ear * (1 - a) - Er, Err * (1 - a)
        yaa, yar, yrr = Eaa * a + 2 * Ea, Ear * a + Er, Err * a
        return x, y, (xa, xr, ya, yr), (xaa, xar, xrr, yaa, yar, yrr)

    def inverse(self, x, y):
        t = x + y
        a = np.where(t > 0, y / np.where(t > 0, t, 1), 0.0)
        l0 = self._l(self.h0, a)[0]
        l1 = self._l(self.h1, a)[0]
        r = (np.log(t) - l0) / (l1 - l0)
        return a, r


def chain_rule(first, second, ua, ur, uaa, uar, urr):
    """(u_x, u_y, u_xx, u_xy, u_yy) from derivatives in (a, r)."""
    xa, xr, ya, yr = first
    xaa, xar, xrr, yaa, yar, yrr = second
    det = xa * yr - xr * ya
    ux = (yr * ua - ya * ur) / det
    uy = (-xr * ua + xa * ur) / det
    # u_aa = uxx xa^2 + 2 uxy xa ya + uyy ya^2 + ux xaa + uy yaa, etc.
    ra = uaa - ux * xaa - uy * yaa
    rm = uar - ux * xar - uy * yar
    rr = urr - ux * xrr - uy * yrr
    M = np.stack([
        np.stack([xa**2, 2 * xa * ya, ya**2], -1),
        np.stack([xa * xr, xa * yr + xr * ya, ya * yr], -1),
        np.stack([xr**2, 2 * xr * yr, yr**2], -1),
    ], -2)
    sol = np.linalg.solve(M, np.stack([ra, rm, rr], -1)[..., None])[..., 0]
    return ux, uy, sol[..., 0], sol[..., 1], sol[..., 2]


def grid_derivatives(U, ha, hr):
    """Second-order derivatives of a 2-D array along both axes with
    one-sided stencils at every edge (axis 0 = a, axis 1 = r)."""
    ua, uaa = _axis_derivs(U, ha, 0)
    ur, urr = _axis_derivs(U, hr, 1)
    uar = _axis_derivs(ua, hr, 1)[0]
    return ua, ur, uaa, uar, urr


def _axis_derivs(U, h, axis):
    U = np.moveaxis(np.asarray(U, float), axis, 0)
    d1 = np.empty_like(U)
    d2 = np.empty_like(U)
    d1[1:-1] = (U[2:] - U[:-2]) / (2 * h)
    d2[1:-1] = (U[2:] - 2 * U[1:-1] + U[:-2]) / h**2
    d1[0] = (-3 * U[0] + 4 * U[1] - U[2]) / (2 * h)
    d1[-1] = (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * h)
    d2[0] = (2 * U[0] - 5 * U[1] + 4 * U[2] - U[3]) / h**2
    d2[-1] = (2 * U[-1] - 5 * U[-2] + 4 * U[-3] - U[-4]) / h**2
    return np.moveaxis(d1, 0, axis), np.moveaxis(d2, 0, axis)


def reinhardt_complex_jets(z, u, ux, uy, uxx, uxy, uyy):
    """Complex jets of Phi = u(|z1|^2, |z2|^2)."""
    N = len(z)
    d1 = np.stack([ux, uy], -1)
    D2 = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    zb = z.conj()
    grad = d1 * zb
    herm = D2 * zb[:, :, None] * z[:, None, :]
    herm[:, 0, 0] += ux
    herm[:, 1, 1] += uy
    holo = D2 * zb[:, :, None] * zb[:, None, :]
    return JetBatch(z, np.asarray(u, float).reshape(N), grad, herm, holo)


class ReinhardtField(ScalarField):
    """u(a, r) on a uniform (a, r) grid; Phi(z) = u(|z1|^2, |z2|^2), n = 2."""

    representation = "reinhardt"

    def __init__(self, h0, h1, a, r, U, eps=None, G=None, ring=None):
        super().__init__(2, eps, G, ring)
        self.map = ReinhardtMap(h0, h1)
        self.a = np.asarray(a, float)
        self.r = np.asarray(r, float)
        self.U = np.asarray(U, float)
        self.ha = float(self.a[1] - self.a[0])
        self.hr = float(self.r[1] - self.r[0])
        A, R = np.meshgrid(self.a, self.r, indexing="ij")
        self.x, self.y, self._first, self._second = self.map.forward(A, R)
        comp = grid_derivatives(self.U, self.ha, self.hr)
        self.derivs = chain_rule(self._first, self._second, *comp)
        self._splines = None

    def node_mask(self, region):
        Na, Nr = self.U.shape
        m = np.zeros((Na, Nr), bool)
        if region == "interior":
            m[:, 1:-1] = True
        elif region == "inner":
            m[:, 0] = True
        elif region == "outer":
            m[:, -1] = True
        elif region == "all":
            m[:] = True
        else:
            raise ValueError(region)
        return m

    def node_points(self, region="interior"):
        m = self.node_mask(region)
        return np.stack([np.sqrt(self.x[m]), np.sqrt(self.y[m])], -1).astype(complex)

    def node_jets(self, region="interior"):
        m = self.node_mask(region)
        z = self.node_points(region)
        ux, uy, uxx, uxy, uyy = (d[m] for d in self.derivs)
        return reinhardt_complex_jets(z, self.U[m], ux, uy, uxx, uxy, uyy)

    def node_grid_shape(self, region="interior"):
        m = self.node_mask(region)
        return (self.U.shape[0], int(m.sum() // self.U.shape[0]))

    def spacing(self):
        return max(self.ha, self.hr)

    def _interp(self):
        if self._splines is None:
            arrs = (self.U,) + tuple(self.derivs)
            self._splines = [interpolate.RectBivariateSpline(self.a, self.r, A, kx=3, ky=3) for A in arrs]
        return self._splines

    def coords(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        x, y = np.abs(z[:, 0]) ** 2, np.abs(z[:, 1]) ** 2
        a, r = self.map.inverse(x, y)
        tol = 1e-9
        if np.any(r < -tol) or np.any(r > 1 + tol):
            raise ValueError("point outside the Reinhardt grid")
        return z, np.clip(a, 0, 1), np.clip(r, 0, 1)

    def jets(self, z):
        z, a, r = self.coords(z)
        vals = [sp.ev(a, r) for sp in self._interp()]
        return reinhardt_complex_jets(z, *vals)

    def value(self, z):
        z, a, r = self.coords(z)
        return self._interp()[0].ev(a, r)

    def to_dict(self):
        return {"representation": "reinhardt", "n": 2, "eps": self.eps,
                "h0": [float(v) for v in self.map.h0], "h1": [float(v) for v in self.map.h1],
                "a": [float(v) for v in self.a], "r": [float(v) for v in self.r],
                "values": [[float(v) for v in row] for row in self.U], "G": _cm(self.G)}


# --- full 4-D grid fields ------------------------------------------------------------------


class FullField(ScalarField):
    """Values on a uniform grid over a box in R^4 (coordinates x1, x2, y1, y2).
    `inside` marks the ring nodes; other nodes hold extrapolated ghost values
    or NaN."""

    representation = "full"

    def __init__(self, axes, values, inside, boundary_layer=None, eps=None, G=None, ring=None):
        super().__init__(2, eps, G, ring)
        self.axes = [np.asarray(a, float) for a in axes]
        self.values = np.asarray(values, float)
        self.inside = np.asarray(inside, bool)
        self.h = np.array([a[1] - a[0] for a in self.axes])
        self.boundary_layer = boundary_layer
        self._derivs = None

    def real_derivatives(self):
        """Central-difference real gradient and Hessian at every node with a full stencil."""
        if self._derivs is not None:
            return self._derivs
        V = self.values
        d = 4
        shape = V.shape
        g = np.full(shape + (d,), np.nan)
        H = np.full(shape + (d, d), np.nan)

        def sh(arr, offs):
            out = np.full(shape, np.nan)
            src = [slice(None)] * d
            dst = [slice(None)] * d
            for k, o in enumerate(offs):
                if o > 0:
                    src[k], dst[k] = slice(o, None), slice(0, -o)
                elif o < 0:
                    src[k], dst[k] = slice(0, o), slice(-o, None)
            out[tuple(dst)] = arr[tuple(src)]
            return out

        for k in range(d):
            e = [0] * d
            e[k] = 1
            p = sh(V, e)
            m = sh(V, [-x for x in e])
            g[..., k] = (p - m) / (2 * self.h[k])
            H[..., k, k] = (p - 2 * V + m) / self.h[k] ** 2
            for l in range(k + 1, d):
                f = [0] * d
                f[l] = 1
                pp = sh(V, [a + b for a, b in zip(e, f)])
                pm = sh(V, [a - b for a, b in zip(e, f)])
                mp = sh(V, [-a + b for a, b in zip(e, f)])
                mm = sh(V, [-a - b for a, b in zip(e, f)])
                H[..., k, l] = H[..., l, k] = (pp - pm - mp + mm) / (4 * self.h[k] * self.h[l])
        self._derivs = (g, H)
        return g, H

    def grid_points(self, mask):
        idx = np.nonzero(mask)
        u = np.stack([self.axes[k][idx[k]] for k in range(4)], -1)
        return from_real(u)

    def region_mask(self, region):
        if region == "interior":
            return self.inside & ~self._layer()
        if region in ("inner", "outer"):
            lay = self._layer()
            if self.ring is None:
                return lay
            z = self.grid_points(lay)
            near0 = self.ring.omega0.project(z)[1]
            near1 = -self.ring.omega1.project(z)[1]
            m = np.zeros_like(lay)
            sel = near0 < near1 if region == "inner" else near0 >= near1
            m[tuple(np.array(np.nonzero(lay))[:, sel])] = True
            return m
        if region == "all":
            return self.inside
        raise ValueError(region)

    def _layer(self):
        if self.boundary_layer is not None:
            return self.boundary_layer
        lay = np.zeros_like(self.inside)
        for k in range(4):
            for o in (1, -1):
                lay |= self.inside & ~np.roll(self.inside, o, axis=k)
        self.boundary_layer = lay
        return lay

    def node_points(self, region="interior"):
        return self.grid_points(self.region_mask(region))

    def node_jets(self, region="interior"):
        m = self.region_mask(region)
        g, H = self.real_derivatives()
        return JetBatch.from_real(self.grid_points(m), self.values[m], g[m], H[m])

    def spacing(self):
        return float(self.h.max())

    def second_difference_scale(self, values, region="interior"):
        m = self.region_mask(region)
        a = np.full(self.values.shape, np.nan)
        a[m] = values
        out = 0.0
        for ax in range(4):
            d2 = np.roll(a, 1, ax) - 2 * a + np.roll(a, -1, ax)
            d2 = d2[np.isfinite(d2)]
            if d2.size:
                out = max(out, float(np.abs(d2).max()))
        return out

    def jets(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        u = to_real(z)
        g, H = self.real_derivatives()
        vals = self._interp_nodal(self.values, u)
        gi = np.stack([self._interp_nodal(g[..., k], u) for k in range(4)], -1)
        Hi = np.stack([np.stack([self._interp_nodal(H[..., k, l], u) for l in range(4)], -1)
                       for k in range(4)], -2)
        return JetBatch.from_real(z, vals, gi, Hi)

    def _interp_nodal(self, arr, u):
        it = interpolate.RegularGridInterpolator(self.axes, arr, method="linear",
                                                 bounds_error=False, fill_value=np.nan)
        return it(u)

    def value(self, z):
        return self._interp_nodal(self.values, to_real(np.atleast_2d(z)))

    def to_dict(self):
        vals = np.where(np.isfinite(self.values), self.values, None)
        return {"representation": "full", "n": 2, "eps": self.eps,
                "axes": [[float(v) for v in a] for a in self.axes],
                "values": vals.ravel().tolist(), "inside": self.inside.ravel().astype(int).tolist(),
                "G": _cm(self.G)}


# --- pointwise operations -------------------------------------------------------------------


def jet(field: ScalarField, p) -> Jet:
    return field.jet(p)


def tangent_gauge(field: ScalarField, p, G=None, eps=None) -> TangentGauge:
    j = field.jet(p)
    G = field.G if G is None else G
    eps = field.eps if eps is None else eps
    if np.sqrt(np.real(j.grad.conj() @ np.linalg.solve(G, j.grad))) <= 1e-8:
        raise ValueError("gradient vanishes at the point")
    return tangent_gauge_from_jet(j.grad, j.herm, j.holo, G, eps)


def qc_modulus(field: ScalarField, p, G=None):
    """min(|dPhi|_G, modulus of the tangent Taylor gauge); None when not convex."""
    return tangent_gauge(field, p, G).qc_modulus


def pluriharmonic_jets(c, d, z):
    """Gradient and holomorphic Hessian of q = Re(c . z + z^T d z)."""
    return 0.5 * c[None] + z @ d.T, d


def robustness_probe(field: ScalarField, G=None, eps_max=0.5, trials=32, samples=600, seed=0,
                     iters=30):
    """Largest sampled eps so that Phi - q stays strongly qc-convex at the
    sample points for every drawn pluriharmonic quadratic q with
    max |dq|_G = eps.  An empirical upper estimate of the robustness, reported
    as a lower bound only in the sense that the draws found no failure."""
    G = field.G if G is None else np.asarray(G, dtype=complex)
    jb = field.node_jets("interior")
    rng = np.random.default_rng(seed)
    if len(jb) > samples:
        jb = jb[rng.choice(len(jb), samples, replace=False)]
    base = gauge_batch(jb.grad, jb.herm, jb.holo, G)
    if not np.all(base.qc_modulus > 0):
        raise ValueError("field is not strongly qc-convex at every sample")
    n = field.n
    Gi = np.linalg.inv(G)
    z = jb.points
    worst = int(np.argmin(base.qc_modulus))
    draws = []
    Bw = jb.holo[worst]
    if np.linalg.norm(Bw) > 0:
        draws.append((np.zeros(n, complex), -Bw / np.linalg.norm(Bw)))
    vw = jb.grad[worst]
    draws.append((2 * vw / np.linalg.norm(vw), np.zeros((n, n), complex)))
    for _ in range(trials):
        c = rng.normal(size=n) + 1j * rng.normal(size=n)
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        draws.append((c, 0.5 * (X + X.T)))
    unit = []
    for c, d in draws:
        gq, _ = pluriharmonic_jets(c, d, z)
        size = np.sqrt(np.einsum("ni,ij,nj->n", gq.conj(), Gi, gq).real).max()
        unit.append((c / size, d / size))

    def survives(e):
        for c, d in unit:
            gq, hq = pluriharmonic_jets(e * c, e * d, z)
            gb = gauge_batch(jb.grad - gq, jb.herm, jb.holo - hq[None], G)
            if not np.all(gb.qc_modulus > 0):
                return False
        return True

    if survives(eps_max):
        return float(eps_max)
    lo, hi = 0.0, float(eps_max)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if survives(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --- serialisation of fields -------------------------------------------------------------------


def field_from_dict(d, ring=None):
    rep = d.get("representation")
    G = parse_cm(d["G"]) if "G" in d else None
    eps = d.get("eps")
    if rep == "radial":
        return RadialField(int(d["n"]), d["s"], d["values"], eps=eps, ring=ring)
    if rep == "reinhardt":
        return ReinhardtField(d["h0"], d["h1"], d["a"], d["r"], np.array(d["values"], float),
                              eps=eps, G=G, ring=ring)
    if rep == "full":
        axes = [np.array(a, float) for a in d["axes"]]
        shape = tuple(len(a) for a in axes)
        vals = np.array([np.nan if v is None else v for v in d["values"]], float).reshape(shape)
        inside = np.array(d["inside"], bool).reshape(shape)
        return FullField(axes, vals, inside, eps=eps, G=G, ring=ring)
    if rep == "analytic":
        p = d["params"]
        name = d["name"]
        if name == "quadratic":
            return AnalyticField.quadratic(parse_cm(p["A"]), parse_cm(p["B"]), parse_cv(p["l"]),
                                           p["const"], eps=eps, G=G, ring=ring)
        if name == "log_hermitian":
            return AnalyticField.log_hermitian(parse_cm(p["H"]), p["coef"], p["shift"],
                                               eps=eps, G=G, ring=ring)
    raise ValueError(f"unknown field representation {rep!r}")
