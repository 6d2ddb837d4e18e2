"""Leaves of the Monge-Ampere foliation in C^2.

In a unitary frame (z, tau) fixed at a base point, with tau along the complex
normal of the level set, a leaf is the holomorphic curve zeta -> (h(zeta), zeta)
solving h' = -f, f = Phi_{tau zbar} / Phi_{z zbar}.  The tangent vector
d/dtau - f d/dz lies in the kernel of the complex Hessian whenever the Hessian
has rank one, so the trace is exact for homogeneous solutions and approximate
otherwise.

Leaf-parameter Laplacians are taken with five-point fourth-order stencils on
points re-traced from the base, never by differentiating interpolants twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .field import _frames
from .verify import CheckReport

FLAT_TOL = 1e-6


class SingularLeaf(ValueError):
    """Phi_{z zbar} degenerates, so the leaf direction is undefined."""


@dataclass
class Leaf:
    base: np.ndarray
    frame: np.ndarray          # columns (z, tau) in original coordinates
    radius: float
    steps: int
    zeta: np.ndarray
    h: np.ndarray
    points: np.ndarray
    f: np.ndarray
    valid: np.ndarray
    truncated: bool
    integration_error: float   # |h_steps - h_2steps| over valid samples
    refinement_ratio: float    # error(steps) / error(2 steps); >= 8 for a 4th-order trace
    meta: dict = dfield(default_factory=dict)

    def samples(self):
        return self.zeta[self.valid], self.points[self.valid]


@dataclass
class LeafGauge:
    a: float
    b: complex
    Q: float
    S_leaf: float

    @property
    def convex(self):
        return self.a > 0


def base_frame(field, p):
    """Unitary frame at p whose last column is the complex normal conj(dPhi)/|dPhi|."""
    j = field.jet(p)
    g = j.grad
    nrm = np.linalg.norm(g)
    if nrm <= 1e-14:
        raise SingularLeaf("gradient vanishes at the base point")
    return _frames((g.conj() / nrm)[None])[0]


def _frame_jets(field, pts, U):
    jb = field.jets(pts)
    grad = jb.grad @ U
    herm = np.einsum("ia,nij,jb->nab", U, jb.herm, U.conj())
    holo = np.einsum("ia,nij,jb->nab", U, jb.holo, U)
    return jb, grad, herm, holo


def leaf_slope(field, pts, U):
    """f = Phi_{tau zbar} / Phi_{z zbar} in the frame U at each point."""
    _, _, herm, _ = _frame_jets(field, pts, U)
    d = herm[:, 0, 0].real
    if np.any(np.abs(d) < FLAT_TOL):
        raise SingularLeaf("Phi_{z zbar} vanishes along the trace")
    return herm[:, 1, 0] / d


def _trace_to(field, p, U, targets, steps, ring):
    """h at each target zeta, integrating along the segment [0, zeta] with RK4."""
    targets = np.asarray(targets, complex)
    h = np.zeros_like(targets)
    alive = np.ones(len(targets), bool)
    ds = 1.0 / steps

    def pos(hh, s, idx):
        return p[None] + np.outer(hh, U[:, 0]) + np.outer(s * targets[idx], U[:, 1])

    def rhs(hh, s, idx):
        z = pos(hh, s, idx)
        ok = ring.contains(z) if ring is not None else np.ones(len(idx), bool)
        out = np.zeros(len(idx), complex)
        if ok.any():
            out[ok] = -targets[idx][ok] * leaf_slope(field, z[ok], U)
        return out, ok

    for k in range(steps):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        s = k * ds
        y = h[idx]
        k1, o1 = rhs(y, s, idx)
        k2, o2 = rhs(y + 0.5 * ds * k1, s + 0.5 * ds, idx)
        k3, o3 = rhs(y + 0.5 * ds * k2, s + 0.5 * ds, idx)
        k4, o4 = rhs(y + ds * k3, s + ds, idx)
        ok = o1 & o2 & o3 & o4
        h[idx] = y + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        alive[idx[~ok]] = False
    end = p[None] + np.outer(h, U[:, 0]) + np.outer(targets, U[:, 1])
    if ring is not None:
        alive &= ring.contains(end)
    return h, end, alive


def disc_grid(radius, per_side):
    k = np.arange(-per_side, per_side + 1)
    X, Y = np.meshgrid(k, k, indexing="ij")
    zeta = (X + 1j * Y).ravel() * (radius / per_side)
    return zeta[np.abs(zeta) <= radius * (1 + 1e-12)]


def leaf_trace(field, p, radius=None, steps=16, per_side=4, frame=None) -> Leaf:
    """Trace the leaf through p over the zeta-disc of the given radius.

    Samples leaving the ring are dropped and flag the leaf as truncated."""
    if field.n != 2:
        raise ValueError("leaves are traced for n = 2 only")
    p = np.asarray(p, complex)
    ring = field.ring
    if radius is None:
        radius = 0.3 * ring.thickness() if ring is not None else 0.1
    U = base_frame(field, p) if frame is None else np.asarray(frame, complex)
    leaf_slope(field, p[None], U)  # singular start raises here
    zeta = disc_grid(radius, per_side)
    h, pts, ok = _trace_to(field, p, U, zeta, steps, ring)
    h2, _, ok2 = _trace_to(field, p, U, zeta, 2 * steps, ring)
    h4, _, ok4 = _trace_to(field, p, U, zeta, 4 * steps, ring)
    valid = ok & ok2 & ok4
    e1 = float(np.abs(h - h2)[valid].max()) if valid.any() else 0.0
    e2 = float(np.abs(h2 - h4)[valid].max()) if valid.any() else 0.0
    ratio = math.inf if e2 <= 1e-14 else e1 / e2
    fv = np.full(len(zeta), np.nan + 0j)
    if valid.any():
        fv[valid] = leaf_slope(field, pts[valid], U)
    return Leaf(p, U, float(radius), int(steps), zeta, h, pts, fv, valid,
                bool((~valid).any()), e1, ratio, {"error_at_2steps": e2})


def _retrace(field, leaf, targets):
    _, pts, ok = _trace_to(field, leaf.base, leaf.frame, targets, leaf.steps, field.ring)
    return pts, ok


# --- leaf quantities ------------------------------------------------------------------------


def leaf_harmonicity_residual(field, leaf) -> float:
    """max |Phi_{tau taubar} - |Phi_{tau zbar}|^2 / Phi_{z zbar}| over the leaf samples,
    which is the leaf Laplacian of Phi up to the frame normalisation."""
    _, pts = leaf.samples()
    _, _, herm, _ = _frame_jets(field, pts, leaf.frame)
    r = herm[:, 1, 1].real - np.abs(herm[:, 1, 0]) ** 2 / herm[:, 0, 0].real
    return float(np.abs(r).max()) if len(r) else 0.0


def _gauge_arrays(field, pts, U, G=None):
    jb, grad, herm, holo = _frame_jets(field, pts, U)
    if np.any(np.abs(grad[:, 1]) == 0):
        raise ValueError("Phi_tau vanishes in the leaf frame")
    w = grad[:, 0] / grad[:, 1]
    a = (herm[:, 0, 0] - w * herm[:, 1, 0] - w.conj() * herm[:, 0, 1] + np.abs(w) ** 2 * herm[:, 1, 1]).real
    b = holo[:, 0, 0] - 2 * w * holo[:, 1, 0] + w**2 * holo[:, 1, 1]
    f = herm[:, 1, 0] / herm[:, 0, 0].real
    # leaf tangent d/dtau - f d/dz in original coordinates
    Z = U[None, :, 1] - f[:, None] * U[None, :, 0]
    Gm = field.G if G is None else np.asarray(G, complex)
    gzz = np.einsum("ni,ij,nj->n", Z, Gm, Z.conj()).real
    phi_zeta = grad[:, 1] - f * grad[:, 0]
    S = np.abs(phi_zeta) ** 2 / gzz
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(a > 0, np.abs(b) ** 2 / a**2, np.inf)
    return a, b, Q, S


def leaf_gauge(field, p, frame=None, G=None) -> LeafGauge:
    """Four-term gauges a, b in the leaf frame, Q = |b|^2/a^2 and the leaf
    gradient ratio S = |Phi_zeta|^2 / G(d_zeta, d_zetabar).  Q is infinite
    (nonconvex marker) when a <= 0."""
    p = np.asarray(p, complex)
    U = base_frame(field, p) if frame is None else np.asarray(frame, complex)
    a, b, Q, S = _gauge_arrays(field, p[None], U, G)
    return LeafGauge(float(a[0]), complex(b[0]), float(Q[0]), float(S[0]))


# --- stencils along leaves ----------------------------------------------------------------

_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFF = np.array([-2, -1, 0, 1, 2])


def _micro_targets(zeta, delta):
    """Targets zeta + delta*k and zeta + i*delta*k for k in -2..2, per sample."""
    re = zeta[:, None] + delta * _OFF[None]
    im = zeta[:, None] + 1j * delta * _OFF[None]
    return np.concatenate([re, im], axis=1)


def leaf_stencil_values(field, leaf, func, delta=None):
    """Evaluate func(points) on re-traced micro-grids around every valid sample.
    Returns (zeta, values[k, 10], ok[k]) with columns real-axis then imaginary-axis."""
    zeta, _ = leaf.samples()
    if delta is None:
        delta = 0.05 * leaf.radius
    T = _micro_targets(zeta, delta)
    pts, ok = _retrace(field, leaf, T.ravel())
    ok = ok.reshape(T.shape).all(axis=1)
    vals = np.full(T.size, np.nan, dtype=complex)
    flat_ok = np.repeat(ok, T.shape[1])
    if flat_ok.any():
        vals[flat_ok] = func(pts[flat_ok])
    return zeta, vals.reshape(T.shape), ok, delta


def leaf_laplacian(field, leaf, func, delta=None):
    """d_zeta d_zetabar of func along the leaf (a quarter of the zeta Laplacian)."""
    zeta, V, ok, delta = leaf_stencil_values(field, leaf, func, delta)
    lap = (V[:, :5] @ _D2 + V[:, 5:] @ _D2) / delta**2
    return zeta[ok], 0.25 * lap[ok]


def cauchy_riemann_residual(field, leaf, delta=None) -> float:
    """max |d_zetabar f| along the leaf; f restricted to a leaf of a homogeneous
    solution is holomorphic."""
    def slope(z):
        return leaf_slope(field, z, leaf.frame)
    zeta, V, ok, delta = leaf_stencil_values(field, leaf, slope, delta)
    dx = V[:, :5] @ _D1 / delta
    dy = V[:, 5:] @ _D1 / delta
    r = np.abs(0.5 * (dx + 1j * dy))[ok]
    return float(r.max()) if r.size else 0.0


def phi_z_harmonicity(field, leaf, delta=None) -> float:
    """max |(Phi_z)_{zeta zetabar}| along the leaf in the leaf frame."""
    U = leaf.frame

    def phz(z):
        return field.jets(z).grad @ U[:, 0]
    _, lap = leaf_laplacian(field, leaf, phz, delta)
    return float(np.abs(lap).max()) if lap.size else 0.0


def leafwise_mp_check(field, leaves, which="invQ", tol=1e-6, delta=None, G=None) -> CheckReport:
    """Leaf Laplacian of 1/(1 - Q) (expected >= -tol) or of log S (expected <= tol)."""
    if which not in ("invQ", "logS"):
        raise ValueError("which must be 'invQ' or 'logS'")
    worst, wit, count = math.inf, None, 0
    for leaf in leaves:
        U = leaf.frame

        def quantity(z):
            _, _, Q, S = _gauge_arrays(field, z, U, G)
            if which == "invQ":
                if np.any(Q >= 1):
                    raise ValueError("Q reaches 1 on a leaf")
                return 1.0 / (1.0 - Q)
            return np.log(S)

        try:
            zeta, lap = leaf_laplacian(field, leaf, quantity, delta)
        except ValueError as exc:
            return CheckReport(f"leaf_{which}", "fail", -math.inf, tol,
                               [[float(c.real), float(c.imag)] for c in leaf.base],
                               {"reason": str(exc)})
        lap = lap.real
        count += lap.size
        if lap.size == 0:
            continue
        signed = lap if which == "invQ" else -lap
        k = int(np.argmin(signed))
        if signed[k] < worst:
            worst = float(signed[k])
            pt = leaf.base + U[:, 1] * zeta[k]
            wit = [[float(c.real), float(c.imag)] for c in pt]
    if count == 0:
        return CheckReport(f"leaf_{which}", "not_applicable", 0.0, tol, None,
                           {"reason": "no interior leaf samples"})
    status = "pass" if worst >= -tol else "fail"
    return CheckReport(f"leaf_{which}", status, worst, tol, wit, {"samples": count, "leaves": len(leaves)})


def leaf_rows(field, leaf, G=None):
    """Rows (zeta_re, zeta_im, z1_re, z1_im, z2_re, z2_im, Phi, S, Q) for CSV dumps."""
    zeta, pts = leaf.samples()
    if len(pts) == 0:
        return []
    vals = field.value(pts)
    _, _, Q, S = _gauge_arrays(field, pts, leaf.frame, G)
    return [[float(zeta[k].real), float(zeta[k].imag),
             float(pts[k, 0].real), float(pts[k, 0].imag),
             float(pts[k, 1].real), float(pts[k, 1].imag),
             float(vals[k]), float(S[k]), float(Q[k])] for k in range(len(pts))]
