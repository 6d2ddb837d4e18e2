"""Dirichlet solvers for tr(H^-1 G) = 1/eps on rings (Phi = 0 inside, 1 outside).

Three symmetry tiers: radial profiles in s = log|z| (balls, G = I),
Reinhardt profiles on a boundary-conforming (a, r) grid (diagonal
ellipsoids, n = 2) and a plain 4-D grid with nonlinear Gauss-Seidel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as splinalg

from .domain import GeometryError, RingDomain
from .field import (FullField, RadialField, ReinhardtField, ReinhardtMap, chain_rule,
                    gauge_batch)

log = logging.getLogger(__name__)

MAX_FULL_NODES = 24**4


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveConfig:
    eps: float
    eps_schedule: list | None = None
    resolution: int | tuple = 129
    damping: float = 1.0
    max_iters: int = 60
    residual_tol: float = 1e-8
    psd_floor: float = 0.0
    initial: str = "interpolation"
    relaxation: float = 1.6
    ghost: str = "quadratic"
    max_sweeps: int = 20000
    audit_nodes: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.eps_schedule is not None:
            sch = [float(e) for e in self.eps_schedule]
            if any(b >= a for a, b in zip(sch, sch[1:])):
                raise ValueError("eps_schedule must be strictly descending")
            if not math.isclose(sch[-1], self.eps, rel_tol=1e-12):
                raise ValueError("eps_schedule must end at eps")
            self.eps_schedule = sch
        if self.initial not in ("interpolation", "harmonic", "subsolution"):
            raise ValueError(f"unknown initial guess {self.initial!r}")
        if self.ghost not in ("quadratic", "linear", "projection"):
            raise ValueError(f"unknown ghost rule {self.ghost!r}")

    def at(self, eps):
        d = dict(self.__dict__)
        d.update(eps=eps, eps_schedule=None)
        return SolveConfig(**d)


@dataclass
class SolveReport:
    field: object
    residual_inf: float
    psd_margin: float
    iterations: int
    eps: float
    success: bool = True
    message: str = "ok"
    eps_trace: list = dfield(default_factory=list)
    audit: float | None = None
    tier: str = ""

    def summary(self):
        return {"tier": self.tier, "eps": self.eps, "residual_inf": self.residual_inf,
                "psd_margin": self.psd_margin, "iterations": self.iterations,
                "success": self.success, "message": self.message, "audit": self.audit,
                "eps_trace": [[float(a), float(b)] for a, b in self.eps_trace]}


def relative_trace_residual(herm, G, eps):
    """|eps tr(H^-1 G) - 1| per point (the solvers' reported residual)."""
    tr = np.einsum("nij,ji->n", np.linalg.inv(herm), G).real
    return np.abs(eps * tr - 1.0)


def audit_residual(field, nodal_residual, eps, count=100, seed=0):
    """Re-evaluate the residual through the field's own jets at random interior
    nodes and return the largest disagreement with the solver's numbers."""
    jb = field.node_jets("interior")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(jb), min(count, len(jb)), replace=False)
    mine = relative_trace_residual(jb.herm[idx], field.G, eps)
    return float(np.abs(mine - np.asarray(nodal_residual)[idx]).max())


def _schedule_to(eps_start, eps_target, max_ratio=2.0):
    if eps_start <= 0 or not math.isfinite(eps_start):
        return [eps_target]
    k = max(1, math.ceil(abs(math.log(eps_target / eps_start)) / math.log(max_ratio)))
    return list(eps_start * (eps_target / eps_start) ** (np.arange(1, k + 1) / k))


def _newton_continuation(step_fn, state, eps_start, eps_target, label):
    """Walk eps geometrically from eps_start to eps_target, halving the ratio
    when a Newton solve fails."""
    eps_cur = eps_start
    ratio = 2.0
    total = 0
    trace = []
    while True:
        if math.isclose(eps_cur, eps_target, rel_tol=1e-14):
            nxt = eps_target
        else:
            up = eps_target > eps_cur
            nxt = eps_cur * ratio if up else eps_cur / ratio
            if (up and nxt > eps_target) or (not up and nxt < eps_target):
                nxt = eps_target
        ok, new_state, its, res = step_fn(state, nxt)
        total += its
        if ok:
            state = new_state
            trace.append((nxt, res))
            eps_cur = nxt
            if nxt == eps_target:
                return state, total, trace
        else:
            ratio = math.sqrt(ratio)
            if ratio < 1.0 + 1e-4:
                raise SolverError(f"{label}: continuation stalled at eps={eps_cur:.6g}")


# --- radial tier ---------------------------------------------------------------------------


def _radial_ops(N, h):
    e = np.ones(N)
    D1 = sparse.diags([-e[:-1], e[:-1]], [-1, 1], shape=(N, N), format="lil") / (2 * h)
    D2 = sparse.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(N, N), format="lil") / h**2
    return D1.tocsr(), D2.tocsr()


def radial_residual(f, s, eps, n):
    """Relative residual eps tr(H^-1) - 1 at interior nodes, written in s."""
    h = s[1] - s[0]
    fp = (f[2:] - f[:-2]) / (2 * h)
    fpp = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
    E = np.exp(2 * s[1:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        return eps * (4 * E / fpp + 2 * (n - 1) * E / fp) - 1.0, fp, fpp


def solve_radial(r, R, cfg: SolveConfig, G=None, n=2, f0=None) -> SolveReport:
    """Radial profiles f(s), s = log|z|, on a uniform s-grid with
    cfg.resolution points.  Newton runs on the cleared form
    f''(f' - 2(n-1) eps e^{2s}) - 4 eps e^{2s} f' = 0."""
    if not 0 < r < R:
        raise GeometryError("need 0 < r < R")
    if G is not None and not np.allclose(np.asarray(G), np.eye(n)):
        raise ValueError("radial reduction needs G = identity")
    N = int(cfg.resolution if np.isscalar(cfg.resolution) else cfg.resolution[0])
    s = np.linspace(math.log(r), math.log(R), N)
    h = s[1] - s[0]
    E = np.exp(2 * s)
    if f0 is None:
        f = (E - E[0]) / (E[-1] - E[0])
        eps_start = 1.0 / (n * (R**2 - r**2))
    else:
        f = np.asarray(f0, float).copy()
        res, fp, fpp = radial_residual(f, s, 1.0, n)
        eps_start = float(np.median(1.0 / (res + 1.0)))
    f[0], f[-1] = 0.0, 1.0
    Ei = E[1:-1]

    def newton(f_in, eps):
        f = f_in.copy()
        its = 0
        for its in range(1, cfg.max_iters + 1):
            fp = (f[2:] - f[:-2]) / (2 * h)
            fpp = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
            a = fp - 2 * (n - 1) * eps * Ei
            F = fpp * a - 4 * eps * Ei * fp
            dFpp = a
            dFp = fpp - 4 * eps * Ei
            lo = dFpp / h**2 - dFp / (2 * h)
            di = -2 * dFpp / h**2
            up = dFpp / h**2 + dFp / (2 * h)
            J = sparse.diags([lo[1:], di, up[:-1]], [-1, 0, 1], format="csc")
            try:
                d = splinalg.spsolve(J, -F)
            except RuntimeError:
                return False, f_in, its, math.inf
            t = cfg.damping
            while t > 1e-6:
                g = f.copy()
                g[1:-1] += t * d
                gp = (g[2:] - g[:-2]) / (2 * h)
                gpp = (g[2:] - 2 * g[1:-1] + g[:-2]) / h**2
                if gp.min() > cfg.psd_floor and gpp.min() > cfg.psd_floor and \
                        (gp - 2 * (n - 1) * eps * Ei).min() > 0:
                    break
                t *= 0.5
            else:
                return False, f_in, its, math.inf
            f = g
            if np.abs(t * d).max() < 1e-14:
                break
        res = np.abs(radial_residual(f, s, eps, n)[0]).max()
        return bool(res <= max(cfg.residual_tol, 1e-6)), f, its, res

    f, its, trace = _newton_continuation(newton, f, eps_start, cfg.eps, "radial solve")
    res, fp, fpp = radial_residual(f, s, cfg.eps, n)
    field = RadialField(n, s, f, eps=cfg.eps)
    psd = float(min((fp / (2 * Ei)).min(), (fpp / (4 * Ei)).min()))
    rep = SolveReport(field, float(np.abs(res).max()), psd, its, cfg.eps, eps_trace=trace, tier="radial")
    rep.audit = audit_residual(field, np.abs(res), cfg.eps, cfg.audit_nodes, cfg.seed)
    _finish(rep, cfg)
    return rep


def _finish(rep, cfg):
    if not rep.residual_inf <= cfg.residual_tol:
        rep.success = False
        rep.message = f"residual {rep.residual_inf:.3e} above tolerance {cfg.residual_tol:.1e}"
    elif not rep.psd_margin > 0:
        rep.success = False
        rep.message = "complex Hessian lost positivity"


# --- Reinhardt tier ----------------------------------------------------------------------------


def _axis_ops(N, h):
    """Sparse first/second derivative matrices, second order with one-sided ends."""
    D1 = sparse.lil_matrix((N, N))
    D2 = sparse.lil_matrix((N, N))
    for i in range(1, N - 1):
        D1[i, i - 1], D1[i, i + 1] = -0.5 / h, 0.5 / h
        D2[i, i - 1], D2[i, i], D2[i, i + 1] = 1 / h**2, -2 / h**2, 1 / h**2
    D1[0, 0:3] = np.array([-3, 4, -1]) / (2 * h)
    D1[N - 1, N - 3:N] = np.array([1, -4, 3]) / (2 * h)
    D2[0, 0:4] = np.array([2, -5, 4, -1]) / h**2
    D2[N - 1, N - 4:N] = np.array([-1, 4, -5, 2]) / h**2
    return D1.tocsr(), D2.tocsr()


class ReinhardtOperator:
    """Sparse maps from nodal u to p = u_x + x u_xx, w = u_y + y u_yy and u_xy."""

    def __init__(self, h0, h1, Na, Nr):
        self.map = ReinhardtMap(h0, h1)
        self.a = np.linspace(0, 1, Na)
        self.r = np.linspace(0, 1, Nr)
        ha, hr = self.a[1], self.r[1]
        A, R = np.meshgrid(self.a, self.r, indexing="ij")
        self.x, self.y, first, second = self.map.forward(A, R)
        Da1, Da2 = _axis_ops(Na, ha)
        Dr1, Dr2 = _axis_ops(Nr, hr)
        Ia, Ir = sparse.identity(Na), sparse.identity(Nr)
        Ua = sparse.kron(Da1, Ir)
        Uaa = sparse.kron(Da2, Ir)
        Ur = sparse.kron(Ia, Dr1)
        Urr = sparse.kron(Ia, Dr2)
        Uar = sparse.kron(Da1, Dr1)
        # linear chain-rule coefficients, found by pushing unit vectors through
        basis = [np.zeros(A.shape) for _ in range(5)]
        coefs = []
        for k in range(5):
            args = [np.zeros(A.shape)] * 5
            args = list(args)
            args[k] = np.ones(A.shape)
            coefs.append(chain_rule(first, second, *args))
        del basis
        ops = (Ua, Ur, Uaa, Uar, Urr)

        def combine(j):
            M = sparse.csr_matrix((Na * Nr, Na * Nr))
            for k in range(5):
                M = M + sparse.diags(coefs[k][j].ravel()) @ ops[k]
            return M.tocsr()

        Ux, Uy, Uxx, Uxy, Uyy = (combine(j) for j in range(5))
        X = sparse.diags(self.x.ravel())
        Y = sparse.diags(self.y.ravel())
        self.P = (Ux + X @ Uxx).tocsr()
        self.W = (Uy + Y @ Uyy).tocsr()
        self.Q = Uxy.tocsr()
        self.xy = (self.x * self.y).ravel()
        inner = np.zeros(A.shape, bool)
        inner[:, 1:-1] = True
        self.unknown = inner.ravel()
        self.shape = A.shape

    def parts(self, u):
        return self.P @ u, self.W @ u, self.Q @ u


def reinhardt_form(ring: RingDomain):
    form = ring.reinhardt_form()
    if form is None or ring.n != 2:
        raise GeometryError("Reinhardt solver needs two centred diagonal ellipsoids in C^2")
    return form


def _initial_reinhardt(op):
    t = op.x + op.y
    l0 = op.map._l(op.map.h0, op.a[:, None])[0]
    l1 = op.map._l(op.map.h1, op.a[:, None])[0]
    t0, t1 = np.exp(l0), np.exp(l1)
    return ((t - t0) / (t1 - t0)).ravel()


def solve_reinhardt(ring: RingDomain, G=None, cfg: SolveConfig = None, u0=None) -> SolveReport:
    h0, h1 = reinhardt_form(ring)
    G = np.eye(2) if G is None else np.asarray(G, dtype=complex)
    if abs(G[0, 1]) > 0 or abs(G[1, 0]) > 0:
        raise ValueError("Reinhardt reduction needs a diagonal metric")
    g1, g2 = float(G[0, 0].real), float(G[1, 1].real)
    res_ = cfg.resolution
    Na, Nr = (res_, res_) if np.isscalar(res_) else tuple(res_)
    op = ReinhardtOperator(h0, h1, Na, Nr)
    u = _initial_reinhardt(op) if u0 is None else np.asarray(u0, float).ravel().copy()
    u = u.reshape(op.shape)
    u[:, 0], u[:, -1] = 0.0, 1.0
    u = u.ravel()
    unk = op.unknown
    P, Wm, Q = op.P[unk], op.W[unk], op.Q[unk]
    xy = op.xy[unk]

    def evaluate(u, eps):
        p, w, q = P @ u, Wm @ u, Q @ u
        M = p * w - xy * q**2
        D = g1 * w + g2 * p
        return p, w, q, M, D

    def psd_ok(p, M):
        return p.min() > cfg.psd_floor and M.min() > 0

    def newton(u_in, eps):
        u = u_in.copy()
        its = 0
        for its in range(1, cfg.max_iters + 1):
            p, w, q, M, D = evaluate(u, eps)
            Nres = M / D - eps
            Np = (w * D - M * g2) / D**2
            Nw = (p * D - M * g1) / D**2
            Nq = -2 * xy * q / D
            J = sparse.diags(Np) @ P + sparse.diags(Nw) @ Wm + sparse.diags(Nq) @ Q
            J = J[:, unk].tocsc()
            try:
                d = splinalg.spsolve(J, -Nres)
            except RuntimeError:
                return False, u_in, its, math.inf
            if not np.all(np.isfinite(d)):
                return False, u_in, its, math.inf
            t = cfg.damping
            norm0 = np.abs(Nres).max()
            while t > 1e-6:
                v = u.copy()
                v[unk] += t * d
                p2, w2, q2, M2, D2 = evaluate(v, eps)
                if psd_ok(p2, M2) and np.abs(M2 / D2 - eps).max() <= max(norm0, 1e-15) * (1 + 1e-9) + 1e-14:
                    break
                t *= 0.5
            else:
                return False, u_in, its, math.inf
            u = v
            if np.abs(t * d).max() < 1e-13:
                break
        p, w, q, M, D = evaluate(u, eps)
        rel = np.abs(eps * D / M - 1.0).max()
        return bool(rel <= max(cfg.residual_tol, 1e-6)), u, its, rel

    p, w, q, M, D = evaluate(u, 1.0)
    eps_start = float(np.median(M / D))
    u, its, trace = _newton_continuation(newton, u, eps_start, cfg.eps, "Reinhardt solve")
    p, w, q, M, D = evaluate(u, cfg.eps)
    rel = np.abs(cfg.eps * D / M - 1.0)
    U = u.reshape(op.shape)
    field = ReinhardtField(h0, h1, op.a, op.r, U, eps=cfg.eps, G=G, ring=ring)
    # smallest eigenvalue of the 2x2 complex Hessian at each unknown node
    tr = p + w
    disc = np.sqrt(np.maximum((p - w) ** 2 + 4 * xy * q**2, 0))
    psd = float((0.5 * (tr - disc)).min())
    rep = SolveReport(field, float(rel.max()), psd, its, cfg.eps, eps_trace=trace, tier="reinhardt")
    rep.audit = audit_residual(field, rel, cfg.eps, cfg.audit_nodes, cfg.seed)
    _finish(rep, cfg)
    return rep


# --- full 4-D tier --------------------------------------------------------------------------------


def _box_axes(ring, N):
    dom = ring.omega1
    if dom.kind in ("ball", "ellipsoid"):
        H, c = dom.quadratic_form()
        from .wirtinger import hermitian_real_matrix, to_real
        Minv = np.linalg.inv(hermitian_real_matrix(H))
        half = np.sqrt(np.diag(Minv))
        cu = to_real(c)
    else:
        from .wirtinger import to_real
        pts = to_real(dom.boundary_samples(4000))
        cu = 0.5 * (pts.max(0) + pts.min(0))
        half = 0.5 * (pts.max(0) - pts.min(0)) * 1.02
    h = 2 * half / (N - 3)
    return [cu[k] + h[k] * (np.arange(N) - (N - 1) / 2) for k in range(4)]


class FullGrid:
    """Geometry of the 4-D grid: ring nodes, ghost nodes and the linear ghost rule."""

    def __init__(self, ring: RingDomain, N, ghost="quadratic"):
        if ring.n != 2:
            raise ValueError("full grid solver supports n = 2 only")
        if N**4 > MAX_FULL_NODES:
            raise ValueError(f"grid {N}^4 exceeds the memory guard of {MAX_FULL_NODES} nodes")
        from .wirtinger import from_real
        self.ring = ring
        self.N = N
        self.axes = _box_axes(ring, N)
        self.h = np.array([a[1] - a[0] for a in self.axes])
        mesh = np.meshgrid(*self.axes, indexing="ij")
        U = np.stack([m.ravel() for m in mesh], -1)
        Z = from_real(U)
        inside = ring.contains(Z)
        shape = (N,) * 4
        self.shape = shape
        self.inside = inside.reshape(shape)
        # inside nodes must keep their whole stencil in the box
        edge = np.zeros(shape, bool)
        for k in range(4):
            sl = [slice(None)] * 4
            sl[k] = 0
            edge[tuple(sl)] = True
            sl[k] = -1
            edge[tuple(sl)] = True
        if np.any(self.inside & edge):
            raise GeometryError("ring touches the edge of the grid box")
        layers = 3 if ghost == "quadratic" else 1
        near = ndimage.binary_dilation(self.inside, structure=np.ones((3,) * 4, bool), iterations=layers)
        self.ghost = near & ~self.inside
        gidx = np.flatnonzero(self.ghost.ravel())
        self.ghost_flat = gidx
        zg = Z[gidx]
        r0 = ring.omega0.rho(zg)
        use0 = r0 < 0
        foot = np.empty_like(zg)
        dist = np.empty(len(zg))
        inward = np.empty((len(zg), 4))
        if use0.any():
            f0, s0, n0 = ring.omega0.project(zg[use0])
            foot[use0], dist[use0], inward[use0] = f0, -s0, n0
        if (~use0).any():
            f1, s1, n1 = ring.omega1.project(zg[~use0])
            foot[~use0], dist[~use0], inward[~use0] = f1, s1, -n1
        self.ghost_bc = np.where(use0, 0.0, 1.0)
        self.ghost_dist = dist
        from .wirtinger import to_real
        fu = to_real(foot)
        hmax = self.h.max()
        x = -dist
        if ghost == "quadratic":
            # quadratic in the normal direction through the boundary value and
            # two probes at depths d and 2d, probes read by tensor cubic interpolation
            d = hmax
            self.ghost_weights = [-x * (x - 2 * d) / d**2, x * (x - d) / (2 * d**2)]
            self.ghost_interp = [self._interp_cubic(fu + k * d * inward) for k in (1, 2)]
        else:
            d = 2.0 * hmax
            self.ghost_weights = [x / d]
            self.ghost_interp = [self._interp_matrix(fu + d * inward)]
        defined = (self.inside | self.ghost).ravel()
        for M in self.ghost_interp:
            cols = np.unique(M.indices)
            if not defined[cols].all():
                raise GeometryError("grid too coarse for the ghost-node rule")
        # ghost values = offset + matrix @ nodal values
        self.ghost_matrix = sum(sparse.diags(w) @ M for w, M in zip(self.ghost_weights, self.ghost_interp)).tocsr()
        self.ghost_offset = self.ghost_bc * (1.0 - sum(self.ghost_weights))
        self.Z = Z

    def _interp_cubic(self, pts):
        """Sparse tensor-product cubic Lagrange weights (4 nodes per axis)."""
        N = self.N
        base = np.stack([np.floor((pts[:, k] - self.axes[k][0]) / self.h[k]) for k in range(4)], -1).astype(int)
        base = np.clip(base, 1, N - 3)
        t = np.stack([(pts[:, k] - self.axes[k][base[:, k]]) / self.h[k] for k in range(4)], -1)
        W1 = np.stack([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                       -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6], -1)
        rows, cols, vals = [], [], []
        offs = np.array(np.meshgrid(*[np.arange(4)] * 4, indexing="ij")).reshape(4, -1).T
        for o in offs:
            idx = base + o - 1
            w = W1[:, 0, o[0]] * W1[:, 1, o[1]] * W1[:, 2, o[2]] * W1[:, 3, o[3]]
            rows.append(np.arange(len(pts)))
            cols.append(np.ravel_multi_index(idx.T, self.shape))
            vals.append(w)
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(len(pts), N**4))

    def _interp_matrix(self, pts):
        """Sparse multilinear interpolation weights (rows: points, cols: flat nodes)."""
        N = self.N
        lo = np.stack([np.floor((pts[:, k] - self.axes[k][0]) / self.h[k]) for k in range(4)], -1).astype(int)
        lo = np.clip(lo, 0, N - 2)
        t = np.stack([(pts[:, k] - self.axes[k][lo[:, k]]) / self.h[k] for k in range(4)], -1)
        rows, cols, vals = [], [], []
        for corner in range(16):
            bits = [(corner >> k) & 1 for k in range(4)]
            idx = lo + np.array(bits)
            w = np.ones(len(pts))
            for k in range(4):
                w *= t[:, k] if bits[k] else 1 - t[:, k]
            flat = np.ravel_multi_index(idx.T, self.shape)
            rows.append(np.arange(len(pts)))
            cols.append(flat)
            vals.append(w)
        M = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(len(pts), N**4))
        return M

    def update_ghosts(self, V, rule="quadratic"):
        flat = V.reshape(-1)
        if rule == "projection":
            flat[self.ghost_flat] = self.ghost_bc
            return
        src = np.nan_to_num(flat)
        src[self.ghost_flat] = self.ghost_offset + self.ghost_matrix @ src
        flat[self.ghost_flat] = src[self.ghost_flat]

    def colors(self):
        idx = np.indices(self.shape)
        col = (idx[0] % 2) + 2 * (idx[1] % 2) + 4 * (idx[2] % 2) + 8 * (idx[3] % 2)
        return [np.flatnonzero((self.inside & (col == c)).ravel()) for c in range(16)]


def _hessian_parts(V, idx, shape, h):
    """Real second differences at flat indices idx with the centre value
    removed from the diagonal entries.  Returns (R, diag_coef)."""
    strides = np.array([shape[1] * shape[2] * shape[3], shape[2] * shape[3], shape[3], 1])
    R = np.zeros((len(idx), 4, 4))
    for k in range(4):
        sk = strides[k]
        R[:, k, k] = (V[idx + sk] + V[idx - sk]) / h[k] ** 2
        for l in range(k + 1, 4):
            sl = strides[l]
            m = (V[idx + sk + sl] - V[idx + sk - sl] - V[idx - sk + sl] + V[idx - sk - sl]) / (4 * h[k] * h[l])
            R[:, k, l] = R[:, l, k] = m
    return R


def _herm_from_real(R):
    # coordinates ordered (x1, x2, y1, y2)
    xx, yy, xy, yx = R[:, :2, :2], R[:, 2:, 2:], R[:, :2, 2:], R[:, 2:, :2]
    return 0.25 * (xx + yy + 1j * (xy - yx))


def _full_local_update(V, idx, grid, G, eps):
    R = _hessian_parts(V, idx, grid.shape, grid.h)
    Hr = _herm_from_real(R)
    h = grid.h
    d = 0.5 * np.array([1 / h[0] ** 2 + 1 / h[2] ** 2, 1 / h[1] ** 2 + 1 / h[3] ** 2])
    a1, a2 = Hr[:, 0, 0].real, Hr[:, 1, 1].real
    h12 = Hr[:, 0, 1]
    g11, g22, g21 = G[0, 0].real, G[1, 1].real, G[1, 0]
    alpha = d[0] * d[1]
    beta = -(a1 * d[1] + a2 * d[0]) + eps * (d[1] * g11 + d[0] * g22)
    gamma = a1 * a2 - np.abs(h12) ** 2 - eps * (a2 * g11 + a1 * g22 - 2 * (h12 * g21).real)
    disc = beta**2 - 4 * alpha * gamma
    c = (-beta - np.sqrt(np.maximum(disc, 0.0))) / (2 * alpha)
    return c, disc < 0


def full_nodal_hessians(V, grid, idx=None):
    idx = np.flatnonzero(grid.inside.ravel()) if idx is None else idx
    R = _hessian_parts(V.reshape(-1), idx, grid.shape, grid.h)
    for k in range(4):
        R[:, k, k] -= 2 * V.reshape(-1)[idx] / grid.h[k] ** 2
    return _herm_from_real(R)


def _initial_full(grid, cfg, G):
    ring = grid.ring
    zin = grid.Z[grid.inside.ravel()]
    V = np.full(grid.shape, np.nan)
    if cfg.initial == "subsolution":
        from .domain import build_subsolution
        res = build_subsolution(ring, metric=G)
        if not res.valid:
            raise SolverError(f"subsolution unavailable: {res.reason}")
        V.reshape(-1)[grid.inside.ravel()] = res.psi.value(zin)
    elif cfg.initial == "harmonic":
        V = harmonic_full(grid, cfg).copy()
    else:
        s0 = ring.omega0.project(zin)[1]
        s1 = -ring.omega1.project(zin)[1]
        V.reshape(-1)[grid.inside.ravel()] = s0 / (s0 + s1)
    grid.update_ghosts(V, cfg.ghost)
    return V


def _sor(grid, V, local, cfg, tol, label):
    cols = grid.colors()
    flat = V.reshape(-1)
    om = cfg.relaxation
    for sweep in range(1, cfg.max_sweeps + 1):
        change = 0.0
        for idx in cols:
            if idx.size == 0:
                continue
            target = local(flat, idx)
            delta = om * (target - flat[idx])
            flat[idx] += delta
            change = max(change, float(np.abs(delta).max()))
        grid.update_ghosts(V, cfg.ghost)
        if not np.isfinite(change):
            raise SolverError(f"{label}: iteration produced non-finite values")
        if change < tol:
            return sweep
    raise SolverError(f"{label}: no convergence in {cfg.max_sweeps} sweeps")


def harmonic_full(grid, cfg):
    V = np.full(grid.shape, np.nan)
    zin = grid.Z[grid.inside.ravel()]
    s0 = grid.ring.omega0.project(zin)[1]
    s1 = -grid.ring.omega1.project(zin)[1]
    V.reshape(-1)[grid.inside.ravel()] = s0 / (s0 + s1)
    grid.update_ghosts(V, cfg.ghost)
    h = grid.h
    w = 2 * (1 / h**2).sum()

    def local(flat, idx):
        R = _hessian_parts(flat, idx, grid.shape, h)
        return np.trace(R, axis1=1, axis2=2) / w

    _sor(grid, V, local, cfg, 1e-12, "harmonic majorant")
    return V


def solve_full(ring: RingDomain, G=None, cfg: SolveConfig = None, V0=None) -> SolveReport:
    G = np.eye(2, dtype=complex) if G is None else np.asarray(G, dtype=complex)
    N = int(cfg.resolution if np.isscalar(cfg.resolution) else cfg.resolution[0])
    grid = FullGrid(ring, N, cfg.ghost)
    V = _initial_full(grid, cfg, G) if V0 is None else np.array(V0, float)
    bad_total = [0]

    def local(flat, idx):
        c, bad = _full_local_update(flat, idx, grid, G, cfg.eps)
        bad_total[0] = int(bad.sum())
        return c

    sweeps = _sor(grid, V, local, cfg, 1e-11, "full-grid solve")
    herm = full_nodal_hessians(V, grid)
    rel = relative_trace_residual(herm, G, cfg.eps)
    psd = float(np.linalg.eigvalsh(herm)[:, 0].min())
    field = FullField(grid.axes, V, grid.inside, eps=cfg.eps, G=G, ring=ring)
    rep = SolveReport(field, float(rel.max()), psd, sweeps, cfg.eps, tier="full",
                      eps_trace=[(cfg.eps, float(rel.max()))])
    # audit against the field's jets at interior nodes (same node order as its mask)
    m_int = field.region_mask("interior")[grid.inside]
    rep.audit = audit_residual(field, rel[m_int], cfg.eps, cfg.audit_nodes, cfg.seed)
    _finish(rep, cfg)
    rep.grid = grid
    return rep


# --- dispatch, continuation, harmonic majorants -------------------------------------------------


def choose_tier(ring: RingDomain, G=None):
    G = np.eye(ring.n) if G is None else np.asarray(G)
    if ring.is_concentric_balls() and np.allclose(G, np.eye(ring.n)):
        return "radial"
    if ring.n == 2 and ring.reinhardt_form() is not None and abs(G[0, 1]) == 0:
        return "reinhardt"
    return "full"


def solve(ring: RingDomain, G=None, cfg: SolveConfig = None, tier=None, warm=None) -> SolveReport:
    tier = tier or choose_tier(ring, G)
    if tier == "radial":
        r = ring.omega0.params["radius"]
        R = ring.omega1.params["radius"]
        rep = solve_radial(r, R, cfg, G, n=ring.n, f0=None if warm is None else warm.f)
        rep.field.ring = ring
        return rep
    if tier == "reinhardt":
        return solve_reinhardt(ring, G, cfg, u0=None if warm is None else warm.U)
    return solve_full(ring, G, cfg, V0=None if warm is None else warm.values)


def nodal_values(field):
    if isinstance(field, RadialField):
        return field.f
    if isinstance(field, ReinhardtField):
        return field.U.ravel()
    return field.values[field.inside]


def continuation(ring: RingDomain, G=None, cfg: SolveConfig = None, tier=None):
    """Warm-started solves along cfg.eps_schedule.  Returns (reports,
    increments, failure) where increments[k] is the sup-norm change between
    stages k and k+1 and failure is None or the message of the failing stage."""
    schedule = cfg.eps_schedule or [cfg.eps]
    reports, incs = [], []
    prev = None
    for e in schedule:
        try:
            rep = solve(ring, G, cfg.at(e), tier=tier, warm=None if prev is None else prev.field)
        except (SolverError, GeometryError) as exc:
            return reports, incs, f"eps={e:g}: {exc}"
        if prev is not None:
            incs.append(float(np.abs(nodal_values(rep.field) - nodal_values(prev.field)).max()))
        reports.append(rep)
        if not rep.success:
            return reports, incs, f"eps={e:g}: {rep.message}"
        prev = rep
    return reports, incs, None


def harmonic_majorant(field):
    """Discrete harmonic function with the field's boundary values, on the
    field's own grid and stencils.  Returns nodal values in the order of
    nodal_values(field)."""
    if isinstance(field, RadialField):
        s, n = field.s, field.n
        N = len(s)
        D1, D2 = _radial_ops(N, s[1] - s[0])
        L = (D2 + 2 * (n - 1) * D1).tolil()
        rhs = np.zeros(N)
        for i in (0, N - 1):
            L[i, :] = 0
            L[i, i] = 1
            rhs[i] = field.f[i]
        return splinalg.spsolve(L.tocsc(), rhs)
    if isinstance(field, ReinhardtField):
        Na, Nr = field.U.shape
        op = ReinhardtOperator(field.map.h0, field.map.h1, Na, Nr)
        L = (op.P + op.W).tolil()
        known = ~op.unknown
        rhs = np.zeros(Na * Nr)
        ub = field.U.ravel()
        Lk = L[op.unknown][:, known]
        A = L[op.unknown][:, op.unknown].tocsc()
        u = ub.copy()
        u[op.unknown] = splinalg.spsolve(A, -(Lk @ ub[known]))
        del rhs
        return u
    if isinstance(field, FullField):
        grid = FullGrid(field.ring, len(field.axes[0]))
        cfg = SolveConfig(eps=field.eps or 1.0)
        V = harmonic_full(grid, cfg)
        return V[grid.inside]
    raise TypeError("harmonic majorant needs a grid field")


def full_vs_reference(full_field: FullField, ref_field):
    """Sup-norm difference between a 4-D grid solution and another field at
    the 4-D ring nodes."""
    z = full_field.node_points("all")
    return float(np.abs(full_field.values[full_field.inside] - ref_field.value(z)).max())


def gauges_on_nodes(field, region="interior"):
    jb = field.node_jets(region)
    return jb, gauge_batch(jb.grad, jb.herm, jb.holo, field.G, field.eps)
