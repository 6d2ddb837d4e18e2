"""Convexity gauges of real quadratic polynomials on C^m.

A quadratic gauge is P(z) = A_{ab} z_a conj(z_b) + Re(B_{ab} z_a z_b) + L with
A Hermitian and B complex symmetric.  Matrices are stored with the
convention A[a, b] = coefficient of z_a conj(z_b), so the second order Taylor
polynomial of a function Phi at a point has A = (Phi_{a bbar}) and
B = (Phi_{ab}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

SYM_TOL = 1e-10


def _as_square(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


def _scale(M):
    return max(1.0, float(np.abs(M).max(initial=0.0)))


@dataclass
class QuadraticGauge:
    A: np.ndarray
    B: np.ndarray
    L: float = 0.0

    def __post_init__(self):
        self.A = _as_square(self.A, "A")
        self.B = _as_square(self.B, "B")
        if self.A.shape != self.B.shape:
            raise ValueError("A and B must have the same shape")
        if np.abs(self.A - self.A.conj().T).max() > SYM_TOL * _scale(self.A):
            raise ValueError("A is not Hermitian")
        if np.abs(self.B - self.B.T).max() > SYM_TOL * _scale(self.B):
            raise ValueError("B is not symmetric")
        self.A = 0.5 * (self.A + self.A.conj().T)
        self.B = 0.5 * (self.B + self.B.T)

    @property
    def m(self):
        return self.A.shape[0]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return (
            np.einsum("...a,ab,...b->...", z, self.A, z.conj()).real
            + np.einsum("...a,ab,...b->...", z, self.B, z).real
            + self.L
        )


@dataclass
class MetricForm:
    G: np.ndarray

    def __post_init__(self):
        self.G = _as_square(self.G, "G")
        if np.abs(self.G - self.G.conj().T).max() > SYM_TOL * _scale(self.G):
            raise ValueError("metric is not Hermitian")
        self.G = 0.5 * (self.G + self.G.conj().T)
        if np.linalg.eigvalsh(self.G).min() <= 0:
            raise ValueError("metric is not positive definite")

    @classmethod
    def identity(cls, m):
        return cls(np.eye(m))


@dataclass
class KappaSpectrum:
    eigenvalues: np.ndarray
    sigma: float
    admissible: bool
    matrix: np.ndarray = field(repr=False, default=None)

    @property
    def max(self):
        return float(self.eigenvalues.max(initial=0.0))


def _metric(g, m):
    if g is None:
        return MetricForm.identity(m)
    if isinstance(g, MetricForm):
        return g
    return MetricForm(g)


def real_form(A, B):
    """Symmetric S with Re(z^T A conj z) + Re(z^T B z) = u^T S u for u = (Re z, Im z)."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    Ar, Ai, Br, Bi = A.real, A.imag, B.real, B.imag
    S = np.block([[Ar + Br, Ai - Bi], [-Ai - Bi, Ar - Br]])
    return 0.5 * (S + S.T)


def convexity_margin(q: QuadraticGauge, g=None) -> float:
    """Signed smallest generalized eigenvalue of the real quadratic form against g."""
    g = _metric(g, q.m)
    S = real_form(q.A, q.B)
    Sg = real_form(g.G, np.zeros_like(g.G))
    return float(linalg.eigh(S, Sg, eigvals_only=True)[0])


def modulus_of_convexity(q: QuadraticGauge, g=None):
    """Largest mu with P - mu*g(z, z) strongly convex; None when P is not strongly convex."""
    mu = convexity_margin(q, g)
    return mu if mu > 0 else None


# --- Takagi factorization -------------------------------------------------


def takagi(B, tol=1e-13):
    """Factor a complex symmetric B as U diag(D) U^T with U unitary, D >= 0 descending.

    Uses the real symmetric embedding [[Re B, Im B], [Im B, -Re B]] whose
    positive eigenpairs (x, y) give the Takagi vectors x + iy.
    """
    B = _as_square(B, "B")
    if np.abs(B - B.T).max() > SYM_TOL * _scale(B):
        raise ValueError("B is not symmetric")
    m = B.shape[0]
    M = np.block([[B.real, B.imag], [B.imag, -B.real]])
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(w)[::-1][:m]
    D = np.clip(w[order], 0.0, None)
    U = V[:m, order] + 1j * V[m:, order]
    small = D <= tol * max(1.0, float(D.max(initial=0.0)))
    if small.any():
        # the kernel block of the embedding is not split by eigh; rebuild it
        good = U[:, ~small]
        Q, _ = np.linalg.qr(np.hstack([good, np.eye(m)]))
        U = np.hstack([good, Q[:, good.shape[1]:m]])
        D = np.concatenate([D[~small], D[small]])
    # polish unitarity; this moves columns by O(roundoff) only
    P, _ = linalg.polar(U)
    return P, D


def takagi_skip_conjugation(B, tol=1e-13):
    """Deliberately broken variant used to exercise the cross-checks."""
    U, D = takagi(B, tol)
    return U.conj(), D


# --- kappa -----------------------------------------------------------------


def kappa(A, B) -> KappaSpectrum:
    """Spectrum of K = B conj(A^-1) conj(B) A^-1 and sigma = tr (I - K)^-1."""
    A = _as_square(A, "A")
    B = _as_square(B, "B")
    try:
        Lc = np.linalg.cholesky(0.5 * (A + A.conj().T))
    except np.linalg.LinAlgError:
        raise ValueError("A is not positive definite") from None
    Li = linalg.solve_triangular(Lc, np.eye(A.shape[0]), lower=True)
    Bn = Li @ B @ Li.T
    s = np.linalg.svd(Bn, compute_uv=False)
    ev = np.sort(s**2)
    Ainv = np.linalg.inv(A)
    K = B @ Ainv.conj() @ B.conj() @ Ainv
    admissible = bool(ev.max(initial=0.0) < 1.0)
    sigma = float(np.sum(1.0 / (1.0 - ev))) if admissible else math.inf
    return KappaSpectrum(eigenvalues=ev, sigma=sigma, admissible=admissible, matrix=K)


def _strongly_convex_by_kappa(A, Bs):
    """Vectorised test over a stack Bs: A > 0 and spectral radius of K below one."""
    try:
        Lc = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return np.zeros(len(Bs), dtype=bool)
    if np.linalg.eigvalsh(A).min() <= 0:
        return np.zeros(len(Bs), dtype=bool)
    Li = linalg.solve_triangular(Lc, np.eye(A.shape[0]), lower=True)
    Bn = Li[None] @ Bs @ Li.T[None]
    smax = np.linalg.svd(Bn, compute_uv=False)[:, 0]
    return smax < 1.0


# --- degree of convexity ----------------------------------------------------


@dataclass
class DegreeResult:
    degree: float | None
    worst_W: np.ndarray | None
    bracket: tuple


def degree_of_convexity(q: QuadraticGauge, g=None, tol=1e-9, n_random=24, seed=0,
                        takagi_impl=takagi, refine=True) -> DegreeResult:
    """Largest delta such that P - Re(W z z) stays strongly convex for every
    symmetric W with W conj(G^-1) conj(W) G^-1 <= delta^2.

    Works by bisection on delta against an adversarial family of W.  The
    convexity of each perturbed polynomial is decided through the kappa
    criterion, never through the real eigenproblem used for the modulus.
    """
    g = _metric(g, q.m)
    m = q.m
    C = np.linalg.cholesky(g.G)
    Ci = linalg.solve_triangular(C, np.eye(m), lower=True)
    A1 = Ci @ q.A @ Ci.conj().T
    B1 = Ci @ q.B @ Ci.T
    A1 = 0.5 * (A1 + A1.conj().T)

    def rayleigh(z):
        return (z @ A1 @ z.conj()).real + (z @ B1 @ z).real

    dirs = []
    try:
        La = np.linalg.cholesky(A1)
        Lai = linalg.solve_triangular(La, np.eye(m), lower=True)
        U, _ = takagi_impl(Lai @ B1 @ Lai.T)
        for k in range(m):
            v = 1j * U[:, k].conj()
            dirs.append(Lai.T @ v)
    except np.linalg.LinAlgError:
        pass
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        dirs.append(rng.normal(size=m) + 1j * rng.normal(size=m))
    dirs = [d / np.linalg.norm(d) for d in dirs]

    if refine:
        def obj(u):
            z = u[:m] + 1j * u[m:]
            return rayleigh(z) / max(np.vdot(z, z).real, 1e-300)

        best = sorted(dirs, key=lambda d: rayleigh(d))[:3]
        for d in best:
            res = optimize.minimize(obj, np.concatenate([d.real, d.imag]), method="BFGS",
                                    options={"gtol": 1e-12})
            z = res.x[:m] + 1j * res.x[m:]
            dirs.append(z / np.linalg.norm(z))

    rank_one = np.array([np.outer(d.conj(), d.conj()) for d in dirs])
    unitary = []
    for _ in range(n_random):
        X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        Qm, _ = np.linalg.qr(X)
        unitary.append(Qm @ Qm.T)
    family = np.concatenate([rank_one, np.array(unitary)]) if unitary else rank_one

    def broken(delta):
        return not _strongly_convex_by_kappa(A1, B1[None] - delta * family).all()

    if broken(0.0):
        return DegreeResult(None, None, (0.0, 0.0))
    lo, hi = 0.0, 1.0
    while not broken(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return DegreeResult(math.inf, None, (lo, math.inf))
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if broken(mid):
            hi = mid
        else:
            lo = mid
    ok = _strongly_convex_by_kappa(A1, B1[None] - hi * family)
    k = int(np.argmin(ok))
    W1 = hi * family[k]
    # back to the original coordinates: W = C W1 C^T
    W = C @ W1 @ C.T
    return DegreeResult(0.5 * (lo + hi), W, (lo, hi))


# --- gauge predicates ---------------------------------------------------------


@dataclass
class PredicateResult:
    name: str
    hypothesis: bool
    conclusion: bool
    margin: float
    witness: dict = field(default_factory=dict)

    @property
    def passed(self):
        return (not self.hypothesis) or self.conclusion


def weighted_norm_sq(W, G):
    """Largest eigenvalue of W conj(G^-1) conj(W) G^-1."""
    Gi = np.linalg.inv(G)
    ev = np.linalg.eigvals(W @ Gi.conj() @ W.conj() @ Gi)
    return float(ev.real.max(initial=0.0))


def predicate_half_perturbation(q: QuadraticGauge, delta, V, W, g=None):
    """Modulus above delta survives a Hermitian V <= delta/2 G and a symmetric W
    of weighted norm at most delta/2."""
    g = _metric(g, q.m)
    mod = convexity_margin(q, g)
    hv = np.linalg.eigvalsh(delta / 2 * g.G - V).min() >= -1e-12
    hw = weighted_norm_sq(W, g.G) <= delta**2 / 4 + 1e-12
    hyp = bool(mod > delta and hv and hw)
    pert = QuadraticGauge(q.A - V, q.B - W, q.L)
    pm = convexity_margin(pert, g)
    return PredicateResult("half-perturbation", hyp, pm > 0, pm, {"modulus": mod, "perturbed": pm})


def predicate_entrywise(M, kind="hermitian"):
    """Entrywise smallness bounds: |A_ij| < 1/k^2 gives A < 1, |B_ij| < k^-3/2 gives BB^H < 1."""
    M = np.asarray(M, dtype=complex)
    k = M.shape[0]
    if kind == "hermitian":
        hyp = bool(np.abs(M).max() < 1.0 / k**2)
        top = float(np.linalg.eigvalsh(0.5 * (M + M.conj().T)).max())
    else:
        hyp = bool(np.abs(M).max() < k**-1.5)
        top = float(np.linalg.eigvalsh(M @ M.conj().T).max())
    return PredicateResult(f"entrywise-{kind}", hyp, top < 1.0, 1.0 - top, {"max_eig": top})


def predicate_gauge_to_modulus(A, B, delta, g=None):
    """A > delta G and K < 1 - delta give modulus >= delta^2 / 2."""
    A = _as_square(A, "A")
    g = _metric(g, A.shape[0])
    try:
        hyp_a = np.linalg.eigvalsh(A - delta * g.G).min() > 0
        kmax = kappa(A, B).max
    except ValueError:
        return PredicateResult("gauge-to-modulus", False, False, math.nan)
    hyp = bool(hyp_a and kmax < 1 - delta and 0 < delta < 1)
    mod = convexity_margin(QuadraticGauge(A, B), g)
    return PredicateResult("gauge-to-modulus", hyp, mod >= delta**2 / 2 - 1e-9,
                           mod - delta**2 / 2, {"modulus": mod, "kappa_max": kmax})


def predicate_modulus_to_gauge(A, B, delta, g=None):
    """Modulus above delta gives K <= 1 - delta/(2 C2), C2 = max eig of A G^-1."""
    A = _as_square(A, "A")
    g = _metric(g, A.shape[0])
    mod = convexity_margin(QuadraticGauge(A, B), g)
    hyp = bool(mod > delta > 0)
    if not hyp:
        return PredicateResult("modulus-to-gauge", False, True, math.nan, {"modulus": mod})
    c2 = float(np.linalg.eigvals(A @ np.linalg.inv(g.G)).real.max())
    kmax = kappa(A, B).max
    bound = 1 - delta / (2 * c2)
    return PredicateResult("modulus-to-gauge", hyp, kmax <= bound + 1e-9, bound - kmax,
                           {"kappa_max": kmax, "bound": bound, "C2": c2})


def predicate_kappa_monotone(K, H, B):
    """K > H > 0 implies the kappa spectrum radius shrinks when A grows."""
    hyp = bool(np.linalg.eigvalsh(K - H).min() > 0 and np.linalg.eigvalsh(H).min() > 0)
    if not hyp:
        return PredicateResult("kappa-monotone", False, True, math.nan)
    a = kappa(K, B).max
    b = kappa(H, B).max
    return PredicateResult("kappa-monotone", hyp, a <= b + 1e-12, b - a, {"K": a, "H": b})


def predicate_modulus_degree(q: QuadraticGauge, g=None, takagi_impl=takagi, seed=0):
    """Modulus and degree of convexity agree, and the Takagi reduction used by
    the sup over W reproduces Re(W z z)."""
    g = _metric(g, q.m)
    mod = modulus_of_convexity(q, g)
    deg = degree_of_convexity(q, g, takagi_impl=takagi_impl, seed=seed).degree
    if mod is None or deg is None:
        agree = (mod is None) and (deg is None)
        gap = 0.0 if agree else math.inf
    else:
        gap = abs(mod - deg)
        agree = gap <= 1e-3 + 0.05 * abs(mod)
    rng = np.random.default_rng(seed + 1)
    X = rng.normal(size=(q.m, q.m)) + 1j * rng.normal(size=(q.m, q.m))
    W = X + X.T
    U, D = takagi_impl(W)
    z = rng.normal(size=q.m) + 1j * rng.normal(size=q.m)
    w = U.T @ z
    lhs = (z @ W @ z).real
    rhs = float(np.sum(D * (w * w).real))
    recon = abs(lhs - rhs) <= 1e-9 * (1 + np.abs(W).max()) * (1 + np.vdot(z, z).real)
    bound = lhs <= D.max() * np.vdot(z, z).real + 1e-9
    ok = bool(agree and recon and bound)
    return PredicateResult("modulus-degree", True, ok, -gap,
                           {"modulus": mod, "degree": deg, "takagi_identity": bool(recon)})


def boundary_conversion_factor(mu):
    """qc-modulus lower bound per unit exterior normal derivative at a boundary
    point of a domain with C-convexity modulus mu.

    With the complex gradient norm |dPhi| = |grad Phi| / 2 and the boundary
    graph measured along the Euclidean normal, the tangential Taylor polynomial
    of Phi is |Phi_n| times that of the graph, so the bound is min(1/2, mu).
    """
    return min(0.5, float(mu))


def level_set_modulus_bound(mu, max_grad):
    """C-convexity modulus bound for level sets: qc-modulus over the largest
    Euclidean gradient length."""
    return float(mu) / float(max_grad)


def predicate_boundary_conversion(A_tangent, B_tangent, normal_derivative, mu):
    """Jet-level check: the qc-modulus of a boundary-defining function with given
    tangential Taylor polynomial is at least min(1/2, mu) |Phi_n|."""
    grad_norm = 0.5 * abs(normal_derivative)
    mod = convexity_margin(QuadraticGauge(A_tangent, B_tangent))
    qc = min(grad_norm, mod)
    need = boundary_conversion_factor(mu) * abs(normal_derivative)
    return PredicateResult("boundary-conversion", True, qc >= need - 1e-12, qc - need,
                           {"qc": qc, "bound": need})


def predicate_level_set(A_tangent, B_tangent, grad_real_norm, mu):
    """Level set through a point with qc-modulus above mu has C-convexity modulus
    of at least mu / |grad Phi|."""
    mod = convexity_margin(QuadraticGauge(A_tangent, B_tangent))
    qc = min(0.5 * grad_real_norm, mod)
    hyp = qc > mu > 0
    level = mod / grad_real_norm
    need = level_set_modulus_bound(mu, grad_real_norm)
    return PredicateResult("level-set", bool(hyp), level >= need - 1e-12, level - need,
                           {"level_modulus": level, "bound": need})


def qc_robust_at(grad, A_full, B_full, l_shift, M_shift, g=None):
    """Strong qc-convexity at a point of Phi - q, with q = Re(l.z + z^T M z) and
    the point placed at the origin."""
    n = len(grad)
    g = _metric(g, n)
    v = np.asarray(grad, dtype=complex) - 0.5 * np.asarray(l_shift, dtype=complex)
    Bn = np.asarray(B_full, dtype=complex) - np.asarray(M_shift, dtype=complex)
    from .field import tangent_gauge_from_jet  # local import: field depends on calg
    tg = tangent_gauge_from_jet(v, np.asarray(A_full, dtype=complex), Bn, g.G)
    return tg.qc_modulus is not None


def predicate_robustness_to_modulus(grad, A_full, B_full, rho, diameter, n_adv=64, seed=0):
    """If Phi - q stays strongly qc-convex for every sampled q with |grad q| <= rho
    on a set of the given diameter, the qc-modulus is at least
    rho min(1, 1/(4 diameter)).  The hypothesis is only sampled."""
    from .field import tangent_gauge_from_jet
    n = len(grad)
    rng = np.random.default_rng(seed)
    hyp = True
    for _ in range(n_adv):
        l = rng.normal(size=n) + 1j * rng.normal(size=n)
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        M = X + X.T
        # |grad q| <= |l|/2 + |M| D on the set, scale into the ball of radius rho
        size = 0.5 * np.linalg.norm(l) + np.linalg.norm(M, 2) * diameter
        s = rho / size * rng.uniform(0.5, 1.0)
        if not qc_robust_at(grad, A_full, B_full, s * l, s * M):
            hyp = False
            break
    tg = tangent_gauge_from_jet(np.asarray(grad, dtype=complex), np.asarray(A_full, dtype=complex),
                                np.asarray(B_full, dtype=complex), np.eye(n))
    need = convert_modulus_robustness(rho, "rob->mod", {"diameter": diameter})
    qc = tg.qc_modulus if tg.qc_modulus is not None else -math.inf
    return PredicateResult("robustness-to-modulus", hyp, qc >= need - 1e-12, qc - need,
                           {"qc": qc, "bound": need})


def predicate_modulus_to_robustness(grad, A_full, B_full, context, n_adv=64, seed=0):
    """qc-modulus m gives robustness m^2/C: sampled q of size m^2/C must keep
    Phi - q strongly qc-convex at the point."""
    from .field import tangent_gauge_from_jet
    n = len(grad)
    tg = tangent_gauge_from_jet(np.asarray(grad, dtype=complex), np.asarray(A_full, dtype=complex),
                                np.asarray(B_full, dtype=complex), np.eye(n))
    m = tg.qc_modulus
    if m is None:
        return PredicateResult("modulus-to-robustness", False, True, math.nan)
    ctx = dict(context)
    ctx.setdefault("c2_norm", float(max(np.abs(np.linalg.eigvalsh(A_full)).max(),
                                        np.linalg.norm(B_full, 2), 1e-12)))
    rho = convert_modulus_robustness(m, "mod->rob", ctx)
    diameter = ctx.get("diameter", 1.0)
    rng = np.random.default_rng(seed)
    worst = math.inf
    ok = True
    for _ in range(n_adv):
        l = rng.normal(size=n) + 1j * rng.normal(size=n)
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        M = X + X.T
        size = 0.5 * np.linalg.norm(l) + np.linalg.norm(M, 2) * diameter
        s = rho / size
        v = np.asarray(grad, dtype=complex) - 0.5 * s * l
        t2 = tangent_gauge_from_jet(v, np.asarray(A_full, dtype=complex),
                                    np.asarray(B_full, dtype=complex) - s * M, np.eye(n))
        if t2.qc_modulus is None:
            ok = False
            worst = -math.inf
            break
        worst = min(worst, t2.qc_modulus)
    return PredicateResult("modulus-to-robustness", True, ok, worst, {"modulus": m, "robustness": rho})


# --- conversions ----------------------------------------------------------------


def default_robustness_constant(context):
    """Heuristic constant for modulus -> robustness: 200 C2 max(1, Cn/thickness)."""
    c2 = float(context.get("c2_norm", 1.0))
    cn = float(context.get("c_n", 1.0))
    thick = float(context.get("thickness", 1.0))
    return 200.0 * c2 * max(1.0, cn / thick)


def convert_modulus_robustness(value, direction, context=None):
    """Convert between modulus and robustness of qc-convexity.

    direction "rob->mod": rho * min(1, 1/(4 diameter)).
    direction "mod->rob": m^2 / C, with C taken from context["C"] or assembled
    by default_robustness_constant; C is raised to at least 8 m so the result
    never exceeds m/8.
    """
    context = context or {}
    if value < 0:
        raise ValueError("value must be nonnegative")
    if direction == "rob->mod":
        if "diameter" not in context:
            raise ValueError("rob->mod needs context['diameter']")
        d = float(context["diameter"])
        if d <= 0:
            raise ValueError("diameter must be positive")
        return float(value) * min(1.0, 1.0 / (4.0 * d))
    if direction == "mod->rob":
        C = float(context["C"]) if "C" in context else default_robustness_constant(context)
        if C <= 0:
            raise ValueError("C must be positive")
        C = max(C, 8.0 * float(value))
        return float(value) ** 2 / C
    raise ValueError(f"unknown direction {direction!r}")
