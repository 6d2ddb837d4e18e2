"""Randomised property suites over the quadratic-gauge predicates.

Every suite draws its instances from a seeded generator and stops at the
first counterexample, which it keeps as a witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import calg
from .calg import QuadraticGauge


@dataclass
class SuiteResult:
    name: str
    trials: int
    checked: int = 0          # instances whose hypothesis held
    passed: bool = True
    counterexample: dict | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "trials": self.trials, "checked": self.checked,
                "passed": self.passed, "counterexample": self.counterexample, "notes": self.notes}


def random_hermitian_pd(rng, m, lo=0.1, hi=5.0):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    U, _ = np.linalg.qr(X)
    return U @ np.diag(rng.uniform(lo, hi, m)) @ U.conj().T


def random_symmetric(rng, m, scale=1.0):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return scale * 0.5 * (X + X.T)


def random_gauge(rng, m):
    A = random_hermitian_pd(rng, m)
    B = random_symmetric(rng, m)
    # put the Takagi values of B on the scale of A so both convex and nonconvex cases occur
    s = np.linalg.norm(B, 2)
    B = B * rng.uniform(0.0, 1.5) * np.linalg.eigvalsh(A).min() / max(s, 1e-12)
    return QuadraticGauge(A, B)


def _cx(M):
    M = np.asarray(M, complex)
    return {"re": M.real.tolist(), "im": M.imag.tolist()}


def _fail(res, **witness):
    res.passed = False
    res.counterexample = {k: (_cx(v) if isinstance(v, np.ndarray) else v) for k, v in witness.items()}
    return res


# --- suites --------------------------------------------------------------------------------


def suite_takagi(rng, trials, takagi_impl=calg.takagi):
    res = SuiteResult("takagi", trials)
    for _ in range(trials):
        m = int(rng.integers(1, 7))
        B = random_symmetric(rng, m, rng.uniform(0.1, 10))
        U, D = takagi_impl(B)
        nb = np.linalg.norm(B, 2)
        rec = np.abs(U @ np.diag(D) @ U.T - B).max()
        sv = np.abs(np.sort(D)[::-1] - np.linalg.svd(B, compute_uv=False)).max()
        uni = np.abs(U.conj().T @ U - np.eye(m)).max()
        res.checked += 1
        if rec > 1e-9 * (1 + nb) or sv > 1e-9 or uni > 1e-9:
            return _fail(res, B=B, reconstruction=float(rec), singular_values=float(sv))
    return res


def suite_modulus_degree(rng, trials, takagi_impl=calg.takagi):
    res = SuiteResult("modulus_degree", trials)
    for k in range(trials):
        q = random_gauge(rng, int(rng.integers(1, 4)))
        r = calg.predicate_modulus_degree(q, takagi_impl=takagi_impl, seed=k)
        res.checked += 1
        if not r.passed:
            return _fail(res, A=q.A, B=q.B, **{k2: v for k2, v in r.witness.items()})
    return res


def suite_half_perturbation(rng, trials, **_):
    res = SuiteResult("half_perturbation", trials)
    for _ in range(trials):
        m = int(rng.integers(1, 4))
        q = random_gauge(rng, m)
        mod = calg.convexity_margin(q)
        if mod <= 0:
            continue
        delta = rng.uniform(0.1, 0.999) * mod
        P = random_hermitian_pd(rng, m, 0.0, 1.0)
        V = 0.5 * delta * P / max(1.0, np.linalg.eigvalsh(P).max())
        W = random_symmetric(rng, m)
        W = W * 0.5 * delta * rng.uniform(0, 1) / max(np.linalg.norm(W, 2), 1e-12)
        r = calg.predicate_half_perturbation(q, delta, V, W)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, A=q.A, B=q.B, V=V, W=W, delta=delta)
    return res


def suite_entrywise(rng, trials, **_):
    res = SuiteResult("entrywise", trials)
    for _ in range(trials):
        k = int(rng.integers(1, 6))
        X = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        H = 0.5 * (X + X.conj().T)
        H = H / np.abs(H).max() * rng.uniform(0.5, 0.999) / k**2
        S = random_symmetric(rng, k)
        S = S / np.abs(S).max() * rng.uniform(0.5, 0.999) * k**-1.5
        for M, kind in ((H, "hermitian"), (S, "symmetric")):
            r = calg.predicate_entrywise(M, kind)
            res.checked += r.hypothesis
            if not r.passed:
                return _fail(res, M=M, kind=kind)
    return res


def suite_gauge_to_modulus(rng, trials, **_):
    res = SuiteResult("gauge_to_modulus", trials)
    for _ in range(trials):
        q = random_gauge(rng, int(rng.integers(1, 4)))
        delta = rng.uniform(0.01, 0.99)
        r = calg.predicate_gauge_to_modulus(q.A, q.B, delta)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, A=q.A, B=q.B, delta=delta)
    return res


def suite_modulus_to_gauge(rng, trials, **_):
    res = SuiteResult("modulus_to_gauge", trials)
    for _ in range(trials):
        q = random_gauge(rng, int(rng.integers(1, 4)))
        mod = calg.convexity_margin(q)
        delta = rng.uniform(0.0, 1.0) * max(mod, 0.0)
        r = calg.predicate_modulus_to_gauge(q.A, q.B, delta)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, A=q.A, B=q.B, delta=delta)
    return res


def suite_kappa_monotone(rng, trials, **_):
    res = SuiteResult("kappa_monotone", trials)
    for _ in range(trials):
        m = int(rng.integers(1, 4))
        H = random_hermitian_pd(rng, m)
        K = H + random_hermitian_pd(rng, m, 0.01, 2.0)
        B = random_symmetric(rng, m)
        r = calg.predicate_kappa_monotone(K, H, B)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, K=K, H=H, B=B)
    return res


def suite_kappa_reality(rng, trials, **_):
    res = SuiteResult("kappa_reality", trials)
    for _ in range(trials):
        q = random_gauge(rng, int(rng.integers(1, 5)))
        ks = calg.kappa(q.A, q.B)
        ev = np.linalg.eigvals(ks.matrix)
        res.checked += 1
        tol = 1e-9 * (1 + np.linalg.norm(ks.matrix, 2))
        if np.abs(ev.imag).max() > tol or ev.real.min() < -tol:
            return _fail(res, A=q.A, B=q.B, imag=float(np.abs(ev.imag).max()))
        if ks.admissible and ks.sigma < q.m - 1e-12:
            return _fail(res, A=q.A, B=q.B, sigma=ks.sigma)
    return res


def suite_scale_covariance(rng, trials, **_):
    res = SuiteResult("scale_covariance", trials)
    for _ in range(trials):
        q = random_gauge(rng, int(rng.integers(1, 4)))
        mod = calg.modulus_of_convexity(q)
        if mod is None:
            continue
        res.checked += 1
        for t in (0.5, 2.0, 10.0):
            mt = calg.modulus_of_convexity(QuadraticGauge(t * q.A, t * q.B))
            if mt is None or abs(mt - t * mod) > 1e-9 * max(1.0, t * mod):
                return _fail(res, A=q.A, B=q.B, t=t)
    return res


def suite_boundary_conversion(rng, trials, **_):
    res = SuiteResult("boundary_conversion", trials)
    for _ in range(trials):
        g = random_gauge(rng, int(rng.integers(1, 4)))
        mu = calg.convexity_margin(g)
        if mu <= 0:
            continue
        c = rng.uniform(0.05, 5.0)
        r = calg.predicate_boundary_conversion(c * g.A, c * g.B, c, mu)
        res.checked += 1
        if not r.passed:
            return _fail(res, A=g.A, B=g.B, normal_derivative=c)
    return res


def suite_level_set(rng, trials, **_):
    res = SuiteResult("level_set", trials)
    for _ in range(trials):
        g = random_gauge(rng, int(rng.integers(1, 4)))
        grad = rng.uniform(0.05, 5.0)
        mod = calg.convexity_margin(g)
        qc = min(0.5 * grad, mod)
        if qc <= 0:
            continue
        mu = rng.uniform(0.0, 0.999) * qc
        r = calg.predicate_level_set(g.A, g.B, grad, mu)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, A=g.A, B=g.B, grad=grad, mu=mu)
    return res


def _random_jet(rng, n):
    grad = rng.normal(size=n) + 1j * rng.normal(size=n)
    A = random_hermitian_pd(rng, n)
    B = random_symmetric(rng, n, 0.3)
    return grad, A, B


def suite_robustness_to_modulus(rng, trials, **_):
    res = SuiteResult("robustness_to_modulus", trials)
    for k in range(max(1, trials // 4) if trials else 0):
        n = int(rng.integers(2, 4))
        grad, A, B = _random_jet(rng, n)
        rho = rng.uniform(0.01, 0.5)
        diam = rng.uniform(0.1, 10)
        r = calg.predicate_robustness_to_modulus(grad, A, B, rho, diam, n_adv=32, seed=k)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, grad=grad, A=A, B=B, rho=rho, diameter=diam)
    return res


def suite_modulus_to_robustness(rng, trials, **_):
    res = SuiteResult("modulus_to_robustness", trials)
    for k in range(max(1, trials // 4) if trials else 0):
        n = int(rng.integers(2, 4))
        grad, A, B = _random_jet(rng, n)
        ctx = {"diameter": rng.uniform(0.5, 5), "thickness": rng.uniform(0.1, 1)}
        r = calg.predicate_modulus_to_robustness(grad, A, B, ctx, n_adv=32, seed=k)
        res.checked += r.hypothesis
        if not r.passed:
            return _fail(res, grad=grad, A=A, B=B)
    return res


SUITES = {
    "takagi": suite_takagi,
    "modulus_degree": suite_modulus_degree,
    "half_perturbation": suite_half_perturbation,
    "entrywise": suite_entrywise,
    "gauge_to_modulus": suite_gauge_to_modulus,
    "modulus_to_gauge": suite_modulus_to_gauge,
    "kappa_monotone": suite_kappa_monotone,
    "kappa_reality": suite_kappa_reality,
    "scale_covariance": suite_scale_covariance,
    "boundary_conversion": suite_boundary_conversion,
    "level_set": suite_level_set,
    "robustness_to_modulus": suite_robustness_to_modulus,
    "modulus_to_robustness": suite_modulus_to_robustness,
}

FAULTS = {"takagi-skip-conj": calg.takagi_skip_conjugation}


def run_suites(trials=200, seed=0, fault=None, names=None):
    """Run the selected suites with independent child generators."""
    impl = calg.takagi
    if fault is not None:
        if fault not in FAULTS:
            raise KeyError(f"unknown fault {fault!r}")
        impl = FAULTS[fault]
    names = list(SUITES) if names is None else list(names)
    seeds = np.random.SeedSequence(seed).spawn(len(SUITES))
    child = dict(zip(SUITES, seeds))
    out = []
    for name in names:
        rng = np.random.default_rng(child[name])
        fn = SUITES[name]
        if name in ("takagi", "modulus_degree"):
            out.append(fn(rng, trials, takagi_impl=impl))
        else:
            out.append(fn(rng, trials))
    return out


def vacuous(results):
    return [r.name for r in results if r.checked == 0]
