"""Command-line front end.

Exit codes: 0 ok, 2 solver failure, 3 geometric singularity, 64 usage error,
65 unreadable or incompatible input; `verify` exits with the number of failed
checks.  CMARING_THREADS caps the BLAS thread pools.
"""

import os

if os.environ.get("CMARING_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["CMARING_THREADS"])

import argparse  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import io  # noqa: E402
from .domain import (GeometryError, build_subsolution, cconvexity_modulus,  # noqa: E402
                     check_nesting, deformation_family)
from .field import RadialField, ReinhardtField, FullField, tangent_gauge  # noqa: E402
from .solver import SolveConfig, SolverError, continuation, harmonic_majorant, solve  # noqa: E402

EXIT_OK, EXIT_SOLVER, EXIT_GEOMETRY, EXIT_USAGE, EXIT_FORMAT = 0, 2, 3, 64, 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _point(values, n=None):
    vals = [float(v) for v in values]
    if len(vals) % 2:
        raise UsageError("a point is given as re/im pairs")
    z = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    if n is not None and len(z) != n:
        raise UsageError(f"point must have {n} complex coordinates")
    return z


# --- lemmas ------------------------------------------------------------------------------


def cmd_lemmas(args):
    from .suites import run_suites
    if args.trials < 0:
        raise UsageError("trials must be nonnegative")
    results = run_suites(args.trials, args.seed, fault=args.fault)
    if args.trials == 0:
        print("warning: trials=0, every suite passes vacuously", file=sys.stderr)
    width = max(len(r.name) for r in results)
    bad = 0
    for r in results:
        bad += not r.passed
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  checked {r.checked}/{r.trials}")
        if not r.passed:
            print(f"{'':<{width}}  counterexample: {io.dumps(r.counterexample).strip()}")
    if args.json:
        io.write_json(args.json, [r.to_dict() for r in results])
    return 1 if bad else EXIT_OK


# --- solve -------------------------------------------------------------------------------


def _load_spec(path):
    try:
        raw = io.read_json(path)
    except FileNotFoundError:
        raise UsageError(f"spec file {path} not found") from None
    except io.FormatError as exc:
        raise UsageError(str(exc)) from None
    try:
        return io.parse_experiment(raw)
    except io.FormatError as exc:
        raise UsageError(f"schema error: {exc}") from None


def cmd_solve(args):
    spec = _load_spec(args.spec)
    out = Path(args.out or spec["output"] or "out")
    try:
        cfg = SolveConfig(**spec["solve"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"schema error: {exc}") from None
    ring, G = spec["ring"], spec["metric"]
    reports, incs, failure = continuation(ring, G, cfg, spec["tier"])
    summary = {"stages": [r.summary() for r in reports], "increments": incs, "failure": failure,
               "spec": str(args.spec)}
    io.write_json(out / "solve_report.json", summary)
    if failure is not None or not reports:
        _err(f"solver failed: {failure}")
        return EXIT_SOLVER
    rep = reports[-1]
    io.write_json(out / "field.json", io.field_file(rep.field, ring, rep.summary()))
    print(f"tier {rep.tier}  eps {rep.eps:g}  residual {rep.residual_inf:.3e}  "
          f"psd margin {rep.psd_margin:.3e}  iterations {rep.iterations}")
    print(f"wrote {out / 'field.json'}")
    return EXIT_OK


# --- verify ------------------------------------------------------------------------------


def _load_field(path):
    try:
        return io.load_field(path)
    except FileNotFoundError:
        raise UsageError(f"field file {path} not found") from None


def _is_grid(field):
    return isinstance(field, (RadialField, ReinhardtField, FullField))


def cmd_verify(args):
    from .verify import CHECKS, run_checks
    names = list(CHECKS) if not args.checks else [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown checks: {', '.join(unknown)} (known: {', '.join(CHECKS)})")
    field, ring, _ = _load_field(args.field)
    if ring is None:
        raise io.FormatError("field file carries no ring; verification needs one")
    if field.G.shape != (ring.n, ring.n) or field.n != ring.n:
        raise io.FormatError("field, metric and ring dimensions disagree")
    sub = build_subsolution(ring, metric=field.G)
    sub = sub if sub.valid else None
    majorant = harmonic_majorant(field) if _is_grid(field) else None
    eps = args.eps if args.eps is not None else field.eps
    reports = run_checks(field, names, eps=eps, sub=sub, majorant=majorant)
    reports.sort(key=lambda r: (r.check, r.witness or []))
    failed = sum(r.status == "fail" for r in reports)
    for r in reports:
        print(f"{r.check:<20} {r.status:<15} margin {r.margin: .3e}  tol {r.tolerance:.2e}")
    out = args.out or str(Path(args.field).with_name("verify_report.json"))
    io.write_json(out, {"field": str(args.field), "checks": [r.to_dict() for r in reports],
                        "failed": failed})
    return failed


# --- leaf --------------------------------------------------------------------------------


def cmd_leaf(args):
    from .foliation2d import SingularLeaf, leaf_harmonicity_residual, leaf_rows, leaf_trace
    field, ring, _ = _load_field(args.field)
    if field.n != 2:
        raise UsageError("leaves are traced for n = 2 fields only")
    if field.ring is None:
        field.ring = ring
    p = _point(args.point, 2)
    try:
        leaf = leaf_trace(field, p, radius=args.radius, steps=args.steps)
    except SingularLeaf as exc:
        _err(f"singular leaf: {exc}")
        return EXIT_GEOMETRY
    res = leaf_harmonicity_residual(field, leaf)
    out = args.out or str(Path(args.field).with_name("leaf.csv"))
    io.write_csv(out, ["zeta_re", "zeta_im", "z1_re", "z1_im", "z2_re", "z2_im", "phi", "S", "Q"],
                 leaf_rows(field, leaf))
    print(f"harmonicity residual {res:.3e}  integration error {leaf.integration_error:.3e}  "
          f"samples {int(leaf.valid.sum())}{'  (truncated at the boundary)' if leaf.truncated else ''}")
    print(f"wrote {out}")
    return EXIT_OK


# --- gauge -------------------------------------------------------------------------------


def cmd_gauge(args):
    field, ring, _ = _load_field(args.field)
    p = _point(args.point, field.n)
    eps = args.eps if args.eps is not None else field.eps
    with np.errstate(all="ignore"):
        j = field.jet(p)
    if not (np.isfinite(j.value) and np.all(np.isfinite(j.herm)) and np.all(np.isfinite(j.holo))):
        _err("field is not defined at the point")
        return EXIT_GEOMETRY
    try:
        g = tangent_gauge(field, p, field.G, eps)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_GEOMETRY
    d = {"point": p, "A": g.A, "B": g.B, "grad_norm": g.grad_norm, "modulus": g.modulus,
         "qc_modulus": g.qc_modulus, "sigma": g.sigma, "S": g.S, "S_reliable": g.S_reliable,
         "W": g.W, "V": g.V,
         "kappa": None if g.kappa is None else g.kappa.eigenvalues}
    print(io.dumps(_complex_tree(d)), end="")
    return EXIT_OK


def _complex_tree(obj):
    if isinstance(obj, dict):
        return {k: _complex_tree(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return _complex_tree(obj.tolist())
        return obj.tolist()
    if isinstance(obj, list):
        return [_complex_tree(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# --- subsolution / deform ---------------------------------------------------------------


def cmd_subsolution(args):
    spec = _load_spec(args.spec)
    res = build_subsolution(spec["ring"], c=args.c, metric=spec["metric"])
    d = {"valid": res.valid, "reason": res.reason, "condition": res.condition, "sigma": res.sigma,
         "normal_derivative": res.normal_derivative, "margins": res.margins}
    if res.psi is not None:
        d["band"] = res.psi.band
    print(io.dumps(d), end="")
    if args.out:
        io.write_json(args.out, d)
    return EXIT_OK if res.valid else EXIT_GEOMETRY


def cmd_deform(args):
    spec = _load_spec(args.spec)
    ring = spec["ring"]
    rows = []
    for t in np.linspace(0.0, 1.0, args.steps):
        r = deformation_family(ring, float(t))
        rows.append({"t": float(t), "thickness": r.thickness(),
                     "inner_modulus": cconvexity_modulus(r.omega0, args.samples).min_margin,
                     "outer_modulus": cconvexity_modulus(r.omega1, args.samples).min_margin,
                     "ring": io.ring_to_dict(r)})
    nest = check_nesting(ring, grid=args.steps, samples=args.samples)
    for row in rows:
        print(f"t {row['t']:.3f}  thickness {row['thickness']:.4f}  "
              f"moduli {row['inner_modulus']:.4f} {row['outer_modulus']:.4f}")
    print(f"nesting margin {nest:.3e} ({'nested' if nest < 0 else 'NOT nested'})")
    if args.out:
        io.write_json(args.out, {"family": rows, "nesting_margin": nest})
    return EXIT_OK if nest < 0 else EXIT_GEOMETRY


# --- entry point --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="cmaring", description="Perturbed complex Monge-Ampere lab on C-convex rings.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("lemmas", help="run the quadratic-gauge property suites")
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fault", choices=["takagi-skip-conj"], help="inject a known-bad Takagi factorization")
    s.add_argument("--json", help="write suite results here")
    s.set_defaults(fn=cmd_lemmas)

    s = sub.add_parser("solve", help="solve the Dirichlet problem described by a spec file")
    s.add_argument("spec")
    s.add_argument("--out", help="output directory (default: spec 'output' or ./out)")
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("verify", help="run sampled checks on a field file")
    s.add_argument("field")
    s.add_argument("--checks", help="comma-separated subset of checks")
    s.add_argument("--eps", type=float, help="override the field's eps")
    s.add_argument("--out", help="report path (default: next to the field file)")
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("leaf", help="trace a leaf of the foliation (n = 2)")
    s.add_argument("field")
    s.add_argument("--point", nargs="+", required=True, help="re im re im")
    s.add_argument("--radius", type=float)
    s.add_argument("--steps", type=int, default=16)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_leaf)

    s = sub.add_parser("gauge", help="dump the tangent gauge of a field at a point")
    s.add_argument("field")
    s.add_argument("--point", nargs="+", required=True, help="re im re im")
    s.add_argument("--eps", type=float)
    s.set_defaults(fn=cmd_gauge)

    s = sub.add_parser("subsolution", help="build and certify the glued subsolution")
    s.add_argument("spec")
    s.add_argument("--c", type=float, default=0.05)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_subsolution)

    s = sub.add_parser("deform", help="tabulate the deformation family to concentric balls")
    s.add_argument("spec")
    s.add_argument("--steps", type=int, default=11)
    s.add_argument("--samples", type=int, default=400)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_deform)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.fn(args))
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except io.FormatError as exc:
        _err(str(exc))
        return EXIT_FORMAT
    except GeometryError as exc:
        _err(f"geometry: {exc}")
        return EXIT_GEOMETRY
    except SolverError as exc:
        _err(f"solver: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
