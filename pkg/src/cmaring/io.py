"""File formats: JSON for structured artifacts, CSV for plot-bound dumps.

Complex numbers are stored as [re, im] pairs.  JSON is written with sorted
keys and repr floats so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .domain import GeometryError, RingDomain, SmoothDomain
from .field import field_from_dict

SOLVE_KEYS = {"eps", "eps_schedule", "resolution", "damping", "max_iters", "residual_tol",
              "psd_floor", "initial", "relaxation", "ghost", "max_sweeps", "audit_nodes", "seed"}
SPEC_KEYS = {"ring", "metric", "solve", "tier", "checks", "output", "seed", "subsolution"}


class FormatError(ValueError):
    """Malformed input file or schema violation."""


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


# --- parsing helpers ------------------------------------------------------------------


def parse_complex(x):
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(t, (int, float)) for t in x):
        return complex(x[0], x[1])
    raise FormatError(f"cannot read {x!r} as a complex number")


def parse_vector(v, n=None):
    if not isinstance(v, list):
        raise FormatError("vector must be a list")
    out = np.array([parse_complex(x) for x in v])
    if n is not None and len(out) != n:
        raise FormatError(f"vector must have {n} entries")
    return out


def parse_matrix(M):
    if not isinstance(M, list) or not all(isinstance(r, list) for r in M):
        raise FormatError("matrix must be a list of rows")
    A = np.array([[parse_complex(x) for x in r] for r in M])
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise FormatError("matrix must be square")
    return A


def domain_from_dict(d) -> SmoothDomain:
    if not isinstance(d, dict) or "kind" not in d:
        raise FormatError("domain needs a 'kind'")
    kind = d["kind"]
    try:
        if kind == "ball":
            c = parse_vector(d["center"])
            return SmoothDomain.ball(c, float(d["radius"]))
        if kind == "ellipsoid":
            H = parse_matrix(d["H"])
            c = parse_vector(d["center"], H.shape[0]) if "center" in d else None
            return SmoothDomain.ellipsoid(H, c)
    except KeyError as exc:
        raise FormatError(f"domain of kind {kind!r} lacks {exc}") from None
    raise FormatError(f"unsupported domain kind {kind!r} (ball or ellipsoid)")


def ring_from_dict(d) -> RingDomain:
    if not isinstance(d, dict):
        raise FormatError("ring must be an object")
    inner = d.get("inner", d.get("omega0"))
    outer = d.get("outer", d.get("omega1"))
    if inner is None or outer is None:
        raise FormatError("ring needs 'inner' and 'outer' domains")
    return RingDomain(domain_from_dict(inner), domain_from_dict(outer))


def ring_to_dict(ring: RingDomain):
    return {"inner": ring.omega0.to_dict(), "outer": ring.omega1.to_dict()}


# --- experiment specs -------------------------------------------------------------------


def parse_experiment(d):
    """Validate an experiment spec.  Returns a dict with parsed ring and metric."""
    if not isinstance(d, dict):
        raise FormatError("spec must be a JSON object")
    unknown = set(d) - SPEC_KEYS
    if unknown:
        raise FormatError(f"unknown spec keys: {', '.join(sorted(unknown))}")
    if "ring" not in d:
        raise FormatError("spec needs a 'ring'")
    try:
        ring = ring_from_dict(d["ring"])
    except GeometryError:
        raise
    solve = d.get("solve", {})
    if not isinstance(solve, dict):
        raise FormatError("'solve' must be an object")
    bad = set(solve) - SOLVE_KEYS
    if bad:
        raise FormatError(f"unknown solve keys: {', '.join(sorted(bad))}")
    if "eps" not in solve:
        raise FormatError("'solve' needs 'eps'")
    G = parse_matrix(d["metric"]) if "metric" in d else None
    if G is not None and G.shape[0] != ring.n:
        raise FormatError("metric dimension does not match the ring")
    tier = d.get("tier")
    if tier not in (None, "radial", "reinhardt", "full"):
        raise FormatError(f"unknown tier {tier!r}")
    checks = d.get("checks", [])
    if not isinstance(checks, list):
        raise FormatError("'checks' must be a list")
    return {"ring": ring, "metric": G, "solve": dict(solve), "tier": tier, "checks": checks,
            "output": d.get("output"), "seed": int(d.get("seed", 0))}


# --- field files ----------------------------------------------------------------------------


def field_file(field, ring=None, report=None, extra=None):
    d = {"format": "cmaring-field", "version": 1, "field": field.to_dict()}
    ring = ring if ring is not None else field.ring
    if ring is not None:
        d["ring"] = ring_to_dict(ring)
    if report is not None:
        d["report"] = report
    if extra:
        d.update(extra)
    return d


def load_field(path):
    """Read a field file.  Returns (field, ring, raw dict)."""
    d = read_json(path)
    if not isinstance(d, dict) or d.get("format") != "cmaring-field" or "field" not in d:
        raise FormatError(f"{path}: not a field file")
    ring = ring_from_dict(d["ring"]) if "ring" in d else None
    try:
        f = field_from_dict(d["field"], ring=ring)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad field data ({exc})") from None
    return f, ring, d
