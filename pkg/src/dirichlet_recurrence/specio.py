"""Reading and writing problem-spec files.

Spec files are JSON documents with a versioned header::

    {
      "format": "dirichlet-recurrence-spec",
      "version": 1,
      "name": "bessel-1.5",
      "domain": {"kind": "halfline"},
      "sigma": 1,
      "phi": {"kind": "power", "exponent": 0.5},
      "options": {"n_max": 64, "tol": 1e-8},
      "simulation": {"x0": 2.0, "target": [0.0, 1.0], "horizon": 100.0}
    }

Expressions are nested records with a ``kind`` tag (see
:func:`dirichlet_recurrence.expressions.from_record`).  Multi-dimensional
specs carry ``"matrix"`` either as rows of expressions (the lower triangle
may be ``null`` or repeat the upper one) or as ``{"scaled_identity": expr}``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .coeffmodel import Options, ProblemSpec
from .expressions import Const, Expression, SpecificationError, from_record

FORMAT = "dirichlet-recurrence-spec"
VERSION = 1

_TOP_KEYS = {"format", "version", "name", "domain", "sigma", "phi", "matrix", "envelope", "phi_bound", "rho",
             "options", "simulation"}
_OPTION_KEYS = {"tol", "n_max", "window", "divergence_floor", "fit_tol", "exponent_tol", "pivot",
                "enable_scale_probe"}
_SIM_KEYS = {"x0", "dt", "horizon", "n_paths", "seed", "target", "reflect"}


def _number(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SpecificationError(f"expected a number, got {v!r}", path)
    return float(v)


def _options(rec: Any) -> Options:
    if rec is None:
        return Options()
    if not isinstance(rec, dict):
        raise SpecificationError("expected a record", "options")
    unknown = set(rec) - _OPTION_KEYS
    if unknown:
        raise SpecificationError(f"unknown option(s) {sorted(unknown)}", "options")
    kw: dict[str, Any] = {}
    for key, val in rec.items():
        path = f"options.{key}"
        if key == "window":
            if not (isinstance(val, list) and len(val) == 2):
                raise SpecificationError("expected [lo, hi]", path)
            kw[key] = (_number(val[0], path + "[0]"), _number(val[1], path + "[1]"))
        elif key == "enable_scale_probe":
            if not isinstance(val, bool):
                raise SpecificationError("expected true or false", path)
            kw[key] = val
        elif key == "n_max":
            n = _number(val, path)
            if n != int(n):
                raise SpecificationError("expected an integer", path)
            kw[key] = int(n)
        else:
            kw[key] = _number(val, path)
    return Options(**kw)


def _simulation(rec: Any) -> dict:
    if rec is None:
        return {}
    if not isinstance(rec, dict):
        raise SpecificationError("expected a record", "simulation")
    unknown = set(rec) - _SIM_KEYS
    if unknown:
        raise SpecificationError(f"unknown simulation field(s) {sorted(unknown)}", "simulation")
    out: dict[str, Any] = {}
    for key, val in rec.items():
        path = f"simulation.{key}"
        if key == "target":
            if not (isinstance(val, list) and len(val) == 2):
                raise SpecificationError("expected [lo, hi]", path)
            out[key] = [_number(val[0], path + "[0]"), _number(val[1], path + "[1]")]
        elif key == "reflect":
            if not isinstance(val, bool):
                raise SpecificationError("expected true or false", path)
            out[key] = val
        elif key in ("n_paths", "seed"):
            n = _number(val, path)
            if n != int(n):
                raise SpecificationError("expected an integer", path)
            out[key] = int(n)
        else:
            out[key] = _number(val, path)
    return out


def _matrix(rec: Any, d: int) -> tuple[tuple[Expression, ...], ...]:
    if isinstance(rec, dict) and set(rec) == {"scaled_identity"}:
        diag = from_record(rec["scaled_identity"], "matrix.scaled_identity")
        zero = Const(0.0)
        return tuple(tuple(diag if i == j else zero for j in range(d)) for i in range(d))
    if not (isinstance(rec, list) and len(rec) == d and all(isinstance(r, list) and len(r) == d for r in rec)):
        raise SpecificationError(f"expected {d} rows of {d} entries or {{'scaled_identity': ...}}", "matrix")
    rows: list[list[Expression | None]] = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            if rec[i][j] is None:
                raise SpecificationError("upper-triangle entries are required", f"matrix[{i}][{j}]")
            rows[i][j] = from_record(rec[i][j], f"matrix[{i}][{j}]")
        for j in range(i):
            lower = rec[i][j]
            if lower is not None and lower != rec[j][i]:
                raise SpecificationError(f"matrix must be symmetric; differs from matrix[{j}][{i}]",
                                         f"matrix[{i}][{j}]")
            rows[i][j] = rows[j][i]
    return tuple(tuple(r) for r in rows)  # type: ignore[arg-type]


def spec_from_record(rec: Any) -> ProblemSpec:
    """Validate a decoded spec document and build the ProblemSpec."""
    if not isinstance(rec, dict):
        raise SpecificationError("a spec document must be a JSON object", "$")
    if rec.get("format") != FORMAT:
        raise SpecificationError(f"expected format {FORMAT!r}", "format")
    if rec.get("version") != VERSION:
        raise SpecificationError(f"unsupported version {rec.get('version')!r} (expected {VERSION})", "version")
    unknown = set(rec) - _TOP_KEYS
    if unknown:
        raise SpecificationError(f"unknown field(s) {sorted(unknown)}", "$")
    dom = rec.get("domain")
    if not (isinstance(dom, dict) and "kind" in dom):
        raise SpecificationError("expected {'kind': 'line' | 'halfline' | 'euclidean', ...}", "domain")
    kind = dom["kind"]
    if "phi" not in rec:
        raise SpecificationError("missing field 'phi'", "phi")
    name = rec.get("name", "")
    if not isinstance(name, str):
        raise SpecificationError("expected a string", "name")
    common = dict(phi=from_record(rec["phi"], "phi"), options=_options(rec.get("options")), name=name,
                  simulation=_simulation(rec.get("simulation")))
    if kind == "euclidean":
        d = dom.get("dim")
        if isinstance(d, bool) or not isinstance(d, int) or d < 2:
            raise SpecificationError("expected an integer >= 2", "domain.dim")
        if "sigma" in rec:
            raise SpecificationError("sigma is one-dimensional only; use matrix", "sigma")
        matrix = _matrix(rec["matrix"], d) if "matrix" in rec else None
        envelope = from_record(rec["envelope"], "envelope") if "envelope" in rec else None
        bound = from_record(rec["phi_bound"], "phi_bound") if "phi_bound" in rec else None
        rho = _number(rec["rho"], "rho") if "rho" in rec else None
        return ProblemSpec("euclidean", dim=d, matrix=matrix, envelope=envelope, phi_bound=bound, rho=rho,
                           **common)
    if kind not in ("line", "halfline"):
        raise SpecificationError(f"unknown domain kind {kind!r}", "domain.kind")
    for key in ("matrix", "envelope", "phi_bound", "rho"):
        if key in rec:
            raise SpecificationError("only valid for euclidean domains", key)
    sigma = from_record(rec["sigma"], "sigma") if "sigma" in rec else Const(1.0)
    return ProblemSpec(kind, sigma=sigma, **common)


def loads(text: str) -> ProblemSpec:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecificationError(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}") from None
    return spec_from_record(rec)


def load_spec(path: str | Path) -> ProblemSpec:
    """Read a spec file; raises OSError for I/O problems, SpecificationError for content."""
    return loads(Path(path).read_text(encoding="utf-8"))


def _options_record(opt: Options) -> dict:
    default = Options()
    rec = {}
    for key in sorted(_OPTION_KEYS):
        val = getattr(opt, key)
        if val != getattr(default, key):
            rec[key] = list(val) if isinstance(val, tuple) else val
    return rec


def spec_to_record(spec: ProblemSpec) -> dict:
    rec: dict[str, Any] = {"format": FORMAT, "version": VERSION}
    if spec.name:
        rec["name"] = spec.name
    if spec.is_multid:
        rec["domain"] = {"kind": "euclidean", "dim": spec.dim}
        m = spec.matrix
        d = spec.dim
        diag = m[0][0]
        off_zero = all(m[i][j] == Const(0.0) for i in range(d) for j in range(d) if i != j)
        if off_zero and all(m[i][i] is diag for i in range(d)):
            rec["matrix"] = {"scaled_identity": diag.to_record()}
        else:
            rec["matrix"] = [[m[i][j].to_record() if j >= i else None for j in range(d)] for i in range(d)]
        if spec.envelope is not None:
            rec["envelope"] = spec.envelope.to_record()
        if spec.phi_bound is not None:
            rec["phi_bound"] = spec.phi_bound.to_record()
            rec["rho"] = spec.rho
    else:
        rec["domain"] = {"kind": spec.domain}
        rec["sigma"] = spec.sigma.to_record()
    rec["phi"] = spec.phi.to_record()
    opts = _options_record(spec.options)
    if opts:
        rec["options"] = opts
    if spec.simulation:
        rec["simulation"] = dict(spec.simulation)
    return rec


def dumps(spec: ProblemSpec) -> str:
    """Deterministic text of a spec (sorted keys, two-space indent, trailing newline)."""
    rec = spec_to_record(spec)
    _check_finite(rec, "$")
    return json.dumps(rec, indent=2, sort_keys=True) + "\n"


def _check_finite(obj: Any, path: str) -> None:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError(f"non-finite number at {path} cannot be written")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def save_spec(spec: ProblemSpec, path: str | Path) -> None:
    Path(path).write_text(dumps(spec), encoding="utf-8")
