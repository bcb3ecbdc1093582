"""Recurrence criteria in R^d.

Two criteria are implemented.  The radial one integrates ``1/psi`` where
``psi(r)`` is the mass of ``phi`` on the sphere of radius ``r`` and requires
both ``a_n -> inf`` and ``b(r_n)/a_n -> 0``, with ``b`` the ellipticity
envelope of the coefficient matrix.  The envelope one needs a radial bound
``||A(x)|| phi(x) <= phibar(|x|)`` and the divergence of
``a_n = d vol_d(B_1) * integral_rho^n s^(1-d)/phibar(s) ds``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coeffmodel import IntervalDecomposition, Options, ProblemSpec, decompose
from .expressions import Const, Expression, SingularSet, SpecificationError, is_radial, split_separable
from .quad import DIVERGES, QuadratureError, divergence_diagnose, integrate
from .recur1d import (CLOSABILITY, INCONCLUSIVE, RECURRENT, EnergyRow, RecurrenceVerdict, SequenceEvidence,
                      integrate_inverse_weight, required_sequences, sequence_an)

_CIRCLE_POINTS = 256
_GL_POLAR = 48
_AZIMUTH = 96
_SUBRADII = 8


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d, i.e. ``d * vol_d(B_1)``."""
    return float(2.0 * math.pi ** (d / 2) / math.exp(math.lgamma(d / 2)))


def unit_ball_volume(d: int) -> float:
    return sphere_area(d) / d


# --------------------------------------------------------------------------
# sphere rules


def _sphere_rule(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on the unit sphere and weights summing to its area (d in {2, 3})."""
    if d == 2:
        th = 2 * np.pi * np.arange(_CIRCLE_POINTS) / _CIRCLE_POINTS
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(_CIRCLE_POINTS, 2 * np.pi / _CIRCLE_POINTS)
    if d == 3:
        z, wz = np.polynomial.legendre.leggauss(_GL_POLAR)
        ph = 2 * np.pi * np.arange(_AZIMUTH) / _AZIMUTH
        Z, PH = np.meshgrid(z, ph, indexing="ij")
        s = np.sqrt(1 - Z ** 2)
        nodes = np.column_stack([(s * np.cos(PH)).ravel(), (s * np.sin(PH)).ravel(), Z.ravel()])
        w = np.repeat(wz, _AZIMUTH) * (2 * np.pi / _AZIMUTH)
        return nodes, w
    raise SpecificationError(f"surface integrals of non-radial phi are supported for d in {{2, 3}}, not d={d}",
                             "phi")


def _directions(d: int, seed: int = 0) -> np.ndarray:
    """Sample directions for the ellipticity envelope."""
    if d == 2:
        th = 2 * np.pi * np.arange(64) / 64
        return np.column_stack([np.cos(th), np.sin(th)])
    if d == 3:
        k = np.arange(128) + 0.5
        z = 1 - 2 * k / 128
        ph = np.pi * (1 + 5 ** 0.5) * k
        s = np.sqrt(1 - z ** 2)
        return np.column_stack([s * np.cos(ph), s * np.sin(ph), z])
    eye = np.eye(d)
    dirs = [eye, -eye, np.ones((1, d)) / math.sqrt(d), -np.ones((1, d)) / math.sqrt(d)]
    g = np.random.default_rng(seed).standard_normal((64, d))
    dirs.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.vstack(dirs)


# --------------------------------------------------------------------------
# surface mass


@dataclass(frozen=True)
class SurfaceMass:
    """``psi(r)``: integral of ``phi`` over the sphere of radius ``r``."""

    phi: Expression
    dim: int
    method: str
    radial: Expression
    angular_mass: float

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        with np.errstate(all="ignore"):
            if self.method in ("radial", "separable"):
                out = self.radial(r) * self.angular_mass * r ** (self.dim - 1)
            else:
                nodes, w = _sphere_rule(self.dim)
                out = np.empty_like(r)
                for i, ri in enumerate(r):
                    out[i] = ri ** (self.dim - 1) * float(w @ self.phi(ri * nodes))
        return out[0] if scalar else out

    def singularities(self) -> SingularSet:
        if self.method == "general":
            return self.phi.singularities()
        return self.radial.singularities()


def surface_mass_function(spec: ProblemSpec) -> SurfaceMass:
    """Choose the radial, separable or general path for ``psi``."""
    d = spec.dim
    phi = spec.phi
    if is_radial(phi):
        return SurfaceMass(phi, d, "radial", phi, sphere_area(d))
    split = split_separable(phi)
    if split is not None:
        radial, angular = split
        if isinstance(angular, Const):
            mass = angular.value * sphere_area(d)
        else:
            nodes, w = _sphere_rule(d)
            mass = float(w @ angular(nodes))
        return SurfaceMass(phi, d, "separable", radial, mass)
    _sphere_rule(d)  # raises for d >= 4
    return SurfaceMass(phi, d, "general", Const(1.0), 1.0)


def surface_mass(spec: ProblemSpec, r) -> np.ndarray:
    """``psi(r)`` for ``r > 0``."""
    if not spec.is_multid:
        raise ValueError("surface_mass needs a spec on R^d")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("r must be positive")
    return surface_mass_function(spec)(r)


# --------------------------------------------------------------------------
# ellipticity envelope


@dataclass(frozen=True)
class EnvelopeSamples:
    r: tuple[float, ...]
    b: tuple[float, ...]
    kind: str
    symmetrized: int = 0
    notes: tuple[str, ...] = ()


def ellipticity_envelope(spec: ProblemSpec, r_grid, seed: int = 0) -> EnvelopeSamples:
    """Running maximum of the largest eigenvalue of ``A`` over the closed balls ``|x| <= r``.

    With an analytic envelope on the spec that function is used instead
    (monotonised by a running maximum if needed).
    """
    r = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r) < 0) or np.any(r < 0):
        raise ValueError("r_grid must be nonnegative and nondecreasing")
    if spec.envelope is not None:
        vals = np.atleast_1d(spec.envelope(r)).astype(float)
        mono = np.maximum.accumulate(vals)
        notes = () if np.array_equal(mono, vals) else ("analytic envelope was not nondecreasing; running max used",)
        return EnvelopeSamples(tuple(r.tolist()), tuple(mono.tolist()), "analytic", 0, notes)
    d = spec.dim
    dirs = _directions(d, seed)
    best = _max_eig(spec, np.zeros((1, d)))
    sym_total = best[1]
    best = best[0]
    prev = 0.0
    out = []
    for ri in r:
        if ri > prev:
            radii = np.linspace(prev, ri, _SUBRADII + 1)[1:]
            pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
            m, s = _max_eig(spec, pts)
            best = max(best, m)
            sym_total += s
            prev = ri
        out.append(best)
    notes = ("sampled envelope: a lower approximation of the true supremum",)
    if sym_total:
        notes += (f"{sym_total} sampled matrices were symmetrised before the eigenvalue computation",)
    return EnvelopeSamples(tuple(r.tolist()), tuple(out), "sampled", sym_total, notes)


def _max_eig(spec: ProblemSpec, pts: np.ndarray) -> tuple[float, int]:
    A = spec.matrix_at(pts)
    asym = np.max(np.abs(A - np.swapaxes(A, 1, 2)), axis=(1, 2))
    n_sym = int(np.sum(asym > 0))
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    if not np.all(np.isfinite(A)):
        raise SpecificationError("coefficient matrix is not finite at a sampled point", "matrix")
    return float(np.max(np.linalg.eigvalsh(A)[:, -1])), n_sym


# --------------------------------------------------------------------------
# radial criterion


@dataclass(frozen=True)
class _RadialWeight:
    """Adapter exposing ``1/psi`` with the interface the 1-d sequence code expects."""

    psi: SurfaceMass
    options: Options
    lower_bound: float = 0.0

    def inverse_weight(self, r):
        with np.errstate(all="ignore"):
            return 1.0 / self.psi(r)

    def weight(self, r):
        return self.psi(r)

    def weight_singularities(self) -> SingularSet:
        return self.psi.singularities()

    def weight_kinks(self) -> SingularSet:
        return self.psi.radial.kinks() if self.psi.method != "general" else self.psi.phi.kinks()


@dataclass(frozen=True)
class RadialProfile:
    """Surface mass, ellipticity envelope and the radial Hamza set."""

    psi: SurfaceMass
    b_env: Callable[[np.ndarray], EnvelopeSamples]
    U_radial: IntervalDecomposition
    dim: int
    options: Options
    envelope_kind: str = "sampled"

    @property
    def weight(self) -> _RadialWeight:
        return _RadialWeight(self.psi, self.options)


def radial_profile(spec: ProblemSpec, options: Options | None = None) -> RadialProfile:
    """Build the radial profile; audits ``psi > 0`` on a grid (SpecificationError otherwise)."""
    if not spec.is_multid:
        raise ValueError("radial_profile needs a spec on R^d")
    opt = options or spec.options
    psi = surface_mass_function(spec)
    hi = max(opt.window[1], 1.0)
    r = hi * (np.arange(1, 257) - 0.5 / math.sqrt(2.0)) / 256
    vals = np.atleast_1d(psi(r))
    skip = np.zeros(r.shape, dtype=bool)
    for p in psi.singularities().points_in(0.0, hi):
        skip |= r == p
    bad = ~(vals > 0) & ~skip
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SpecificationError(f"surface mass must be positive; psi({r[i]!r}) = {vals[i]!r}", "phi")
    w = _RadialWeight(psi, opt)
    dec = decompose(w.inverse_weight, w.weight_singularities(), w.weight_kinks(), "halfline", (0.0, hi), opt.tol)
    dec = dec.with_case(n_points=opt.n_max + 1)
    kind = "analytic" if spec.envelope is not None else "sampled"
    return RadialProfile(psi, lambda rr: ellipticity_envelope(spec, rr), dec, spec.dim, opt, kind)


def _ratio_radii(profile: RadialProfile, n_max: int) -> np.ndarray:
    seq = required_sequences(profile.U_radial)[0]
    if seq.kind == "ray":
        return np.array([seq.anchor + n for n in range(1, n_max + 1)], dtype=float)
    return np.array([seq.cutoff(n).d for n in range(1, n_max + 1)], dtype=float)


def classify_radial(profile: RadialProfile, options: Options | None = None) -> RecurrenceVerdict:
    """Radial criterion: ``a_n -> inf`` and ``b(r_n)/a_n -> 0``.

    The ratio condition is diagnosed on the reciprocal ``a_n/b(r_n)``, which
    must diverge.
    """
    opt = options or profile.options
    dec = profile.U_radial
    if dec.case_tag not in ("half-i", "half-ii"):
        return RecurrenceVerdict(INCONCLUSIVE, dec.case_tag, opt.n_max, reasons=("radial structure has no case",),
                                 criterion="radial")
    if dec.case_tag == "half-ii" and len(dec.anchors.x_right) < opt.n_max + 1:
        dec = dec.with_case(n_points=opt.n_max + 1)
    seqs = sequence_an(profile.weight, dec, options=opt)
    a = seqs[0]
    radii = _ratio_radii(RadialProfile(profile.psi, profile.b_env, dec, profile.dim, opt), opt.n_max)
    env = profile.b_env(np.sort(radii))
    bvals = np.asarray(env.b)[np.argsort(np.argsort(radii))]
    recip = np.asarray(a.values) / bvals
    rel_err = np.asarray(a.errors) / bvals
    keep = [i for i in range(opt.n_max) if a.reliable[i] and np.isfinite(recip[i])]
    ratio_verdict = None
    if len(keep) >= 8:
        ratio_verdict = divergence_diagnose([(a.abscissa[i], recip[i]) for i in keep], [rel_err[i] for i in keep],
                                            opt.divergence_floor, opt.fit_tol, opt.exponent_tol)
    ratio = SequenceEvidence("a_n/b", "ratio", "a_n divided by the ellipticity envelope at the ramp end; "
                             "must diverge for b/a_n -> 0", a.n, tuple(recip.tolist()), tuple(rel_err.tolist()),
                             a.reliable, a.abscissa, tuple((0.0, float(r)) for r in radii), ratio_verdict)
    reasons = []
    if not a.diverges:
        reasons.append(f"a_n: {a.verdict.kind if a.verdict else 'no fit'}"
                       f" ({a.verdict.reason if a.verdict else 'fewer than 8 reliable samples'})")
    if ratio_verdict is None or ratio_verdict.kind != DIVERGES:
        reasons.append("b/a_n does not decay to 0: " + (ratio_verdict.reason if ratio_verdict else "no fit"))
    kind = RECURRENT if a.diverges and ratio_verdict is not None and ratio_verdict.kind == DIVERGES else INCONCLUSIVE
    avals = np.asarray(a.values)
    trace = tuple(EnergyRow(n, float(bvals[n - 1] / avals[n - 1]) if avals[n - 1] > 0 else None)
                  for n in range(1, opt.n_max + 1))
    assumptions = (CLOSABILITY,) + dec.notes + env.notes
    details = {"psi_method": profile.psi.method, "envelope_kind": env.kind, "envelope_radii": list(env.r),
               "envelope_values": list(env.b), "decomposition": dec.to_dict(),
               "energy_bound": "b(r_n)/a_n"}
    return RecurrenceVerdict(kind, dec.case_tag, opt.n_max, (a, ratio), trace, assumptions, tuple(reasons),
                             criterion="radial", details=details)


# --------------------------------------------------------------------------
# envelope criterion


@dataclass(frozen=True)
class EnvelopeSpec:
    """Radial bound ``phibar`` with ``||A|| phi <= phibar(|x|)`` outside ``B_rho``."""

    phi_bound: Expression
    rho: float
    d: int
    spec: ProblemSpec | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.rho > 0:
            raise SpecificationError("rho must be positive", "rho")
        if self.d < 2:
            raise SpecificationError("dimension must be at least 2", "domain.dim")


def envelope_from_spec(spec: ProblemSpec) -> EnvelopeSpec:
    if spec.phi_bound is None:
        raise SpecificationError("spec has no phi_bound", "phi_bound")
    return EnvelopeSpec(spec.phi_bound, float(spec.rho), spec.dim, spec)


def _envelope_integrand(env: EnvelopeSpec) -> Callable:
    d = env.d

    def f(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            return s ** (1 - d) / env.phi_bound(s)
    return f


def envelope_sequence(env: EnvelopeSpec, n_max: int, tol: float):
    """``(n, a_n, error, converged)`` for ``n = floor(rho)+1, ..., floor(rho)+n_max``."""
    f = _envelope_integrand(env)
    area = sphere_area(env.d)
    sing = env.phi_bound.singularities()
    kinks = [float(p) for p in env.phi_bound.kinks().points_in(env.rho, env.rho + n_max + 1)]
    n0 = math.floor(env.rho) + 1
    pieces, err, ok = [], 0.0, True
    out = []
    lo = env.rho
    for n in range(n0, n0 + n_max):
        flag_lo = lo == env.rho and bool(sing.points_in(lo, lo).size)
        r = integrate(f, lo, float(n), tol, (flag_lo, False), [p for p in kinks if lo < p < n])
        pieces.append(r.value)
        err += r.error_estimate
        ok &= r.converged
        out.append((n, area * math.fsum(pieces), area * err, ok))
        lo = float(n)
    return out


def envelope_audit(env: EnvelopeSpec, r_max: float | None = None, seed: int = 0) -> dict:
    """Check ``||A(x)||_F phi(x) <= phibar(|x|)`` on sample points outside ``B_rho``.

    Reports the largest ratio ``||A|| phi / phibar`` and whether the ratio
    grows with the radius.
    """
    if env.spec is None:
        return {"checked": False, "note": "no coefficient data attached; inequality not audited"}
    spec = env.spec
    r_max = r_max if r_max is not None else max(4.0 * env.rho, 64.0)
    radii = np.geomspace(env.rho * (1 + 1e-9), r_max, 48)
    dirs = _directions(env.d, seed)
    ratios = []
    for r in radii:
        pts = r * dirs
        A = spec.matrix_at(pts)
        norm = np.sqrt(np.sum(A ** 2, axis=(1, 2)))
        lhs = norm * np.atleast_1d(spec.phi(pts))
        ratios.append(float(np.max(lhs / env.phi_bound(np.array([r]))[0])))
    ratios = np.asarray(ratios)
    q = float(np.max(ratios))
    k = len(radii) * 3 // 4
    growing = bool(np.max(ratios[k:]) > 1.05 * np.max(ratios[:k]))
    return {"checked": True, "max_ratio": q, "holds": bool(q <= 1.0 + 1e-12), "growing": growing,
            "radii": [float(radii[0]), float(radii[-1])]}


def classify_envelope(env: EnvelopeSpec, options: Options | None = None) -> RecurrenceVerdict:
    """Envelope criterion: every ``a_n`` finite and ``a_n -> inf``."""
    opt = options or (env.spec.options if env.spec is not None else Options())
    area = sphere_area(env.d)
    reasons: list[str] = []
    try:
        rows = envelope_sequence(env, opt.n_max, opt.tol)
    except QuadratureError as e:
        return RecurrenceVerdict(INCONCLUSIVE, None, opt.n_max, reasons=(f"a_n is not finite: {e}",),
                                 criterion="envelope")
    ns = tuple(r[0] for r in rows)
    vals = tuple(r[1] for r in rows)
    errs = tuple(r[2] for r in rows)
    rel = tuple(bool(r[3]) for r in rows)
    if not all(math.isfinite(v) for v in vals):
        return RecurrenceVerdict(INCONCLUSIVE, None, opt.n_max, reasons=("a_n is not finite for some n",),
                                 criterion="envelope")
    keep = [i for i in range(len(ns)) if rel[i]]
    verdict = None
    if len(keep) >= 8:
        verdict = divergence_diagnose([(float(ns[i]), vals[i]) for i in keep], [errs[i] for i in keep],
                                      opt.divergence_floor, opt.fit_tol, opt.exponent_tol)
    seq = SequenceEvidence("a_n", "envelope", f"{area!r} * integral of s^(1-d)/phibar(s) over [rho, n]", ns, vals,
                           errs, rel, tuple(float(n) for n in ns), tuple((env.rho, float(n)) for n in ns), verdict)
    audit = envelope_audit(env)
    assumptions = [CLOSABILITY, "the bound is assumed to hold outside a compact set inside B_rho"]
    kind = RECURRENT if seq.diverges else INCONCLUSIVE
    if not seq.diverges:
        reasons.append(f"a_n: {verdict.kind if verdict else 'no fit'} ({verdict.reason if verdict else ''})")
    if audit.get("checked") and not audit["holds"]:
        if audit["growing"]:
            kind = INCONCLUSIVE
            reasons.append(f"bound violated on the sample grid with a growing ratio (max {audit['max_ratio']:.6g})")
        else:
            assumptions.append(f"bound holds on the sample grid only up to the constant factor "
                               f"{audit['max_ratio']:.6g}; rescaling phibar by it leaves the divergence verdict "
                               "unchanged")
    bound_const = area ** 2
    trace = tuple(EnergyRow(n, bound_const / v if v > 0 else None) for n, v in zip(ns, vals))
    details = {"audit": audit, "rho": env.rho, "energy_bound": "d^2 vol_d(B_1)^2 / a_n"}
    return RecurrenceVerdict(kind, None, opt.n_max, (seq,), trace, tuple(assumptions), tuple(reasons),
                             criterion="envelope", details=details)


def radial_energy_audit(obj: RadialProfile | EnvelopeSpec, n: int, options: Options | None = None) -> float:
    """Upper bound on ``E(u_n, u_n)`` given by the criterion's test functions.

    Radial: ``b(r_n)/a_n``.  Envelope: ``d^2 vol_d(B_1)^2 / a_n`` with
    ``a_n`` over ``[rho, n]``.
    """
    if isinstance(obj, EnvelopeSpec):
        opt = options or (obj.spec.options if obj.spec is not None else Options())
        if not n > obj.rho:
            raise ValueError("n must exceed rho")
        f = _envelope_integrand(obj)
        a = sphere_area(obj.d) * integrate(f, obj.rho, float(n), opt.tol).value
        return sphere_area(obj.d) ** 2 / a
    opt = options or obj.options
    dec = obj.U_radial
    if dec.case_tag == "half-ii" and len(dec.anchors.x_right) < n + 1:
        dec = dec.with_case(n_points=n + 1)
    seq = required_sequences(dec)[0]
    lo, hi = seq.limits(n)
    a = integrate_inverse_weight(obj.weight, lo, hi, opt.tol, (False, seq.kind == "cutoff")).value
    r_end = hi
    b = obj.b_env(np.array([r_end])).b[0]
    return b / a


@dataclass(frozen=True)
class MultiVerdict:
    """Combined verdict on R^d: recurrent if either criterion certifies it."""

    radial: RecurrenceVerdict
    envelope: RecurrenceVerdict | None

    @property
    def kind(self) -> str:
        kinds = [self.radial.kind] + ([self.envelope.kind] if self.envelope else [])
        return RECURRENT if RECURRENT in kinds else INCONCLUSIVE

    def to_dict(self) -> dict:
        return {"kind": self.kind, "radial": self.radial.to_dict(),
                "envelope": None if self.envelope is None else self.envelope.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "MultiVerdict":
        env = d.get("envelope")
        return cls(RecurrenceVerdict.from_dict(d["radial"]), None if env is None else RecurrenceVerdict.from_dict(env))


def classify_multid(spec: ProblemSpec, options: Options | None = None) -> MultiVerdict:
    opt = options or spec.options
    radial = classify_radial(radial_profile(spec, opt), opt)
    env = classify_envelope(envelope_from_spec(spec), opt) if spec.phi_bound is not None else None
    return MultiVerdict(radial, env)


__all__ = [
    "EnvelopeSamples", "EnvelopeSpec", "MultiVerdict", "RadialProfile", "SurfaceMass", "classify_envelope",
    "classify_multid", "classify_radial", "ellipticity_envelope", "envelope_audit", "envelope_from_spec",
    "radial_energy_audit", "radial_profile", "sphere_area", "surface_mass", "surface_mass_function",
    "unit_ball_volume",
]
