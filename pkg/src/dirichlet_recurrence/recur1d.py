"""Recurrence criteria on the line and on the reflected half-line.

For every structural case the recurrence condition is that one or two
sequences of integrals of ``1/(sigma*phi)`` diverge.  This module computes
those sequences (over growing rays or over the cutoff ranges ``[c_n, d_n]``
inside accumulating intervals), diagnoses their divergence, and builds the
test functions ``u_n`` whose energies certify recurrence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coeffmodel import ClassificationError, IntervalDecomposition, Options, ProblemSpec, detect_hamza_set
from .expressions import on_singular_set
from .quad import BOUNDED, DivergenceVerdict, IntegralResult, divergence_diagnose, integrate

RECURRENT = "Recurrent"
INCONCLUSIVE = "Inconclusive"
TRANSIENT_BY_SCALE = "TransientByScale"

CLOSABILITY = "the form is assumed closable on its core of smooth compactly supported functions"
SCALE_LABEL = ("extension: all tail integrals of 1/(sigma*phi) are finite, i.e. the scale function is bounded; "
               "this rests on the classical scale-function characterisation, not on the recurrence "
               "criteria implemented here")


# --------------------------------------------------------------------------
# cutoffs


@dataclass(frozen=True)
class CutoffPair:
    """Cutoffs inside ``interval``: the ramp of ``u_n`` runs from ``c`` to ``d``.

    For the right-hand family ``d`` approaches the right end ``x_{n+1}``;
    for the mirrored family it approaches the left end ``x_{-n}``.
    """

    n: int
    c: float
    d: float
    interval: tuple[float, float]
    mirrored: bool = False


def midpoint_cutoffs(x_lo: float, x_hi: float, n: int, mirrored: bool = False) -> CutoffPair:
    """Cutoffs ``c_n`` (midpoint) and ``d_n`` for the interval ``(x_lo, x_hi)``.

    ``d`` lies at distance ``1/n`` from the singular end when the half-gap
    exceeds 1, and at ``(half-gap)/n`` otherwise.
    """
    if not x_lo < x_hi:
        raise ValueError(f"need x_lo < x_hi, got ({x_lo}, {x_hi})")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    c = (x_lo + x_hi) / 2
    if mirrored:
        half = c - x_lo
        d = x_lo + 1.0 / n if half > 1 else x_lo + half / n
    else:
        half = x_hi - c
        d = x_hi - 1.0 / n if half > 1 else x_hi - half / n
    return CutoffPair(int(n), c, d, (float(x_lo), float(x_hi)), mirrored)


# --------------------------------------------------------------------------
# integrals of the inverse weight


def integrate_inverse_weight(spec: ProblemSpec, lo: float, hi: float, tol: float,
                             flags: tuple[bool, bool] = (False, False),
                             integrand: Callable | None = None) -> IntegralResult:
    """Integrate ``1/(sigma*phi)`` (or ``integrand``) over ``[lo, hi]``.

    The range is split at declared singular points, each of which is handed
    to the quadrature as a flagged endpoint; kinks become breakpoints.
    """
    f = spec.inverse_weight if integrand is None else integrand
    if lo == hi:
        return IntegralResult(0.0, 0.0, True, 0)
    if lo > hi:
        r = integrate_inverse_weight(spec, hi, lo, tol, (flags[1], flags[0]), integrand)
        return IntegralResult(-r.value, r.error_estimate, r.converged, r.function_evals)
    sing = spec.weight_singularities()
    inner = [float(p) for p in sing.points_in(lo, hi) if lo < p < hi]
    kinks = [float(p) for p in spec.weight_kinks().points_in(lo, hi) if lo < p < hi and p not in inner]
    end_sing = on_singular_set(sing, np.array([lo, hi]))
    edges = [lo] + inner + [hi]
    vals, errs, ok, evals = [], 0.0, True, 0
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        fa = (i > 0) or bool(end_sing[0]) or flags[0]
        fb = (i < len(edges) - 2) or bool(end_sing[1]) or flags[1]
        pts = [p for p in kinks if a < p < b]
        r = integrate(f, a, b, tol, (fa, fb), pts)
        vals.append(r.value)
        errs += r.error_estimate
        ok &= r.converged
        evals += r.function_evals
    return IntegralResult(math.fsum(vals), errs, ok, evals)


# --------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class SequenceSpec:
    """How one required sequence is formed.

    ``kind="ray"``: ``[start, start + n]`` (``side="right"``) or
    ``[end - n, end]`` (``side="left"``).  ``kind="cutoff"``: ``[c_n, d_n]``
    in the n-th accumulating interval on ``side``.
    """

    name: str
    kind: str
    side: str
    anchor: float | None = None
    points: tuple[float, ...] = ()

    def limits(self, n: int) -> tuple[float, float]:
        if self.kind == "ray":
            return (self.anchor, self.anchor + n) if self.side == "right" else (self.anchor - n, self.anchor)
        cut = self.cutoff(n)
        return (cut.c, cut.d) if self.side == "right" else (cut.d, cut.c)

    def cutoff(self, n: int) -> CutoffPair:
        # points holds x_1, x_2, ... (right) or x_0, x_{-1}, ... (left)
        if self.side == "right":
            return midpoint_cutoffs(self.points[n - 1], self.points[n], n)
        return midpoint_cutoffs(self.points[n], self.points[n - 1], n, mirrored=True)

    def abscissa(self, n: int) -> float:
        """Natural growth variable used when fitting the sequence."""
        if self.kind == "cutoff":
            return float(n)
        if self.side == "right":
            return n + max(self.anchor, 0.0)
        return n + max(-self.anchor, 0.0)

    def describe(self) -> str:
        if self.kind == "ray":
            if self.side == "right":
                return f"integral of 1/(sigma*phi) over [{self.anchor!r}, {self.anchor!r} + n]"
            return f"integral of 1/(sigma*phi) over [{self.anchor!r} - n, {self.anchor!r}]"
        end = "x_{n+1}" if self.side == "right" else "x_{-n}"
        return f"integral of 1/(sigma*phi) between the midpoint c and the cutoff d next to {end}"

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "side": self.side, "anchor": self.anchor,
                "description": self.describe()}


@dataclass(frozen=True)
class SequenceEvidence:
    """Samples of one sequence and their divergence diagnosis."""

    name: str
    kind: str
    description: str
    n: tuple[int, ...]
    values: tuple[float, ...]
    errors: tuple[float, ...]
    reliable: tuple[bool, ...]
    abscissa: tuple[float, ...]
    limits: tuple[tuple[float, float], ...]
    verdict: DivergenceVerdict | None

    @property
    def diverges(self) -> bool:
        return self.verdict is not None and self.verdict.diverges

    def value(self, n: int) -> float:
        return self.values[self.n.index(n)]

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "description": self.description, "n": list(self.n),
                "values": list(self.values), "errors": list(self.errors), "reliable": list(self.reliable),
                "abscissa": list(self.abscissa), "limits": [list(l) for l in self.limits],
                "verdict": None if self.verdict is None else self.verdict.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceEvidence":
        return cls(d["name"], d["kind"], d["description"], tuple(d["n"]), tuple(d["values"]),
                   tuple(d["errors"]), tuple(d["reliable"]), tuple(d["abscissa"]),
                   tuple(tuple(l) for l in d["limits"]),
                   None if d["verdict"] is None else DivergenceVerdict.from_dict(d["verdict"]))


def required_sequences(dec: IntervalDecomposition) -> tuple[SequenceSpec, ...]:
    """The sequences whose divergence the tagged case requires (right side first)."""
    anc = dec.anchors
    if anc is None:
        raise ClassificationError("decomposition has no case tag")
    tag = anc.tag
    ray_r = lambda s: SequenceSpec("a_n", "ray", "right", float(s))  # noqa: E731
    ray_l = lambda e: SequenceSpec("b_n", "ray", "left", float(e))  # noqa: E731
    cut_r = SequenceSpec("a_n", "cutoff", "right", points=anc.x_right)
    cut_l = SequenceSpec("b_n", "cutoff", "left", points=anc.x_left)
    if tag == "line-i":
        return ray_r(0.0), ray_l(0.0)
    if tag == "line-ii":
        return ray_r(anc.b + 1), ray_l(anc.a - 1)
    if tag == "line-iii":
        return cut_r, cut_l
    if tag == "line-iv":
        return ray_r(anc.b + 1), cut_l
    if tag == "line-v":
        return cut_r, ray_l(anc.a - 1)
    if tag == "half-i":
        return (ray_r(anc.a + 1),)
    if tag == "half-ii":
        return (cut_r,)
    raise ClassificationError(f"unknown case tag {tag!r}")


def compute_sequence(spec: ProblemSpec, seq: SequenceSpec, n_max: int, tol: float) -> list[IntegralResult]:
    """``A_1 .. A_{n_max}`` for one sequence."""
    if seq.kind == "ray":
        # accumulate unit pieces so that A_n shares its first n-1 pieces with A_{n-1}
        pieces: list[float] = []
        out = []
        err, ok, evals = 0.0, True, 0
        for n in range(1, n_max + 1):
            lo, hi = seq.limits(n)
            lo1, hi1 = (hi - 1.0, hi) if seq.side == "right" else (lo, lo + 1.0)
            r = integrate_inverse_weight(spec, lo1, hi1, tol)
            pieces.append(r.value)
            err += r.error_estimate
            ok &= r.converged
            evals += r.function_evals
            out.append(IntegralResult(math.fsum(pieces), err, ok, evals))
        return out
    if len(seq.points) < n_max + 1:
        raise ClassificationError(f"need {n_max + 1} accumulating points, have {len(seq.points)}")
    out = []
    for n in range(1, n_max + 1):
        lo, hi = seq.limits(n)
        flags = (False, True) if seq.side == "right" else (True, False)
        out.append(integrate_inverse_weight(spec, lo, hi, tol, flags))
    return out


def sequence_an(spec: ProblemSpec, dec: IntervalDecomposition, n_max: int | None = None,
                tol: float | None = None, options: Options | None = None) -> tuple[SequenceEvidence, ...]:
    """Compute and diagnose every sequence required by the tagged case.

    Samples whose quadrature did not converge are marked unreliable and
    left out of the divergence fit.
    """
    opt = options or spec.options
    n_max = opt.n_max if n_max is None else int(n_max)
    tol = opt.tol if tol is None else tol
    if n_max < 8:
        raise ValueError("n_max must be at least 8")
    out = []
    for seq in required_sequences(dec):
        res = compute_sequence(spec, seq, n_max, tol)
        ns = tuple(range(1, n_max + 1))
        vals = tuple(r.value for r in res)
        errs = tuple(r.error_estimate for r in res)
        rel = tuple(bool(r.converged) for r in res)
        absc = tuple(seq.abscissa(n) for n in ns)
        lims = tuple(tuple(float(v) for v in seq.limits(n)) for n in ns)
        keep = [i for i in range(n_max) if rel[i]]
        if len(keep) >= 8:
            verdict = divergence_diagnose([(absc[i], vals[i]) for i in keep], [errs[i] for i in keep],
                                          opt.divergence_floor, opt.fit_tol, opt.exponent_tol)
        else:
            verdict = None
        out.append(SequenceEvidence(seq.name, seq.kind, seq.describe(), ns, vals, errs, rel, absc, lims,
                                    verdict))
    return tuple(out)


# --------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class EnergyRow:
    n: int
    closed_form: float | None
    quadrature: float | None = None

    def to_dict(self) -> dict:
        return {"n": self.n, "closed_form": self.closed_form, "quadrature": self.quadrature}


@dataclass(frozen=True)
class RecurrenceVerdict:
    """Outcome of a recurrence classification with its evidence.

    ``flags`` carries advisory extensions (``TransientByScale``) that never
    change ``kind``.
    """

    kind: str
    case_tag: str | None
    n_max: int
    sequences: tuple[SequenceEvidence, ...] = ()
    energy_trace: tuple[EnergyRow, ...] = ()
    assumptions: tuple[str, ...] = ()
    reasons: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    extension: dict | None = None
    criterion: str = ""
    details: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"numerical evidence at n_max={self.n_max}"

    @property
    def recurrent(self) -> bool:
        return self.kind == RECURRENT

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "case_tag": self.case_tag, "n_max": self.n_max, "label": self.label,
            "criterion": self.criterion,
            "sequences": [s.to_dict() for s in self.sequences],
            "energy_trace": [r.to_dict() for r in self.energy_trace],
            "assumptions": list(self.assumptions), "reasons": list(self.reasons), "flags": list(self.flags),
            "extension": self.extension, "details": self.details,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecurrenceVerdict":
        return cls(d["kind"], d["case_tag"], d["n_max"],
                   tuple(SequenceEvidence.from_dict(s) for s in d["sequences"]),
                   tuple(EnergyRow(**r) for r in d["energy_trace"]),
                   tuple(d["assumptions"]), tuple(d["reasons"]), tuple(d["flags"]), d["extension"],
                   d.get("criterion", ""), d.get("details", {}))


def closed_form_energy(normalizers: tuple[float, ...]) -> float | None:
    """``(1/2) * sum(1/A)`` over the ramps; ``None`` when a normalizer vanishes."""
    if any(not A > 0 for A in normalizers):
        return None
    return 0.5 * math.fsum(1.0 / A for A in normalizers)


def _assumptions(dec: IntervalDecomposition) -> tuple[str, ...]:
    out = [CLOSABILITY]
    out.extend(dec.notes)
    if dec.ambiguous_points:
        out.append(f"points with undetermined local integrability excluded from U: {list(dec.ambiguous_points)}")
    return tuple(out)


def _assemble(spec: ProblemSpec, dec: IntervalDecomposition, opt: Options, criterion: str) -> RecurrenceVerdict:
    if dec.case_tag is None:
        return RecurrenceVerdict(INCONCLUSIVE, None, opt.n_max, assumptions=_assumptions(dec),
                                 reasons=("no case tag for this structure",), criterion=criterion)
    seqs = sequence_an(spec, dec, options=opt)
    reasons = []
    for s in seqs:
        if s.verdict is None:
            reasons.append(f"{s.name}: fewer than 8 reliable samples")
        elif not s.diverges:
            reasons.append(f"{s.name}: {s.verdict.kind} ({s.verdict.reason})")
    unreliable = sum(not r for s in seqs for r in s.reliable)
    if unreliable:
        reasons.append(f"{unreliable} sample(s) excluded from fits: quadrature did not converge")
    kind = RECURRENT if all(s.diverges for s in seqs) else INCONCLUSIVE
    trace = tuple(EnergyRow(n, closed_form_energy(tuple(s.values[n - 1] for s in seqs)))
                  for n in range(1, opt.n_max + 1))
    flags, ext = (), None
    if opt.enable_scale_probe:
        probe = scale_transience_probe(spec, dec, seqs)
        if probe is not None:
            flags, ext = (TRANSIENT_BY_SCALE,), probe
    return RecurrenceVerdict(kind, dec.case_tag, opt.n_max, seqs, trace, _assumptions(dec), tuple(reasons),
                             flags, ext, criterion, {"decomposition": dec.to_dict()})


def classify_line(spec: ProblemSpec, dec: IntervalDecomposition | None = None,
                  options: Options | None = None) -> RecurrenceVerdict:
    """Recurrence verdict for a spec on the whole line."""
    if spec.domain != "line":
        raise ValueError("classify_line needs a spec on the line")
    opt = options or spec.options
    dec = dec if dec is not None else _decomposition(spec, opt)
    return _assemble(spec, dec, opt, "line criteria: required integral sequences diverge")


def classify_halfline(spec: ProblemSpec, dec: IntervalDecomposition | None = None,
                      options: Options | None = None) -> RecurrenceVerdict:
    """Recurrence verdict for a spec on the reflected half-line."""
    if spec.domain != "halfline":
        raise ValueError("classify_halfline needs a spec on the half-line")
    opt = options or spec.options
    dec = dec if dec is not None else _decomposition(spec, opt)
    return _assemble(spec, dec, opt, "half-line criteria: required integral sequence diverges")


def _decomposition(spec: ProblemSpec, opt: Options) -> IntervalDecomposition:
    dec = detect_hamza_set(spec, window=opt.window, tol=opt.tol)
    return dec.with_case(n_points=opt.n_max + 1, pivot=opt.pivot)


def classify_1d(spec: ProblemSpec, options: Options | None = None) -> RecurrenceVerdict:
    """Dispatch to :func:`classify_line` or :func:`classify_halfline`."""
    fn = classify_line if spec.domain == "line" else classify_halfline
    return fn(spec, None, options)


def scale_transience_probe(spec: ProblemSpec, dec: IntervalDecomposition,
                           sequences: tuple[SequenceEvidence, ...] | None = None) -> dict | None:
    """Advisory transience flag for the ray-only cases ``line-i`` and ``half-i``.

    Returns a record when every required ray integral is diagnosed Bounded,
    otherwise ``None``.
    """
    if dec.case_tag not in ("line-i", "half-i"):
        return None
    seqs = sequences if sequences is not None else sequence_an(spec, dec)
    if not seqs or not all(s.verdict is not None and s.verdict.kind == BOUNDED for s in seqs):
        return None
    return {"flag": TRANSIENT_BY_SCALE, "label": SCALE_LABEL,
            "limits": {s.name: s.verdict.limit for s in seqs}}


# --------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class Piece:
    """One piece of ``u_n``: ``zero``, ``one`` or a ``ramp`` normalised by ``A``.

    A ramp equals 1 at ``anchor`` (one of its ends) and decreases like
    ``1 - (1/A) * |integral of 1/(sigma*phi) from anchor|``.
    """

    lo: float
    hi: float
    kind: str
    A: float | None = None
    anchor: float | None = None

    @property
    def description(self) -> str:
        if self.kind == "ramp":
            return f"ramp 1 - (1/A) * integral of 1/(sigma*phi) from {self.anchor!r}, A={self.A!r}"
        return "constant 1" if self.kind == "one" else "constant 0"


@dataclass(frozen=True)
class TestFunction:
    """Piecewise ``u_n``: flat 1 on a core, integral ramps, 0 outside."""

    __test__ = False

    pieces: tuple[Piece, ...]
    n: int
    case_tag: str
    spec: ProblemSpec = field(repr=False, compare=False)
    tol: float = 1e-10

    @property
    def ramps(self) -> tuple[Piece, ...]:
        return tuple(p for p in self.pieces if p.kind == "ramp")

    @property
    def normalizers(self) -> tuple[float, ...]:
        return tuple(p.A for p in self.ramps)

    @property
    def support(self) -> tuple[float, float]:
        live = [p for p in self.pieces if p.kind != "zero"]
        return live[0].lo, live[-1].hi

    def closed_form_energy(self) -> float:
        return closed_form_energy(self.normalizers)

    def _ramp_value(self, p: Piece, x: float) -> float:
        far = x != p.anchor and x in (p.lo, p.hi)
        r = integrate_inverse_weight(self.spec, p.anchor, x, self.tol, (False, far))
        return 1.0 - abs(r.value) / p.A

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for i, xi in enumerate(x):
            for p in self.pieces:
                if p.lo <= xi <= p.hi:
                    out[i] = 1.0 if p.kind == "one" else 0.0 if p.kind == "zero" else self._ramp_value(p, xi)
                    break
        return out

    def derivative(self, x) -> np.ndarray:
        """``u_n'`` at points off the piece boundaries."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for p in self.ramps:
            m = (x > p.lo) & (x < p.hi)
            if np.any(m):
                sgn = -1.0 if p.anchor == p.lo else 1.0
                out[m] = sgn * self.spec.inverse_weight(x[m]) / p.A
        return out

    def grid(self, points_per_ramp: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """Values on ``points_per_ramp`` points per ramp plus all piece boundaries.

        Ramp values are accumulated from consecutive sub-integrals.
        """
        xs, us = [], []
        for p in self.pieces:
            lo = p.lo if math.isfinite(p.lo) else p.hi - 1.0
            hi = p.hi if math.isfinite(p.hi) else p.lo + 1.0
            if p.kind != "ramp":
                pts = np.array([lo, hi])
                xs.append(pts)
                us.append(np.full(2, 1.0 if p.kind == "one" else 0.0))
                continue
            pts = np.linspace(lo, hi, points_per_ramp)
            steps = [integrate_inverse_weight(self.spec, a, b, self.tol,
                                              (a == lo and p.anchor == hi, b == hi and p.anchor == lo)).value
                     for a, b in zip(pts[:-1], pts[1:])]
            cum = np.concatenate([[0.0], np.cumsum(steps)])
            if p.anchor == lo:
                vals = 1.0 - cum / p.A
            else:
                vals = 1.0 - (cum[-1] - cum) / p.A
            xs.append(pts)
            us.append(vals)
        x = np.concatenate(xs)
        u = np.concatenate(us)
        order = np.argsort(x, kind="stable")
        return x[order], u[order]


def _ramp_bounds(spec: ProblemSpec, seq: SequenceSpec, n: int, tol: float) -> tuple[Piece, float]:
    """Ramp piece of sequence ``seq`` at index ``n`` and its inner (core-side) end."""
    lo, hi = seq.limits(n)
    A = integrate_inverse_weight(spec, lo, hi, tol,
                                 (seq.kind == "cutoff" and seq.side == "left",
                                  seq.kind == "cutoff" and seq.side == "right")).value
    if seq.side == "right":
        return Piece(lo, hi, "ramp", A, lo), lo
    return Piece(lo, hi, "ramp", A, hi), hi


def build_un(spec: ProblemSpec, dec: IntervalDecomposition, n: int, tol: float = 1e-10) -> TestFunction:
    """The test function ``u_n`` of the tagged case.

    Raises ValueError when a ramp would be degenerate (normalizer 0).
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if dec.case_tag is None:
        raise ClassificationError("decomposition has no case tag")
    seqs = required_sequences(dec)
    ramps = [_ramp_bounds(spec, s, n, tol) for s in seqs]
    for (p, _), s in zip(ramps, seqs):
        if not p.A > 0:
            raise ValueError(f"degenerate ramp for {s.name} at n={n}: normalizer {p.A!r}")
    right = [r for r, s in zip(ramps, seqs) if s.side == "right"]
    left = [r for r, s in zip(ramps, seqs) if s.side == "left"]
    pieces: list[Piece] = []
    lower = spec.lower_bound
    if left:
        (lp, core_lo), = left
        pieces.append(Piece(lower, lp.lo, "zero"))
        pieces.append(lp)
    else:
        core_lo = lower
    (rp, core_hi), = right
    if core_lo < core_hi:
        pieces.append(Piece(core_lo, core_hi, "one"))
    pieces.append(rp)
    pieces.append(Piece(rp.hi, math.inf, "zero"))
    return TestFunction(tuple(pieces), int(n), dec.case_tag, spec, tol)


def dirichlet_energy(u: TestFunction, spec: ProblemSpec | None = None, tol: float = 1e-10) -> float:
    """``(1/2) * integral of (u')^2 * sigma * phi`` over the ramps (flat pieces add nothing).

    Raises ArithmeticError naming the ramp whose quadrature fails.
    """
    spec = spec or u.spec
    total = []
    for p in u.ramps:
        def integrand(x, A=p.A):
            inv = spec.inverse_weight(x)
            with np.errstate(over="ignore", invalid="ignore"):
                w = spec.weight(x)
                # where the weight overflows the density reduces to inv / A^2
                return np.where(np.isfinite(w), (inv / A) ** 2 * w, inv / A ** 2)
        flags = (p.anchor == p.hi, p.anchor == p.lo)
        r = integrate_inverse_weight(spec, p.lo, p.hi, tol, flags, integrand)
        if not r.converged and r.error_estimate > 1e3 * tol * max(1.0, abs(r.value)):
            raise ArithmeticError(f"energy quadrature failed on ramp [{p.lo}, {p.hi}]")
        total.append(0.5 * r.value)
    return math.fsum(total)


def energy_trace(spec: ProblemSpec, dec: IntervalDecomposition, n_max: int, tol: float = 1e-10,
                 quadrature: bool = True) -> tuple[EnergyRow, ...]:
    rows = []
    for n in range(1, n_max + 1):
        try:
            u = build_un(spec, dec, n, tol)
        except ValueError:
            rows.append(EnergyRow(n, None, None))
            continue
        rows.append(EnergyRow(n, u.closed_form_energy(), dirichlet_energy(u, spec, tol) if quadrature else None))
    return tuple(rows)
