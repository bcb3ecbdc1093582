"""Problem specifications, Hamza-set detection and case classification.

A :class:`ProblemSpec` bundles the domain and the coefficient expressions of
a gradient-type Dirichlet form.  :func:`detect_hamza_set` finds the largest
open set on which ``1/(sigma*phi)`` is locally integrable by testing every
declared singular point, and :func:`classify_case` maps the resulting
interval structure to one of the seven recurrence cases.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expressions import (EMPTY, Const, Expression, Lattice, NonFiniteEvaluation, Power, PowOf, Product, Sign,
                          SingularSet, SpecificationError, add, evaluate_checked, mul, render_scalar,
                          on_singular_set)
from .quad import INTEGRABLE, NON_INTEGRABLE, local_integrability

DOMAINS = ("line", "halfline", "euclidean")
LINE_CASES = ("line-i", "line-ii", "line-iii", "line-iv", "line-v")
HALF_CASES = ("half-i", "half-ii")
CASE_TAGS = LINE_CASES + HALF_CASES

# lattices are probed at this many of their points inside the window
_LATTICE_PROBES = 16
_GRID_POINTS = 4001


class ClassificationError(ValueError):
    """The interval structure matches none of the recurrence cases."""


class SingularPointError(ValueError):
    """A coefficient-derived field was evaluated at a singular point."""

    def __init__(self, x: float):
        self.x = x
        super().__init__(f"evaluation at singular point x={x!r}")


@dataclass(frozen=True)
class Options:
    """Numerical knobs shared by all classifiers."""

    tol: float = 1e-8
    n_max: int = 64
    window: tuple[float, float] = (-10.0, 10.0)
    divergence_floor: float = 1e3
    fit_tol: float = 1e-2
    exponent_tol: float = 1e-3
    pivot: float = 0.0
    enable_scale_probe: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise SpecificationError("tol must be positive", "options.tol")
        if int(self.n_max) != self.n_max or self.n_max < 8:
            raise SpecificationError("n_max must be an integer >= 8", "options.n_max")
        lo, hi = self.window
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise SpecificationError("window must be a finite interval lo < hi", "options.window")
        if not self.divergence_floor > 0:
            raise SpecificationError("divergence_floor must be positive", "options.divergence_floor")
        if not self.fit_tol > 0:
            raise SpecificationError("fit_tol must be positive", "options.fit_tol")
        object.__setattr__(self, "window", (float(lo), float(hi)))
        object.__setattr__(self, "n_max", int(self.n_max))

    def with_overrides(self, **kw) -> "Options":
        """Copy with every non-``None`` keyword replaced."""
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class ProblemSpec:
    """Domain plus coefficients of the form.

    One-dimensional domains (``line``, ``halfline``) use ``sigma`` and
    ``phi``.  ``euclidean`` uses ``phi`` (a function of the point, with the
    radius as its scalar variable), the symmetric ``matrix`` and optionally
    an analytic ellipticity envelope ``envelope`` and the bound ``phi_bound``
    with radius ``rho`` for the envelope criterion.
    """

    domain: str
    phi: Expression
    sigma: Expression | None = None
    dim: int = 1
    matrix: tuple[tuple[Expression, ...], ...] | None = None
    envelope: Expression | None = None
    phi_bound: Expression | None = None
    rho: float | None = None
    options: Options = field(default_factory=Options)
    name: str = ""
    simulation: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise SpecificationError(f"unknown domain {self.domain!r}", "domain.kind")
        if self.domain == "euclidean":
            if int(self.dim) != self.dim or self.dim < 2:
                raise SpecificationError("euclidean domains need dim >= 2", "domain.dim")
            if self.sigma is not None:
                raise SpecificationError("sigma is one-dimensional only; use matrix", "sigma")
            if self.matrix is None:
                one = Const(1.0)
                zero = Const(0.0)
                m = [[one if i == j else zero for j in range(self.dim)] for i in range(self.dim)]
                object.__setattr__(self, "matrix", tuple(tuple(r) for r in m))
            _check_matrix(self.matrix, self.dim)
            if self.phi_bound is not None and not (self.rho is not None and self.rho > 0):
                raise SpecificationError("phi_bound needs a positive rho", "rho")
        else:
            if self.dim != 1:
                raise SpecificationError("one-dimensional domains have dim 1", "domain.dim")
            if self.matrix is not None or self.phi_bound is not None or self.envelope is not None:
                raise SpecificationError("matrix/phi_bound/envelope are multi-dimensional only", "domain.kind")
            if self.sigma is None:
                object.__setattr__(self, "sigma", Const(1.0))
            for key in ("sigma", "phi"):
                if getattr(self, key).uses_coords:
                    raise SpecificationError("coordinate leaves are multi-dimensional only", key)

    @property
    def is_multid(self) -> bool:
        return self.domain == "euclidean"

    @property
    def lower_bound(self) -> float:
        return 0.0 if self.domain == "halfline" else -math.inf

    def window(self) -> tuple[float, float]:
        lo, hi = self.options.window
        if self.domain == "halfline":
            lo = max(lo, 0.0)
            if hi <= lo:
                raise SpecificationError("half-line window must reach into (0, inf)", "options.window")
        return lo, hi

    def _check_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.domain == "halfline" and np.any(x < 0):
            raise ValueError("half-line coefficients are only evaluated on [0, inf)")
        return x

    def weight(self, x) -> np.ndarray:
        """``sigma*phi`` (one-dimensional specs)."""
        x = self._check_domain(x)
        with np.errstate(all="ignore"):
            return self.sigma(x) * self.phi(x)

    def inverse_weight(self, x) -> np.ndarray:
        """``1/(sigma*phi)``, the integrand of every one-dimensional sequence."""
        x = self._check_domain(x)
        with np.errstate(all="ignore"):
            return 1.0 / (self.sigma(x) * self.phi(x))

    def weight_singularities(self) -> SingularSet:
        return self.sigma.singularities().union(self.phi.singularities())

    def weight_kinks(self) -> SingularSet:
        return self.sigma.kinks().union(self.phi.kinks())

    def matrix_at(self, X) -> np.ndarray:
        """Coefficient matrices at points ``X`` of shape ``(m, d)``; returns ``(m, d, d)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = self.dim
        out = np.empty((X.shape[0], d, d))
        for i in range(d):
            for j in range(i, d):
                v = np.broadcast_to(self.matrix[i][j](X), (X.shape[0],))
                out[:, i, j] = v
                out[:, j, i] = v
        return out

    def scaled(self, k: float) -> "ProblemSpec":
        """Spec with ``sigma*phi`` multiplied by ``k`` (``phi`` and its bound in R^d)."""
        if not k > 0:
            raise ValueError("scale factor must be positive")
        if self.is_multid:
            bound = None if self.phi_bound is None else mul(Const(k), self.phi_bound)
            return dataclasses.replace(self, phi=mul(Const(k), self.phi), phi_bound=bound)
        return dataclasses.replace(self, sigma=mul(Const(k), self.sigma))


def _check_matrix(matrix, d: int) -> None:
    if len(matrix) != d or any(len(row) != d for row in matrix):
        raise SpecificationError(f"matrix must be {d}x{d}", "matrix")
    for i in range(d):
        for j in range(i + 1, d):
            if matrix[i][j] is not matrix[j][i]:
                raise SpecificationError(f"entries ({i},{j}) and ({j},{i}) must be the same expression",
                                         f"matrix[{j}][{i}]")


# --------------------------------------------------------------------------
# evaluation


def evaluate(expr: Expression, x: float) -> float:
    """Evaluate at a point; ``+inf`` at declared blow-ups.

    Raises NonFiniteEvaluation if the value is not finite at an undeclared point.
    """
    return float(evaluate_checked(expr, x))


def check_positive(spec: ProblemSpec, window: tuple[float, float] | None = None,
                   n: int = _GRID_POINTS) -> None:
    """Sample ``sigma`` and ``phi`` on a grid and insist they are positive.

    Grid points sitting on declared singularities are skipped.  Raises
    SpecificationError naming the first offending point.
    """
    lo, hi = window if window is not None else spec.window()
    # an irrational shift keeps the grid off lattice points and breakpoints
    t = lo + (hi - lo) * (np.arange(n) + 0.5 / math.sqrt(2.0)) / n
    if spec.is_multid:
        exprs = {"phi": spec.phi}
        pts = np.zeros((n, spec.dim))
        pts[:, 0] = t
    else:
        exprs = {"sigma": spec.sigma, "phi": spec.phi}
        pts = t
    for name, e in exprs.items():
        v = np.atleast_1d(e(pts))
        skip = on_singular_set(e.singularities(), t, rtol=1e-12)
        bad = ~(v > 0) & ~skip
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise SpecificationError(f"coefficient must be positive; value {v[i]!r} at x={t[i]!r}", name)


# --------------------------------------------------------------------------
# interval decompositions


@dataclass(frozen=True)
class CaseAnchors:
    """Anchor data of a tagged case.

    ``x_right`` holds ``x_1, x_2, ...`` and ``x_left`` holds
    ``x_0, x_{-1}, ...`` (only for the sides that accumulate).
    """

    tag: str
    a: float | None = None
    b: float | None = None
    x_right: tuple[float, ...] = ()
    x_left: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"tag": self.tag, "a": self.a, "b": self.b,
                "x_right": list(self.x_right), "x_left": list(self.x_left)}

    @classmethod
    def from_dict(cls, d: dict) -> "CaseAnchors":
        return cls(d["tag"], d.get("a"), d.get("b"), tuple(d.get("x_right", ())), tuple(d.get("x_left", ())))


@dataclass(frozen=True)
class IntervalDecomposition:
    """The Hamza set as the complement of a discrete point set.

    ``complement_points`` are isolated excluded points, ``complement_lattices``
    are excluded periodic patterns (possibly unbounded, which is how the
    structure outside the search window is specified).
    """

    domain: str
    complement_points: tuple[float, ...] = ()
    complement_lattices: tuple[Lattice, ...] = ()
    window: tuple[float, float] = (-10.0, 10.0)
    ambiguous_points: tuple[float, ...] = ()
    notes: tuple[str, ...] = ()
    anchors: CaseAnchors | None = None

    @property
    def case_tag(self) -> str | None:
        return None if self.anchors is None else self.anchors.tag

    @property
    def left_accumulates(self) -> bool:
        return self.domain == "line" and any(l.unbounded_below for l in self.complement_lattices)

    @property
    def right_accumulates(self) -> bool:
        return any(l.unbounded_above for l in self.complement_lattices)

    def complement_in(self, lo: float, hi: float) -> np.ndarray:
        """Sorted excluded points in ``[lo, hi]``."""
        return SingularSet(self.complement_points, self.complement_lattices).points_in(lo, hi)

    @property
    def intervals(self) -> tuple[tuple[float, float], ...]:
        """Maximal open intervals of U, truncated to the window where a lattice continues."""
        wlo, whi = self.window
        pts = list(self.complement_in(wlo, whi))
        pts = sorted(set(pts) | {p for p in self.complement_points if self._in_domain(p)})
        if self.left_accumulates:
            below = self.left_points(wlo, 1)
            lo = below[0] if below.size else wlo
        else:
            lo = 0.0 if self.domain == "halfline" else -math.inf
        if self.right_accumulates:
            above = self.right_points(whi, 1, strict=False)
            hi = above[0] if above.size else whi
        else:
            hi = math.inf
        edges = [lo] + [p for p in pts if lo < p < hi] + [hi]
        return tuple((float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b)

    def _in_domain(self, p: float) -> bool:
        return p > 0 if self.domain == "halfline" else True

    def right_points(self, start: float, count: int, strict: bool = True) -> np.ndarray:
        """The first ``count`` excluded points ``> start`` (``>=`` if not strict)."""
        span = 16.0
        while True:
            pts = self.complement_in(start, start + span)
            pts = pts[pts > start] if strict else pts
            if pts.size >= count or span > 1e15:
                return pts[:count]
            span *= 4.0

    def left_points(self, start: float, count: int, strict: bool = False) -> np.ndarray:
        """The first ``count`` excluded points ``<= start`` in descending order."""
        span = 16.0
        while True:
            pts = self.complement_in(start - span, start)[::-1]
            pts = pts[pts < start] if strict else pts
            if pts.size >= count or span > 1e15:
                return pts[:count]
            span *= 4.0

    def with_case(self, n_points: int = 65, pivot: float = 0.0) -> "IntervalDecomposition":
        return dataclasses.replace(self, anchors=classify_case(self, n_points=n_points, pivot=pivot))

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "intervals": [list(iv) for iv in self.intervals],
            "complement_points": list(self.complement_points),
            "complement_lattices": [dataclasses.asdict(l) for l in self.complement_lattices],
            "window": list(self.window),
            "ambiguous_points": list(self.ambiguous_points),
            "notes": list(self.notes),
            "case_tag": self.case_tag,
            "anchors": None if self.anchors is None else self.anchors.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalDecomposition":
        return cls(d["domain"], tuple(d["complement_points"]),
                   tuple(Lattice(**l) for l in d["complement_lattices"]), tuple(d["window"]),
                   tuple(d.get("ambiguous_points", ())), tuple(d.get("notes", ())),
                   None if d.get("anchors") is None else CaseAnchors.from_dict(d["anchors"]))

    @classmethod
    def from_intervals(cls, intervals: Sequence[tuple[float, float]], domain: str = "line",
                       lattices: Sequence[Lattice] = (),
                       window: tuple[float, float] | None = None) -> "IntervalDecomposition":
        """Build a decomposition from explicit intervals (any order).

        Consecutive intervals must share an endpoint, since the complement
        must be a null set.  ``lattices`` describe how an accumulating side
        continues past the listed intervals.
        """
        if domain not in ("line", "halfline"):
            raise ValueError("interval decompositions are one-dimensional")
        ivs = sorted((float(a), float(b)) for a, b in intervals)
        if not ivs:
            raise ClassificationError("U is empty")
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"empty interval ({a}, {b})")
        for (a0, b0), (a1, b1) in zip(ivs[:-1], ivs[1:]):
            if b0 > a1:
                raise ValueError(f"intervals ({a0}, {b0}) and ({a1}, {b1}) overlap")
            if b0 < a1:
                raise ValueError(f"gap [{b0}, {a1}] has positive length")
        lattices = tuple(lattices)
        lower = 0.0 if domain == "halfline" else -math.inf
        if ivs[0][0] != lower and not any(l.unbounded_below for l in lattices):
            raise ValueError(f"intervals must start at {lower} unless a lattice continues to the left")
        if ivs[-1][1] != math.inf and not any(l.unbounded_above for l in lattices):
            raise ValueError("intervals must reach +inf unless a lattice continues to the right")
        pts = {b for (_, b) in ivs[:-1]}
        if ivs[0][0] != lower:
            pts.add(ivs[0][0])
        if ivs[-1][1] != math.inf:
            pts.add(ivs[-1][1])
        pts = tuple(sorted(p for p in pts if p > 0 or domain == "line"))
        if window is None:
            finite = [v for iv in ivs for v in iv if math.isfinite(v)]
            window = (min(finite, default=-10.0), max(finite, default=10.0))
            if window[0] == window[1]:
                window = (window[0] - 10.0, window[1] + 10.0)
        if domain == "halfline":
            lattices = tuple(l for l in (x.clipped(math.ulp(0.0), math.inf) for x in lattices) if l is not None)
        return cls(domain, pts, lattices, window)


def classify_case(dec: IntervalDecomposition, n_points: int = 65, pivot: float = 0.0) -> CaseAnchors:
    """Tag the interval structure with one of the seven cases.

    The tag depends only on which sides accumulate excluded points and on
    whether any isolated points exist; anchors follow the index conventions
    ``I_n = (x_n, x_{n+1})``.
    """
    if dec.domain not in ("line", "halfline"):
        raise ClassificationError(f"no one-dimensional case for domain {dec.domain!r}")
    left, right = dec.left_accumulates, dec.right_accumulates
    finite = [p for p in dec.complement_points if dec._in_domain(p)]
    # bounded lattices contribute finitely many isolated points
    for lat in dec.complement_lattices:
        if not (lat.unbounded_below or lat.unbounded_above):
            finite.extend(lat.points(lat.lower, lat.upper).tolist())
    if dec.domain == "halfline":
        finite = [p for p in finite if p > 0]
        if right:
            x = dec.right_points(0.0, n_points)
            _require(x, n_points, "right")
            return CaseAnchors("half-ii", x_right=tuple(x.tolist()))
        return CaseAnchors("half-i", a=max(finite, default=0.0))
    if not left and not right:
        if not finite:
            return CaseAnchors("line-i")
        return CaseAnchors("line-ii", a=min(finite), b=max(finite))
    if left and right:
        xl = dec.left_points(pivot, n_points)
        _require(xl, n_points, "left")
        xr = dec.right_points(float(xl[0]), n_points)
        _require(xr, n_points, "right")
        return CaseAnchors("line-iii", x_right=tuple(xr.tolist()), x_left=tuple(xl.tolist()))
    if left:
        b = _extreme_point(dec, finite, upper=True)
        xl = dec.left_points(b, n_points)
        _require(xl, n_points, "left")
        return CaseAnchors("line-iv", b=b, x_left=tuple(xl.tolist()))
    a = _extreme_point(dec, finite, upper=False)
    xr = dec.right_points(a, n_points, strict=False)
    _require(xr, n_points, "right")
    return CaseAnchors("line-v", a=a, x_right=tuple(xr.tolist()))


def _require(x: np.ndarray, n: int, side: str) -> None:
    if x.size < n:
        raise ClassificationError(f"only {x.size} excluded points found on the {side}; need {n}")


def _extreme_point(dec: IntervalDecomposition, finite: list[float], upper: bool) -> float:
    """Largest (or smallest) excluded point when that side is bounded."""
    cands = list(finite)
    for lat in dec.complement_lattices:
        if upper and not lat.unbounded_above:
            cands.append(float(lat.points(lat.upper - lat.spacing, lat.upper)[-1]))
        if not upper and not lat.unbounded_below:
            cands.append(float(lat.points(lat.lower, lat.lower + lat.spacing)[0]))
    return max(cands) if upper else min(cands)


# --------------------------------------------------------------------------
# Hamza-set detection


@dataclass(frozen=True)
class PointTest:
    """Outcome of the two-sided local integrability test at one point."""

    point: float
    left: str
    right: str

    @property
    def status(self) -> str:
        sides = (self.left, self.right)
        if NON_INTEGRABLE in sides:
            return "excluded"
        if all(s == INTEGRABLE for s in sides):
            return "absorbed"
        return "ambiguous"


def probe_point(f: Callable, c: float, h0: float, tol: float, lower: float = -math.inf) -> PointTest:
    """Two-sided local integrability of ``f`` at ``c`` (one-sided at a domain boundary)."""
    right = local_integrability(f, c, "right", h0, tol).status
    if c - h0 < lower:
        h_left = 0.5 * (c - lower)
        if not h_left > 0:
            return PointTest(c, INTEGRABLE, right)
        left = local_integrability(f, c, "left", h_left, tol).status
    else:
        left = local_integrability(f, c, "left", h0, tol).status
    return PointTest(c, left, right)


def decompose(f: Callable, singular: SingularSet, kinks: SingularSet, domain: str,
              window: tuple[float, float], tol: float) -> IntervalDecomposition:
    """Test every candidate point of ``singular`` and keep the non-integrable ones.

    Shared by the one-dimensional detector and the radial decomposition in R^d.
    """
    lower = 0.0 if domain == "halfline" else -math.inf
    wlo, whi = window
    points = sorted({float(p) for p in singular.points if p > lower})
    lattices = []
    for lat in singular.lattices:
        if domain == "halfline":
            lat = lat.clipped(math.nextafter(0.0, 1.0), math.inf)
            if lat is None:
                continue
        if lat.unbounded_below or lat.unbounded_above:
            lattices.append(lat)
        else:
            points.extend(p for p in lat.points(lat.lower, lat.upper).tolist() if p > lower)
    points = sorted(set(points))

    neighbours = np.unique(np.concatenate([
        np.asarray(points, dtype=float),
        singular.points_in(wlo - 2.0, whi + 2.0),
        kinks.points_in(wlo - 2.0, whi + 2.0),
        np.asarray([p for p in kinks.points], dtype=float),
    ]))

    def h0_for(c: float) -> float:
        others = neighbours[neighbours != c]
        gap = float(np.min(np.abs(others - c))) if others.size else math.inf
        return min(1.0, 0.5 * gap)

    excluded, ambiguous, notes = [], [], []
    for c in points:
        res = probe_point(f, c, h0_for(c), tol, lower)
        if res.status == "excluded":
            excluded.append(c)
        elif res.status == "ambiguous":
            excluded.append(c)
            ambiguous.append(c)

    kept_lattices = []
    for lat in lattices:
        probes = lat.points(wlo, whi)
        if probes.size == 0:
            probes = lat.nearest(np.asarray([0.5 * (wlo + whi)]))
        if probes.size > _LATTICE_PROBES:
            probes = probes[np.linspace(0, probes.size - 1, _LATTICE_PROBES).round().astype(int)]
        status = {probe_point(f, float(c), h0_for(float(c)), tol, lower).status for c in probes}
        if status == {"absorbed"}:
            continue
        kept_lattices.append(lat)
        if status != {"excluded"}:
            ambiguous.extend(float(c) for c in probes)
            notes.append(f"lattice offset={lat.offset} spacing={lat.spacing}: mixed or undetermined "
                         f"probe results {sorted(status)}; excluded conservatively")
        if lat.unbounded_below or lat.unbounded_above:
            notes.append(f"lattice offset={lat.offset} spacing={lat.spacing} tested at {probes.size} points "
                         "in the window; the verdict is extended to the whole pattern")
    return IntervalDecomposition(domain, tuple(excluded), tuple(kept_lattices), (float(wlo), float(whi)),
                                 tuple(sorted(set(ambiguous))), tuple(notes))


def detect_hamza_set(spec: ProblemSpec, window: tuple[float, float] | None = None,
                     tol: float | None = None) -> IntervalDecomposition:
    """Largest open set where ``1/(sigma*phi)`` is locally integrable, tagged with its case.

    Raises SpecificationError if a coefficient is not positive on the sample
    grid, ClassificationError if the structure matches no case.
    """
    if spec.is_multid:
        raise ValueError("detect_hamza_set works on one-dimensional specs; use recurnd for R^d")
    if window is None:
        window = spec.window()
    elif spec.domain == "halfline":
        window = (max(window[0], 0.0), window[1])
    tol = spec.options.tol if tol is None else tol
    if not (math.isfinite(window[0]) and math.isfinite(window[1]) and window[0] < window[1]):
        raise ValueError("window must be finite with lo < hi")
    if not tol > 0:
        raise ValueError("tol must be positive")
    check_positive(spec, window)
    dec = decompose(spec.inverse_weight, spec.weight_singularities(), spec.weight_kinks(),
                    spec.domain, window, tol)
    return dec.with_case(n_points=spec.options.n_max + 1, pivot=spec.options.pivot)


# --------------------------------------------------------------------------
# drift


@dataclass(frozen=True)
class DriftField:
    """Drift ``b = (sigma' + sigma*phi'/phi)/2`` and diffusion ``sigma`` of the associated diffusion.

    ``b_source``/``sigma_source`` are scalar Python renderings (functions
    named ``drift`` and ``diffusion``) that the simulator compiles.
    """

    b_expr: Callable
    sigma_expr: Callable
    requires_derivatives: bool
    method: str
    b_source: str
    sigma_source: str
    singular: SingularSet = EMPTY
    domain: str = "line"
    namespace: dict = field(default_factory=dict)

    def _guard(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hit = on_singular_set(self.singular, np.atleast_1d(x))
        if np.any(hit):
            raise SingularPointError(float(np.atleast_1d(x)[np.flatnonzero(hit)[0]]))
        return x

    def b(self, x) -> np.ndarray:
        x = self._guard(x)
        out = np.asarray(self.b_expr(x), dtype=float)
        bad = ~np.isfinite(np.atleast_1d(out))
        if np.any(bad):
            raise SingularPointError(float(np.atleast_1d(x)[np.flatnonzero(bad)[0]]))
        return out

    def sigma(self, x) -> np.ndarray:
        return np.asarray(self.sigma_expr(self._guard(x)), dtype=float)


def _drift_expression(spec: ProblemSpec) -> Expression:
    sigma, phi = spec.sigma, spec.phi
    dphi_over_phi = mul(phi.derivative(), PowOf(phi, -1.0))
    if isinstance(phi, Const):
        dphi_over_phi = Const(0.0)
    else:
        # log-derivative of a product of powers folds into a clean sum
        if isinstance(phi, Power):
            dphi_over_phi = mul(Const(phi.exponent), _sign_over(phi.center))
        elif isinstance(phi, Product) and all(isinstance(f, (Power, Const)) for f in phi.factors):
            dphi_over_phi = add(*[mul(Const(f.exponent), _sign_over(f.center))
                                  for f in phi.factors if isinstance(f, Power)])
    return mul(Const(0.5), add(sigma.derivative(), mul(sigma, dphi_over_phi)))


def _sign_over(c: float) -> Expression:
    """``sign(t-c)/|t-c| = 1/(t-c)``."""
    return mul(Sign(c), Power(c, -1.0))


def drift_from_coefficients(spec: ProblemSpec, method: str = "analytic", h: float = 1e-5) -> DriftField:
    """Drift and diffusion of the diffusion associated with a one-dimensional spec.

    ``method="analytic"`` differentiates the expression trees and falls back
    to central differences when an expression has no symbolic derivative;
    ``method="central"`` always uses central differences with step ``h``.
    """
    if spec.is_multid:
        raise ValueError("drift is only defined for one-dimensional specs")
    if method not in ("analytic", "central"):
        raise ValueError("method must be 'analytic' or 'central'")
    singular = spec.weight_singularities()
    env: dict = {}
    sig_src = render_scalar(spec.sigma, "diffusion", env)
    if method == "analytic":
        try:
            bexpr = _drift_expression(spec)
            b_src = render_scalar(bexpr, "drift", env)
            return DriftField(bexpr, spec.sigma, False, "analytic", b_src, sig_src,
                              singular.union(bexpr.singularities()), spec.domain, env)
        except NotImplementedError:
            pass
    phi_src = render_scalar(spec.phi, "_phi", env)
    h = float(h)
    b_src = (
        f"{sig_src}\n{phi_src}\n"
        "def drift(x):\n"
        f"    h = {h!r}\n"
        "    ds = (diffusion(x + h) - diffusion(x - h)) / (2.0 * h)\n"
        "    dp = (_phi(x + h) - _phi(x - h)) / (2.0 * h)\n"
        "    return 0.5 * (ds + diffusion(x) * dp / _phi(x))\n"
    )
    sigma, phi = spec.sigma, spec.phi

    def b_num(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            ds = (sigma(x + h) - sigma(x - h)) / (2 * h)
            dp = (phi(x + h) - phi(x - h)) / (2 * h)
            return 0.5 * (ds + sigma(x) * dp / phi(x))

    return DriftField(b_num, sigma, True, "central-difference", b_src, sig_src, singular, spec.domain, env)


__all__ = [
    "CASE_TAGS", "CaseAnchors", "ClassificationError", "DOMAINS", "DriftField", "IntervalDecomposition",
    "NonFiniteEvaluation", "Options", "PointTest", "ProblemSpec", "SingularPointError", "SpecificationError",
    "check_positive", "classify_case", "decompose", "detect_hamza_set", "drift_from_coefficients", "evaluate",
    "probe_point",
]
