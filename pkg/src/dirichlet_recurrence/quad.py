"""Quadrature engine.

``integrate`` is a globally adaptive Gauss-Kronrod (7/15) scheme; segments
touching an endpoint flagged as singular are handled by a tanh-sinh
(double-exponential) rule instead, whose node clustering absorbs algebraic
endpoint singularities.  ``local_integrability`` decides one-sided local
integrability from dyadic shells and ``divergence_diagnose`` decides whether
a sampled sequence grows without bound.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

Integrand = Callable[[np.ndarray], np.ndarray]

DIVERGES = "DivergesToInfinity"
BOUNDED = "Bounded"
UNDETERMINED = "Undetermined"

INTEGRABLE = "integrable"
NON_INTEGRABLE = "non-integrable"

_EPS = np.finfo(float).eps

# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (non-negative half).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

_X15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_W15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_W7 = np.zeros(15)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _W7[_i] = _w
    _W7[14 - _i] = _w
_W7[7] = _WG[3]


class QuadratureError(ArithmeticError):
    """Non-finite integrand value at an interior point."""

    def __init__(self, point: float, value: float):
        self.point = point
        self.value = value
        super().__init__(f"integrand is {value!r} at interior point {point!r}")


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    converged: bool
    function_evals: int


class _Counter:
    def __init__(self, f: Integrand):
        self.f = f
        self.evals = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.evals += x.size
        y = np.asarray(self.f(x), dtype=float)
        y = np.broadcast_to(y, x.shape)
        bad = ~np.isfinite(y)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise QuadratureError(float(x[i]), float(y[i]))
        return y


def _gk15(f: _Counter, a: float, b: float):
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    y = f(c + h * _X15)
    k = h * float(np.dot(_W15, y))
    g = h * float(np.dot(_W7, y))
    resabs = abs(h) * float(np.dot(_W15, np.abs(y)))
    mean = k / (b - a) if b != a else 0.0
    resasc = abs(h) * float(np.dot(_W15, np.abs(y - mean)))
    err = abs(k - g)
    # QUADPACK's rescaling of the Gauss/Kronrod difference
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    if resabs > np.finfo(float).tiny / (50 * _EPS):
        err = max(err, 50 * _EPS * resabs)
    return k, err, resabs


def _tanh_sinh(f: _Counter, a: float, b: float, tol: float, max_level: int = 10, t_max: float = 6.5):
    """Tanh-sinh rule on [a, b]; node distances to the ends are formed exactly
    so that the integrand is sampled right up to an endpoint singularity."""
    r = 0.5 * (b - a)

    def nodes(t):
        q = np.exp(-math.pi * np.sinh(t))          # exp(-2u), no overflow for large t
        delta = 2.0 * r * q / (1.0 + q)             # distance from b for t >= 0
        w = r * 0.5 * math.pi * np.cosh(t) * 4.0 * q / (1.0 + q) ** 2
        return delta, w

    def level_sum(t):
        """Weighted sum over nodes ``t > 0`` (both ends) and the innermost retained term."""
        delta, w = nodes(t)
        x = np.concatenate([a + delta, b - delta])
        ww = np.concatenate([w, w])
        dd = np.concatenate([delta, delta])
        du = np.concatenate([t, t])
        keep = (ww > 0) & (x > a) & (x < b)
        x, ww, dd, du = x[keep], ww[keep], dd[keep], du[keep]
        if x.size == 0:
            return 0.0, (math.inf, 0.0), False
        try:
            y = f(x)
            blown = False
        except QuadratureError as e:
            # blow-up right at an endpoint: drop those nodes, flag non-convergence
            if min(e.point - a, b - e.point) > 1e-12 * (b - a):
                raise
            y = np.asarray(f.f(x), dtype=float)
            ok = np.isfinite(y)
            x, ww, dd, du, y = x[ok], ww[ok], dd[ok], du[ok], y[ok]
            blown = True
        terms = ww * y
        inner = (math.inf, 0.0)
        if terms.size:
            # mass below the innermost node of a |s|^-beta singularity is about
            # term / (2 u'(t) (1 - beta)); the factor 4 covers beta <= 7/8
            j = int(np.argmin(dd))
            inner = (float(dd[j]), 4.0 * abs(float(terms[j])) / (math.pi * math.cosh(du[j])))
        return float(np.sum(terms)), inner, blown

    h = 0.5
    t = np.arange(1, int(t_max / h) + 1) * h
    centre = f(np.array([a + r]))[0] * r * 0.5 * math.pi
    s, inner, blown = level_sum(t)
    total = centre + s
    estimate = h * total
    err = math.inf
    for _ in range(max_level):
        h *= 0.5
        t = np.arange(1, int(t_max / h) + 1, 2) * h
        s, inner2, b2 = level_sum(t)
        inner = min(inner, inner2)
        blown = blown or b2
        total += s
        new = h * total
        err = abs(new - estimate)
        estimate = new
        if err <= tol * abs(estimate) or err == 0.0:
            break
    # nodes that round onto an endpoint are lost; bound their mass by the innermost term
    err += inner[1]
    return estimate, err, bool(not blown and err <= tol * max(1.0, abs(estimate)))


def integrate(f: Integrand, a: float, b: float, tol: float = 1e-10,
              singular: tuple[bool, bool] = (False, False), points: Sequence[float] = (),
              max_subdivisions: int = 4000) -> IntegralResult:
    """Integrate ``f`` over ``[a, b]`` to relative tolerance ``tol``.

    Args:
        f: vectorised integrand.
        singular: flags for suspected singular endpoints ``(a, b)``.
        points: known interior breakpoints (kinks, jumps).
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integration limits must be finite")
    if a == b:
        return IntegralResult(0.0, 0.0, True, 0)
    if a > b:
        r = integrate(f, b, a, tol, (singular[1], singular[0]), points, max_subdivisions)
        return IntegralResult(-r.value, r.error_estimate, r.converged, r.function_evals)

    fc = _Counter(f)
    cuts = sorted({float(p) for p in points if a < p < b})
    edges = [a] + cuts + [b]
    pieces: dict[float, tuple[float, float, float]] = {}
    heap: list = []
    converged = True
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        flag_lo = singular[0] and i == 0
        flag_hi = singular[1] and i == len(edges) - 2
        if flag_lo or flag_hi:
            v, e, ok = _tanh_sinh(fc, lo, hi, tol)
            converged &= ok
            pieces[lo] = (hi, v, e)
        else:
            v, e, ra = _gk15(fc, lo, hi)
            pieces[lo] = (hi, v, e)
            heapq.heappush(heap, (-e, lo))

    n_sub = 0
    total = err = 0.0
    while True:
        # running sums drift; refresh them exactly every so often
        if n_sub % 64 == 0:
            total = math.fsum(p[1] for p in pieces.values())
            err = math.fsum(p[2] for p in pieces.values())
        if err <= tol * abs(total) or not heap or n_sub >= max_subdivisions:
            if n_sub % 64 == 0:
                break
            total = math.fsum(p[1] for p in pieces.values())
            err = math.fsum(p[2] for p in pieces.values())
            if err <= tol * abs(total) or not heap or n_sub >= max_subdivisions:
                break
        neg_e, lo = heapq.heappop(heap)
        hi = pieces[lo][0]
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            continue  # cannot split further; leave its error in place
        try:
            v1, e1, _ = _gk15(fc, lo, mid)
            v2, e2, _ = _gk15(fc, mid, hi)
        except QuadratureError as exc:
            if exc.point not in (a, b):
                raise
            converged = False  # an unflagged endpoint singularity was sampled
            continue
        total += v1 + v2 - pieces[lo][1]
        err += e1 + e2 + neg_e
        pieces[lo] = (mid, v1, e1)
        pieces[mid] = (hi, v2, e2)
        heapq.heappush(heap, (-e1, lo))
        heapq.heappush(heap, (-e2, mid))
        n_sub += 1

    ordered = [pieces[k] for k in sorted(pieces)]
    total = math.fsum(p[1] for p in ordered)
    err = math.fsum(p[2] for p in ordered)
    converged = converged and err <= tol * max(1.0, abs(total))
    return IntegralResult(total, err, converged, fc.evals)


# --------------------------------------------------------------------------
# local integrability


@dataclass(frozen=True)
class LocalIntegrability:
    """One-sided local integrability verdict at a point.

    ``shell_ratios`` are ``log2`` of successive dyadic shell integrals near the
    point: about ``beta - 1`` for a ``|s - c|^-beta`` singularity.
    """

    status: str
    value: float | None
    shell_ratios: tuple[float, ...]
    partial_integrals: tuple[float, ...]

    @property
    def integrable(self) -> bool:
        return self.status == INTEGRABLE


def local_integrability(f: Integrand, c: float, side: str = "right", h0: float = 1.0, tol: float = 1e-8,
                        converge_below: float = -0.05, diverge_above: float = -0.005,
                        max_halvings: int = 60) -> LocalIntegrability:
    """Decide whether ``f`` is integrable on ``(c, c+h0)`` (or ``(c-h0, c)``).

    Shell ``k`` covers ``[c + h0 2^-k, c + h0 2^-(k-1)]``.  Partial integrals
    over ``(c + h_k, c + h0)`` converge iff the shell integrals eventually
    decay geometrically; the tail ratios decide, with an undetermined band
    between ``converge_below`` and ``diverge_above``.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    if not h0 > 0:
        raise ValueError("h0 must be positive")
    sgn = 1.0 if side == "right" else -1.0
    # stop refining well above the spacing of floats near c: rounding of
    # t - c would otherwise make the integrand noisy at the shell scale
    h_min = max(2.0 ** 22 * math.ulp(abs(c)) if c != 0 else 0.0, 1e-280)
    n_shells = min(max_halvings, int(math.floor(math.log2(h0 / h_min))))
    if n_shells < 12:
        return LocalIntegrability("undetermined", None, (), ())

    shells = []
    try:
        for k in range(1, n_shells + 1):
            inner, outer = c + sgn * h0 * 2.0 ** -k, c + sgn * h0 * 2.0 ** -(k - 1)
            r = integrate(f, min(inner, outer), max(inner, outer), tol, max_subdivisions=200)
            shells.append(r.value)
    except QuadratureError:
        return LocalIntegrability("undetermined", None, (), tuple(np.cumsum(shells)))
    shells = np.asarray(shells)
    partial = tuple(np.cumsum(shells).tolist())
    tail = shells[len(shells) // 2:]
    if np.all(tail == 0.0):
        return LocalIntegrability(INTEGRABLE, partial[-1], (), partial)
    if np.any(tail <= 0.0):
        return LocalIntegrability("undetermined", None, (), partial)
    ratios = np.diff(np.log2(tail))
    if np.min(ratios) >= diverge_above:
        return LocalIntegrability(NON_INTEGRABLE, None, tuple(ratios.tolist()), partial)
    if np.max(ratios) <= converge_below:
        rho = 2.0 ** ratios[-1]
        value = partial[-1] + tail[-1] * rho / (1.0 - rho)
        return LocalIntegrability(INTEGRABLE, value, tuple(ratios.tolist()), partial)
    return LocalIntegrability("undetermined", None, tuple(ratios.tolist()), partial)


# --------------------------------------------------------------------------
# divergence diagnosis


@dataclass(frozen=True)
class DivergenceVerdict:
    """Diagnosis of a sampled sequence ``a(t)``.

    The fitted family is ``intercept + coefficient * (t**p - 1)/p`` (``log t``
    at ``p = 0``); ``p > 0`` is power growth, ``p ~ 0`` logarithmic growth and
    ``p < 0`` a constant tail with limit ``intercept - coefficient/p``.
    """

    kind: str
    fitted_model: str
    exponent: float | None
    coefficient: float | None
    intercept: float | None
    limit: float | None
    residual: float | None
    reason: str
    divergence_floor: float
    fit_tolerance: float
    t: tuple[float, ...] = field(default=())
    values: tuple[float, ...] = field(default=())

    @property
    def diverges(self) -> bool:
        return self.kind == DIVERGES

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DivergenceVerdict":
        d = dict(d)
        d["t"] = tuple(d.get("t", ()))
        d["values"] = tuple(d.get("values", ()))
        return cls(**d)


def _boxcox(t: np.ndarray, p: float) -> np.ndarray:
    lt = np.log(t)
    return lt if p == 0.0 else np.expm1(p * lt) / p


def _profile(t, a, p):
    X = np.column_stack([np.ones_like(t), _boxcox(t, p)])
    coef, *_ = np.linalg.lstsq(X, a, rcond=None)
    r = a - X @ coef
    return float(r @ r), coef


def fit_growth(t: np.ndarray, a: np.ndarray, p_range: tuple[float, float] = (-4.0, 4.0)):
    """Least-squares fit of the growth family; returns ``(p, intercept, coefficient, rms)``."""
    grid = np.linspace(p_range[0], p_range[1], 161)
    ssr = [_profile(t, a, p)[0] for p in grid]
    i = int(np.argmin(ssr))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda p: _profile(t, a, p)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    p = float(res.x) if res.fun <= ssr[i] else float(grid[i])
    s, coef = _profile(t, a, p)
    return p, float(coef[0]), float(coef[1]), math.sqrt(s / len(a))


def divergence_diagnose(samples: Sequence[tuple[float, float]], errors: Sequence[float] | None = None,
                        divergence_floor: float = 1e3, fit_tol: float = 1e-2,
                        exponent_tol: float = 1e-3) -> DivergenceVerdict:
    """Diagnose ``a_n -> infinity`` from samples ``(t_n, a_n)``.

    ``t_n`` should be the natural growth variable of the sequence (the index
    ``n``, or the moving integration limit).  The floor is a signal-to-noise
    floor: the growth ``a_last - a_first`` must exceed ``divergence_floor``
    times the noise level (quadrature error estimates plus rounding), which
    keeps the verdict invariant under rescaling of the sequence.
    """
    pts = [(float(t), float(v)) for t, v in samples]
    if len(pts) < 8:
        raise ValueError("divergence_diagnose needs at least 8 samples")
    t = np.array([p[0] for p in pts])
    a = np.array([p[1] for p in pts])
    if not np.all(np.isfinite(a)) or not np.all(t > 0):
        raise ValueError("samples must be finite with positive abscissae")
    order = np.argsort(t)
    t, a = t[order], a[order]
    ev = dict(divergence_floor=divergence_floor, fit_tolerance=fit_tol, t=tuple(t.tolist()), values=tuple(a.tolist()))

    noise = 64 * _EPS * float(np.max(np.abs(a)))
    if errors is not None:
        noise += float(np.max(np.abs(np.asarray(errors, dtype=float))))
    span = float(np.max(a) - np.min(a))
    if span <= divergence_floor * noise:
        return DivergenceVerdict(BOUNDED, "constant-tail", None, None, float(a[-1]), float(a[-1]), 0.0,
                                 "sequence is flat to within the noise floor", **ev)

    d = np.diff(a)
    jitter = 2 * noise + 1e-9 * span
    ups, downs = int(np.sum(d > jitter)), int(np.sum(d < -jitter))
    if ups and downs:
        return DivergenceVerdict(UNDETERMINED, "none", None, None, None, None, None,
                                 f"non-monotone samples ({ups} increases, {downs} decreases)", **ev)
    if downs:
        return DivergenceVerdict(BOUNDED, "constant-tail", None, None, None, None, None,
                                 "non-increasing sequence is bounded above by its first sample", **ev)

    p, alpha, beta, rms = fit_growth(t, a)
    resid = rms / span
    if resid > fit_tol:
        return DivergenceVerdict(UNDETERMINED, "none", p, beta, alpha, None, resid,
                                 f"no growth model fits (relative residual {resid:.3g} > {fit_tol:g})", **ev)
    if beta <= 0:
        return DivergenceVerdict(UNDETERMINED, "none", p, beta, alpha, None, resid,
                                 "fitted growth coefficient is not positive", **ev)
    if p >= -exponent_tol:
        model = "logarithmic" if abs(p) <= exponent_tol else "power"
        if a[-1] - a[0] < divergence_floor * noise:
            return DivergenceVerdict(UNDETERMINED, model, p, beta, alpha, None, resid,
                                     "growth does not clear the divergence floor", **ev)
        return DivergenceVerdict(DIVERGES, model, p, beta, alpha, None, resid,
                                 f"{model} growth (exponent {p:.4g})", **ev)
    limit = alpha - beta / p
    return DivergenceVerdict(BOUNDED, "constant-tail", p, beta, alpha, limit, resid,
                             f"converges (exponent {p:.4g}, limit {limit:.6g})", **ev)
