"""Coefficient expressions.

A closed catalog of analytic primitives (powers of distances, polynomials,
exponentials, logarithms, periodic lattices of power singularities,
tabulated data) combined through sums, products, compositions and
piecewise glue.  Every node knows

* how to evaluate itself on a vector of points,
* which points it may vanish or blow up at (its declared singularities),
* its symbolic derivative (one-dimensional expressions only), and
* a scalar Python source rendering used to compile drift functions.

In one dimension the scalar variable ``t`` is the coordinate ``x``.  In
``R^d`` the scalar variable is the radius ``|x|``; the ``coord`` and
``unit_coord`` leaves give access to ``x_i`` and ``x_i/|x|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class SpecificationError(ValueError):
    """The problem description is invalid (bad schema, non-positive coefficient, ...)."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NonFiniteEvaluation(ArithmeticError):
    """An expression produced a non-finite value at an undeclared point."""

    def __init__(self, x, value):
        self.x = x
        self.value = value
        super().__init__(f"non-finite value {value!r} at undeclared point x={x!r}")


# --------------------------------------------------------------------------
# singular sets


@dataclass(frozen=True)
class Lattice:
    """Arithmetic progression ``offset + k*spacing`` restricted to ``[lower, upper]``."""

    offset: float
    spacing: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.spacing > 0:
            raise SpecificationError("lattice spacing must be positive")

    def _index_bounds(self):
        kmin = -math.inf if math.isinf(self.lower) else math.ceil((self.lower - self.offset) / self.spacing - 1e-12)
        kmax = math.inf if math.isinf(self.upper) else math.floor((self.upper - self.offset) / self.spacing + 1e-12)
        return kmin, kmax

    def points(self, lo: float, hi: float) -> np.ndarray:
        kmin, kmax = self._index_bounds()
        k0 = max(kmin, math.ceil((lo - self.offset) / self.spacing - 1e-12))
        k1 = min(kmax, math.floor((hi - self.offset) / self.spacing + 1e-12))
        if k1 < k0:
            return np.empty(0)
        return self.offset + self.spacing * np.arange(k0, k1 + 1, dtype=float)

    def nearest(self, t: np.ndarray) -> np.ndarray:
        kmin, kmax = self._index_bounds()
        k = np.floor((t - self.offset) / self.spacing + 0.5)
        k = np.clip(k, kmin, kmax)
        return self.offset + self.spacing * k

    def clipped(self, lo: float, hi: float) -> "Lattice | None":
        lower, upper = max(self.lower, lo), min(self.upper, hi)
        if lower > upper:
            return None
        return Lattice(self.offset, self.spacing, lower, upper)

    @property
    def unbounded_below(self) -> bool:
        return math.isinf(self.lower)

    @property
    def unbounded_above(self) -> bool:
        return math.isinf(self.upper)


@dataclass(frozen=True)
class SingularSet:
    """Finite points plus (possibly infinite) lattices."""

    points: tuple[float, ...] = ()
    lattices: tuple[Lattice, ...] = ()

    def union(self, other: "SingularSet") -> "SingularSet":
        pts = tuple(sorted(set(self.points) | set(other.points)))
        lats = tuple(dict.fromkeys(self.lattices + other.lattices))
        return SingularSet(pts, lats)

    def restricted(self, lo: float, hi: float) -> "SingularSet":
        pts = tuple(p for p in self.points if lo <= p <= hi)
        lats = tuple(l for l in (lat.clipped(lo, hi) for lat in self.lattices) if l is not None)
        return SingularSet(pts, lats)

    def points_in(self, lo: float, hi: float) -> np.ndarray:
        pts = [p for p in self.points if lo <= p <= hi]
        for lat in self.lattices:
            pts.extend(lat.points(lo, hi).tolist())
        return np.unique(np.asarray(pts, dtype=float))

    def __bool__(self):
        return bool(self.points or self.lattices)


EMPTY = SingularSet()


def _union_all(sets) -> SingularSet:
    out = EMPTY
    for s in sets:
        out = out.union(s)
    return out


def _num(v: float) -> str:
    """Render a float literal for generated source."""
    if math.isinf(v):
        return "math.inf" if v > 0 else "(-math.inf)"
    return repr(float(v))


# --------------------------------------------------------------------------
# expression nodes


class Expression:
    """Base class of the coefficient catalog."""

    kind: str = "?"

    def __call__(self, x) -> np.ndarray:
        """Raw vectorised evaluation (no singularity bookkeeping)."""
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            t = np.atleast_1d(x)
            X = None
        else:
            t = np.linalg.norm(x, axis=-1)
            X = x
        with np.errstate(all="ignore"):
            out = np.broadcast_to(self._eval(t, X), t.shape).astype(float)
        return out[0] if x.ndim == 0 else out

    def _eval(self, t, X):
        raise NotImplementedError

    def singularities(self) -> SingularSet:
        return EMPTY

    def kinks(self) -> SingularSet:
        """Points where the expression may fail to be smooth (quadrature breakpoints)."""
        return self.singularities()

    def derivative(self) -> "Expression":
        raise NotImplementedError(f"no derivative for {self.kind}")

    def source(self, env: dict) -> str:
        raise NotImplementedError(f"no source rendering for {self.kind}")

    @property
    def uses_coords(self) -> bool:
        return any(c.uses_coords for c in self.children())

    @property
    def uses_variable(self) -> bool:
        return any(c.uses_variable for c in self.children())

    def children(self) -> tuple["Expression", ...]:
        return ()

    def to_record(self) -> dict:
        raise NotImplementedError

    # arithmetic sugar
    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__


def _lift(v) -> Expression:
    return v if isinstance(v, Expression) else Const(float(v))


@dataclass(frozen=True)
class Const(Expression):
    value: float
    kind = "const"

    def _eval(self, t, X):
        return np.full(t.shape, self.value)

    def derivative(self):
        return Const(0.0)

    def source(self, env):
        return _num(self.value)

    @property
    def uses_variable(self):
        return False

    def to_record(self):
        return {"kind": "const", "value": self.value}


@dataclass(frozen=True)
class Var(Expression):
    kind = "var"

    def _eval(self, t, X):
        return t

    def derivative(self):
        return Const(1.0)

    def source(self, env):
        return "x"

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        return {"kind": "var"}


@dataclass(frozen=True)
class Power(Expression):
    """``|t - center| ** exponent``."""

    center: float
    exponent: float
    kind = "power"

    def _eval(self, t, X):
        return np.abs(t - self.center) ** self.exponent

    def singularities(self):
        return EMPTY if self.exponent == 0 else SingularSet((float(self.center),))

    def derivative(self):
        if self.exponent == 0:
            return Const(0.0)
        return mul(Const(self.exponent), Sign(self.center), Power(self.center, self.exponent - 1.0))

    def source(self, env):
        d = f"abs(x - {_num(self.center)})"
        a = self.exponent
        if a == 0:
            return "1.0"
        if a == 1:
            return d
        if a == -1:
            return f"(1.0 / {d})"
        if a == 2:
            return f"({d} * {d})"
        if a == -2:
            return f"(1.0 / ({d} * {d}))"
        if a == 0.5:
            return f"math.sqrt({d})"
        return f"({d} ** {_num(a)})"

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        return {"kind": "power", "center": self.center, "exponent": self.exponent}


@dataclass(frozen=True)
class Sign(Expression):
    """``sign(t - center)``; produced by differentiating powers."""

    center: float
    kind = "sign"

    def _eval(self, t, X):
        return np.sign(t - self.center)

    def kinks(self):
        return SingularSet((float(self.center),))

    def derivative(self):
        return Const(0.0)

    def source(self, env):
        c = _num(self.center)
        return f"(1.0 if x > {c} else (-1.0 if x < {c} else 0.0))"

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        return {"kind": "sign", "center": self.center}


@dataclass(frozen=True)
class Poly(Expression):
    """``sum_k coeffs[k] * t**k``."""

    coeffs: tuple[float, ...]
    kind = "poly"

    def _eval(self, t, X):
        out = np.zeros_like(t)
        for c in reversed(self.coeffs):
            out = out * t + c
        return out

    def derivative(self):
        if len(self.coeffs) <= 1:
            return Const(0.0)
        return Poly(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def source(self, env):
        if not self.coeffs:
            return "0.0"
        s = _num(self.coeffs[-1])
        for c in reversed(self.coeffs[:-1]):
            s = f"({s} * x + {_num(c)})"
        return s

    @property
    def uses_variable(self):
        return len(self.coeffs) > 1

    def to_record(self):
        return {"kind": "poly", "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class Exp(Expression):
    arg: Expression
    kind = "exp"

    def _eval(self, t, X):
        return np.exp(self.arg._eval(t, X))

    def children(self):
        return (self.arg,)

    def singularities(self):
        return self.arg.singularities()

    def kinks(self):
        return self.arg.kinks()

    def derivative(self):
        return mul(self, self.arg.derivative())

    def source(self, env):
        return f"math.exp({self.arg.source(env)})"

    def to_record(self):
        return {"kind": "exp", "arg": self.arg.to_record()}


@dataclass(frozen=True)
class Log(Expression):
    arg: Expression
    kind = "log"

    def _eval(self, t, X):
        return np.log(self.arg._eval(t, X))

    def children(self):
        return (self.arg,)

    def singularities(self):
        return self.arg.singularities()

    def kinks(self):
        return self.arg.kinks()

    def derivative(self):
        return mul(self.arg.derivative(), PowOf(self.arg, -1.0))

    def source(self, env):
        return f"math.log({self.arg.source(env)})"

    def to_record(self):
        return {"kind": "log", "arg": self.arg.to_record()}


@dataclass(frozen=True)
class PowOf(Expression):
    """``arg ** exponent`` for a positive inner expression."""

    arg: Expression
    exponent: float
    kind = "pow"

    def _eval(self, t, X):
        return self.arg._eval(t, X) ** self.exponent

    def children(self):
        return (self.arg,)

    def singularities(self):
        return self.arg.singularities()

    def kinks(self):
        return self.arg.kinks()

    def derivative(self):
        return mul(Const(self.exponent), PowOf(self.arg, self.exponent - 1.0), self.arg.derivative())

    def source(self, env):
        inner = self.arg.source(env)
        if self.exponent == -1:
            return f"(1.0 / {inner})"
        return f"({inner} ** {_num(self.exponent)})"

    def to_record(self):
        return {"kind": "pow", "arg": self.arg.to_record(), "exponent": self.exponent}


@dataclass(frozen=True)
class Sum(Expression):
    terms: tuple[Expression, ...]
    kind = "sum"

    def _eval(self, t, X):
        out = np.zeros_like(t)
        for term in self.terms:
            out = out + term._eval(t, X)
        return out

    def children(self):
        return self.terms

    def singularities(self):
        return _union_all(c.singularities() for c in self.terms)

    def kinks(self):
        return _union_all(c.kinks() for c in self.terms)

    def derivative(self):
        return add(*(c.derivative() for c in self.terms))

    def source(self, env):
        return "(" + " + ".join(c.source(env) for c in self.terms) + ")"

    def to_record(self):
        return {"kind": "sum", "terms": [c.to_record() for c in self.terms]}


@dataclass(frozen=True)
class Product(Expression):
    factors: tuple[Expression, ...]
    kind = "product"

    def _eval(self, t, X):
        out = np.ones_like(t)
        for f in self.factors:
            out = out * f._eval(t, X)
        return out

    def children(self):
        return self.factors

    def singularities(self):
        return _union_all(c.singularities() for c in self.factors)

    def kinks(self):
        return _union_all(c.kinks() for c in self.factors)

    def derivative(self):
        terms = []
        for i, f in enumerate(self.factors):
            rest = self.factors[:i] + self.factors[i + 1:]
            terms.append(mul(f.derivative(), *rest))
        return add(*terms)

    def source(self, env):
        return "(" + " * ".join(c.source(env) for c in self.factors) + ")"

    def to_record(self):
        return {"kind": "product", "factors": [c.to_record() for c in self.factors]}


@dataclass(frozen=True)
class Piecewise(Expression):
    """``pieces[k]`` on ``[breakpoints[k-1], breakpoints[k])``."""

    breakpoints: tuple[float, ...]
    pieces: tuple[Expression, ...]
    kind = "piecewise"

    def __post_init__(self):
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise SpecificationError("piecewise needs exactly one more piece than breakpoints")
        if any(b1 >= b2 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise SpecificationError("piecewise breakpoints must be strictly increasing")

    def _bounds(self):
        edges = (-math.inf,) + tuple(self.breakpoints) + (math.inf,)
        return list(zip(edges[:-1], edges[1:]))

    def _eval(self, t, X):
        idx = np.searchsorted(np.asarray(self.breakpoints), t, side="right")
        out = np.empty_like(t)
        for k, piece in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = np.broadcast_to(piece._eval(t[m], None if X is None else X[m]), t[m].shape)
        return out

    def children(self):
        return self.pieces

    def singularities(self):
        return _union_all(p.singularities().restricted(lo, hi) for p, (lo, hi) in zip(self.pieces, self._bounds()))

    def kinks(self):
        inner = _union_all(p.kinks().restricted(lo, hi) for p, (lo, hi) in zip(self.pieces, self._bounds()))
        return inner.union(SingularSet(tuple(float(b) for b in self.breakpoints)))

    def derivative(self):
        return Piecewise(self.breakpoints, tuple(p.derivative() for p in self.pieces))

    def source(self, env):
        s = self.pieces[-1].source(env)
        for b, p in zip(reversed(self.breakpoints), reversed(self.pieces[:-1])):
            s = f"({p.source(env)} if x < {_num(b)} else {s})"
        return s

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        return {"kind": "piecewise", "breakpoints": list(self.breakpoints),
                "pieces": [p.to_record() for p in self.pieces]}


@dataclass(frozen=True)
class LatticePower(Expression):
    """``|t - p(t)| ** exponent`` where ``p(t)`` is the nearest lattice point.

    With ``signed`` the value is multiplied by ``sign(t - p(t))`` (this is
    what differentiation produces).
    """

    lattice: Lattice
    exponent: float
    signed: bool = False
    kind = "lattice_power"

    def _eval(self, t, X):
        d = t - self.lattice.nearest(t)
        out = np.abs(d) ** self.exponent
        return np.sign(d) * out if self.signed else out

    def singularities(self):
        return SingularSet((), (self.lattice,)) if self.exponent != 0 or self.signed else EMPTY

    def kinks(self):
        lat = self.lattice
        return SingularSet((), (lat, Lattice(lat.offset + lat.spacing / 2, lat.spacing, lat.lower, lat.upper)))

    def derivative(self):
        if self.exponent == 0:
            return Const(0.0)
        return mul(Const(self.exponent), LatticePower(self.lattice, self.exponent - 1.0, not self.signed))

    def source(self, env):
        lat = self.lattice
        kmin, kmax = lat._index_bounds()
        k = f"math.floor((x - {_num(lat.offset)}) / {_num(lat.spacing)} + 0.5)"
        if not math.isinf(kmin):
            k = f"max({k}, {_num(kmin)})"
        if not math.isinf(kmax):
            k = f"min({k}, {_num(kmax)})"
        d = f"(x - ({_num(lat.offset)} + {_num(lat.spacing)} * {k}))"
        body = f"(abs({d}) ** {_num(self.exponent)})"
        if self.signed:
            body = f"(math.copysign(1.0, {d}) * {body})"
        return body

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        rec = {"kind": "lattice_power", "offset": self.lattice.offset, "spacing": self.lattice.spacing,
               "exponent": self.exponent}
        if not math.isinf(self.lattice.lower):
            rec["lower"] = self.lattice.lower
        if not math.isinf(self.lattice.upper):
            rec["upper"] = self.lattice.upper
        if self.signed:
            rec["signed"] = True
        return rec


@dataclass(frozen=True, eq=False)
class Tabulated(Expression):
    """Piecewise-linear interpolation of tabulated values (constant beyond the ends)."""

    nodes: tuple[float, ...]
    values: tuple[float, ...]
    kind = "tabulated"

    def __post_init__(self):
        if len(self.nodes) != len(self.values) or len(self.nodes) < 2:
            raise SpecificationError("tabulated needs matching nodes/values with at least two entries")
        if any(a >= b for a, b in zip(self.nodes, self.nodes[1:])):
            raise SpecificationError("tabulated nodes must be strictly increasing")

    def __eq__(self, other):
        return isinstance(other, Tabulated) and self.nodes == other.nodes and self.values == other.values

    def __hash__(self):
        return hash((self.nodes, self.values))

    def _eval(self, t, X):
        return np.interp(t, self.nodes, self.values)

    def kinks(self):
        return SingularSet(tuple(float(n) for n in self.nodes))

    def derivative(self):
        slopes = np.diff(self.values) / np.diff(self.nodes)
        # piecewise-constant slope, encoded with breakpoints at the nodes
        pieces = (Const(0.0),) + tuple(Const(float(s)) for s in slopes) + (Const(0.0),)
        return Piecewise(tuple(self.nodes), pieces)

    def source(self, env):
        name = f"_tab{len(env) // 2}"
        env[name + "_x"] = np.asarray(self.nodes, dtype=float)
        env[name + "_y"] = np.asarray(self.values, dtype=float)
        return f"np.interp(x, {name}_x, {name}_y)"

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        return {"kind": "tabulated", "nodes": list(self.nodes), "values": list(self.values)}


@dataclass(frozen=True)
class Coord(Expression):
    """Cartesian coordinate ``x_index`` (multidimensional only)."""

    index: int
    kind = "coord"

    def _eval(self, t, X):
        if X is None:
            raise SpecificationError("coord leaf used in a one-dimensional context")
        return X[..., self.index]

    @property
    def uses_coords(self):
        return True

    @property
    def uses_variable(self):
        return True

    def to_record(self):
        return {"kind": "coord", "index": self.index}


@dataclass(frozen=True)
class UnitCoord(Expression):
    """Direction cosine ``x_index / |x|`` (multidimensional only)."""

    index: int
    kind = "unit_coord"

    def _eval(self, t, X):
        if X is None:
            raise SpecificationError("unit_coord leaf used in a one-dimensional context")
        return X[..., self.index] / t

    @property
    def uses_coords(self):
        return True

    @property
    def uses_variable(self):
        return False

    def to_record(self):
        return {"kind": "unit_coord", "index": self.index}


@dataclass(frozen=True)
class Declared(Expression):
    """Wraps an expression with extra user-declared singular points."""

    arg: Expression
    extra: SingularSet = field(default=EMPTY)
    kind = "declare"

    def _eval(self, t, X):
        return self.arg._eval(t, X)

    def children(self):
        return (self.arg,)

    def singularities(self):
        return self.arg.singularities().union(self.extra)

    def kinks(self):
        return self.arg.kinks().union(self.extra)

    def derivative(self):
        return Declared(self.arg.derivative(), self.extra)

    def source(self, env):
        return self.arg.source(env)

    def to_record(self):
        rec = {"kind": "declare", "arg": self.arg.to_record(), "points": list(self.extra.points)}
        if self.extra.lattices:
            rec["lattices"] = [_lattice_record(l) for l in self.extra.lattices]
        return rec


# --------------------------------------------------------------------------
# smart constructors


def mul(*factors: Expression) -> Expression:
    """Product with constant folding and merging of powers sharing a center."""
    flat: list[Expression] = []
    for f in factors:
        flat.extend(f.factors if isinstance(f, Product) else (f,))
    const = 1.0
    powers: dict[float, float] = {}
    rest: list[Expression] = []
    for f in flat:
        if isinstance(f, Const):
            const *= f.value
        elif isinstance(f, Power):
            powers[f.center] = powers.get(f.center, 0.0) + f.exponent
        else:
            rest.append(f)
    if const == 0.0:
        return Const(0.0)
    out = [Power(c, a) for c, a in powers.items() if a != 0] + rest
    if const != 1.0 or not out:
        out.insert(0, Const(const))
    return out[0] if len(out) == 1 else Product(tuple(out))


def add(*terms: Expression) -> Expression:
    flat: list[Expression] = []
    for t in terms:
        flat.extend(t.terms if isinstance(t, Sum) else (t,))
    const = sum(t.value for t in flat if isinstance(t, Const))
    rest = [t for t in flat if not isinstance(t, Const)]
    if const != 0.0 or not rest:
        rest.insert(0, Const(const))
    return rest[0] if len(rest) == 1 else Sum(tuple(rest))


# --------------------------------------------------------------------------
# records (nested dicts with explicit kind tags)


def _lattice_record(l: Lattice) -> dict:
    rec = {"offset": l.offset, "spacing": l.spacing}
    if not math.isinf(l.lower):
        rec["lower"] = l.lower
    if not math.isinf(l.upper):
        rec["upper"] = l.upper
    return rec


def _req(rec: dict, key: str, path: str):
    if key not in rec:
        raise SpecificationError(f"missing field '{key}'", path)
    return rec[key]


def _real(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SpecificationError(f"expected a number, got {v!r}", path)
    return float(v)


def _lattice_from(rec: dict, path: str) -> Lattice:
    return Lattice(_real(_req(rec, "offset", path), path + ".offset"),
                   _real(_req(rec, "spacing", path), path + ".spacing"),
                   _real(rec.get("lower", -math.inf), path + ".lower"),
                   _real(rec.get("upper", math.inf), path + ".upper"))


def from_record(rec: Any, path: str = "expr") -> Expression:
    """Build an expression from its nested-record form; errors carry the field path."""
    if isinstance(rec, (int, float)) and not isinstance(rec, bool):
        return Const(float(rec))
    if not isinstance(rec, dict):
        raise SpecificationError(f"expected an expression record, got {type(rec).__name__}", path)
    kind = _req(rec, "kind", path)
    sub = lambda key: from_record(_req(rec, key, path), f"{path}.{key}")  # noqa: E731
    many = lambda key: tuple(from_record(r, f"{path}.{key}[{i}]")  # noqa: E731
                             for i, r in enumerate(_req(rec, key, path)))
    if kind == "const":
        return Const(_real(_req(rec, "value", path), path + ".value"))
    if kind == "var":
        return Var()
    if kind == "power":
        return Power(_real(rec.get("center", 0.0), path + ".center"),
                     _real(_req(rec, "exponent", path), path + ".exponent"))
    if kind == "sign":
        return Sign(_real(rec.get("center", 0.0), path + ".center"))
    if kind == "poly":
        return Poly(tuple(_real(c, f"{path}.coeffs[{i}]") for i, c in enumerate(_req(rec, "coeffs", path))))
    if kind == "exp":
        return Exp(sub("arg"))
    if kind == "log":
        return Log(sub("arg"))
    if kind == "pow":
        return PowOf(sub("arg"), _real(_req(rec, "exponent", path), path + ".exponent"))
    if kind == "sum":
        return Sum(many("terms"))
    if kind == "product":
        return Product(many("factors"))
    if kind == "piecewise":
        bps = tuple(_real(b, f"{path}.breakpoints[{i}]") for i, b in enumerate(_req(rec, "breakpoints", path)))
        try:
            return Piecewise(bps, many("pieces"))
        except SpecificationError as e:
            raise SpecificationError(str(e), path) from None
    if kind == "lattice_power":
        lat = _lattice_from(rec, path)
        return LatticePower(lat, _real(_req(rec, "exponent", path), path + ".exponent"), bool(rec.get("signed", False)))
    if kind == "tabulated":
        nodes = tuple(_real(v, f"{path}.nodes[{i}]") for i, v in enumerate(_req(rec, "nodes", path)))
        vals = tuple(_real(v, f"{path}.values[{i}]") for i, v in enumerate(_req(rec, "values", path)))
        try:
            return Tabulated(nodes, vals)
        except SpecificationError as e:
            raise SpecificationError(str(e), path) from None
    if kind == "coord":
        return Coord(int(_real(_req(rec, "index", path), path + ".index")))
    if kind == "unit_coord":
        return UnitCoord(int(_real(_req(rec, "index", path), path + ".index")))
    if kind == "declare":
        pts = tuple(_real(p, f"{path}.points[{i}]") for i, p in enumerate(rec.get("points", [])))
        lats = tuple(_lattice_from(l, f"{path}.lattices[{i}]") for i, l in enumerate(rec.get("lattices", [])))
        return Declared(sub("arg"), SingularSet(tuple(sorted(pts)), lats))
    raise SpecificationError(f"unknown expression kind {kind!r}", path)


# --------------------------------------------------------------------------
# checked evaluation and compilation


def on_singular_set(s: SingularSet, t: np.ndarray, rtol: float = 0.0) -> np.ndarray:
    """Mask of the entries of ``t`` lying exactly on a declared singular point."""
    t = np.asarray(t, dtype=float)
    mask = np.zeros(t.shape, dtype=bool)
    for p in s.points:
        mask |= np.abs(t - p) <= rtol * max(1.0, abs(p))
    for lat in s.lattices:
        near = lat.nearest(t)
        inside = (near >= lat.lower) & (near <= lat.upper)
        mask |= inside & (np.abs(t - near) <= rtol * np.maximum(1.0, np.abs(near)))
    return mask


def evaluate_checked(expr: Expression, x) -> np.ndarray:
    """Evaluate, mapping non-finite values at declared singularities to ``+inf``.

    Raises NonFiniteEvaluation at the first undeclared non-finite value.
    """
    x = np.asarray(x, dtype=float)
    vals = np.atleast_1d(expr(x)).astype(float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        t = np.atleast_1d(x if x.ndim <= 1 else np.linalg.norm(x, axis=-1))
        declared = on_singular_set(expr.singularities(), t)
        undeclared = bad & ~declared
        if np.any(undeclared):
            i = int(np.flatnonzero(undeclared)[0])
            xi = np.atleast_1d(x)[i] if x.ndim <= 1 else x[i]
            raise NonFiniteEvaluation(xi if np.ndim(xi) == 0 else tuple(xi), vals[i])
        vals = np.where(bad, math.inf, vals)
    return vals[0] if x.ndim == 0 else vals


def render_scalar(expr: Expression, name: str, env: dict) -> str:
    """Source of ``def name(x)`` evaluating ``expr``; data arrays are added to ``env``."""
    return f"def {name}(x):\n    return {expr.source(env)}\n"


def compile_scalar(expr: Expression, name: str = "f"):
    """Render ``expr`` to a scalar Python function of ``x``.

    Returns ``(function, source)``; the function only uses ``math``/``np``
    and module-level constants, so numba can compile it.
    """
    env: dict = {}
    src = render_scalar(expr, name, env)
    ns: dict = {"math": math, "np": np, **env}
    exec(compile(src, f"<expr:{name}>", "exec"), ns)
    return ns[name], src


def is_radial(expr: Expression) -> bool:
    return not expr.uses_coords


def is_angular(expr: Expression) -> bool:
    """True if ``expr`` depends only on the direction ``x/|x|``."""
    if isinstance(expr, (Const, UnitCoord)):
        return True
    if isinstance(expr, (Var, Power, Sign, Poly, LatticePower, Tabulated, Coord, Piecewise)):
        return isinstance(expr, Poly) and len(expr.coeffs) <= 1
    return all(is_angular(c) for c in expr.children())


def split_separable(expr: Expression) -> tuple[Expression, Expression] | None:
    """Split ``expr`` into ``(radial, angular)`` factors when possible."""
    if is_radial(expr):
        return expr, Const(1.0)
    if is_angular(expr):
        return Const(1.0), expr
    if isinstance(expr, Product):
        radial, angular = [], []
        for f in expr.factors:
            if is_radial(f):
                radial.append(f)
            elif is_angular(f):
                angular.append(f)
            else:
                return None
        return mul(*radial) if radial else Const(1.0), mul(*angular) if angular else Const(1.0)
    return None
