"""Monte Carlo corroboration of recurrence verdicts.

Paths of ``dX = b(X) dt + sqrt(sigma(X)) dW`` are simulated with
Euler-Maruyama.  Near singular points of the drift the step is halved
until ``|b| h <= 0.1 sqrt(sigma h)`` (at most ten halvings); half-line
paths are reflected at 0 by ``X -> |X|``.  Every path has its own
splitmix64 stream seeded from ``numpy.random.SeedSequence(seed)``, so
results do not depend on how paths are scheduled and a longer horizon
extends the same paths.

Return fractions over a finite horizon are only a proxy for recurrence:
they corroborate a verdict, they do not verify it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .coeffmodel import DriftField
from .recur1d import integrate_inverse_weight

MAX_HALVINGS = 10
STEP_RATIO = 0.1
MIN_PATHS_FOR_ESTIMATE = 100
CAVEAT = "corroboration, not verification: finite-horizon return fractions are a proxy for recurrence"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; ``target`` is a closed interval ``(lo, hi)``."""

    x0: float
    dt: float = 1e-3
    horizon: float = 100.0
    n_paths: int = 10_000
    seed: int = 0
    target: tuple[float, float] = (-1.0, 1.0)
    reflect: bool = False

    def __post_init__(self):
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))
        for name in ("x0", "dt", "horizon"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon / 100:
            raise ValueError(f"dt={self.dt} is too coarse; need dt <= horizon/100 = {self.horizon / 100}")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        lo, hi = self.target
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("target must be a finite interval with lo < hi")
        if self.reflect and self.x0 < 0:
            raise ValueError("a reflected path must start at x0 >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def starts_in_target(self) -> bool:
        return self.target[0] <= self.x0 <= self.target[1]

    @classmethod
    def from_spec(cls, spec, **overrides) -> "SimConfig":
        """Config from a spec's ``simulation`` block; ``None`` overrides are ignored."""
        kw = dict(spec.simulation)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        if "x0" not in kw:
            raise ValueError("simulation.x0 is required")
        if "target" in kw:
            kw["target"] = tuple(kw["target"])
        kw.setdefault("reflect", spec.domain == "halfline")
        return cls(**kw)


@numba.njit(inline="always")
def _splitmix(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    r = z
    r = ((r ^ (r >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    r = ((r ^ (r >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    r = r ^ (r >> np.uint64(31))
    return z, r


def _make_kernel(drift, diffusion):
    @numba.njit(cache=False)
    def kernel(x0, dt, n_steps, lo, hi, reflect, seeds, out_first, out_occ, out_flags, out_final, out_min):
        inv53 = 1.0 / 9007199254740992.0
        sub = 1 << MAX_HALVINGS
        h_floor = dt / sub
        for i in range(seeds.shape[0]):
            state = seeds[i]
            have_spare = False
            spare = 0.0
            x = x0
            xmin = x0
            occ = 0.0
            first = -1.0
            if lo <= x <= hi:
                first = 0.0
            aborted = False
            floored = False
            unresolved = False
            for k in range(n_steps):
                done = 0
                while done < sub:
                    b = drift(x)
                    s = diffusion(x)
                    if not (math.isfinite(b) and math.isfinite(s)) or s < 0.0:
                        aborted = True
                        break
                    units = sub
                    h = dt
                    while units > 1 and abs(b) * h > STEP_RATIO * math.sqrt(s * h):
                        units >>= 1
                        h *= 0.5
                    if units == 1 and abs(b) * h > STEP_RATIO * math.sqrt(s * h):
                        if not floored and first < 0.0:
                            unresolved = True
                        floored = True
                    if units > sub - done:
                        units = sub - done
                        h = units * h_floor
                    if have_spare:
                        z = spare
                        have_spare = False
                    else:
                        while True:
                            state, r1 = _splitmix(state)
                            state, r2 = _splitmix(state)
                            u = 2.0 * ((r1 >> np.uint64(11)) * inv53) - 1.0
                            v = 2.0 * ((r2 >> np.uint64(11)) * inv53) - 1.0
                            q = u * u + v * v
                            if 0.0 < q < 1.0:
                                break
                        m = math.sqrt(-2.0 * math.log(q) / q)
                        z = u * m
                        spare = v * m
                        have_spare = True
                    if lo <= x <= hi:
                        occ += h
                    x = x + b * h + math.sqrt(s * h) * z
                    if reflect:
                        x = abs(x)
                    if not math.isfinite(x):
                        aborted = True
                        break
                    done += units
                    if x < xmin:
                        xmin = x
                    if first < 0.0 and lo <= x <= hi:
                        first = (k * sub + done) * h_floor
                if aborted:
                    break
            out_first[i] = first if first >= 0.0 else np.nan
            out_occ[i] = occ
            out_flags[i] = (1 if aborted else 0) | (2 if unresolved else 0) | (4 if floored else 0)
            out_final[i] = x
            out_min[i] = xmin

    return kernel


_KERNELS: dict[tuple, object] = {}


def compile_field(field_: DriftField):
    """numba kernel for a drift field; cached by source text."""
    data = tuple((k, np.asarray(v).tobytes()) for k, v in sorted(field_.namespace.items()))
    key = (field_.b_source, field_.sigma_source, data)
    if key in _KERNELS:
        return _KERNELS[key]
    ns: dict = {"math": math, "np": np, **field_.namespace}
    exec(compile(field_.sigma_source, "<diffusion>", "exec"), ns)
    exec(compile(field_.b_source, "<drift>", "exec"), ns)
    for name in ("diffusion", "_phi", "drift"):
        if name in ns:
            ns[name] = numba.njit(ns[name])
    kernel = _make_kernel(ns["drift"], ns["diffusion"])
    _KERNELS[key] = kernel
    return kernel


def path_seeds(seed: int, n_paths: int) -> np.ndarray:
    """One 64-bit seed per path; path ``i`` gets the same seed for any ``n_paths > i``."""
    return np.random.SeedSequence(seed).generate_state(n_paths, dtype=np.uint64)


@dataclass
class PathBatch:
    """Per-path summaries of one simulation run.

    ``first_return_time`` is NaN when the path never reached the target;
    it is 0 for paths that start inside it.  ``unresolved`` paths needed
    a step below the ``dt/1024`` floor before their first return.
    """

    config: SimConfig
    first_return_time: np.ndarray
    occupation_time: np.ndarray
    aborted: np.ndarray
    unresolved: np.ndarray
    floored: np.ndarray
    final_state: np.ndarray
    min_state: np.ndarray

    def __len__(self) -> int:
        return len(self.first_return_time)

    @property
    def returned(self) -> np.ndarray:
        return np.isfinite(self.first_return_time)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_index", "first_return_time", "occupation_time", "aborted", "unresolved"])
        for i in range(len(self)):
            t = self.first_return_time[i]
            w.writerow([i, repr(float(t)) if math.isfinite(t) else "", repr(float(self.occupation_time[i])),
                        int(self.aborted[i]), int(self.unresolved[i])])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def simulate_paths(field_: DriftField, cfg: SimConfig, start: int = 0, count: int | None = None) -> PathBatch:
    """Simulate paths ``start .. start+count-1`` (all of them by default)."""
    if field_.domain == "halfline" and not cfg.reflect:
        raise ValueError("half-line diffusions must be simulated with reflect=True")
    count = cfg.n_paths - start if count is None else count
    if start < 0 or count < 1 or start + count > cfg.n_paths:
        raise ValueError("path range outside 0..n_paths-1")
    seeds = path_seeds(cfg.seed, cfg.n_paths)[start:start + count].copy()
    kernel = compile_field(field_)
    first = np.empty(count)
    occ = np.empty(count)
    flags = np.zeros(count, dtype=np.int64)
    final = np.empty(count)
    xmin = np.empty(count)
    lo, hi = cfg.target
    try:
        kernel(float(cfg.x0), float(cfg.dt), cfg.n_steps, lo, hi, bool(cfg.reflect), seeds, first, occ, flags,
               final, xmin)
    except ZeroDivisionError:
        raise ZeroDivisionError("a path reached a singular point of the drift or diffusion coefficient") from None
    return PathBatch(cfg, first, occ, (flags & 1) > 0, (flags & 2) > 0, (flags & 4) > 0, final, xmin)


@dataclass(frozen=True)
class PathSummary:
    first_return_time: float
    occupation_time: float
    aborted: bool
    unresolved: bool
    final_state: float
    min_state: float


def simulate_path(field_: DriftField, cfg: SimConfig, index: int = 0) -> PathSummary:
    """Summary of the single path ``index`` (same stream as in a full run)."""
    b = simulate_paths(field_, cfg, start=index, count=1)
    return PathSummary(float(b.first_return_time[0]), float(b.occupation_time[0]), bool(b.aborted[0]),
                       bool(b.unresolved[0]), float(b.final_state[0]), float(b.min_state[0]))


@dataclass
class RecurrenceEstimate:
    """Finite-horizon return statistics with a 95% normal-approximation interval."""

    return_probability: float
    ci_halfwidth: float
    ci_low: float
    ci_high: float
    mean_occupation: float
    n_paths: int
    n_used: int
    n_returned: int
    n_aborted: int
    n_unresolved: int
    n_floored: int
    excursion_note: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_from_batch(batch: PathBatch) -> RecurrenceEstimate:
    cfg = batch.config
    used = ~(batch.aborted | batch.unresolved)
    n_used = int(used.sum())
    if n_used < MIN_PATHS_FOR_ESTIMATE:
        raise ValueError(f"only {n_used} usable paths; at least {MIN_PATHS_FOR_ESTIMATE} are needed for an estimate")
    hits = int(batch.returned[used].sum())
    p = hits / n_used
    half = 1.96 * math.sqrt(p * (1.0 - p) / n_used)
    low, high = max(0.0, p - half), min(1.0, p + half)
    notes = [f"returns to [{cfg.target[0]!r}, {cfg.target[1]!r}] within T={cfg.horizon!r} (dt={cfg.dt!r})"]
    if cfg.starts_in_target:
        notes.append("x0 lies in the target, so every path returns at time 0")
    n_ab, n_un = int(batch.aborted.sum()), int(batch.unresolved.sum())
    if n_ab or n_un:
        notes.append(f"{n_ab} aborted and {n_un} unresolved paths excluded")
    notes.append(CAVEAT)
    return RecurrenceEstimate(
        return_probability=p, ci_halfwidth=min(half, p - low, high - p) if half > 0 else 0.0,
        ci_low=low, ci_high=high, mean_occupation=float(batch.occupation_time[used].mean()),
        n_paths=len(batch), n_used=n_used, n_returned=hits, n_aborted=n_ab, n_unresolved=n_un,
        n_floored=int(batch.floored.sum()), excursion_note="; ".join(notes), config=_config_dict(cfg))


def _config_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    d["target"] = list(cfg.target)
    return d


def estimate_return(field_: DriftField, cfg: SimConfig) -> RecurrenceEstimate:
    """Fraction of paths that reach the target within the horizon."""
    if cfg.n_paths < MIN_PATHS_FOR_ESTIMATE:
        raise ValueError(f"n_paths must be at least {MIN_PATHS_FOR_ESTIMATE} for an estimate")
    return estimate_from_batch(simulate_paths(field_, cfg))


def two_sample_z(a: RecurrenceEstimate, b: RecurrenceEstimate) -> float:
    """z statistic for ``a.return_probability - b.return_probability`` (unpooled)."""
    var = (a.return_probability * (1 - a.return_probability) / a.n_used
           + b.return_probability * (1 - b.return_probability) / b.n_used)
    diff = a.return_probability - b.return_probability
    if var == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / math.sqrt(var)


def scale_hitting_probability(spec, verdict, cfg: SimConfig, tol: float = 1e-10) -> float | None:
    """Infinite-horizon probability of reaching the target, from the scale function.

    Only available when the start lies beyond the target on a side whose
    ``int 1/(sigma phi)`` tail is finite (the transience-by-scale regime).
    Returns None otherwise.
    """
    lo, hi = cfg.target
    x0 = cfg.x0
    if lo <= x0 <= hi:
        return 1.0
    side = "right" if x0 > hi else "left"
    name = "a_n" if side == "right" else "b_n"
    seqs = [s for s in verdict.sequences if s.kind == "ray" and s.name == name and s.limits]
    if not seqs or seqs[0].verdict is None or seqs[0].verdict.kind != "Bounded":
        return None
    seq = seqs[0]
    limit = seq.verdict.limit
    if limit is None or not math.isfinite(limit):
        return None
    anchor = seq.limits[0][0] if side == "right" else seq.limits[0][1]
    edge = hi if side == "right" else lo
    if (side == "right" and edge < anchor) or (side == "left" and edge > anchor):
        return None

    def tail(y: float) -> float:
        a, b = (anchor, y) if side == "right" else (y, anchor)
        return limit - integrate_inverse_weight(spec, a, b, tol).value

    t_edge, t_x0 = tail(edge), tail(x0)
    if not (t_edge > 0 and math.isfinite(t_x0)):
        return None
    return min(1.0, max(0.0, t_x0 / t_edge))


@dataclass
class Corroboration:
    verdict_kind: str
    flags: list
    status: str
    expectation: str
    estimate: RecurrenceEstimate
    scale_probability: float | None
    caveat: str = CAVEAT

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimate"] = self.estimate.to_dict()
        return d


def corroborate(verdict, field_: DriftField, cfg: SimConfig, spec=None, threshold: float = 0.5,
                estimate: RecurrenceEstimate | None = None) -> Corroboration:
    """Compare a verdict with simulated return fractions.

    A Recurrent verdict expects a return fraction of at least ``threshold``.
    A TransientByScale flag expects the fraction not to exceed the
    infinite-horizon hitting probability from the scale function (when
    ``spec`` is given), otherwise to stay below ``threshold``.  Other
    inconclusive verdicts carry no expectation.
    """
    est = estimate if estimate is not None else estimate_return(field_, cfg)
    flags = list(getattr(verdict, "flags", []) or [])
    kind = verdict.kind
    p_scale = None
    if kind == "Recurrent":
        ok = est.ci_high >= threshold
        expectation = f"return fraction >= {threshold!r}"
        status = "consistent" if ok else "inconsistent"
    elif "TransientByScale" in flags:
        if spec is not None:
            p_scale = scale_hitting_probability(spec, verdict, cfg)
        bound = p_scale if p_scale is not None else threshold
        expectation = f"return fraction <= {bound!r}" + (" (scale hitting probability)" if p_scale is not None else "")
        status = "consistent with transience flag" if est.ci_low <= bound else "inconsistent with transience flag"
    else:
        expectation = "none (inconclusive verdict)"
        status = "no expectation"
    return Corroboration(kind, flags, status, expectation, est, p_scale)


__all__ = [
    "CAVEAT", "Corroboration", "PathBatch", "PathSummary", "RecurrenceEstimate", "SimConfig", "compile_field",
    "corroborate", "estimate_from_batch", "estimate_return", "path_seeds", "scale_hitting_probability",
    "simulate_path", "simulate_paths", "two_sample_z",
]
