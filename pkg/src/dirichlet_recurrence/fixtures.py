"""Bundled example specs.

The JSON files under ``fixtures/`` are generated from :func:`bundled_specs`;
``write_fixtures`` regenerates them byte-identically.
"""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

from .coeffmodel import Options, ProblemSpec
from .expressions import Const, Exp, Lattice, LatticePower, Poly, Power
from .specio import dumps, loads

BESSEL_DIMENSIONS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

_HALFLINE_SIM = {"x0": 2.0, "target": [0.0, 1.0], "dt": 1e-3, "horizon": 100.0, "n_paths": 10000, "seed": 1,
                 "reflect": True}
_LINE_SIM = {"x0": 2.0, "target": [-1.0, 1.0], "dt": 1e-3, "horizon": 100.0, "n_paths": 10000, "seed": 1,
             "reflect": False}


def _bessel_name(delta: float) -> str:
    return f"bessel-{delta:g}"


def bessel(delta: float) -> ProblemSpec:
    """Reflected Bessel process of dimension ``delta``: ``sigma = 1``, ``phi = x^(delta-1)``."""
    return ProblemSpec("halfline", phi=Power(0.0, delta - 1.0), sigma=Const(1.0), name=_bessel_name(delta),
                       simulation=dict(_HALFLINE_SIM))


def lattice(alpha: float) -> ProblemSpec:
    """``phi`` = distance to the integers raised to ``alpha``; the integers are singular."""
    return ProblemSpec("line", phi=LatticePower(Lattice(0.0, 1.0), alpha), name=f"lattice-alpha-{alpha:g}",
                       options=Options(window=(-10.5, 10.5)))


def bundled_specs() -> dict[str, ProblemSpec]:
    specs = {_bessel_name(d): bessel(d) for d in BESSEL_DIMENSIONS}
    specs["brownian"] = ProblemSpec("line", phi=Const(1.0), name="brownian", simulation=dict(_LINE_SIM))
    specs["lattice-alpha-1"] = lattice(1.0)
    specs["lattice-alpha-2"] = lattice(2.0)
    specs["abs-x"] = ProblemSpec("line", phi=Power(0.0, 1.0), name="abs-x")
    specs["exp-x2"] = ProblemSpec("line", phi=Exp(Poly((0.0, 0.0, 1.0))), name="exp-x2")
    specs["sigma-1px2"] = ProblemSpec("line", phi=Const(1.0), sigma=Poly((1.0, 0.0, 1.0)), name="sigma-1px2",
                                      simulation=dict(_LINE_SIM))
    for d in (2, 3):
        specs[f"identity-{d}d"] = ProblemSpec("euclidean", phi=Const(1.0), dim=d, phi_bound=Const(1.0), rho=1.0,
                                              name=f"identity-{d}d")
    w, zero = Poly((1.0, 0.0, 1.0)), Const(0.0)
    specs["weighted-2d"] = ProblemSpec("euclidean", phi=Const(1.0), dim=2, matrix=((w, zero), (zero, w)),
                                       name="weighted-2d")
    specs["envelope-3d"] = ProblemSpec("euclidean", phi=Power(0.0, -1.0), dim=3, phi_bound=Power(0.0, -1.0),
                                       rho=math.e, name="envelope-3d")
    return specs


def fixture_names() -> list[str]:
    return list(bundled_specs())


def fixture_text(name: str) -> str:
    return dumps(bundled_specs()[name])


def load_fixture(name: str) -> ProblemSpec:
    """Parse the bundled JSON file ``name.json``."""
    path = resources.files(__package__) / "fixtures" / f"{name}.json"
    return loads(path.read_text(encoding="utf-8"))


def write_fixtures(directory: str | Path) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, spec in bundled_specs().items():
        p = out / f"{name}.json"
        p.write_bytes(dumps(spec).encode("utf-8"))
        written.append(p)
    return written


__all__ = ["BESSEL_DIMENSIONS", "bessel", "bundled_specs", "fixture_names", "fixture_text", "lattice",
           "load_fixture", "write_fixtures"]
