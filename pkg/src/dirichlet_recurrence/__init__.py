"""Recurrence tests for gradient-type Dirichlet forms on the line, the half-line and R^d.

Typical use::

    from dirichlet_recurrence import load_fixture, classify_1d
    verdict = classify_1d(load_fixture("bessel-1.5"))
    verdict.kind            # "Recurrent"
"""
__version__ = "0.1.0"

from .coeffmodel import (ClassificationError, DriftField, IntervalDecomposition, Options, ProblemSpec,
                         SingularPointError, detect_hamza_set, drift_from_coefficients)
from .expressions import NonFiniteEvaluation, SpecificationError, from_record
from .fixtures import bundled_specs, load_fixture
from .mcdiff import SimConfig, corroborate, estimate_return, simulate_path, simulate_paths
from .quad import divergence_diagnose, integrate, local_integrability
from .recur1d import (RecurrenceVerdict, build_un, classify_1d, classify_halfline, classify_line, dirichlet_energy,
                      energy_trace, sequence_an)
from .recurnd import (MultiVerdict, classify_envelope, classify_multid, classify_radial, envelope_from_spec,
                      radial_profile, surface_mass)
from .specio import dumps, load_spec, loads, save_spec

__all__ = [
    "ClassificationError", "DriftField", "IntervalDecomposition", "MultiVerdict", "NonFiniteEvaluation", "Options",
    "ProblemSpec", "RecurrenceVerdict", "SimConfig", "SingularPointError", "SpecificationError", "build_un",
    "bundled_specs", "classify_1d", "classify_envelope", "classify_halfline", "classify_line", "classify_multid",
    "classify_radial", "corroborate", "detect_hamza_set", "dirichlet_energy", "divergence_diagnose",
    "drift_from_coefficients", "dumps", "energy_trace", "envelope_from_spec", "estimate_return", "from_record",
    "integrate", "load_fixture", "load_spec", "loads", "local_integrability", "radial_profile", "save_spec",
    "sequence_an", "simulate_path", "simulate_paths", "surface_mass",
]
