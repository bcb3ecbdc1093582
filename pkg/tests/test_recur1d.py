import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirichlet_recurrence.coeffmodel import Options, ProblemSpec, detect_hamza_set
from dirichlet_recurrence.expressions import Const, Lattice, LatticePower, Piecewise, Poly
from dirichlet_recurrence.fixtures import bessel, bundled_specs, lattice
from dirichlet_recurrence.recur1d import (INCONCLUSIVE, RECURRENT, RecurrenceVerdict, build_un, classify_1d,
                                          classify_line, closed_form_energy, dirichlet_energy, energy_trace,
                                          midpoint_cutoffs, scale_transience_probe, sequence_an)

ONE_D = {k: v for k, v in bundled_specs().items() if not v.is_multid}


def dec_of(spec, n_max=64):
    return detect_hamza_set(spec).with_case(n_max + 1, 0.0)


def brownian():
    return ProblemSpec("line", phi=Const(1.0))


# ---- cutoffs --------------------------------------------------------------

@pytest.mark.parametrize("args, c, d", [
    ((0.0, 4.0, 2), 2.0, 3.5),
    ((0.0, 1.0, 4), 0.5, 0.875),
])
def test_cutoff_examples(args, c, d):
    cp = midpoint_cutoffs(*args)
    assert (cp.c, cp.d) == (c, d)


def test_mirrored_cutoff_example():
    cp = midpoint_cutoffs(-4.0, 0.0, 2, mirrored=True)
    assert (cp.c, cp.d) == (-2.0, -3.5)


@pytest.mark.parametrize("args", [(1.0, 1.0, 1), (2.0, 1.0, 1), (0.0, 1.0, 0)])
def test_cutoff_errors(args):
    with pytest.raises(ValueError):
        midpoint_cutoffs(*args)


@given(st.floats(-1e3, 1e3), st.sampled_from([1e-3, 0.5, 1.0, 2.0, 1e3]), st.integers(1, 10_000),
       st.booleans())
def test_cutoff_ordering(x0, gap, n, mirrored):
    x1 = x0 + gap
    cp = midpoint_cutoffs(x0, x1, n, mirrored)
    assert cp.c == (x0 + x1) / 2
    half = gap / 2
    if n >= 2 or half > 1:
        # with half-gap <= 1 the first cutoff coincides with the midpoint
        if mirrored:
            assert x0 < cp.d < cp.c < x1
        else:
            assert x0 < cp.c < cp.d < x1
    else:
        assert cp.d == cp.c


# ---- sequences ------------------------------------------------------------

def test_constant_weight_sequences_are_linear():
    spec = brownian()
    seqs = sequence_an(spec, dec_of(spec), 16, 1e-10)
    for s in seqs:
        np.testing.assert_allclose(s.values, np.arange(1, 17), rtol=1e-14)


def test_bessel_two_sequence_is_log():
    spec = bessel(2.0)
    (s,) = sequence_an(spec, dec_of(spec), 64, 1e-10)
    n = np.arange(1, 65)
    np.testing.assert_allclose(s.values, np.log1p(n), rtol=1e-10)


@pytest.mark.parametrize("delta", [0.5, 1.5, 2.5, 3.0])
def test_bessel_sequence_closed_form(delta):
    spec = bessel(delta)
    (s,) = sequence_an(spec, dec_of(spec), 32, 1e-10)
    n = np.arange(1, 33)
    exact = ((1 + n) ** (2 - delta) - 1) / (2 - delta)
    np.testing.assert_allclose(s.values, exact, rtol=1e-9)


def test_lattice_alpha_two_sequence():
    spec = lattice(2.0)
    dec = detect_hamza_set(spec).with_case(65, 0.0)
    for s in sequence_an(spec, dec, 64, 1e-10):
        n = np.arange(2, 65)
        np.testing.assert_allclose(np.array(s.values)[1:], 2.0 * (n - 1), rtol=1e-9)


def test_sequence_needs_eight_terms():
    spec = brownian()
    with pytest.raises(ValueError):
        sequence_an(spec, dec_of(spec), 4)


# ---- verdicts -------------------------------------------------------------

@pytest.mark.parametrize("name, kind, tag", [
    ("brownian", RECURRENT, "line-i"),
    ("lattice-alpha-1", RECURRENT, "line-iii"),
    ("lattice-alpha-2", RECURRENT, "line-iii"),
    ("abs-x", RECURRENT, "line-ii"),
    ("exp-x2", INCONCLUSIVE, "line-i"),
    ("sigma-1px2", INCONCLUSIVE, "line-i"),
    ("bessel-0.5", RECURRENT, "half-i"),
    ("bessel-2", RECURRENT, "half-i"),
    ("bessel-3", INCONCLUSIVE, "half-i"),
])
def test_fixture_verdicts(name, kind, tag):
    v = classify_1d(ONE_D[name])
    assert (v.kind, v.case_tag) == (kind, tag)
    assert v.label == "numerical evidence at n_max=64"
    assert any("closab" in a for a in v.assumptions)


def test_lattice_alpha_one_fits_log():
    v = classify_1d(lattice(1.0))
    for s in v.sequences:
        assert s.verdict.fitted_model == "logarithmic"
        n = np.arange(2, 65)
        np.testing.assert_allclose(np.array(s.values)[1:], np.log(n), rtol=1e-9)


def test_recurrent_requires_every_sequence_to_diverge():
    # phi = 1 + x^2 on the right makes that integral converge, the left one grows linearly
    phi = Piecewise((0.0,), (Const(1.0), Poly((1.0, 0.0, 1.0))))
    v = classify_1d(ProblemSpec("line", phi=phi))
    kinds = {s.name: s.verdict.kind for s in v.sequences}
    assert kinds == {"a_n": "Bounded", "b_n": "DivergesToInfinity"}
    assert v.kind == INCONCLUSIVE
    assert v.reasons


def test_verdict_round_trip():
    v = classify_1d(lattice(1.0))
    assert RecurrenceVerdict.from_dict(v.to_dict()) == v


@pytest.mark.parametrize("name", sorted(ONE_D))
def test_recurrent_verdicts_are_monotone_in_n_max(name):
    spec = ONE_D[name]
    kinds = [classify_1d(spec, spec.options.with_overrides(n_max=n)).kind for n in (16, 32, 64, 128)]
    first = kinds.index(RECURRENT) if RECURRENT in kinds else len(kinds)
    assert all(k == RECURRENT for k in kinds[first:])


@settings(max_examples=20)
@given(st.sampled_from(sorted(ONE_D)), st.floats(1e-3, 1e3))
def test_verdicts_are_scale_invariant(name, k):
    spec = ONE_D[name]
    v1, v2 = classify_1d(spec), classify_1d(spec.scaled(k))
    assert v1.kind == v2.kind
    for s1, s2 in zip(v1.sequences, v2.sequences):
        np.testing.assert_allclose(np.array(s2.values) * k, s1.values, rtol=1e-9)


# ---- scale probe ----------------------------------------------------------

def test_probe_flags_transient_bessel():
    spec = bessel(3.0)
    v = classify_1d(spec, spec.options.with_overrides(enable_scale_probe=True))
    assert v.kind == INCONCLUSIVE
    assert "TransientByScale" in v.flags
    assert v.extension["limits"]["a_n"] == pytest.approx(1.0, rel=1e-6)


def test_probe_is_off_by_default():
    assert classify_1d(bessel(3.0)).flags == ()


def test_probe_absent_for_divergent_integrals():
    spec = brownian()
    assert scale_transience_probe(spec, dec_of(spec)) is None


def test_probe_never_runs_on_accumulating_cases():
    spec = lattice(1.0)
    assert scale_transience_probe(spec, detect_hamza_set(spec).with_case(65, 0.0)) is None


# ---- test functions and energy --------------------------------------------

def test_brownian_u5_is_a_tent():
    spec = brownian()
    u = build_un(spec, dec_of(spec), 5)
    x = np.array([-6.0, -5.0, -2.5, 0.0, 1.0, 5.0, 7.0])
    np.testing.assert_allclose(u(x), np.clip(1 - np.abs(x) / 5, 0, None), atol=1e-14)
    assert dirichlet_energy(u) == pytest.approx(0.2, rel=1e-12)
    assert u.support == (-5.0, 5.0)


def test_bessel_two_ramp_is_logarithmic():
    spec = bessel(2.0)
    n = 7
    u = build_un(spec, dec_of(spec), n)
    x = np.linspace(1.0, 1.0 + n, 9)
    np.testing.assert_allclose(u(x), 1 - np.log(x) / math.log(1 + n), atol=1e-12)
    assert u(np.array([0.3]))[0] == 1.0


@pytest.mark.parametrize("name", sorted(ONE_D))
def test_core_value_is_one(name):
    spec = ONE_D[name]
    dec = dec_of(spec)
    u = build_un(spec, dec, 3)
    for p in u.pieces:
        if p.kind == "one":
            assert u(np.array([(p.lo + p.hi) / 2]))[0] == 1.0


def test_degenerate_ramp_is_rejected():
    spec = lattice(1.0)
    dec = detect_hamza_set(spec).with_case(65, 0.0)
    with pytest.raises(ValueError):
        build_un(spec, dec, 1)


@pytest.mark.parametrize("name", sorted(ONE_D))
def test_energy_identity(name):
    spec = ONE_D[name]
    dec = dec_of(spec)
    start = 2 if dec.case_tag == "line-iii" else 1
    for n in (start, 5, 17, 32):
        u = build_un(spec, dec, n)
        q = dirichlet_energy(u)
        assert q == pytest.approx(u.closed_form_energy(), rel=1e-6)


def test_energy_closed_forms():
    assert closed_form_energy((5.0, 5.0)) == 0.2
    assert closed_form_energy((4.0,)) == 0.125


def test_bessel_two_energy_trace():
    spec = bessel(2.0)
    rows = energy_trace(spec, dec_of(spec), 12)
    for r in rows:
        assert r.closed_form == pytest.approx(0.5 / math.log1p(r.n), rel=1e-10)
        assert r.quadrature == pytest.approx(r.closed_form, rel=1e-8)


@pytest.mark.parametrize("name", ["brownian", "abs-x", "bessel-1.5", "bessel-2", "sigma-1px2"])
def test_functions_stay_in_unit_interval_and_are_continuous(name):
    spec = ONE_D[name]
    u = build_un(spec, dec_of(spec), 6)
    x, vals = u.grid()
    assert np.all(vals >= -1e-12) and np.all(vals <= 1 + 1e-12)
    # values at shared piece boundaries agree
    for p, q in zip(u.pieces, u.pieces[1:]):
        at = x == p.hi
        assert np.ptp(vals[at]) < 1e-9


@pytest.mark.parametrize("name", ["brownian", "abs-x", "bessel-1.5", "bessel-2", "exp-x2"])
def test_monotone_exhaustion(name):
    spec = ONE_D[name]
    dec = dec_of(spec)
    lo = 0.0 if spec.domain == "halfline" else -12.0
    x = np.linspace(lo, 12.0, 97)
    x = x[~np.isin(x, dec.complement_points)]
    prev = None
    for n in (1, 2, 4, 8, 16, 32):
        cur = build_un(spec, dec, n)(x)
        if prev is not None:
            assert np.all(cur >= prev - 1e-12)
        prev = cur
    if classify_1d(spec).kind == RECURRENT:
        near = np.abs(x) <= 3.0
        assert np.all(build_un(spec, dec, 10 ** 8)(x[near]) > 0.9)


def test_line_cases_iv_and_v():
    # phi vanishes like |x - k| on the integers k <= 0 only
    lat = Lattice(0.0, 1.0, upper=0.0)
    spec = ProblemSpec("line", phi=LatticePower(lat, 1.0), options=Options(window=(-10.5, 10.5)))
    dec = detect_hamza_set(spec).with_case(65, 0.0)
    assert dec.case_tag == "line-iv"
    v = classify_line(spec, dec)
    assert v.kind == RECURRENT
    u = build_un(spec, dec, 4)
    assert dirichlet_energy(u) == pytest.approx(u.closed_form_energy(), rel=1e-6)
    mirrored = ProblemSpec("line", phi=LatticePower(Lattice(0.0, 1.0, lower=0.0), 1.0),
                           options=Options(window=(-10.5, 10.5)))
    dec = detect_hamza_set(mirrored).with_case(65, 0.0)
    assert dec.case_tag == "line-v"
    assert classify_line(mirrored, dec).kind == RECURRENT


def test_half_ii_lattice():
    spec = ProblemSpec("halfline", phi=LatticePower(Lattice(0.0, 1.0, lower=1.0), 2.0),
                       options=Options(window=(0.0, 10.5)))
    v = classify_1d(spec)
    assert v.case_tag == "half-ii"
    assert v.kind == RECURRENT
