import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirichlet_recurrence.coeffmodel import (CaseAnchors, ClassificationError, IntervalDecomposition, Options,
                                             ProblemSpec, SingularPointError, check_positive, classify_case,
                                             detect_hamza_set, drift_from_coefficients, probe_point)
from dirichlet_recurrence.expressions import (Const, Exp, Lattice, LatticePower, Piecewise, Poly, Power, Product,
                                              SpecificationError, Tabulated, Var)
from dirichlet_recurrence.quad import INTEGRABLE, NON_INTEGRABLE


def line(phi, sigma=None, **kw):
    return ProblemSpec("line", phi=phi, sigma=sigma or Const(1.0), **kw)


# ---- Hamza set ------------------------------------------------------------

def test_abs_x_splits_the_line():
    dec = detect_hamza_set(line(Power(0.0, 1.0)), (-10, 10), 1e-8)
    assert dec.intervals == ((-math.inf, 0.0), (0.0, math.inf))
    assert dec.case_tag == "line-ii"
    assert dec.anchors.a == dec.anchors.b == 0.0


def test_sqrt_singularity_is_absorbed():
    dec = detect_hamza_set(line(Power(0.0, 0.5)), (-10, 10), 1e-8)
    assert dec.intervals == ((-math.inf, math.inf),)
    assert dec.case_tag == "line-i"


def test_constant_coefficients():
    dec = detect_hamza_set(line(Const(1.0)))
    assert dec.case_tag == "line-i" and dec.complement_points == ()


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_integer_lattice_is_removed(alpha):
    dec = detect_hamza_set(line(LatticePower(Lattice(0.0, 1.0), alpha)), (-10.5, 10.5), 1e-8)
    assert dec.case_tag == "line-iii"
    assert dec.complement_lattices == (Lattice(0.0, 1.0),)
    assert dec.complement_in(-10, 10).tolist() == list(map(float, range(-10, 11)))
    # every open unit interval is part of U
    assert all(hi - lo == 1.0 for lo, hi in dec.intervals)


def test_integrable_lattice_is_absorbed():
    dec = detect_hamza_set(line(LatticePower(Lattice(0.0, 1.0), 0.5)), (-10.5, 10.5), 1e-8)
    assert dec.case_tag == "line-i"
    assert "tested at" in " ".join(dec.notes) or dec.complement_lattices == ()


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("c", [0.0, 2.5, -3.0])
def test_power_singularity_membership(alpha, c):
    dec = detect_hamza_set(line(Power(c, alpha)), (-10, 10), 1e-8)
    assert (c in dec.complement_points) == (alpha >= 1)


def test_halfline_origin_is_not_a_candidate():
    spec = ProblemSpec("halfline", phi=Power(0.0, 2.0))
    dec = detect_hamza_set(spec)
    assert dec.case_tag == "half-i"
    assert 0.0 not in dec.complement_points
    assert dec.anchors.a == 0.0


def test_halfline_interior_singularity():
    spec = ProblemSpec("halfline", phi=Power(3.0, 1.0))
    dec = detect_hamza_set(spec)
    assert dec.case_tag == "half-i"
    assert dec.anchors.a == 3.0


def test_nonpositive_coefficient_is_a_spec_error():
    with pytest.raises(SpecificationError):
        detect_hamza_set(line(Poly((-1.0, 0.0, 1.0))))


def test_probe_point_reports_both_sides():
    t = probe_point(lambda s: np.abs(s) ** -1.0, 0.0, 1.0, 1e-8)
    assert t.left == NON_INTEGRABLE and t.right == NON_INTEGRABLE
    assert t.status == "excluded"
    t = probe_point(lambda s: np.where(s < 0, 1.0, np.abs(s) ** -1.0), 0.0, 1.0, 1e-8)
    assert (t.left, t.right) == (INTEGRABLE, NON_INTEGRABLE)
    t = probe_point(lambda s: np.abs(s) ** -0.5, 0.0, 1.0, 1e-8)
    assert t.left == INTEGRABLE and t.right == INTEGRABLE


@settings(max_examples=25)
@given(st.floats(1e-3, 1e3), st.sampled_from([Power(0.0, 1.0), Power(1.0, 0.5), Const(1.0),
                                              Product((Power(-2.0, 1.5), Exp(Poly((0.0, 0.1)))))]))
def test_decomposition_is_scale_invariant(k, phi):
    d1 = detect_hamza_set(line(phi))
    d2 = detect_hamza_set(line(phi).scaled(k))
    assert d1.intervals == d2.intervals
    assert d1.case_tag == d2.case_tag
    assert d1.complement_points == d2.complement_points


# ---- case classification --------------------------------------------------

@pytest.mark.parametrize("intervals, tag", [
    ([(-math.inf, math.inf)], "line-i"),
    ([(-math.inf, 0.0), (0.0, math.inf)], "line-ii"),
    ([(-math.inf, -1.0), (-1.0, 2.0), (2.0, math.inf)], "line-ii"),
])
def test_classify_simple_structures(intervals, tag):
    assert classify_case(IntervalDecomposition.from_intervals(intervals)).tag == tag


def test_line_ii_anchors_span_the_middle():
    anc = classify_case(IntervalDecomposition.from_intervals([(-math.inf, -1.0), (-1.0, 2.0), (2.0, math.inf)]))
    assert (anc.a, anc.b) == (-1.0, 2.0)


def test_halfline_accumulation_is_half_ii():
    dec = IntervalDecomposition.from_intervals([(n, n + 1.0) for n in range(10)], "halfline",
                                              lattices=[Lattice(0.0, 1.0, lower=1.0)], window=(0, 10))
    anc = classify_case(dec)
    assert anc.tag == "half-ii"
    assert anc.x_right[:5] == (1.0, 2.0, 3.0, 4.0, 5.0)


def test_mixed_structures():
    left_acc = IntervalDecomposition.from_intervals([(n, n + 1.0) for n in range(-10, 3)] + [(3.0, math.inf)],
                                                   lattices=[Lattice(0.0, 1.0, upper=3.0)], window=(-10, 10))
    assert classify_case(left_acc).tag == "line-iv"
    right_acc = IntervalDecomposition.from_intervals([(-math.inf, -2.0)] + [(n, n + 1.0) for n in range(-2, 10)],
                                                    lattices=[Lattice(0.0, 1.0, lower=-2.0)], window=(-10, 10))
    assert classify_case(right_acc).tag == "line-v"


def test_empty_set_is_a_classification_error():
    with pytest.raises(ClassificationError):
        IntervalDecomposition.from_intervals([])


@given(st.permutations([(-math.inf, -3.0), (-3.0, 0.5), (0.5, 4.0), (4.0, math.inf)]))
def test_classification_ignores_input_order(perm):
    dec = IntervalDecomposition.from_intervals(list(perm))
    assert classify_case(dec) == classify_case(
        IntervalDecomposition.from_intervals(sorted(perm)))


def test_decomposition_round_trip():
    dec = detect_hamza_set(line(LatticePower(Lattice(0.0, 1.0), 1.0)), (-10.5, 10.5), 1e-8)
    again = IntervalDecomposition.from_dict(dec.to_dict())
    assert again == dec
    assert CaseAnchors.from_dict(dec.anchors.to_dict()) == dec.anchors


# ---- spec validation ------------------------------------------------------

def test_multid_matrix_must_share_expressions():
    a, b = Const(0.0), Const(0.0)
    with pytest.raises(SpecificationError):
        ProblemSpec("euclidean", phi=Const(1.0), dim=2, matrix=((Const(1.0), a), (b, Const(1.0))))
    ok = ProblemSpec("euclidean", phi=Const(1.0), dim=2, matrix=((Const(1.0), a), (a, Const(1.0))))
    assert ok.matrix[0][1] is ok.matrix[1][0]


def test_default_matrix_is_identity():
    spec = ProblemSpec("euclidean", phi=Const(1.0), dim=3)
    A = spec.matrix_at(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(A[0], np.eye(3))


def test_halfline_refuses_negative_points():
    spec = ProblemSpec("halfline", phi=Power(0.0, 1.0))
    with pytest.raises(ValueError):
        spec.inverse_weight(np.array([-1.0]))


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(n_max=4), dict(window=(1.0, -1.0)), dict(divergence_floor=-1)])
def test_invalid_options(kw):
    with pytest.raises(ValueError):
        Options(**kw)


def test_check_positive_skips_declared_points():
    check_positive(line(Power(0.0, 2.0)))
    with pytest.raises(SpecificationError):
        check_positive(line(Piecewise((0.0,), (Const(1.0), Const(-1.0)))))


# ---- drift ----------------------------------------------------------------

@pytest.mark.parametrize("delta", [0.5, 1.5, 3.0])
def test_bessel_drift(delta):
    f = drift_from_coefficients(ProblemSpec("halfline", phi=Power(0.0, delta - 1.0)))
    x = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(f.b(x), (delta - 1.0) / (2.0 * x), rtol=1e-14)


def test_constant_coefficients_have_zero_drift():
    f = drift_from_coefficients(line(Const(1.0)))
    assert np.all(f.b(np.linspace(-5, 5, 11)) == 0.0)


@pytest.mark.parametrize("method", ["analytic", "central"])
def test_exponential_sigma_drift(method):
    f = drift_from_coefficients(line(Const(1.0), sigma=Exp(Var())), method=method)
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(f.b(x), np.exp(x) / 2, rtol=1e-8)
    np.testing.assert_allclose(f.sigma(x), np.exp(x), rtol=1e-14)


def test_drift_at_singular_point_raises():
    f = drift_from_coefficients(ProblemSpec("halfline", phi=Power(0.0, 2.0)))
    with pytest.raises(SingularPointError) as exc:
        f.b(np.array([1.0, 0.0]))
    assert exc.value.x == 0.0


def test_tabulated_coefficients_fall_back_to_differences():
    phi = Tabulated((-5.0, 0.0, 5.0), (2.0, 1.0, 2.0))
    f = drift_from_coefficients(line(phi))
    assert f.b(np.array([1.0]))[0] == pytest.approx(0.5 * 0.2 / 1.2, rel=1e-6)


smooth = st.sampled_from([
    (Poly((1.0, 0.0, 1.0)), Exp(Poly((0.0, 0.3)))),
    (Exp(Var()), Poly((2.0, 1.0))),
    (Const(2.0), Product((Poly((1.0, 0.0, 0.5)), Exp(Poly((0.0, -0.2)))))),
])


@settings(max_examples=10)
@given(smooth)
def test_analytic_and_central_drift_agree(pair):
    sigma, phi = pair
    spec = line(phi, sigma=sigma)
    x = np.linspace(-1.5, 1.5, 13)
    a = drift_from_coefficients(spec, "analytic").b(x)
    c = drift_from_coefficients(spec, "central", h=1e-4).b(x)
    np.testing.assert_allclose(c, a, rtol=1e-6, atol=1e-8)
    # the manual formula
    ds = sigma.derivative()(x)
    dp = phi.derivative()(x)
    np.testing.assert_allclose(a, 0.5 * (ds + sigma(x) * dp / phi(x)), rtol=1e-12)
