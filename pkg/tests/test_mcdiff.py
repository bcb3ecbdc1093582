import math

import numpy as np
import pytest

from dirichlet_recurrence.coeffmodel import ProblemSpec, drift_from_coefficients
from dirichlet_recurrence.expressions import Const, Exp, Poly
from dirichlet_recurrence.fixtures import bessel, bundled_specs
from dirichlet_recurrence.mcdiff import (CAVEAT, PathBatch, SimConfig, corroborate, estimate_from_batch,
                                         estimate_return, path_seeds, scale_hitting_probability, simulate_path,
                                         simulate_paths, two_sample_z)
from dirichlet_recurrence.recur1d import classify_1d

BM = drift_from_coefficients(ProblemSpec("line", phi=Const(1.0)))


def small(**kw):
    base = dict(x0=2.0, dt=1e-2, horizon=5.0, n_paths=400, seed=7)
    base.update(kw)
    return SimConfig(**base)


# ---- configuration --------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(dt=0.0), dict(horizon=-1.0), dict(dt=0.1, horizon=5.0), dict(n_paths=0), dict(seed=-1),
    dict(target=(1.0, 1.0)), dict(target=(0.0, math.inf)), dict(x0=math.nan), dict(x0=-1.0, reflect=True),
])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        small(**kw)


def test_config_from_spec_defaults_and_overrides():
    spec = bessel(1.5)
    cfg = SimConfig.from_spec(spec, n_paths=50, seed=None)
    assert cfg.reflect and cfg.n_paths == 50 and cfg.seed == 1
    assert cfg.target == (0.0, 1.0)
    with pytest.raises(ValueError):
        SimConfig.from_spec(bundled_specs()["abs-x"])


def test_halfline_needs_reflection():
    field_ = drift_from_coefficients(bessel(3.0))
    with pytest.raises(ValueError):
        simulate_paths(field_, small(reflect=False))


# ---- streams and determinism ----------------------------------------------

def test_seeds_are_prefix_consistent():
    assert np.array_equal(path_seeds(3, 10), path_seeds(3, 40)[:10])
    assert not np.array_equal(path_seeds(3, 10), path_seeds(4, 10))


def test_runs_are_reproducible():
    a = simulate_paths(BM, small())
    b = simulate_paths(BM, small())
    assert a.to_csv() == b.to_csv()
    c = simulate_paths(BM, small(seed=8))
    assert a.to_csv() != c.to_csv()


def test_single_path_matches_batch():
    cfg = small(n_paths=20)
    batch = simulate_paths(BM, cfg)
    s = simulate_path(BM, cfg, 13)
    assert s.final_state == batch.final_state[13]
    assert s.occupation_time == batch.occupation_time[13]
    assert np.array_equal(simulate_paths(BM, cfg, start=5, count=3).final_state, batch.final_state[5:8])


def test_path_range_is_checked():
    with pytest.raises(ValueError):
        simulate_paths(BM, small(n_paths=10), start=8, count=5)


# ---- statistics -----------------------------------------------------------

def test_brownian_variance():
    cfg = SimConfig(x0=0.0, dt=1e-2, horizon=1.0, n_paths=10_000, seed=11, target=(50.0, 51.0))
    b = simulate_paths(BM, cfg)
    assert abs(b.final_state.mean()) < 4 * math.sqrt(1.0 / 1e4)
    assert b.final_state.var() == pytest.approx(1.0, rel=0.05)


def test_constant_drift_mean():
    # sigma = 1 and phi = exp(2x) give b = 1
    spec = ProblemSpec("line", phi=Exp(Poly((0.0, 2.0))))
    f = drift_from_coefficients(spec)
    cfg = SimConfig(x0=0.0, dt=1e-2, horizon=2.0, n_paths=4000, seed=2, target=(-90.0, -80.0))
    b = simulate_paths(f, cfg)
    assert b.final_state.mean() == pytest.approx(2.0, abs=4 * math.sqrt(2.0 / 4000))


def test_reflection_keeps_paths_nonnegative():
    for delta in (0.5, 1.5, 3.0):
        f = drift_from_coefficients(bessel(delta))
        b = simulate_paths(f, SimConfig(x0=2.0, dt=1e-2, horizon=5.0, n_paths=300, seed=1, target=(5.0, 6.0),
                                        reflect=True))
        assert np.all(b.min_state >= 0.0)
        assert np.all(b.final_state >= 0.0)


def test_return_fraction_grows_with_horizon():
    fr = [estimate_return(BM, small(horizon=h, n_paths=1000)).return_probability for h in (1.0, 4.0, 16.0)]
    assert fr[0] <= fr[1] <= fr[2]


def test_start_inside_target_returns_immediately():
    est = estimate_return(BM, small(x0=0.0))
    assert est.return_probability == 1.0
    assert est.ci_halfwidth == 0.0
    assert "time 0" in est.excursion_note


def test_first_return_times_lie_within_horizon():
    cfg = small()
    b = simulate_paths(BM, cfg)
    t = b.first_return_time[b.returned]
    assert np.all((t > 0) & (t <= cfg.horizon + 1e-12))
    assert np.all(b.occupation_time >= 0) and np.all(b.occupation_time <= cfg.horizon + 1e-9)
    assert not b.aborted.any()


def test_confidence_interval_is_clamped():
    batch = PathBatch(small(n_paths=200), np.r_[np.full(199, 1.0), np.nan], np.zeros(200), np.zeros(200, bool),
                      np.zeros(200, bool), np.zeros(200, bool), np.zeros(200), np.zeros(200))
    est = estimate_from_batch(batch)
    assert est.return_probability == 0.995
    assert est.ci_high == 1.0
    assert est.ci_low >= 0.0
    assert est.ci_halfwidth <= 1.0 - est.return_probability


def test_estimate_needs_enough_paths():
    with pytest.raises(ValueError):
        estimate_return(BM, small(n_paths=50))


def test_unresolved_paths_are_excluded():
    n = 150
    unresolved = np.zeros(n, bool)
    unresolved[:10] = True
    batch = PathBatch(small(n_paths=n), np.full(n, np.nan), np.zeros(n), np.zeros(n, bool), unresolved,
                      unresolved.copy(), np.zeros(n), np.zeros(n))
    est = estimate_from_batch(batch)
    assert est.n_used == 140 and est.n_unresolved == 10
    assert "unresolved" in est.excursion_note


def test_outward_drift_lowers_the_return_fraction():
    cfg = SimConfig(x0=2.0, dt=1e-2, horizon=20.0, n_paths=2000, seed=3, target=(0.0, 1.0), reflect=True)
    hi = estimate_return(drift_from_coefficients(bessel(1.5)), cfg)
    lo = estimate_return(drift_from_coefficients(bessel(3.0)), cfg)
    assert two_sample_z(hi, lo) >= 3.0


def test_two_sample_z_degenerate_cases():
    cfg = small(x0=0.0)
    a = estimate_return(BM, cfg)
    assert two_sample_z(a, a) == 0.0


def test_csv_layout():
    b = simulate_paths(BM, small(n_paths=5))
    lines = b.to_csv().splitlines()
    assert lines[0] == "path_index,first_return_time,occupation_time,aborted,unresolved"
    assert len(lines) == 6
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        assert cells[0] == str(i)
        assert (cells[1] == "") == (not b.returned[i])
        if cells[1]:
            assert float(cells[1]) == b.first_return_time[i]
        assert cells[3] in ("0", "1") and cells[4] in ("0", "1")


# ---- corroboration --------------------------------------------------------

def test_scale_hitting_probability_for_bessel_three():
    spec = bessel(3.0)
    v = classify_1d(spec, spec.options.with_overrides(enable_scale_probe=True))
    # the scale function is 1 - 1/x, so hitting 1 from 2 has probability 1/2
    assert scale_hitting_probability(spec, v, SimConfig.from_spec(spec)) == pytest.approx(0.5, rel=1e-8)


def test_scale_probability_absent_without_flag():
    spec = bundled_specs()["brownian"]
    assert scale_hitting_probability(spec, classify_1d(spec), SimConfig.from_spec(spec)) is None


def test_corroborate_recurrent_brownian():
    spec = bundled_specs()["brownian"]
    c = corroborate(classify_1d(spec), BM, small(horizon=20.0, n_paths=500))
    assert c.status == "consistent"
    assert c.caveat == CAVEAT
    assert c.to_dict()["estimate"]["n_paths"] == 500


def test_corroborate_transience_flag():
    spec = bessel(3.0)
    v = classify_1d(spec, spec.options.with_overrides(enable_scale_probe=True))
    cfg = SimConfig(x0=2.0, dt=1e-2, horizon=20.0, n_paths=1000, seed=3, target=(0.0, 1.0), reflect=True)
    c = corroborate(v, drift_from_coefficients(spec), cfg, spec=spec)
    assert c.status == "consistent with transience flag"
    assert c.scale_probability == pytest.approx(0.5)


def test_corroborate_inconsistent_recurrent_claim():
    # a Recurrent verdict paired with a strongly transient simulation
    spec = bessel(1.5)
    v = classify_1d(spec)
    cfg = SimConfig(x0=2.0, dt=1e-2, horizon=2.0, n_paths=500, seed=3, target=(0.0, 0.1), reflect=True)
    c = corroborate(v, drift_from_coefficients(bessel(6.0)), cfg)
    assert c.status == "inconsistent"


def test_corroborate_without_expectation():
    spec = bessel(3.0)
    cfg = small(reflect=True, target=(0.0, 1.0), n_paths=200)
    c = corroborate(classify_1d(spec), drift_from_coefficients(spec), cfg)
    assert c.status == "no expectation"
