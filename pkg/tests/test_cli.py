import csv
import io
import json
import math

import pytest

from dirichlet_recurrence.cli import (ENERGY_COLUMNS, EXIT_NUMERIC, EXIT_OK, EXIT_SPEC, OUT_ENV, main,
                                      verdict_from_report)
from dirichlet_recurrence.fixtures import bundled_specs, fixture_names, fixture_text
from dirichlet_recurrence.recur1d import RecurrenceVerdict
from dirichlet_recurrence.recurnd import MultiVerdict


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(map(str, argv)), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def specs(tmp_path):
    d = tmp_path / "specs"
    d.mkdir()
    for name in fixture_names():
        (d / f"{name}.json").write_text(fixture_text(name), encoding="utf-8")
    return d


def write_doc(path, rec):
    path.write_text(json.dumps(rec), encoding="utf-8")
    return path


# ---- classify -------------------------------------------------------------

@pytest.mark.parametrize("name, kind", [("bessel-1", "Recurrent"), ("bessel-3", "Inconclusive"),
                                        ("identity-2d", "Recurrent"), ("weighted-2d", "Inconclusive")])
def test_classify_writes_report_and_summary(specs, tmp_path, name, kind):
    out = tmp_path / "out"
    code, text, _ = run("classify", "--spec", specs / f"{name}.json", "--out", out)
    assert code == EXIT_OK
    assert f"verdict: {kind}" in text
    rec = json.loads((out / f"{name}.report.json").read_text())
    assert rec["kind"] == kind
    v = verdict_from_report(rec)
    assert isinstance(v, MultiVerdict if rec["multidimensional"] else RecurrenceVerdict)
    assert v.kind == kind
    assert (out / f"{name}.summary.txt").read_text() in text


def test_scale_probe_flag(specs, tmp_path):
    code, text, _ = run("classify", "--spec", specs / "bessel-3.json", "--out", tmp_path, "--enable-scale-probe")
    assert code == EXIT_OK
    assert "flag: TransientByScale" in text


def test_n_max_override(specs, tmp_path):
    run("classify", "--spec", specs / "brownian.json", "--out", tmp_path, "--n-max", 16)
    rec = json.loads((tmp_path / "brownian.report.json").read_text())
    assert rec["verdict"]["n_max"] == 16


def test_output_directory_from_environment(specs, tmp_path, monkeypatch):
    target = tmp_path / "env-out"
    monkeypatch.setenv(OUT_ENV, str(target))
    assert run("classify", "--spec", specs / "brownian.json")[0] == EXIT_OK
    assert (target / "brownian.report.json").is_file()


# ---- exit codes -----------------------------------------------------------

def test_missing_file_is_a_spec_error(tmp_path):
    code, _, err = run("classify", "--spec", tmp_path / "nope.json", "--out", tmp_path)
    assert code == EXIT_SPEC
    assert "cannot read" in err


def test_malformed_json_is_a_spec_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"format": ', encoding="utf-8")
    code, _, err = run("classify", "--spec", p, "--out", tmp_path)
    assert code == EXIT_SPEC
    assert "line 1" in err


def test_bad_field_names_the_path(tmp_path):
    p = write_doc(tmp_path / "s.json", {"format": "dirichlet-recurrence-spec", "version": 1,
                                        "domain": {"kind": "line"}, "phi": {"kind": "power"}})
    code, _, err = run("classify", "--spec", p, "--out", tmp_path)
    assert code == EXIT_SPEC
    assert "phi" in err and "exponent" in err


def test_invalid_override_is_a_spec_error(specs, tmp_path):
    assert run("classify", "--spec", specs / "brownian.json", "--out", tmp_path, "--tol", -1)[0] == EXIT_SPEC


def test_simulation_of_multid_spec_is_rejected(specs, tmp_path):
    assert run("simulate", "--spec", specs / "identity-2d.json", "--out", tmp_path)[0] == EXIT_SPEC


def test_simulation_needs_a_start_point(specs, tmp_path):
    assert run("simulate", "--spec", specs / "abs-x.json", "--out", tmp_path)[0] == EXIT_SPEC


def test_singular_start_is_a_numerical_failure(tmp_path):
    p = write_doc(tmp_path / "s.json", {
        "format": "dirichlet-recurrence-spec", "version": 1, "domain": {"kind": "line"},
        "phi": {"kind": "power", "exponent": 2.0},
        "simulation": {"x0": 0.0, "target": [5.0, 6.0], "n_paths": 200, "dt": 0.01, "horizon": 2.0}})
    code, _, err = run("simulate", "--spec", p, "--out", tmp_path)
    assert code == EXIT_NUMERIC
    assert "singular point" in err


def test_missing_spec_flag_exits_through_argparse():
    with pytest.raises(SystemExit) as exc:
        run("classify")
    assert exc.value.code == 2


# ---- energy trace ---------------------------------------------------------

def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_brownian_energy_csv(specs, tmp_path):
    assert run("energy-trace", "--spec", specs / "brownian.json", "--out", tmp_path)[0] == EXIT_OK
    rows = read_csv(tmp_path / "brownian.energy.csv")
    assert tuple(rows[0]) == ENERGY_COLUMNS
    assert len(rows) == 65
    assert rows[5] == ["5", "5.0", "5.0", "0.2", "0.2"]


def test_halfline_energy_csv_has_no_left_sequence(specs, tmp_path):
    run("energy-trace", "--spec", specs / "bessel-2.json", "--out", tmp_path, "--n-max", 16)
    rows = read_csv(tmp_path / "bessel-2.energy.csv")
    assert len(rows) == 17
    for r in rows[1:]:
        n = int(r[0])
        assert r[2] == ""
        assert float(r[1]) == pytest.approx(math.log1p(n), rel=1e-9)
        assert float(r[3]) == pytest.approx(0.5 / math.log1p(n), rel=1e-9)
        assert float(r[4]) == pytest.approx(float(r[3]), rel=1e-6)


def test_lattice_energy_csv_leaves_degenerate_row_empty(specs, tmp_path):
    run("energy-trace", "--spec", specs / "lattice-alpha-1.json", "--out", tmp_path)
    rows = read_csv(tmp_path / "lattice-alpha-1.energy.csv")
    assert rows[1][3] == "" and rows[1][4] == ""
    for r in rows[2:]:
        n = int(r[0])
        assert float(r[1]) == pytest.approx(math.log(n), rel=1e-6)


def test_energy_trace_rejects_multid(specs, tmp_path):
    assert run("energy-trace", "--spec", specs / "identity-2d.json", "--out", tmp_path)[0] == EXIT_SPEC


# ---- simulation -----------------------------------------------------------

def test_seeded_simulation_is_byte_identical(specs, tmp_path):
    args = ["simulate", "--spec", specs / "brownian.json", "--n-paths", 200, "--horizon", 2.0, "--dt", 0.01,
            "--seed", 5]
    assert run(*args, "--out", tmp_path / "a")[0] == EXIT_OK
    assert run(*args, "--out", tmp_path / "b")[0] == EXIT_OK
    a = (tmp_path / "a" / "brownian.paths.csv").read_bytes()
    assert a == (tmp_path / "b" / "brownian.paths.csv").read_bytes()
    assert a.splitlines()[0] == b"path_index,first_return_time,occupation_time,aborted,unresolved"
    assert len(a.splitlines()) == 201
    est = json.loads((tmp_path / "a" / "brownian.simulation.json").read_text())
    assert est["n_paths"] == 200 and est["config"]["seed"] == 5


def test_corroborate_bessel_three(specs, tmp_path):
    code, text, _ = run("corroborate", "--spec", specs / "bessel-3.json", "--out", tmp_path, "--n-paths", 1000,
                        "--horizon", 10.0, "--dt", 0.01)
    assert code == EXIT_OK
    assert "TransientByScale" in text
    rec = json.loads((tmp_path / "bessel-3.corroboration.json").read_text())
    assert rec["corroboration"]["status"] == "consistent with transience flag"
    assert rec["corroboration"]["scale_probability"] == pytest.approx(0.5)
    assert "corroboration, not verification" in rec["corroboration"]["caveat"]


# ---- fixtures -------------------------------------------------------------

def test_fixtures_regenerate_byte_identically(tmp_path):
    assert run("fixtures", "--out", tmp_path)[0] == EXIT_OK
    for name in bundled_specs():
        assert (tmp_path / f"{name}.json").read_text(encoding="utf-8") == fixture_text(name)


def test_bundled_fixtures_are_current():
    code, text, _ = run("fixtures", "--check")
    assert code == EXIT_OK
    assert "up to date" in text
