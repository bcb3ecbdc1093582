"""Command-line front end.

Commands::

    dirichlet-recurrence classify     --spec FILE [--out DIR] [--n-max N] [--tol X] [--enable-scale-probe]
    dirichlet-recurrence energy-trace --spec FILE [--out DIR] [--n-max N] [--tol X]
    dirichlet-recurrence simulate     --spec FILE [--out DIR] [--seed S] [--n-paths N] [--horizon T] [--dt H]
    dirichlet-recurrence corroborate  --spec FILE [--out DIR] [--seed S] ...
    dirichlet-recurrence fixtures     [--out DIR] [--check]

Exit status: 0 success, 2 bad spec or unreadable input, 3 numerical failure.
The output directory defaults to ``$DIRICHLET_RECURRENCE_OUT`` or the
current directory.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from pathlib import Path

from . import __version__
from .coeffmodel import ClassificationError, ProblemSpec, SingularPointError, drift_from_coefficients
from .expressions import NonFiniteEvaluation, SpecificationError
from .fixtures import bundled_specs, fixture_text
from .mcdiff import SimConfig, corroborate, estimate_from_batch, simulate_paths
from .quad import QuadratureError
from .recur1d import RecurrenceVerdict, _decomposition, classify_1d, energy_trace, sequence_an
from .recurnd import MultiVerdict, classify_multid
from .specio import load_spec

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_NUMERIC = 3
OUT_ENV = "DIRICHLET_RECURRENCE_OUT"
REPORT_FORMAT = "dirichlet-recurrence-report"

COMMANDS = ("classify", "energy-trace", "simulate", "corroborate", "fixtures")
ENERGY_COLUMNS = ("n", "a_n", "b_n", "closed_form_energy", "quadrature_energy")


@dataclasses.dataclass
class RunManifest:
    """One CLI invocation: command, input spec, output directory and overrides."""

    command: str
    spec_path: Path | None
    out_dir: Path
    overrides: dict = dataclasses.field(default_factory=dict)
    sim_overrides: dict = dataclasses.field(default_factory=dict)
    check: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.command != "fixtures" and self.spec_path is None:
            raise SpecificationError("--spec is required", "--spec")


def _stem(m: RunManifest, spec: ProblemSpec) -> str:
    return spec.name or m.spec_path.stem


def _load(m: RunManifest) -> ProblemSpec:
    try:
        spec = load_spec(m.spec_path)
    except OSError as e:
        raise SpecificationError(f"cannot read spec file: {e.strerror or e}", str(m.spec_path)) from None
    try:
        opts = spec.options.with_overrides(**m.overrides)
    except ValueError as e:
        raise SpecificationError(str(e), "options") from None
    return dataclasses.replace(spec, options=opts)


def _write(m: RunManifest, name: str, text: str) -> Path:
    m.out_dir.mkdir(parents=True, exist_ok=True)
    path = m.out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def classify_spec(spec: ProblemSpec) -> RecurrenceVerdict | MultiVerdict:
    return classify_multid(spec) if spec.is_multid else classify_1d(spec)


def make_report(spec: ProblemSpec, verdict) -> dict:
    return {"format": REPORT_FORMAT, "version": 1, "tool_version": __version__, "name": spec.name,
            "domain": spec.domain, "dim": spec.dim, "kind": verdict.kind, "multidimensional": spec.is_multid,
            "verdict": verdict.to_dict()}


def verdict_from_report(rec: dict) -> RecurrenceVerdict | MultiVerdict:
    if rec.get("format") != REPORT_FORMAT:
        raise ValueError("not a classification report")
    v = rec["verdict"]
    return MultiVerdict.from_dict(v) if rec.get("multidimensional") else RecurrenceVerdict.from_dict(v)


def _describe_verdict(v: RecurrenceVerdict, title: str) -> list[str]:
    lines = [f"{title}: {v.kind} ({v.label})"]
    if v.case_tag:
        lines.append(f"  case: {v.case_tag}")
    if v.criterion:
        lines.append(f"  criterion: {v.criterion}")
    for s in v.sequences:
        diag = s.verdict.kind if s.verdict is not None else "no diagnosis"
        lines.append(f"  {s.name} ({s.description}): last value {s.values[-1]:.6g} at n={s.n[-1]}; {diag}")
        if s.verdict is not None and s.verdict.reason:
            lines.append(f"    {s.verdict.reason}")
    for f in v.flags:
        lines.append(f"  flag: {f}")
    for r in v.reasons:
        lines.append(f"  reason: {r}")
    for a in v.assumptions:
        lines.append(f"  assumption: {a}")
    return lines


def summary_text(spec: ProblemSpec, verdict) -> str:
    lines = [f"spec: {spec.name or '(unnamed)'}  domain: {spec.domain}" + (f" d={spec.dim}" if spec.is_multid else "")]
    lines.append(f"verdict: {verdict.kind}")
    if isinstance(verdict, MultiVerdict):
        lines += _describe_verdict(verdict.radial, "radial criterion")
        if verdict.envelope is not None:
            lines += _describe_verdict(verdict.envelope, "envelope criterion")
    else:
        lines += _describe_verdict(verdict, "evidence")
    return "\n".join(lines) + "\n"


def cmd_classify(m: RunManifest, stdout=sys.stdout) -> int:
    spec = _load(m)
    verdict = classify_spec(spec)
    stem = _stem(m, spec)
    report = _write(m, f"{stem}.report.json", _json(make_report(spec, verdict)))
    text = summary_text(spec, verdict)
    _write(m, f"{stem}.summary.txt", text)
    stdout.write(text)
    stdout.write(f"report: {report}\n")
    return EXIT_OK


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def energy_rows(spec: ProblemSpec) -> list[tuple]:
    if spec.is_multid:
        raise SpecificationError("energy-trace needs a one-dimensional spec", "domain")
    opt = spec.options
    dec = _decomposition(spec, opt)
    seqs = {s.name: s for s in sequence_an(spec, dec, opt.n_max, opt.tol, opt)}
    rows = energy_trace(spec, dec, opt.n_max, min(opt.tol, 1e-10))
    out = []
    for i, r in enumerate(rows):
        a = seqs["a_n"].values[i] if "a_n" in seqs else None
        b = seqs["b_n"].values[i] if "b_n" in seqs else None
        out.append((r.n, a, b, r.closed_form, r.quadrature))
    return out


def energy_csv(rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ENERGY_COLUMNS)
    for n, a, b, cf, q in rows:
        w.writerow([n, _fmt(a), _fmt(b), _fmt(cf), _fmt(q)])
    return buf.getvalue()


def cmd_energy_trace(m: RunManifest, stdout=sys.stdout) -> int:
    spec = _load(m)
    path = _write(m, f"{_stem(m, spec)}.energy.csv", energy_csv(energy_rows(spec)))
    stdout.write(f"energy trace: {path}\n")
    return EXIT_OK


def _sim_config(m: RunManifest, spec: ProblemSpec) -> SimConfig:
    if spec.is_multid:
        raise SpecificationError("simulation is one-dimensional only", "domain")
    try:
        return SimConfig.from_spec(spec, **m.sim_overrides)
    except (TypeError, ValueError) as e:
        raise SpecificationError(str(e), "simulation") from None


def _simulate(m: RunManifest, spec: ProblemSpec, cfg: SimConfig):
    field_ = drift_from_coefficients(spec)
    batch = simulate_paths(field_, cfg)
    est = estimate_from_batch(batch)
    stem = _stem(m, spec)
    _write(m, f"{stem}.paths.csv", batch.to_csv())
    _write(m, f"{stem}.simulation.json", _json(est.to_dict()))
    return field_, est


def cmd_simulate(m: RunManifest, stdout=sys.stdout) -> int:
    spec = _load(m)
    cfg = _sim_config(m, spec)
    _, est = _simulate(m, spec, cfg)
    stdout.write(f"return_probability: {est.return_probability!r} +/- {est.ci_halfwidth!r}\n")
    stdout.write(f"mean_occupation: {est.mean_occupation!r}\n")
    stdout.write(f"note: {est.excursion_note}\n")
    return EXIT_OK


def cmd_corroborate(m: RunManifest, stdout=sys.stdout) -> int:
    spec = _load(m)
    cfg = _sim_config(m, spec)
    spec = dataclasses.replace(spec, options=spec.options.with_overrides(enable_scale_probe=True))
    verdict = classify_1d(spec)
    field_, est = _simulate(m, spec, cfg)
    rep = corroborate(verdict, field_, cfg, spec=spec, estimate=est)
    out = {"verdict": verdict.to_dict(), "corroboration": rep.to_dict()}
    _write(m, f"{_stem(m, spec)}.corroboration.json", _json(out))
    stdout.write(f"verdict: {verdict.kind}" + (f" [{', '.join(verdict.flags)}]" if verdict.flags else "") + "\n")
    stdout.write(f"return_probability: {est.return_probability!r} +/- {est.ci_halfwidth!r}\n")
    stdout.write(f"status: {rep.status} (expected {rep.expectation})\n")
    stdout.write(f"caveat: {rep.caveat}\n")
    return EXIT_OK


def cmd_fixtures(m: RunManifest, stdout=sys.stdout) -> int:
    specs = bundled_specs()
    if m.check:
        from importlib import resources
        base = resources.files(__package__) / "fixtures"
        stale = [n for n in specs if not (base / f"{n}.json").is_file()
                 or (base / f"{n}.json").read_bytes() != fixture_text(n).encode("utf-8")]
        for n in stale:
            stdout.write(f"stale: {n}.json\n")
        stdout.write(f"{len(specs) - len(stale)}/{len(specs)} bundled fixtures up to date\n")
        return EXIT_OK if not stale else EXIT_SPEC
    m.out_dir.mkdir(parents=True, exist_ok=True)
    for n in specs:
        (m.out_dir / f"{n}.json").write_bytes(fixture_text(n).encode("utf-8"))
    stdout.write(f"wrote {len(specs)} fixtures to {m.out_dir}\n")
    return EXIT_OK


_HANDLERS = {"classify": cmd_classify, "energy-trace": cmd_energy_trace, "simulate": cmd_simulate,
             "corroborate": cmd_corroborate, "fixtures": cmd_fixtures}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dirichlet-recurrence",
                                description="Recurrence tests for gradient-type Dirichlet forms.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")
    numeric = argparse.ArgumentParser(add_help=False)
    numeric.add_argument("--spec", type=Path, required=True, help="problem spec file (JSON)")
    numeric.add_argument("--n-max", type=int, default=None, help="number of sequence terms")
    numeric.add_argument("--tol", type=float, default=None, help="quadrature tolerance")
    numeric.add_argument("--enable-scale-probe", action="store_true", help="flag TransientByScale when applicable")
    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--n-paths", type=int, default=None)
    sim.add_argument("--horizon", type=float, default=None)
    sim.add_argument("--dt", type=float, default=None)
    sub.add_parser("classify", parents=[common, numeric], help="classify recurrence and write a report")
    sub.add_parser("energy-trace", parents=[common, numeric], help="write the energy trace CSV")
    sub.add_parser("simulate", parents=[common, numeric, sim], help="simulate the associated diffusion")
    sub.add_parser("corroborate", parents=[common, numeric, sim], help="compare a verdict with simulation")
    fx = sub.add_parser("fixtures", parents=[common], help="regenerate the bundled example specs")
    fx.add_argument("--check", action="store_true", help="verify the bundled files instead of writing")
    return p


def manifest_from_args(ns: argparse.Namespace, env=os.environ) -> RunManifest:
    out = ns.out if ns.out is not None else Path(env.get(OUT_ENV, "."))
    overrides, sim = {}, {}
    if ns.command != "fixtures":
        overrides = {"n_max": ns.n_max, "tol": ns.tol, "enable_scale_probe": True if ns.enable_scale_probe else None}
    if ns.command in ("simulate", "corroborate"):
        sim = {"seed": ns.seed, "n_paths": ns.n_paths, "horizon": ns.horizon, "dt": ns.dt}
    return RunManifest(ns.command, getattr(ns, "spec", None), out, overrides, sim, getattr(ns, "check", False))


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ns = build_parser().parse_args(argv)
    try:
        m = manifest_from_args(ns)
        return _HANDLERS[m.command](m, stdout=stdout)
    except SpecificationError as e:
        stderr.write(f"error: spec: {e}\n")
        return EXIT_SPEC
    except (ClassificationError, QuadratureError, NonFiniteEvaluation, SingularPointError,
            ValueError, ArithmeticError) as e:
        stderr.write(f"error: numerical failure: {e}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
