"""CLI"""

import json
import logging
import math
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
import numpy as np

from .catalog import (
    ENTRIES,
    CatalogEntry,
    derived_identity_checks,
    fe312_bound_check,
    residual_check,
    structure_checks,
    symmetry_check,
    thm31,
    thm32,
    verify_specialization,
)
from .dsl import SpecError, export_entry, parse_spec
from .engine import (
    CapacityError,
    IterationLimit,
    LimitEvaluator,
    NotContractive,
    delta_rate,
    eigenfactor,
    limit_value,
    mu_star_series,
    transported_rate,
    uniqueness_probe,
    verify_stability,
)
from .feqtypes import BoundSpec, CheckResult, OperatorSpec, PairPoint
from .perturb import (
    audit_admissibility,
    audit_fe34,
    default_core,
    fe31_margin_search,
    make_grid,
    make_perturbed_model,
    make_quadruples,
    random_vectors,
)
from .report import GridError, StabilityReport, bound_table, read_grid, write_report
from .util import (
    DEFAULT_DEPTH_CAP,
    DEFAULT_ETA,
    DEFAULT_GRID_BOX,
    DEFAULT_GRID_COUNT,
    DEFAULT_MAX_ITER,
    DEFAULT_SEED,
    DEFAULT_TOL,
    LOGGER_NAME,
    RESIDUAL_PER_TOL,
    TELESCOPE_SLACK,
    __app_name__,
    __version__,
    sweep_values,
)

logger = logging.getLogger(LOGGER_NAME)


EXIT_OK, EXIT_FAIL, EXIT_NOT_CONTRACTIVE, EXIT_INADMISSIBLE, EXIT_PARSE = 0, 1, 2, 3, 4

UNIQUENESS_POINTS = 50
STRUCTURE_SAMPLES = 50
SPECIALIZATION_SAMPLES = 100
FE312_QUADRUPLES = 200

SWEEP_DEFAULTS = {"thm31": (3.0, 5.0, 0.5), "thm32": (2.5, 4.0, 0.5)}


def model_options(func):
    """perturbation, grid and engine options shared by demo, run and check"""
    options = [
        click.option(
            "--eta",
            type=click.FloatRange(0, 1),
            default=DEFAULT_ETA,
            help="Perturbation amplitude as a fraction of the admissible envelope.",
        ),
        click.option("--seed", type=int, default=DEFAULT_SEED, help="Perturbation seed."),
        click.option(
            "--tol",
            type=click.FloatRange(min=0, min_open=True),
            default=DEFAULT_TOL,
            help="Limit extraction tolerance.",
        ),
        click.option(
            "--grid-box",
            type=click.FloatRange(min=0, min_open=True),
            default=DEFAULT_GRID_BOX,
            help="Grid coordinates lie in [-box, box].",
        ),
        click.option(
            "--grid-count",
            type=click.IntRange(min=0),
            default=DEFAULT_GRID_COUNT,
            help="Number of low-discrepancy grid points (axis points and origin added).",
        ),
        click.option(
            "--grid-file",
            type=click.Path(exists=True, dir_okay=False),
            help="Whitespace-separated grid file; overrides --grid-count.",
        ),
        click.option("--max-iter", type=click.IntRange(min=1), default=DEFAULT_MAX_ITER),
        click.option(
            "--depth-cap",
            type=click.IntRange(min=0),
            default=DEFAULT_DEPTH_CAP,
            help="Largest operator power for non-commuting maps.",
        ),
        click.option("--dim", type=click.IntRange(min=1), default=1, help="Slot dimension d."),
        click.option(
            "--codim", type=click.IntRange(min=1), default=1, help="Codomain dimension m."
        ),
        click.option(
            "--audit-symmetry",
            is_flag=True,
            default=False,
            help="Also audit f(x, y) = f(y, x).",
        ),
        click.option(
            "-o",
            "--out",
            type=click.Path(dir_okay=False),
            help="Report path (.json); the convergence CSV is written beside it.",
        ),
    ]
    for option in reversed(options):
        func = option(func)

    return func


def entry_options(func):
    options = [
        click.option("--p", "p", type=float, default=4.0, help="thm31 exponent p."),
        click.option("--r", "r", type=float, default=3.0, help="thm32 exponent r."),
        click.option("--rho", type=float, default=0.2, help="thm32 rho, |rho| < 1."),
        click.option("--a", "a", type=float, default=1.0, help="thm32 parameter a, nonzero."),
    ]
    for option in reversed(options):
        func = option(func)

    return func


def build_entry(name: str, p: float, r: float, rho: float, a: float) -> CatalogEntry:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return thm31(p) if name == "thm31" else thm32(r, rho, a)
    except ValueError as error:
        hint = "--p" if name == "thm31" else "--r/--rho/--a"
        raise click.BadParameter(str(error), param_hint=hint)


def load_grid(options: Dict) -> List[PairPoint]:
    if options["grid_file"]:
        try:
            return read_grid(options["grid_file"], options["dim"])
        except GridError as error:
            raise click.BadParameter(str(error), param_hint="--grid-file")
    return make_grid(options["grid_count"], options["grid_box"], options["dim"])


def warn(message: str):
    click.secho(f"Warning: {message}", fg="yellow", err=True)


@contextmanager
def recorded_warnings(report: StabilityReport):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        yield
    for item in caught:
        message = str(item.message)
        if message not in report.warnings:
            report.warnings.append(message)
            warn(message)


def new_report(command: str, options: Dict, notes: Sequence[str]) -> StabilityReport:
    metadata = {"command": command, "parameters": {k: v for k, v in sorted(options.items())}}
    return StabilityReport(metadata=metadata, warnings=list(notes))


def stop(report: StabilityReport, status: str, code: int, message: str) -> StabilityReport:
    report.status, report.exit_code = status, code
    report.warnings.append(message)
    warn(message)

    return report


def pipeline(
    report: StabilityReport,
    spec: OperatorSpec,
    bound: BoundSpec,
    options: Dict,
    probe: PairPoint,
    entry: Optional[CatalogEntry] = None,
) -> StabilityReport:
    """admissibility, limit extraction, stability, uniqueness and structure checks"""
    tol, seed, eta = options["tol"], options["seed"], options["eta"]
    max_iter, depth_cap = options["max_iter"], options["depth_cap"]
    c = eigenfactor(spec, bound)
    report.eigenfactor = c
    report.metadata["eigenfactor_source"] = "absent" if c is None else "closed-form"
    if c is not None and c >= 1:
        return stop(report, "not-contractive", EXIT_NOT_CONTRACTIVE, f"eigenfactor {c:.10g} >= 1")

    core = default_core(options["dim"], options["codim"])
    grid = load_grid(options)
    try:
        model = make_perturbed_model(core, bound, spec, eta, seed, require_margin=False)
        twin = make_perturbed_model(core, bound, spec, eta, seed + 1, require_margin=False)
    except ValueError as error:
        return stop(report, "inadmissible", EXIT_INADMISSIBLE, str(error))

    params = dict(entry.params) if entry else {}
    admissibility = audit_admissibility(model, spec, bound, grid, seed, params)
    report.admissibility = admissibility.to_dict()
    report.checks.append(admissibility.as_check())
    if admissibility.verdict == "FAIL":
        report.checks.append(CheckResult("stability", "SKIPPED"))
        return stop(report, "inadmissible", EXIT_INADMISSIBLE, "admissibility audit failed")

    try:
        series = mu_star_series(spec, bound, probe, tol, max_iter, depth_cap)
        report.probe = {
            "point": probe.to_lists(),
            "mu": bound(probe),
            "mu_star": series.value,
            "empirical": series.empirical,
        }
        _, trace = limit_value(spec, model, bound, probe, tol, max_iter, depth_cap)
        report.convergence = [list(row) for row in trace.rows()]
        report.stop_reason = trace.stop_reason
        report.measured_rate = delta_rate(trace)
        report.transported_rate = transported_rate(spec, bound, probe, depth_cap=depth_cap)
        report.checks.append(telescoping_check(report.convergence))

        evaluator = LimitEvaluator(spec, model, bound, tol, max_iter, depth_cap)
        for q in grid:
            point_series = mu_star_series(spec, bound, q, tol, max_iter, depth_cap)
            report.mu_star_table.append(
                {
                    "point": q.to_lists(),
                    "mu": bound(q),
                    "mu_star": point_series.value,
                    "empirical": point_series.empirical,
                }
            )
        report.checks.append(verify_stability(spec, model, bound, grid, tol, evaluator))
        report.checks.append(
            uniqueness_probe(
                spec, model, twin, bound, grid[:UNIQUENESS_POINTS], tol, evaluator=evaluator
            )
        )
        report.checks.extend(limit_checks(evaluator, model, options, entry))
    except NotContractive as error:
        report.metadata["measured_factor"] = error.factor
        if error.trace is not None:
            report.convergence = [list(row) for row in error.trace.rows()]
            report.stop_reason = error.trace.stop_reason
        return stop(report, "not-contractive", EXIT_NOT_CONTRACTIVE, str(error))
    except IterationLimit as error:
        report.stop_reason = "max-iter"
        report.metadata["tail_bound"] = error.tail_bound
        return stop(report, "max-iter", EXIT_FAIL, str(error))
    except CapacityError as error:
        return stop(report, "capacity", EXIT_FAIL, str(error))

    report.exit_code = EXIT_OK if report.passed else EXIT_FAIL
    report.status = "ok" if report.passed else "fail"

    return report


def telescoping_check(rows: Sequence[Sequence[float]]) -> CheckResult:
    """delta_n <= lambda_n + slack on every convergence row"""
    worst, witness = -math.inf, None
    for n, delta, lam, _ in rows:
        if delta - lam > worst:
            worst, witness = delta - lam, n
    failed = worst > TELESCOPE_SLACK

    return CheckResult(
        name="telescoping",
        verdict="FAIL" if failed else "PASS",
        worst=max(worst, 0.0),
        witness=[witness] if failed else None,
        metrics={"rows": len(rows)},
    )


def limit_checks(evaluator, model, options: Dict, entry: Optional[CatalogEntry]):
    """structure of K, plus entry-specific checks on f"""
    dim, seed, threshold = options["dim"], options["seed"], RESIDUAL_PER_TOL * options["tol"]
    box = options["grid_box"] / 2
    rng = np.random.default_rng(seed)
    triples = random_vectors(STRUCTURE_SAMPLES, 3, box, dim, rng)
    quads = random_vectors(STRUCTURE_SAMPLES, 4, box, dim, rng)
    checks = list(structure_checks(evaluator, triples, quads, threshold))

    if entry is not None and entry.name == "thm31":
        pairs = random_vectors(SPECIALIZATION_SAMPLES, 2, options["grid_box"], dim, rng)
        checks.append(
            residual_check(
                "specialization", lambda X, Y: verify_specialization(model, X, Y), pairs, 1e-12
            )
        )
    if entry is not None and entry.name == "thm32":
        big = make_quadruples(FE312_QUADRUPLES, options["grid_box"], dim, seed)
        checks.append(fe312_bound_check(model, entry.params["r"], big))
        checks.extend(derived_identity_checks(evaluator, triples, entry.params["a"], threshold))
    if options["audit_symmetry"]:
        pairs = random_vectors(STRUCTURE_SAMPLES, 2, options["grid_box"], dim, rng)
        checks.append(symmetry_check(model, pairs, threshold))

    return checks


def finish(report: StabilityReport, out: Optional[str]):
    report.stamp()
    if out:
        try:
            write_report(report, out)
        except OSError as error:
            raise click.FileError(out, hint=str(error))
        for result in report.checks:
            click.echo(f"{result.name}: {result.verdict}")
        click.echo(f"status: {report.status}")
    else:
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))

    sys.exit(report.exit_code)


@click.command(name="demo", help="End-to-end stability run of a catalog entry.")
@click.argument("name", type=click.Choice(sorted(ENTRIES)))
@entry_options
@model_options
def demo(name, p, r, rho, a, **options):
    entry = build_entry(name, p, r, rho, a)
    options.update({"p": p} if name == "thm31" else {"r": r, "rho": rho, "a": a})
    report = new_report(f"demo {name}", options, entry.notes)
    report.metadata["series_constant"] = entry.series_constant
    report.metadata["stated_constant"] = entry.stated_constant
    report.metadata["discrepancy"] = entry.discrepancy
    for note in entry.notes:
        warn(note)
    with recorded_warnings(report):
        pipeline(report, entry.spec, entry.bound, options, entry.probe_point(options["dim"]), entry)

    finish(report, options["out"])


def load_spec(spec_file: str):
    text = Path(spec_file).read_text(encoding="utf-8")
    try:
        return parse_spec(text)
    except SpecError as error:
        click.secho(f"{spec_file}:{error}", fg="red", err=True)
        sys.exit(EXIT_PARSE)


@click.command(name="run", help="Stability run of a user .feq spec.")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@model_options
def run(spec_file, **options):
    document = load_spec(spec_file)
    options.update({"spec_file": str(spec_file)})
    report = new_report("run", options, [])
    report.metadata["spec_params"] = document.param_dict
    axis = [document.param_dict.get("probe", 1)] + [0] * (options["dim"] - 1)
    probe = PairPoint(axis, axis)
    with recorded_warnings(report):
        pipeline(report, document.operator, document.bound, options, probe)

    finish(report, options["out"])


@click.command(name="check", help="Admissibility and four-point audits only.")
@click.argument("target")
@entry_options
@model_options
def check(target, p, r, rho, a, **options):
    entry = None
    if target in ENTRIES:
        entry = build_entry(target, p, r, rho, a)
        spec, bound, notes = entry.spec, entry.bound, entry.notes
        options.update({"p": p} if target == "thm31" else {"r": r, "rho": rho, "a": a})
    elif Path(target).is_file():
        document = load_spec(target)
        spec, bound, notes = document.operator, document.bound, ()
    else:
        raise click.BadParameter(
            f"expected one of {sorted(ENTRIES)} or a .feq file", param_hint="TARGET"
        )
    report = new_report(f"check {target}", options, notes)
    report.eigenfactor = eigenfactor(spec, bound)
    core = default_core(options["dim"], options["codim"])
    seed = options["seed"]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = make_perturbed_model(
                core, bound, spec, options["eta"], seed, require_margin=False
            )
    except ValueError as error:
        stop(report, "inadmissible", EXIT_INADMISSIBLE, str(error))
        finish(report, options["out"])
    with recorded_warnings(report):
        admissibility = audit_admissibility(model, spec, bound, load_grid(options), seed)
        report.admissibility = admissibility.to_dict()
        report.checks.append(admissibility.as_check())
        quads = make_quadruples(
            FE312_QUADRUPLES, options["grid_box"], options["dim"], seed, zero_slots=True
        )
        if entry is not None and entry.name == "thm31":
            eta, four_point = fe31_margin_search(core, bound, spec, p, quads, seed)
            report.metadata["four_point_eta"] = eta
            report.checks.append(four_point.as_check())
        elif entry is not None:
            report.checks.append(audit_fe34(model, a, rho, r, quads, seed).as_check())
        if options["audit_symmetry"]:
            rng = np.random.default_rng(seed)
            pairs = random_vectors(
                STRUCTURE_SAMPLES, 2, options["grid_box"], options["dim"], rng
            )
            report.checks.append(
                symmetry_check(model, pairs, RESIDUAL_PER_TOL * options["tol"])
            )
    failed = not report.passed
    report.status = "inadmissible" if failed else "ok"
    report.exit_code = EXIT_INADMISSIBLE if failed else EXIT_OK

    finish(report, options["out"])


@click.command(name="bound", help="Sweep a catalog parameter; CSV of factors and constants.")
@click.argument("target")
@click.option("--from", "start", type=float, help="First swept value (p or r).")
@click.option("--to", "stop_", type=float, help="Last swept value, inclusive.")
@click.option("--step", type=click.FloatRange(min=0, min_open=True), help="Sweep step.")
@click.option("--rho", type=float, default=0.2, help="thm32 rho for every row.")
@click.option("--a", "a", type=float, default=1.0, help="thm32 parameter a.")
def bound_cli(target, start, stop_, step, rho, a):
    rows = []
    if target in ENTRIES:
        default_start, default_stop, default_step = SWEEP_DEFAULTS[target]
        values = sweep_values(
            default_start if start is None else start,
            default_stop if stop_ is None else stop_,
            default_step if step is None else step,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for value in values:
                try:
                    entry = thm31(value) if target == "thm31" else thm32(value, rho, a)
                except ValueError as error:
                    raise click.BadParameter(str(error), param_hint="--from/--to")
                rows.append(
                    {
                        "param": value,
                        "eigenfactor": entry.factor,
                        "series_constant": entry.series_constant,
                        "stated_constant": entry.stated_constant,
                        "discrepancy": entry.discrepancy,
                    }
                )
    elif Path(target).is_file():
        document = load_spec(target)
        c = eigenfactor(document.operator, document.bound)
        params = document.param_dict
        rows.append(
            {
                "param": next((v for k, v in params.items() if k != "probe"), 0),
                "eigenfactor": c,
                "series_constant": None if c is None else (1 / (1 - c) if c < 1 else math.inf),
                "stated_constant": None,
                "discrepancy": False,
            }
        )
    else:
        raise click.BadParameter(
            f"expected one of {sorted(ENTRIES)} or a .feq file", param_hint="TARGET"
        )

    click.echo(bound_table(rows), nl=False)


@click.command(name="export-spec", help="Write a catalog entry as a .feq spec.")
@click.argument("name", type=click.Choice(sorted(ENTRIES)))
@entry_options
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Output path.")
def export_spec(name, p, r, rho, a, out):
    text = export_entry(build_entry(name, p, r, rho, a))
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(version=__version__, prog_name=__app_name__)
@click.option("-v", "--verbose", is_flag=True, default=False, help="Debug logging.")
def cli(verbose):
    if verbose:
        logging.basicConfig(level=logging.DEBUG)


cli.add_command(demo)
cli.add_command(run)
cli.add_command(check)
cli.add_command(bound_cli)
cli.add_command(export_spec)


if __name__ == "__main__":
    cli()  # pragma: no cover
