import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer
from pydantic import ValidationError

from stability import orchestration
from stability.reports import OutputFormat, write_frame, write_json
from swingcert.cli.print_table import print_df, print_table_from_dicts
from swingcert.main import settings
from swingcert.ui import print_error, print_success
from swinglib.certificate import Verdict
from swinglib.dynamics import SimOptions
from swinglib.equilibrium import PowerFlowOptions
from swinglib.errors import (
    AssumptionViolationError,
    CaseParseError,
    CaseValidationError,
    InvalidParameterError,
    PowerFlowError,
    SwingLibError,
)
from swinglib.linearization import EigenOptions

app = typer.Typer(help="Small-signal stability assessment of swing-equation networks")

logger = logging.getLogger(__name__)

MODAL_EPS = [1e-3, 1e-4]
SWEEP_EPS = 1e-3
SIMULATE_EPS = [1e-2, 2e-3]


@dataclass(frozen=True)
class RunOptions:
    case: orchestration.CaseSettings
    eps: list[float] | None
    out: Path
    fmt: OutputFormat
    seed: int

    def eps_or(self, default: list[float]) -> list[float]:
        return list(self.eps) if self.eps else list(default)


@contextmanager
def exit_codes() -> Iterator[None]:
    """Maps library errors to exit codes: 2 input, 3 power flow, 4 line-angle condition, 1 anything else."""
    try:
        yield
    except (CaseParseError, CaseValidationError, InvalidParameterError, ValidationError) as e:
        print_error(str(e))
        raise typer.Exit(code=2) from e
    except PowerFlowError as e:
        print_error(str(e))
        raise typer.Exit(code=3) from e
    except AssumptionViolationError as e:
        print_error(str(e))
        raise typer.Exit(code=4) from e
    except SwingLibError as e:
        logger.exception(e)
        print_error(str(e))
        raise typer.Exit(code=1) from e


def _positive(values: list[float] | None, option: str) -> list[float] | None:
    for value in values or []:
        if not value > 0:
            raise typer.BadParameter(f"must be positive, got {value}", param_hint=option)
    return values


@app.callback()
def setup(
    ctx: typer.Context,
    case: str = typer.Option("wscc9", "--case", help="Bundled case name (two_bus, wscc9) or case-file path"),
    augment_internal: bool = typer.Option(False, "--augment-internal", help="Move machines to internal buses"),
    xdprime: Optional[List[float]] = typer.Option(None, "--xdprime", help="Transient reactance, once per generator"),
    eps: Optional[List[float]] = typer.Option(None, "--eps", help="Load inertia of the perturbed model, repeatable"),
    out: Path = typer.Option(settings.output_dir, "--out", help="Output directory"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="Table output format"),
    seed: int = typer.Option(settings.seed, "--seed", help="Seed of randomized experiments"),
):
    ctx.obj = RunOptions(
        case=orchestration.CaseSettings(
            case=case,
            augment_internal=augment_internal,
            xdprime=tuple(_positive(xdprime, "--xdprime") or ()),
            pf=PowerFlowOptions(tol=settings.pf_tol, max_iter=settings.pf_max_iter),
            assumption_slack=settings.assumption_slack,
            eigen=EigenOptions(max_dim=settings.eig_max_dim, zero_rtol=settings.zero_mode_rtol),
        ),
        eps=_positive(eps, "--eps"),
        out=out,
        fmt=fmt,
        seed=seed,
    )


@app.command()
def assess(ctx: typer.Context):
    """Evaluates the per-generator certificate at the equilibrium.

    Exits 1 unless every generator passes, 4 when the line-angle condition leaves the certificate inapplicable.
    """
    opts: RunOptions = ctx.obj
    with exit_codes():
        prepared = orchestration.prepare(opts.case)
        assessment = orchestration.assess(prepared, opts.case.assumption_slack)

    write_json(assessment.payload(), opts.out, "assess")
    write_frame(assessment.certificate_frame(), opts.out, "certificate", opts.fmt)
    write_frame(assessment.assumption_frame(), opts.out, "assumption", opts.fmt)
    write_frame(assessment.flows_frame(), opts.out, "line_flows", opts.fmt)
    write_frame(assessment.margins_frame(), opts.out, "margins", opts.fmt)

    print_table_from_dicts(
        f"Certificate {prepared.case.name}",
        [
            {"bus": g.name, "Q_i": g.Q, "B_ii": g.B_ii, "C_i": g.C, "thm1": g.theorem1_pass, "cor1": g.corollary1_pass}
            for g in assessment.report.generators
        ],
    )
    print_df(assessment.assumption_frame(), title="Line angles")

    verdict = assessment.report.theorem1_verdict
    summary = f"certificate {verdict}, average C {assessment.report.average_C:.4g}"
    if verdict is Verdict.INAPPLICABLE:
        print_error(f"{summary}, line-angle condition fails")
        raise typer.Exit(code=4)
    if not assessment.passed:
        print_error(summary)
        raise typer.Exit(code=1)
    print_success(summary)


@app.command("check-assumption")
def check_assumption(
    ctx: typer.Context,
    margin: Optional[float] = typer.Option(None, "--margin", help="Test |delta_i - delta_j| < margin instead"),
):
    """Writes the line-angle table; exits 4 when a line leaves (0, pi)."""
    opts: RunOptions = ctx.obj
    with exit_codes():
        prepared = orchestration.prepare(opts.case)
        report = orchestration.check_assumption(prepared, opts.case.assumption_slack, margin)
        frame = report.to_frame(prepared.case.names)
        write_frame(frame, opts.out, "assumption", opts.fmt)
        print_df(frame, title="Line angles")
        if not report.passed:
            raise AssumptionViolationError(f"check_assumption: line-angle condition fails on {prepared.case.name}")
    print_success(f"all line angles inside (0, pi), minimum margin {report.min_margin:.4g} rad")


@app.command()
def modal(ctx: typer.Context):
    """K spectrum and J spectra per --eps (default 1e-3 and 1e-4) with the matching diagnostics."""
    opts: RunOptions = ctx.obj
    with exit_codes():
        prepared = orchestration.prepare(opts.case)
        result = orchestration.modal(prepared, opts.eps_or(MODAL_EPS), opts.case.eigen)

    write_json(result.payload(), opts.out, "modal")
    write_frame(result.frame(), opts.out, "eigenvalues", opts.fmt)
    write_frame(result.modes_frame(), opts.out, "modes", opts.fmt)
    print_table_from_dicts(
        f"Modal comparison {prepared.case.name}",
        [
            {
                "eps": run.eps,
                "max_distance": run.comparison.max_distance,
                "fast_modes": len(run.comparison.fast),
                "max_fast_rel_err": run.comparison.max_fast_rel_err,
                "mean_re": run.spectrum.mean_nonzero_real,
                "verdict": run.verdict.value,
            }
            for run in result.runs
        ],
    )
    print_success(f"K spectrum {result.K_verdict}, {result.K.dimension} eigenvalues")


@app.command()
def sweep(
    ctx: typer.Context,
    parameter: orchestration.SweepParameter = typer.Option(orchestration.SweepParameter.DAMPING, "--parameter"),
    values: Optional[List[float]] = typer.Option(None, "--value", help="Explicit multiplier, repeatable"),
    start: float = typer.Option(0.5, "--from"),
    stop: float = typer.Option(3.0, "--to"),
    points: int = typer.Option(20, "--points"),
):
    """Degree-of-stability sweep: average C against average Re(lambda) of J per multiplier."""
    opts: RunOptions = ctx.obj
    multipliers = values or np.linspace(start, stop, points).tolist()
    with exit_codes():
        spec = orchestration.SweepSpec(
            parameter=parameter,
            values=multipliers,
            eps=opts.eps_or([SWEEP_EPS])[0],
            case=str(opts.case.case),
        )
        rows = orchestration.run_sweep(spec, opts.case, settings.workers)

    frame = orchestration.sweep_frame(rows)
    write_frame(frame, opts.out, "sweep", opts.fmt)
    print_df(frame, title=f"{parameter} sweep")
    flagged = [row.multiplier for row in rows if row.status is not orchestration.SweepStatus.OK]
    if flagged:
        print_error(f"{len(flagged)} row(s) flagged: {flagged}")
    trend = orchestration.sweep_trend(rows)
    if trend is not None:
        print_success(f"Spearman correlation of avg C and avg Re(lambda): {trend:.4g}")


@app.command()
def simulate(
    ctx: typer.Context,
    horizon: float = typer.Option(10.0, "--horizon"),
    sample_dt: float = typer.Option(0.01, "--dt"),
    angle_offset: float = typer.Option(
        orchestration.DEFAULT_ANGLE_OFFSET, "--disturb", help="Offset added to every generator angle (rad)"
    ),
    delta: Optional[List[str]] = typer.Option(None, "--delta", help="Extra angle offset name=value"),
    omega: Optional[List[str]] = typer.Option(None, "--omega", help="Generator frequency offset name=value"),
):
    """Unperturbed run and one perturbed run per --eps (default 1e-2 and 2e-3) on a shared time grid."""
    opts: RunOptions = ctx.obj
    with exit_codes():
        disturbance = orchestration.Disturbance(
            generator_angles=angle_offset,
            delta=orchestration.parse_offsets(delta),
            omega=orchestration.parse_offsets(omega),
        )
        options = SimOptions(horizon=horizon, sample_dt=sample_dt, rtol=settings.sim_rtol, atol=settings.sim_atol)
        prepared = orchestration.prepare(opts.case)
        result = orchestration.simulate_models(prepared, opts.eps_or(SIMULATE_EPS), disturbance, options)

    for label, trajectory in result.trajectories.items():
        write_frame(trajectory.to_frame(prepared.case.names), opts.out, f"trajectory_{label}", opts.fmt)
    write_json(result.sidecar(), opts.out, "simulate")
    print_table_from_dicts(
        "Runs",
        [
            {
                "run": label,
                "method": trajectory.metadata["method"],
                "nfev": trajectory.metadata["nfev"],
                "divergence": result.divergence.get(label, 0.0),
            }
            for label, trajectory in result.trajectories.items()
        ],
    )
    print_success(f"{len(result.trajectories)} trajectories written to {opts.out}")


@app.command()
def monitor(
    ctx: typer.Context,
    measurements: Optional[Path] = typer.Option(None, "--measurements", help="CSV with columns t, bus, V, Q"),
    horizon: float = typer.Option(5.0, "--horizon", help="Synthesized stream length when no CSV is given"),
    sample_dt: float = typer.Option(0.1, "--dt"),
    angle_offset: float = typer.Option(orchestration.DEFAULT_ANGLE_OFFSET, "--disturb"),
):
    """Runs one agent per generator over a measurement stream, by default one synthesized from a simulation."""
    opts: RunOptions = ctx.obj
    with exit_codes():
        prepared = orchestration.prepare(opts.case)
        if measurements is None:
            options = SimOptions(horizon=horizon, sample_dt=sample_dt, rtol=settings.sim_rtol, atol=settings.sim_atol)
            disturbance = orchestration.Disturbance(generator_angles=angle_offset)
            frame = orchestration.synthesize_measurements(prepared, disturbance, options)
            write_frame(frame, opts.out, "measurements", opts.fmt)
        else:
            frame = orchestration.read_measurements(measurements)
        result = orchestration.monitor(prepared, frame, settings.workers)

    write_frame(result.to_frame(), opts.out, "monitor", opts.fmt)
    aggregate = orchestration.aggregate_frame(result)
    write_frame(aggregate, opts.out, "monitor_aggregate", opts.fmt)
    counts = aggregate["verdict"].value_counts().sort_index().to_dict()
    print_table_from_dicts("System verdicts", [{"verdict": k, "timestamps": v} for k, v in counts.items()])
    print_success(f"{len(result.verdicts)} agent verdicts over {len(aggregate)} timestamps")


@app.command()
def soundness(
    ctx: typer.Context,
    trials: int = typer.Option(1000, "--trials"),
):
    """Randomized check that certified cases always have a stable J spectrum (seeded with --seed)."""
    opts: RunOptions = ctx.obj
    eps = opts.eps_or([SWEEP_EPS])[0]
    with exit_codes():
        if trials < 1:
            raise InvalidParameterError(f"soundness: need at least one trial, got {trials}")
        summary, outcomes = orchestration.soundness(trials, opts.seed, eps, settings.workers)

    write_json(summary, opts.out, "soundness")
    write_frame(orchestration.outcomes_frame(outcomes), opts.out, "soundness_trials", opts.fmt)
    print_table_from_dicts("Soundness", [summary.model_dump(exclude={"counterexamples"})])
    if summary.counterexamples:
        print_error(f"certified but not stable: trials {summary.counterexamples}")
        raise typer.Exit(code=1)
    print_success(f"{summary.certified} certified case(s), none with an unstable spectrum")


@app.command()
def braess(
    ctx: typer.Context,
    line_from: Optional[str] = typer.Option(None, "--from", help="First bus of the line to duplicate"),
    line_to: Optional[str] = typer.Option(None, "--to", help="Second bus of the line to duplicate"),
    copies: int = typer.Option(1, "--copies"),
    search: bool = typer.Option(False, "--search", help="Look for a flipping line in random cases"),
):
    """Certificate change when a parallel copy of a line is added."""
    opts: RunOptions = ctx.obj
    with exit_codes():
        if search:
            found = orchestration.braess_search(opts.seed)
            if found is None:
                print_error(f"no verdict flip found with seed {opts.seed}")
                raise typer.Exit(code=1)
            case, impact = found
            case_name = case.name
        else:
            if line_from is None or line_to is None:
                raise InvalidParameterError("braess: give --from and --to, or --search")
            prepared = orchestration.prepare(opts.case)
            impact = orchestration.parallel_copy(prepared, line_from, line_to, copies)
            case_name = prepared.case.name

    payload = impact.model_dump(mode="json") | {
        "case": case_name,
        "theorem1_flipped": impact.theorem1_flipped,
        "corollary1_flipped": impact.corollary1_flipped,
    }
    write_json(payload, opts.out, "braess")
    write_frame(orchestration.impact_frame(impact), opts.out, "braess_generators", opts.fmt)
    print_df(orchestration.impact_frame(impact), title=f"Line {impact.line_from}-{impact.line_to} added to {case_name}")
    print_success(
        f"theorem {impact.verdict_before} -> {impact.verdict_after}, "
        f"corollary {impact.corollary1_before} -> {impact.corollary1_after}"
    )
