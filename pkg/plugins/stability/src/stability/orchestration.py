import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import StrEnum
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, PositiveFloat
from scipy.stats import spearmanr

from swingcert.cli.progress import DisplayProgress, track_unknown
from swinglib.cases import resolve_case_path
from swinglib.certificate import (
    BraessImpact,
    CertificateReport,
    MonitorResult,
    ParameterMargin,
    SoundnessOutcome,
    SoundnessSummary,
    assess_corollary1,
    assess_theorem1,
    constants_from_report,
    distributed_assess,
    find_braess_flip,
    iter_soundness,
    line_addition_impact,
    parameter_margins,
    streams_from_frame,
    summarize_soundness,
)
from swinglib.dynamics import Model, SimOptions, Trajectory, initial_state, simulate, trajectory_divergence
from swinglib.equilibrium import (
    AssumptionReport,
    EquilibriumPoint,
    LineFlow,
    PowerFlowOptions,
    active_power_injection,
    check_assumption1,
    line_flows,
    reactive_power_injection,
    solve_equilibrium,
    with_slack,
)
from swinglib.errors import CaseParseError, EigenSolverError, InvalidParameterError, PowerFlowError
from swinglib.linearization import (
    EigenOptions,
    ModalComparison,
    SpectrumReport,
    StabilityVerdict,
    eigenvalues,
    flow_jacobian,
    mode_table,
    modal_compare,
    stability_verdict,
    system_jacobian,
)
from swinglib.netmodel import (
    AdmittanceMatrix,
    NetworkCase,
    augment_internal_buses,
    build_admittance,
    read_case,
    scale_case,
)
from stability.reports import complex_pairs

logger = logging.getLogger(__name__)

DEFAULT_ANGLE_OFFSET = 0.1
MEASUREMENT_COLUMNS = ("t", "bus", "V", "Q")


@dataclass(frozen=True)
class CaseSettings:
    """Everything needed to turn a case argument into a solved operating point."""

    case: str | Path = "wscc9"
    augment_internal: bool = False
    xdprime: tuple[float, ...] = ()
    pf: PowerFlowOptions = field(default_factory=PowerFlowOptions)
    assumption_slack: float = 1e-9
    eigen: EigenOptions = field(default_factory=EigenOptions)


@dataclass(frozen=True, eq=False)
class Prepared:
    """Case with the reference generator's P_m set to the solved slack, its Y-bus and equilibrium."""

    case: NetworkCase
    Y: AdmittanceMatrix
    eq: EquilibriumPoint


def _bus_index(case: NetworkCase, name: str) -> int:
    try:
        return case.index_of(name)
    except KeyError:
        raise InvalidParameterError(f"unknown bus {name!r}, case has {list(case.names)}") from None


def load_network(settings: CaseSettings) -> NetworkCase:
    """Reads the case (bundled name or path), optionally moving machines behind their transient reactances.
    Internal voltages are sized from the terminal P and Q of the original case's equilibrium."""
    case = read_case(resolve_case_path(settings.case))
    if not settings.augment_internal:
        return case
    if len(settings.xdprime) != case.n0:
        raise InvalidParameterError(
            f"load_network: --augment-internal needs {case.n0} --xdprime values, got {len(settings.xdprime)}"
        )
    Y = build_admittance(case)
    eq = solve_equilibrium(case, Y, options=settings.pf)
    terminal = (
        active_power_injection(case, Y, eq.delta)[: case.n0],
        reactive_power_injection(case, Y, eq.delta)[: case.n0],
    )
    return augment_internal_buses(case, settings.xdprime, terminal_injections=terminal)


def prepare_case(case: NetworkCase, settings: CaseSettings) -> Prepared:
    Y = build_admittance(case)
    eq = solve_equilibrium(case, Y, options=settings.pf)
    return Prepared(with_slack(case, eq), Y, eq)


def prepare(settings: CaseSettings) -> Prepared:
    return prepare_case(load_network(settings), settings)


def equilibrium_frame(prepared: Prepared) -> pd.DataFrame:
    case, Y, eq = prepared.case, prepared.Y, prepared.eq
    return pd.DataFrame(
        {
            "bus": case.names,
            "kind": [bus.kind.value for bus in case.buses],
            "V": case.voltages,
            "delta_rad": eq.delta,
            "P": active_power_injection(case, Y, eq.delta),
            "Q": reactive_power_injection(case, Y, eq.delta),
        }
    )


# assess / check-assumption


@dataclass(frozen=True, eq=False)
class Assessment:
    prepared: Prepared
    report: CertificateReport
    assumption: AssumptionReport
    flows: list[LineFlow]
    margins: list[ParameterMargin]

    @property
    def passed(self) -> bool:
        return self.report.theorem1_all_pass

    def certificate_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.report.rows())

    def assumption_frame(self) -> pd.DataFrame:
        return self.assumption.to_frame(self.prepared.case.names)

    def flows_frame(self) -> pd.DataFrame:
        names = self.prepared.case.names
        return pd.DataFrame(
            {
                "line_from": [names[f.from_bus] for f in self.flows],
                "line_to": [names[f.to_bus] for f in self.flows],
                "p_from": [f.p_from for f in self.flows],
                "p_to": [f.p_to for f in self.flows],
                "loss": [f.loss for f in self.flows],
            }
        )

    def margins_frame(self) -> pd.DataFrame:
        return pd.DataFrame([m.model_dump() for m in self.margins])

    def payload(self) -> dict:
        eq = self.prepared.eq
        return {
            "case": self.prepared.case.describe(),
            "equilibrium": {
                "reference_bus": self.prepared.case.names[eq.reference_bus],
                "iterations": eq.iterations,
                "residual_norm": eq.residual_norm,
                "slack_power": eq.slack_power,
                "delta": dict(zip(self.prepared.case.names, eq.delta.tolist())),
            },
            "report": self.report.model_dump(mode="json") | {"theorem1_all_pass": self.passed},
            "margins": [m.model_dump() for m in self.margins],
        }


def assess(prepared: Prepared, slack: float = 1e-9) -> Assessment:
    case, Y, eq = prepared.case, prepared.Y, prepared.eq
    report = assess_theorem1(case, Y, eq, slack=slack)
    return Assessment(
        prepared=prepared,
        report=report,
        assumption=check_assumption1(case, Y, eq, slack=slack),
        flows=line_flows(case, Y, eq.delta),
        margins=parameter_margins(report),
    )


def check_assumption(prepared: Prepared, slack: float = 1e-9, margin: float | None = None) -> AssumptionReport:
    return check_assumption1(prepared.case, prepared.Y, prepared.eq, margin=margin, slack=slack)


# modal


@dataclass(frozen=True, eq=False)
class ModalRun:
    eps: float
    spectrum: SpectrumReport
    comparison: ModalComparison
    verdict: StabilityVerdict


@dataclass(frozen=True, eq=False)
class ModalResult:
    K: SpectrumReport
    K_verdict: StabilityVerdict
    runs: list[ModalRun]

    def payload(self) -> dict:
        return {
            "eigenvalues_K": complex_pairs(self.K.eigenvalues),
            "verdict_K": self.K_verdict.value,
            "zero_count_K": self.K.zero_count,
            "mean_nonzero_real_K": self.K.mean_nonzero_real,
            "eps": [
                {
                    "eps": run.eps,
                    "eigenvalues_J": complex_pairs(run.spectrum.eigenvalues),
                    "verdict_J": run.verdict.value,
                    "zero_count_J": run.spectrum.zero_count,
                    "mean_nonzero_real_J": run.spectrum.mean_nonzero_real,
                    "backward_error_J": run.spectrum.backward_error,
                    "matched": [[p.k_index, p.j_index, p.distance] for p in run.comparison.matched],
                    "max_distance": run.comparison.max_distance,
                    "ambiguous": list(run.comparison.ambiguous),
                    "fast": [
                        {
                            "lambda": [mode.value.real, mode.value.imag],
                            "predicted": mode.predicted,
                            "rel_err": mode.rel_err,
                        }
                        for mode in run.comparison.fast
                    ],
                }
                for run in self.runs
            ],
        }

    def frame(self) -> pd.DataFrame:
        """(re, im, source) rows for plotting: K first, then each J in eps order."""
        parts = [(self.K.eigenvalues, "K")] + [(run.spectrum.eigenvalues, f"J_eps{run.eps:g}") for run in self.runs]
        return pd.DataFrame(
            {
                "re": np.concatenate([values.real for values, _ in parts]),
                "im": np.concatenate([values.imag for values, _ in parts]),
                "source": [source for values, source in parts for _ in values],
            }
        )

    def modes_frame(self) -> pd.DataFrame:
        tables = [mode_table(self.K).assign(source="K")]
        tables += [mode_table(run.spectrum).assign(source=f"J_eps{run.eps:g}") for run in self.runs]
        return pd.concat(tables, ignore_index=True)


def modal(prepared: Prepared, eps_values: list[float], options: EigenOptions | None = None) -> ModalResult:
    """K spectrum once, then J at every eps matched against it."""
    case = prepared.case
    L = flow_jacobian(case, prepared.Y, prepared.eq)
    K = eigenvalues(system_jacobian(L, case, Model.unperturbed()).matrix, options)
    runs = []
    for eps in eps_values:
        J = eigenvalues(system_jacobian(L, case, Model.perturbed(eps)).matrix, options)
        comparison = modal_compare(K, J, eps, case.d_load)
        logger.info(f"modal: eps={eps:g} max matched distance {comparison.max_distance:.3e}")
        runs.append(ModalRun(eps, J, comparison, stability_verdict(J)))
    return ModalResult(K, stability_verdict(K), runs)


# sweep


class SweepParameter(StrEnum):
    DAMPING = "damping"
    INERTIA = "inertia"
    LOAD = "load"


class SweepSpec(BaseModel):
    parameter: SweepParameter = SweepParameter.DAMPING
    values: list[PositiveFloat] = Field(min_length=1)
    eps: PositiveFloat = 1e-3
    case: str = "wscc9"


class SweepStatus(StrEnum):
    OK = "ok"
    ASSUMPTION_FAILED = "assumption_failed"
    POWERFLOW_FAILED = "powerflow_failed"
    EIGEN_FAILED = "eigen_failed"


class SweepRow(BaseModel):
    multiplier: float
    status: SweepStatus
    avg_C: float | None = None
    avg_re_lambda: float | None = None
    theorem1_all_pass: bool | None = None
    corollary1_all_pass: bool | None = None
    assumption1_pass: bool | None = None


def sweep_row(base: NetworkCase, spec: SweepSpec, settings: CaseSettings, multiplier: float) -> SweepRow:
    case = scale_case(base, **{spec.parameter.value: multiplier})
    try:
        prepared = prepare_case(case, settings)
    except PowerFlowError as e:
        logger.warning(f"sweep_row: {spec.parameter} x{multiplier:g} skipped, {e}")
        return SweepRow(multiplier=multiplier, status=SweepStatus.POWERFLOW_FAILED)
    report = assess_theorem1(prepared.case, prepared.Y, prepared.eq, slack=settings.assumption_slack)
    row = SweepRow(
        multiplier=multiplier,
        status=SweepStatus.OK,
        avg_C=report.average_C,
        theorem1_all_pass=report.theorem1_all_pass,
        corollary1_all_pass=report.corollary1_all_pass,
        assumption1_pass=report.assumption1_pass,
    )
    try:
        J = spectrum_of(prepared, Model.perturbed(spec.eps), settings.eigen)
    except EigenSolverError as e:
        logger.warning(f"sweep_row: {spec.parameter} x{multiplier:g} has no spectrum, {e}")
        row.status = SweepStatus.EIGEN_FAILED
        return row
    row.avg_re_lambda = J.mean_nonzero_real
    if not report.assumption1_pass:
        logger.warning(f"sweep_row: {spec.parameter} x{multiplier:g} flagged, line-angle condition fails")
        row.status = SweepStatus.ASSUMPTION_FAILED
    return row


def spectrum_of(prepared: Prepared, model: Model, options: EigenOptions) -> SpectrumReport:
    L = flow_jacobian(prepared.case, prepared.Y, prepared.eq)
    return eigenvalues(system_jacobian(L, prepared.case, model).matrix, options)


def run_sweep(spec: SweepSpec, settings: CaseSettings, workers: int | None = None) -> list[SweepRow]:
    """Rows run concurrently; the result is ordered by multiplier whatever the completion order."""
    base = load_network(replace(settings, case=spec.case))
    run = partial(sweep_row, base, spec, settings)
    with DisplayProgress(), ThreadPoolExecutor(max_workers=workers) as executor:
        rows = list(track_unknown(executor.map(run, spec.values), name="sweep", total=len(spec.values)))
    return sorted(rows, key=lambda row: row.multiplier)


def sweep_frame(rows: list[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump(mode="json") for row in rows], columns=list(SweepRow.model_fields))


def sweep_trend(rows: list[SweepRow]) -> float | None:
    """Spearman correlation between avg_C and avg_re_lambda over the usable rows."""
    usable = [row for row in rows if row.status is SweepStatus.OK and math.isfinite(row.avg_re_lambda)]
    if len(usable) < 3:
        return None
    return float(spearmanr([row.avg_C for row in usable], [row.avg_re_lambda for row in usable]).statistic)


# simulate


class Disturbance(BaseModel):
    """Offsets from the equilibrium: a common shift of every generator angle plus per-bus overrides."""

    generator_angles: float = DEFAULT_ANGLE_OFFSET
    delta: dict[str, float] = Field(default_factory=dict)
    omega: dict[str, float] = Field(default_factory=dict)

    def initial_offsets(self, case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
        """Returns (delta offset per bus, omega offset per generator)."""
        delta = np.zeros(case.n)
        delta[: case.n0] = self.generator_angles
        for name, value in self.delta.items():
            delta[_bus_index(case, name)] += value
        omega = np.zeros(case.n0)
        for name, value in self.omega.items():
            index = _bus_index(case, name)
            if index >= case.n0:
                raise InvalidParameterError(f"Disturbance: {name!r} is a load bus, its frequency is not a free state")
            omega[index] += value
        return delta, omega


def parse_offsets(items: list[str] | None) -> dict[str, float]:
    """'name=value' strings to a mapping."""
    offsets = {}
    for item in items or []:
        name, sep, value = item.rpartition("=")
        if not sep or not name:
            raise InvalidParameterError(f"parse_offsets: expected name=value, got {item!r}")
        try:
            offsets[name] = float(value)
        except ValueError:
            raise InvalidParameterError(f"parse_offsets: {value!r} in {item!r} is not a number") from None
    return offsets


@dataclass(frozen=True, eq=False)
class SimulationResult:
    trajectories: dict[str, Trajectory]
    divergence: dict[str, float]
    disturbance: Disturbance

    def sidecar(self) -> dict:
        return {
            "disturbance": self.disturbance.model_dump(),
            "runs": {label: trajectory.metadata for label, trajectory in self.trajectories.items()},
            "divergence_from_unperturbed": self.divergence,
        }


def simulate_models(
    prepared: Prepared,
    eps_values: list[float],
    disturbance: Disturbance,
    options: SimOptions | None = None,
) -> SimulationResult:
    """Runs the unperturbed model and the perturbed one at every eps from the same disturbed start."""
    case, Y = prepared.case, prepared.Y
    delta_offset, omega_offset = disturbance.initial_offsets(case)
    delta0 = prepared.eq.delta + delta_offset

    starts = {"unperturbed": initial_state(case, Y, delta0, Model.unperturbed(), omega=omega_offset)}
    for eps in eps_values:
        omega = np.concatenate([omega_offset, np.zeros(case.n - case.n0)])
        starts[f"perturbed_eps{eps:g}"] = initial_state(case, Y, delta0, Model.perturbed(eps), omega=omega)

    trajectories = {}
    for label, x0 in starts.items():
        trajectories[label] = simulate(case, Y, x0, options)
        logger.info(f"simulate_models: {label} done, {trajectories[label].metadata['nfev']} evaluations")
    reference = trajectories["unperturbed"]
    divergence = {
        label: trajectory_divergence(reference, trajectory)
        for label, trajectory in trajectories.items()
        if label != "unperturbed"
    }
    return SimulationResult(trajectories, divergence, disturbance)


# monitor


def synthesize_measurements(
    prepared: Prepared,
    disturbance: Disturbance,
    options: SimOptions | None = None,
) -> pd.DataFrame:
    """Local (t, bus, V, Q) samples of every generator along an unperturbed trajectory."""
    case, Y = prepared.case, prepared.Y
    delta_offset, omega_offset = disturbance.initial_offsets(case)
    x0 = initial_state(case, Y, prepared.eq.delta + delta_offset, Model.unperturbed(), omega=omega_offset)
    trajectory = simulate(case, Y, x0, options)
    rows = []
    for t, delta in zip(trajectory.times, trajectory.delta):
        Q = reactive_power_injection(case, Y, delta)
        for i, bus in enumerate(case.generators):
            rows.append((float(t), bus.name, bus.V, float(Q[i])))
    return pd.DataFrame(rows, columns=list(MEASUREMENT_COLUMNS))


def read_measurements(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"bus": str})
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CaseParseError(f"read_measurements: cannot read {path}: {e}") from e
    missing = [column for column in MEASUREMENT_COLUMNS if column not in frame.columns]
    if missing:
        raise InvalidParameterError(f"read_measurements: {path} lacks column(s) {missing}")
    for column in ("t", "V", "Q"):
        if not pd.api.types.is_numeric_dtype(frame[column]):
            raise InvalidParameterError(f"read_measurements: column {column!r} of {path} is not numeric")
    return frame


def monitor(prepared: Prepared, measurements: pd.DataFrame, workers: int | None = None) -> MonitorResult:
    """Agents know only their own B_ii, d_i and m_i, taken from the operating-point-free report."""
    constants = constants_from_report(assess_corollary1(prepared.case, prepared.Y))
    return distributed_assess(streams_from_frame(measurements, constants), workers=workers)


def aggregate_frame(result: MonitorResult) -> pd.DataFrame:
    return pd.DataFrame(
        {"t": [t for t, _ in result.aggregate], "verdict": [verdict.value for _, verdict in result.aggregate]}
    )


# soundness


def soundness(
    trials: int, seed: int, eps: float, workers: int | None = None
) -> tuple[SoundnessSummary, list[SoundnessOutcome]]:
    with DisplayProgress():
        outcomes = list(track_unknown(iter_soundness(trials, seed, eps, workers), name="trials", total=trials))
    return summarize_soundness(outcomes, seed, eps), outcomes


def outcomes_frame(outcomes: list[SoundnessOutcome]) -> pd.DataFrame:
    return pd.DataFrame(
        [o.model_dump() | {"stable": o.stable, "counterexample": o.counterexample} for o in outcomes]
    )


# braess


def parallel_copy(prepared: Prepared, line_from: str, line_to: str, copies: int = 1) -> BraessImpact:
    """Effect on both certificates of duplicating an existing line `copies` times."""
    if copies < 1:
        raise InvalidParameterError(f"parallel_copy: copies must be at least 1, got {copies}")
    case = prepared.case
    key = tuple(sorted((_bus_index(case, line_from), _bus_index(case, line_to))))
    existing = next((line for line in case.lines if line.key == key), None)
    if existing is None:
        raise InvalidParameterError(f"parallel_copy: no line between {line_from!r} and {line_to!r}")
    duplicate = replace(existing, g=existing.g * copies, b=existing.b * copies, b_shunt=existing.b_shunt * copies)
    return line_addition_impact(case, prepared.Y, prepared.eq, duplicate)


def braess_search(seed: int) -> tuple[NetworkCase, BraessImpact] | None:
    return find_braess_flip(seed=seed)


def impact_frame(impact: BraessImpact) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in impact.generators])
