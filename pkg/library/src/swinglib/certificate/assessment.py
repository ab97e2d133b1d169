"""Per-generator stability certificate.

Generator i passes when -Q_i - V_i^2 B_ii <= d_i^2 / (2 m_i), i.e. when its stability index
C_i = -Q_i - V_i^2 B_ii - d_i^2 / (2 m_i) is nonpositive. The operating-point-free variant
replaces the left side by its upper bound sum_{j != i} V_i V_j Y_ij.
"""

import logging
import math
from enum import StrEnum
from typing import Literal

import numpy as np
from pydantic import BaseModel

from swinglib.equilibrium import (
    EquilibriumPoint,
    PowerFlowOptions,
    check_assumption1,
    reactive_power_injection,
    solve_equilibrium,
)
from swinglib.errors import InvalidParameterError
from swinglib.netmodel import AdmittanceMatrix, Line, NetworkCase, add_line, build_admittance

logger = logging.getLogger(__name__)


class Verdict(StrEnum):
    PASS = "pass"
    FAIL = "fail"
    INAPPLICABLE = "inapplicable"
    STALE = "stale"


def stability_index(Q: float, V: float, B_ii: float, d: float, m: float) -> float:
    if not m > 0:
        raise InvalidParameterError(f"stability_index: inertia m must be positive, got {m}")
    return -Q - V**2 * B_ii - d**2 / (2 * m)


def damping_threshold(d: float, m: float) -> float:
    return d**2 / (2 * m)


class GeneratorAssessment(BaseModel):
    bus: int
    name: str
    V: float
    B_ii: float
    d: float
    m: float
    threshold: float
    Q: float | None = None
    C: float | None = None
    theorem1_pass: bool | None = None
    corollary1_lhs: float
    corollary1_pass: bool
    shunt_flag: bool
    """B_ii > 0: the bus shunt outweighs its lines."""


class CertificateReport(BaseModel):
    case_name: str
    kind: Literal["theorem1", "corollary1"]
    generators: list[GeneratorAssessment]
    assumption1_pass: bool | None = None
    assumption1_min_margin: float | None = None
    theorem1_verdict: Verdict | None = None
    corollary1_all_pass: bool
    average_C: float | None = None

    @property
    def theorem1_all_pass(self) -> bool:
        return self.theorem1_verdict is Verdict.PASS

    def rows(self) -> list[dict]:
        return [generator.model_dump() for generator in self.generators]


def _corollary_terms(case: NetworkCase, Y: AdmittanceMatrix, i: int) -> tuple[float, float]:
    """Returns (sum_{j != i} V_i V_j Y_ij, d_i^2 / (2 m_i))."""
    V = case.voltages
    weights = V[i] * V * Y.magnitude[i]
    lhs = float(weights.sum() - weights[i])
    return lhs, damping_threshold(float(case.d[i]), float(case.m[i]))


def _delta_of(eq: EquilibriumPoint | np.ndarray) -> np.ndarray:
    return eq.delta if isinstance(eq, EquilibriumPoint) else np.asarray(eq, dtype=float)


def neighbor_sum(case: NetworkCase, Y: AdmittanceMatrix, eq: EquilibriumPoint | np.ndarray, i: int) -> float:
    """sum_{j != i} V_i V_j Y_ij sin(theta_ij - delta_i + delta_j); equals -Q_i - V_i^2 B_ii at any angles."""
    if not 0 <= i < case.n0:
        raise InvalidParameterError(f"neighbor_sum: bus {i} is not a generator bus")
    delta = _delta_of(eq)
    V = case.voltages
    terms = V[i] * V * Y.magnitude[i] * np.sin(Y.angle[i] - delta[i] + delta)
    return float(terms.sum() - terms[i])


def assess_theorem1(
    case: NetworkCase,
    Y: AdmittanceMatrix,
    eq: EquilibriumPoint,
    slack: float = 1e-9,
    margin: float | None = None,
) -> CertificateReport:
    """Evaluates the certificate at a solved equilibrium. The line-angle hypothesis is checked first;
    when it fails the verdict is INAPPLICABLE and per-generator pass flags are left unset."""
    assumption = check_assumption1(case, Y, eq, margin=margin, slack=slack)
    Q = reactive_power_injection(case, Y, eq.delta)
    B = Y.B_diag
    V = case.voltages

    generators = []
    for i, bus in enumerate(case.generators):
        C = stability_index(float(Q[i]), float(V[i]), float(B[i]), float(case.d[i]), float(case.m[i]))
        lhs, threshold = _corollary_terms(case, Y, i)
        generators.append(
            GeneratorAssessment(
                bus=i,
                name=bus.name,
                V=float(V[i]),
                B_ii=float(B[i]),
                d=float(case.d[i]),
                m=float(case.m[i]),
                threshold=threshold,
                Q=float(Q[i]),
                C=C,
                theorem1_pass=(C <= 0) if assumption.passed else None,
                corollary1_lhs=lhs,
                corollary1_pass=lhs <= threshold,
                shunt_flag=bool(B[i] > 0),
            )
        )

    if not assumption.passed:
        verdict = Verdict.INAPPLICABLE
    else:
        verdict = Verdict.PASS if all(g.theorem1_pass for g in generators) else Verdict.FAIL
    report = CertificateReport(
        case_name=case.name,
        kind="theorem1",
        generators=generators,
        assumption1_pass=assumption.passed,
        assumption1_min_margin=assumption.min_margin,
        theorem1_verdict=verdict,
        corollary1_all_pass=all(g.corollary1_pass for g in generators),
        average_C=float(np.mean([g.C for g in generators])),
    )
    for generator in generators:
        if generator.shunt_flag:
            logger.warning(f"assess_theorem1: generator {generator.name!r} has B_ii = {generator.B_ii:.4g} > 0")
    logger.info(f"assess_theorem1: {case.name or 'case'} verdict {verdict}, average C {report.average_C:.4g}")
    return report


def assess_corollary1(case: NetworkCase, Y: AdmittanceMatrix) -> CertificateReport:
    """Operating-point-free check sum_{j != i} V_i V_j Y_ij <= d_i^2 / (2 m_i) for every generator."""
    B = Y.B_diag
    V = case.voltages
    generators = []
    for i, bus in enumerate(case.generators):
        lhs, threshold = _corollary_terms(case, Y, i)
        generators.append(
            GeneratorAssessment(
                bus=i,
                name=bus.name,
                V=float(V[i]),
                B_ii=float(B[i]),
                d=float(case.d[i]),
                m=float(case.m[i]),
                threshold=threshold,
                corollary1_lhs=lhs,
                corollary1_pass=lhs <= threshold,
                shunt_flag=bool(B[i] > 0),
            )
        )
    return CertificateReport(
        case_name=case.name,
        kind="corollary1",
        generators=generators,
        corollary1_all_pass=all(g.corollary1_pass for g in generators),
    )


class ParameterMargin(BaseModel):
    bus: int
    name: str
    S: float
    """-Q_i - V_i^2 B_ii at the evaluation point."""
    d: float
    d_min: float
    m: float
    m_max: float | None
    """None when S <= 0: any inertia passes."""


def parameter_margins(report: CertificateReport) -> list[ParameterMargin]:
    """Smallest damping and largest inertia with which each generator would still pass, others unchanged."""
    if report.kind != "theorem1":
        raise InvalidParameterError("parameter_margins: needs a report evaluated at an equilibrium")
    margins = []
    for g in report.generators:
        S = -g.Q - g.V**2 * g.B_ii
        margins.append(
            ParameterMargin(
                bus=g.bus,
                name=g.name,
                S=S,
                d=g.d,
                d_min=math.sqrt(2 * g.m * max(S, 0.0)),
                m=g.m,
                m_max=g.d**2 / (2 * S) if S > 0 else None,
            )
        )
    return margins


class LineImpact(BaseModel):
    bus: int
    name: str
    corollary1_lhs_before: float
    corollary1_lhs_after: float
    C_before: float
    C_after: float
    theorem1_before: bool | None
    theorem1_after: bool | None


class BraessImpact(BaseModel):
    line_from: str
    line_to: str
    verdict_before: Verdict
    verdict_after: Verdict
    corollary1_before: bool
    corollary1_after: bool
    generators: list[LineImpact]

    @property
    def theorem1_flipped(self) -> bool:
        return self.verdict_before is Verdict.PASS and self.verdict_after is Verdict.FAIL

    @property
    def corollary1_flipped(self) -> bool:
        return self.corollary1_before and not self.corollary1_after


def line_addition_impact(
    case: NetworkCase,
    Y: AdmittanceMatrix,
    eq: EquilibriumPoint,
    line: Line,
    options: PowerFlowOptions | None = None,
) -> BraessImpact:
    """Re-solves the equilibrium (warm-started at eq) after adding `line` and compares both certificates."""
    before = assess_theorem1(case, Y, eq)
    extended = add_line(case, line)
    Y_after = build_admittance(extended)
    eq_after = solve_equilibrium(extended, Y_after, init=eq.delta, options=options, reference=eq.reference_bus)
    after = assess_theorem1(extended, Y_after, eq_after)
    rows = [
        LineImpact(
            bus=old.bus,
            name=old.name,
            corollary1_lhs_before=old.corollary1_lhs,
            corollary1_lhs_after=new.corollary1_lhs,
            C_before=old.C,
            C_after=new.C,
            theorem1_before=old.theorem1_pass,
            theorem1_after=new.theorem1_pass,
        )
        for old, new in zip(before.generators, after.generators)
    ]
    return BraessImpact(
        line_from=case.names[line.from_bus],
        line_to=case.names[line.to_bus],
        verdict_before=before.theorem1_verdict,
        verdict_after=after.theorem1_verdict,
        corollary1_before=before.corollary1_all_pass,
        corollary1_after=after.corollary1_all_pass,
        generators=rows,
    )
