"""Active power flow: injections, the Newton equilibrium solver and the line-angle check.

Flows use the polar form P_e,i = sum_j V_i V_j Y_ij cos(theta_ij - delta_i + delta_j).
Voltage magnitudes are fixed; only angles are solved.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from swinglib.errors import InvalidParameterError, NonConvergenceError, SingularJacobianError
from swinglib.netmodel import AdmittanceMatrix, NetworkCase

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerFlowOptions:
    tol: float = 1e-10
    max_iter: int = 50

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise InvalidParameterError(f"PowerFlowOptions: need tol > 0 and max_iter >= 1, got {self}")


@dataclass(frozen=True, eq=False)
class EquilibriumPoint:
    """Solved bus angles, referenced so that delta[reference_bus] == 0.
    slack_power is the active injection the reference bus must supply (its solved P_e).
    """

    delta: np.ndarray
    reference_bus: int
    residual_norm: float
    iterations: int
    slack_power: float

    @property
    def n(self) -> int:
        return len(self.delta)


def _coupling(case: NetworkCase, Y: AdmittanceMatrix, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (V_i V_j Y_ij, theta_ij - delta_i + delta_j) as n x n arrays."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (case.n,):
        raise InvalidParameterError(f"equilibrium: angle vector has shape {delta.shape}, expected ({case.n},)")
    V = case.voltages
    weight = np.outer(V, V) * Y.magnitude
    argument = Y.angle - delta[:, None] + delta[None, :]
    return weight, argument


def active_power_injection(case: NetworkCase, Y: AdmittanceMatrix, delta: np.ndarray) -> np.ndarray:
    weight, argument = _coupling(case, Y, delta)
    return (weight * np.cos(argument)).sum(axis=1)


def reactive_power_injection(case: NetworkCase, Y: AdmittanceMatrix, delta: np.ndarray) -> np.ndarray:
    weight, argument = _coupling(case, Y, delta)
    return -(weight * np.sin(argument)).sum(axis=1)


def flow_sensitivity(case: NetworkCase, Y: AdmittanceMatrix, delta: np.ndarray) -> np.ndarray:
    """dP_e/d(delta): off-diagonal -V_iV_jY_ij sin(theta_ij - delta_i + delta_j), rows summing to zero."""
    weight, argument = _coupling(case, Y, delta)
    L = -weight * np.sin(argument)
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def solve_equilibrium(
    case: NetworkCase,
    Y: AdmittanceMatrix,
    init: np.ndarray | None = None,
    options: PowerFlowOptions | None = None,
    reference: int = 0,
) -> EquilibriumPoint:
    """Newton iteration on the n-1 non-reference active-power mismatches.

    The reference bus keeps delta = 0 and absorbs the network losses, so its specified
    injection is not enforced; the value it has to supply is returned as `slack_power`.
    Starts flat unless `init` is given.
    """
    options = options or PowerFlowOptions()
    if not 0 <= reference < case.n:
        raise InvalidParameterError(f"solve_equilibrium: reference bus {reference} out of range")
    delta = np.zeros(case.n) if init is None else np.array(init, dtype=float)
    if delta.shape != (case.n,) or not np.all(np.isfinite(delta)):
        raise InvalidParameterError("solve_equilibrium: initial angles must be a finite vector with one entry per bus")
    delta = delta - delta[reference]

    free = np.flatnonzero(np.arange(case.n) != reference)
    target = case.injections[free]
    residual_norm = math.inf
    for iteration in range(options.max_iter + 1):
        mismatch = active_power_injection(case, Y, delta)[free] - target
        residual_norm = float(np.max(np.abs(mismatch))) if len(free) else 0.0
        logger.debug(f"solve_equilibrium: iteration {iteration}, mismatch {residual_norm:.3e}")
        if residual_norm <= options.tol:
            slack = float(active_power_injection(case, Y, delta)[reference])
            logger.info(
                f"solve_equilibrium: {case.name or 'case'} converged in {iteration} iteration(s), "
                f"mismatch {residual_norm:.2e}, slack {slack:.6f} pu"
            )
            return EquilibriumPoint(delta, reference, residual_norm, iteration, slack)
        if iteration == options.max_iter:
            break
        jacobian = flow_sensitivity(case, Y, delta)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(jacobian, -mismatch)
        except np.linalg.LinAlgError as e:
            raise SingularJacobianError(f"solve_equilibrium: singular Jacobian at iteration {iteration}") from e
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(f"solve_equilibrium: non-finite Newton step at iteration {iteration}")
        delta[free] += step

    raise NonConvergenceError(
        f"solve_equilibrium: no convergence in {options.max_iter} iterations, mismatch {residual_norm:.3e}",
        iterations=options.max_iter,
        residual_norm=residual_norm,
    )


def with_slack(case: NetworkCase, eq: EquilibriumPoint) -> NetworkCase:
    """Returns the case with the reference generator's P_m set to the solved slack injection,
    making (eq.delta, 0) an exact equilibrium of the dynamics."""
    bus = case.buses[eq.reference_bus]
    if not bus.is_generator:
        raise InvalidParameterError(f"with_slack: reference bus {bus.name!r} is not a generator")
    buses = list(case.buses)
    buses[eq.reference_bus] = replace(bus, P_m=eq.slack_power)
    return replace(case, buses=tuple(buses))


@dataclass(frozen=True)
class LineAngle:
    from_bus: int
    to_bus: int
    alpha: float
    passed: bool


@dataclass(frozen=True)
class AssumptionReport:
    """Line angles alpha_ij = theta_ij - delta_i + delta_j for both orientations of every line."""

    angles: tuple[LineAngle, ...]
    margin: float | None
    passed: bool

    @property
    def min_margin(self) -> float:
        """Smallest distance of any alpha to the ends of (0, pi)."""
        return min(min(row.alpha, math.pi - row.alpha) for row in self.angles)

    def to_frame(self, names: tuple[str, ...]) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "line_from": [names[row.from_bus] for row in self.angles],
                "line_to": [names[row.to_bus] for row in self.angles],
                "alpha_rad": [row.alpha for row in self.angles],
                "pass": [row.passed for row in self.angles],
            }
        )


def check_assumption1(
    case: NetworkCase,
    Y: AdmittanceMatrix,
    eq: EquilibriumPoint,
    margin: float | None = None,
    slack: float = 1e-9,
) -> AssumptionReport:
    """Checks 0 < alpha_ij < pi on every line, strictly by `slack` radians.
    With `margin` set, the test per line is |delta_i - delta_j| < margin instead.
    """
    delta = eq.delta
    angles = []
    for line in case.lines:
        for i, j in ((line.from_bus, line.to_bus), (line.to_bus, line.from_bus)):
            alpha = float(Y.angle[i, j] - delta[i] + delta[j])
            if margin is None:
                passed = slack < alpha < math.pi - slack
            else:
                passed = abs(delta[i] - delta[j]) < margin
            angles.append(LineAngle(i, j, alpha, passed))
    report = AssumptionReport(tuple(angles), margin, all(row.passed for row in angles))
    if not report.passed:
        failing = [(case.names[row.from_bus], case.names[row.to_bus]) for row in angles if not row.passed]
        logger.warning(f"check_assumption1: line angle condition fails on {failing}")
    return report


@dataclass(frozen=True)
class LineFlow:
    from_bus: int
    to_bus: int
    p_from: float
    p_to: float

    @property
    def loss(self) -> float:
        return self.p_from + self.p_to


def line_flows(case: NetworkCase, Y: AdmittanceMatrix, delta: np.ndarray) -> list[LineFlow]:
    """Active power entering each line at both ends; line-charging shunts carry no active power."""
    phasors = case.voltages * np.exp(1j * np.asarray(delta, dtype=float))
    flows = []
    for line in case.lines:
        vi, vj = phasors[line.from_bus], phasors[line.to_bus]
        y = -Y.matrix[line.from_bus, line.to_bus]
        p_from = (vi * np.conj(y * (vi - vj))).real
        p_to = (vj * np.conj(y * (vj - vi))).real
        flows.append(LineFlow(line.from_bus, line.to_bus, float(p_from), float(p_to)))
    return flows
