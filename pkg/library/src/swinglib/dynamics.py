"""Time-domain models of the structure-preserving swing network.

Unperturbed model (state delta in R^n, omega over generators):
    generator: delta' = omega,  m omega' = -d omega + P_m - P_e
    load:      d_load delta' = -P_d - P_e
Perturbed model (omega over every bus, eps > 0 plays the load inertia):
    load:      delta' = omega,  eps omega' = -d_load omega - P_d - P_e
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from swinglib.errors import (
    IntegrationError,
    InvalidParameterError,
    ModelKindError,
    StiffnessError,
    TrajectoryRangeError,
)
from swinglib.netmodel import AdmittanceMatrix, NetworkCase

logger = logging.getLogger(__name__)

EXPLICIT_METHODS = ("RK23", "RK45", "DOP853")


class ModelKind(StrEnum):
    UNPERTURBED = "unperturbed"
    PERTURBED = "perturbed"


@dataclass(frozen=True)
class Model:
    kind: ModelKind
    eps: float | None = None

    def __post_init__(self):
        if self.kind is ModelKind.PERTURBED:
            if self.eps is None or not self.eps > 0 or not math.isfinite(self.eps):
                raise ModelKindError(f"Model: perturbed model needs a finite eps > 0, got {self.eps}")
        elif self.eps is not None:
            raise ModelKindError("Model: unperturbed model takes no eps")

    @classmethod
    def unperturbed(cls) -> "Model":
        return cls(ModelKind.UNPERTURBED)

    @classmethod
    def perturbed(cls, eps: float) -> "Model":
        return cls(ModelKind.PERTURBED, eps)

    @property
    def is_perturbed(self) -> bool:
        return self.kind is ModelKind.PERTURBED

    def omega_size(self, case: NetworkCase) -> int:
        return case.n if self.is_perturbed else case.n0

    def label(self) -> str:
        return f"perturbed(eps={self.eps:g})" if self.is_perturbed else "unperturbed"


@dataclass(frozen=True, eq=False)
class DynamicState:
    delta: np.ndarray
    omega: np.ndarray
    model: Model

    def check(self, case: NetworkCase) -> "DynamicState":
        expected = self.model.omega_size(case)
        if self.delta.shape != (case.n,) or self.omega.shape != (expected,):
            raise ModelKindError(
                f"DynamicState.check: {self.model.label()} state needs delta[{case.n}] and omega[{expected}], "
                f"got delta{list(self.delta.shape)} and omega{list(self.omega.shape)}"
            )
        return self

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta, self.omega])

    @classmethod
    def from_vector(cls, case: NetworkCase, vector: np.ndarray, model: Model) -> "DynamicState":
        return cls(np.array(vector[: case.n], dtype=float), np.array(vector[case.n :], dtype=float), model)


def _electrical_power(case: NetworkCase, Y: AdmittanceMatrix) -> Callable[[np.ndarray], np.ndarray]:
    V = case.voltages
    matrix = Y.matrix

    def power(delta: np.ndarray) -> np.ndarray:
        phasors = V * np.exp(1j * delta)
        return (phasors * np.conj(matrix @ phasors)).real

    return power


def vector_field(case: NetworkCase, Y: AdmittanceMatrix, model: Model) -> Callable[[float, np.ndarray], np.ndarray]:
    """Flat right-hand side f(t, x) with x = (delta, omega), as consumed by solve_ivp."""
    n, n0 = case.n, case.n0
    power = _electrical_power(case, Y)
    m, d, d_load = case.m, case.d, case.d_load
    p_mech, p_demand = case.p_mech, case.p_demand

    if model.is_perturbed:
        eps = model.eps

        def perturbed(t: float, x: np.ndarray) -> np.ndarray:
            delta, omega = x[:n], x[n:]
            p_e = power(delta)
            domega = np.empty(n)
            domega[:n0] = (-d * omega[:n0] + p_mech - p_e[:n0]) / m
            domega[n0:] = (-d_load * omega[n0:] - p_demand - p_e[n0:]) / eps
            return np.concatenate([omega, domega])

        return perturbed

    def unperturbed(t: float, x: np.ndarray) -> np.ndarray:
        delta, omega = x[:n], x[n:]
        p_e = power(delta)
        ddelta = np.empty(n)
        ddelta[:n0] = omega
        ddelta[n0:] = (-p_demand - p_e[n0:]) / d_load
        domega = (-d * omega + p_mech - p_e[:n0]) / m
        return np.concatenate([ddelta, domega])

    return unperturbed


def rhs_unperturbed(case: NetworkCase, Y: AdmittanceMatrix, state: DynamicState) -> DynamicState:
    if state.model.is_perturbed:
        raise ModelKindError(f"rhs_unperturbed: got a {state.model.label()} state")
    state.check(case)
    derivative = vector_field(case, Y, state.model)(0.0, state.as_vector())
    return DynamicState.from_vector(case, derivative, state.model)


def rhs_perturbed(
    case: NetworkCase, Y: AdmittanceMatrix, state: DynamicState, eps: float | None = None
) -> DynamicState:
    if not state.model.is_perturbed:
        raise ModelKindError("rhs_perturbed: got an unperturbed state")
    if eps is not None and eps != state.model.eps:
        raise ModelKindError(f"rhs_perturbed: eps={eps} does not match the state's eps={state.model.eps}")
    state.check(case)
    derivative = vector_field(case, Y, state.model)(0.0, state.as_vector())
    return DynamicState.from_vector(case, derivative, state.model)


def quasi_steady_load_omega(case: NetworkCase, Y: AdmittanceMatrix, delta: np.ndarray) -> np.ndarray:
    """Load frequencies on the slow manifold, (-P_d - P_e) / d_load."""
    p_e = _electrical_power(case, Y)(np.asarray(delta, dtype=float))
    return (-case.p_demand - p_e[case.n0 :]) / case.d_load


def initial_state(
    case: NetworkCase,
    Y: AdmittanceMatrix,
    delta: np.ndarray,
    model: Model,
    omega: np.ndarray | None = None,
    quasi_steady_loads: bool = True,
) -> DynamicState:
    """Builds x0 for either model. For the perturbed model the load entries of omega are replaced by
    their quasi-steady values unless `quasi_steady_loads` is False."""
    delta = np.array(delta, dtype=float)
    size = model.omega_size(case)
    omega = np.zeros(size) if omega is None else np.array(omega, dtype=float)
    if model.is_perturbed and quasi_steady_loads:
        omega[case.n0 :] = quasi_steady_load_omega(case, Y, delta)
    return DynamicState(delta, omega, model).check(case)


@dataclass(frozen=True)
class SimOptions:
    horizon: float = 20.0
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    sample_dt: float = 0.01
    method: str = "RK45"
    stiff_eps: float = 1e-4
    """Perturbed runs with eps below this switch from an explicit method to Radau."""

    def __post_init__(self):
        if not self.horizon > 0 or not self.rtol > 0 or not self.atol > 0:
            raise InvalidParameterError(f"SimOptions: horizon and tolerances must be positive, got {self}")
        if not self.sample_dt > 0 or not self.max_step > 0:
            raise InvalidParameterError(f"SimOptions: sample_dt and max_step must be positive, got {self}")

    def sample_times(self) -> np.ndarray:
        count = max(1, math.ceil(self.horizon / self.sample_dt - 1e-9))
        return np.linspace(0.0, self.horizon, count + 1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    delta: np.ndarray
    """Samples x buses."""
    omega: np.ndarray
    model: Model
    n_generators: int
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int) -> DynamicState:
        return DynamicState(self.delta[k].copy(), self.omega[k].copy(), self.model)

    @property
    def final(self) -> DynamicState:
        return self.state(-1)

    def to_frame(self, names: Sequence[str]) -> pd.DataFrame:
        columns = {"t": self.times}
        for k, name in enumerate(names):
            columns[f"delta_{name}"] = self.delta[:, k]
        for k in range(self.omega.shape[1]):
            columns[f"omega_{names[k]}"] = self.omega[:, k]
        return pd.DataFrame(columns)


def simulate(
    case: NetworkCase,
    Y: AdmittanceMatrix,
    x0: DynamicState,
    options: SimOptions | None = None,
    model: Model | None = None,
) -> Trajectory:
    """Integrates either model from x0 with solve_ivp, sampled on a uniform grid.

    Perturbed runs with an explicit method cap the step at eps / (2 max d_load); below
    `options.stiff_eps` they switch to Radau.
    """
    options = options or SimOptions()
    if model is not None and model != x0.model:
        raise ModelKindError(f"simulate: requested {model.label()} but x0 is {x0.model.label()}")
    model = x0.model
    x0.check(case)
    start = x0.as_vector()
    if not np.all(np.isfinite(start)):
        raise IntegrationError("simulate: initial state is not finite")

    method, max_step = options.method, options.max_step
    if model.is_perturbed and method in EXPLICIT_METHODS:
        if model.eps < options.stiff_eps:
            logger.info(f"simulate: eps={model.eps:g} below {options.stiff_eps:g}, switching {method} -> Radau")
            method = "Radau"
        else:
            max_step = min(max_step, model.eps / (2 * float(case.d_load.max())))

    times = options.sample_times()
    solution = solve_ivp(
        vector_field(case, Y, model),
        (0.0, options.horizon),
        start,
        method=method,
        t_eval=times,
        rtol=options.rtol,
        atol=options.atol,
        max_step=max_step,
    )
    if solution.status < 0:
        raise StiffnessError(
            f"simulate: {model.label()} integration failed at t={solution.t[-1]:.6g}: {solution.message}"
        )
    if not np.all(np.isfinite(solution.y)):
        raise IntegrationError(f"simulate: {model.label()} state became non-finite")

    metadata = {
        "model": model.kind.value,
        "eps": model.eps,
        "method": method,
        "max_step": max_step,
        "rtol": options.rtol,
        "atol": options.atol,
        "nfev": int(solution.nfev),
        "njev": int(solution.njev),
        "nlu": int(solution.nlu),
        "samples": len(solution.t),
    }
    logger.debug(f"simulate: {model.label()} {method} nfev={solution.nfev} njev={solution.njev} nlu={solution.nlu}")
    states = solution.y.T
    return Trajectory(
        times=solution.t,
        delta=states[:, : case.n],
        omega=states[:, case.n :],
        model=model,
        n_generators=case.n0,
        metadata=metadata,
    )


def boundary_layer_transform(case: NetworkCase, Y: AdmittanceMatrix, state: DynamicState) -> np.ndarray:
    """y_i = omega_i + (P_d,i + P_e,i) / d_load_i over the load buses; zero on the slow manifold."""
    if not state.model.is_perturbed:
        raise ModelKindError("boundary_layer_transform: needs a perturbed state")
    state.check(case)
    return state.omega[case.n0 :] - quasi_steady_load_omega(case, Y, state.delta)


@dataclass(frozen=True, eq=False)
class BoundaryLayerTrajectory:
    tau: np.ndarray
    y: np.ndarray
    """Samples x load buses."""


def simulate_boundary_layer(
    d_load: np.ndarray,
    y0: np.ndarray,
    tau_horizon: float,
    sample_dtau: float = 0.01,
) -> BoundaryLayerTrajectory:
    """Fast subsystem dy/dtau = -diag(d_load) y in stretched time, propagated with the matrix exponential."""
    d_load = np.asarray(d_load, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.any(d_load <= 0):
        raise InvalidParameterError("simulate_boundary_layer: load coefficients must be positive")
    if d_load.shape != y0.shape:
        raise InvalidParameterError(f"simulate_boundary_layer: shapes {d_load.shape} and {y0.shape} differ")
    if not tau_horizon > 0:
        raise InvalidParameterError(f"simulate_boundary_layer: horizon must be positive, got {tau_horizon}")
    tau = SimOptions(horizon=tau_horizon, sample_dt=sample_dtau).sample_times()
    generator = -np.diag(d_load)
    y = np.array([expm(generator * t) @ y0 for t in tau])
    return BoundaryLayerTrajectory(tau, y)


def trajectory_divergence(a: Trajectory, b: Trajectory, buses: Sequence[int] | None = None) -> float:
    """Sup over the shared time range of the inf-norm gap in delta and omega of the given generator buses.
    Both trajectories are linearly interpolated onto the union of their sample times."""
    n0 = min(a.n_generators, b.n_generators)
    buses = list(range(n0)) if buses is None else list(buses)
    if any(not 0 <= bus < n0 for bus in buses):
        raise InvalidParameterError(f"trajectory_divergence: buses must be generator indices below {n0}")
    start, stop = max(a.times[0], b.times[0]), min(a.times[-1], b.times[-1])
    if start > stop:
        raise TrajectoryRangeError(
            f"trajectory_divergence: time ranges [{a.times[0]}, {a.times[-1]}] "
            f"and [{b.times[0]}, {b.times[-1]}] are disjoint"
        )
    grid = np.union1d(a.times, b.times)
    grid = grid[(grid >= start) & (grid <= stop)]
    gap = 0.0
    for bus in buses:
        for series_a, series_b in ((a.delta[:, bus], b.delta[:, bus]), (a.omega[:, bus], b.omega[:, bus])):
            diff = np.interp(grid, a.times, series_a) - np.interp(grid, b.times, series_b)
            gap = max(gap, float(np.max(np.abs(diff))))
    return gap
