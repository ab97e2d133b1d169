import logging
import math

import numpy as np
import pytest

from swinglib.cases import load_bundled
from swinglib.dynamics import (
    DynamicState,
    Model,
    SimOptions,
    Trajectory,
    boundary_layer_transform,
    initial_state,
    quasi_steady_load_omega,
    rhs_perturbed,
    rhs_unperturbed,
    simulate,
    simulate_boundary_layer,
    trajectory_divergence,
)
from swinglib.equilibrium import active_power_injection, solve_equilibrium, with_slack
from swinglib.errors import InvalidParameterError, ModelKindError, TrajectoryRangeError
from swinglib.netmodel import build_admittance, random_case
from tests.helpers import two_bus_case

logger = logging.getLogger(__name__)

DISTURBANCE = 0.1


@pytest.fixture(scope="module")
def wscc9():
    case = load_bundled("wscc9")
    Y = build_admittance(case)
    eq = solve_equilibrium(case, Y)
    return with_slack(case, eq), Y, eq


@pytest.fixture
def two_bus():
    case = two_bus_case(d=1.0)
    return case, build_admittance(case)


def disturbed(case, eq) -> np.ndarray:
    delta = eq.delta.copy()
    delta[: case.n0] += DISTURBANCE
    return delta


def test_rhs_unperturbed_closed_form(two_bus):
    case, Y = two_bus
    state = DynamicState(np.array([0.1, 0.0]), np.zeros(1), Model.unperturbed())
    derivative = rhs_unperturbed(case, Y, state)
    assert derivative.delta == pytest.approx([0.0, 2 * math.sin(0.1)])
    assert derivative.omega == pytest.approx([-2 * math.sin(0.1)])


def test_rhs_perturbed_load_row(two_bus):
    case, Y = two_bus
    state = DynamicState(np.zeros(2), np.array([0.0, 0.1]), Model.perturbed(1e-2))
    derivative = rhs_perturbed(case, Y, state, 1e-2)
    assert derivative.delta == pytest.approx([0.0, 0.1])
    assert derivative.omega == pytest.approx([0.0, -10.0])


@pytest.fixture(params=[Model.unperturbed(), Model.perturbed(1e-2)], ids=["unperturbed", "perturbed"])
def model(request: pytest.FixtureRequest) -> Model:
    return request.param


def test_equilibrium_is_fixed_point(wscc9, model):
    case, Y, eq = wscc9
    state = initial_state(case, Y, eq.delta, model)
    rhs = rhs_perturbed if model.is_perturbed else rhs_unperturbed
    derivative = rhs(case, Y, state)
    assert np.max(np.abs(derivative.as_vector())) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_rhs_matches_independent_flow(seed):
    rng = np.random.default_rng(seed)
    case = random_case(rng)
    Y = build_admittance(case)
    delta = rng.uniform(-0.5, 0.5, size=case.n)
    omega = rng.uniform(-0.1, 0.1, size=case.n0)
    derivative = rhs_unperturbed(case, Y, DynamicState(delta, omega, Model.unperturbed()))
    P = active_power_injection(case, Y, delta)
    n0 = case.n0
    assert np.allclose(derivative.delta[:n0], omega)
    assert np.allclose(derivative.delta[n0:], (-case.p_demand - P[n0:]) / case.d_load, atol=1e-12)
    assert np.allclose(derivative.omega, (-case.d * omega + case.p_mech - P[:n0]) / case.m, atol=1e-12)


def test_perturbed_agrees_on_slow_manifold(wscc9):
    case, Y, eq = wscc9
    delta = disturbed(case, eq)
    slow = rhs_unperturbed(case, Y, initial_state(case, Y, delta, Model.unperturbed()))
    fast = rhs_perturbed(case, Y, initial_state(case, Y, delta, Model.perturbed(1e-3)))
    assert np.allclose(fast.delta, slow.delta, atol=1e-12)
    assert np.allclose(fast.omega[: case.n0], slow.omega, atol=1e-12)
    assert np.allclose(fast.omega[case.n0 :], 0.0, atol=1e-9)


def test_model_tags_are_enforced(two_bus):
    case, Y = two_bus
    perturbed = DynamicState(np.zeros(2), np.zeros(2), Model.perturbed(0.1))
    with pytest.raises(ModelKindError):
        rhs_unperturbed(case, Y, perturbed)
    with pytest.raises(ModelKindError):
        rhs_perturbed(case, Y, perturbed, eps=0.2)
    with pytest.raises(ModelKindError):
        rhs_perturbed(case, Y, DynamicState(np.zeros(2), np.zeros(1), Model.unperturbed()))
    with pytest.raises(ModelKindError):
        rhs_unperturbed(case, Y, DynamicState(np.zeros(2), np.zeros(2), Model.unperturbed()))


@pytest.mark.parametrize("eps", [0.0, -1e-3, math.inf, math.nan])
def test_perturbed_model_needs_positive_eps(eps):
    with pytest.raises(ModelKindError):
        Model.perturbed(eps)


def test_boundary_layer_transform(two_bus):
    case, Y = two_bus
    state = initial_state(case, Y, np.zeros(2), Model.perturbed(1e-2))
    assert boundary_layer_transform(case, Y, state) == pytest.approx([0.0])
    kicked = DynamicState(state.delta, state.omega + np.array([0.0, DISTURBANCE]), state.model)
    assert boundary_layer_transform(case, Y, kicked) == pytest.approx([DISTURBANCE])


def test_boundary_layer_transform_reevaluates_flow():
    rng = np.random.default_rng(3)
    case = random_case(rng, n_buses=5)
    Y = build_admittance(case)
    delta = rng.uniform(-0.3, 0.3, size=case.n)
    omega = rng.uniform(-0.2, 0.2, size=case.n)
    y = boundary_layer_transform(case, Y, DynamicState(delta, omega, Model.perturbed(1e-3)))
    P = active_power_injection(case, Y, delta)
    n0 = case.n0
    assert np.allclose(y, omega[n0:] + (case.p_demand + P[n0:]) / case.d_load, atol=1e-12)


def test_simulate_from_equilibrium_is_constant(wscc9, model):
    case, Y, eq = wscc9
    x0 = initial_state(case, Y, eq.delta, model)
    trajectory = simulate(case, Y, x0, SimOptions(horizon=1.0, sample_dt=0.1))
    assert len(trajectory) == 11
    assert np.max(np.abs(trajectory.delta - eq.delta)) <= 1e-7
    assert np.max(np.abs(trajectory.omega)) <= 1e-7


def test_simulate_rejects_mismatched_model(two_bus):
    case, Y = two_bus
    x0 = initial_state(case, Y, np.zeros(2), Model.unperturbed())
    with pytest.raises(ModelKindError):
        simulate(case, Y, x0, model=Model.perturbed(1e-2))


def test_simulate_switches_to_implicit_for_small_eps(two_bus):
    case, Y = two_bus
    x0 = initial_state(case, Y, np.array([0.05, 0.0]), Model.perturbed(1e-5))
    trajectory = simulate(case, Y, x0, SimOptions(horizon=0.2, sample_dt=0.05))
    assert trajectory.metadata["method"] == "Radau"
    assert trajectory.metadata["nlu"] > 0


def test_simulate_caps_explicit_step(two_bus):
    case, Y = two_bus
    x0 = initial_state(case, Y, np.array([0.05, 0.0]), Model.perturbed(1e-2))
    trajectory = simulate(case, Y, x0, SimOptions(horizon=0.2, sample_dt=0.05))
    assert trajectory.metadata["method"] == "RK45"
    assert trajectory.metadata["max_step"] == pytest.approx(5e-3)


def test_trajectory_frame(two_bus):
    case, Y = two_bus
    x0 = initial_state(case, Y, np.array([0.05, 0.0]), Model.unperturbed())
    frame = simulate(case, Y, x0, SimOptions(horizon=0.1, sample_dt=0.05)).to_frame(case.names)
    assert list(frame.columns) == ["t", "delta_gen", "delta_load", "omega_gen"]
    assert frame["t"].tolist() == pytest.approx([0.0, 0.05, 0.1])


def test_shift_invariance(two_bus):
    case, Y = two_bus
    shift = 0.7
    options = SimOptions(horizon=2.0, sample_dt=0.5)
    base = simulate(case, Y, initial_state(case, Y, np.array([0.2, 0.0]), Model.unperturbed()), options)
    moved = simulate(case, Y, initial_state(case, Y, np.array([0.2 + shift, shift]), Model.unperturbed()), options)
    assert np.allclose(moved.delta - base.delta, shift, atol=1e-6)
    assert np.allclose(moved.omega, base.omega, atol=1e-6)


def test_models_converge_to_same_equilibrium(wscc9):
    case, Y, eq = wscc9
    options = SimOptions(horizon=20.0, sample_dt=0.1)
    finals = []
    for model in (Model.unperturbed(), Model.perturbed(1e-2)):
        trajectory = simulate(case, Y, initial_state(case, Y, disturbed(case, eq), model), options)
        final = trajectory.final.delta
        finals.append(final - final[0])
        logger.info(f"{model.label()}: final omega {np.max(np.abs(trajectory.final.omega)):.2e}")
    for final in finals:
        assert np.allclose(final, eq.delta, atol=1e-3)


def test_model_gap_scales_with_eps(wscc9):
    case, Y, eq = wscc9
    options = SimOptions(horizon=3.0, sample_dt=0.01)
    delta0 = disturbed(case, eq)
    reference = simulate(case, Y, initial_state(case, Y, delta0, Model.unperturbed()), options)
    gaps = []
    for eps in (1e-2, 2e-3):
        perturbed = simulate(case, Y, initial_state(case, Y, delta0, Model.perturbed(eps)), options)
        gaps.append(trajectory_divergence(reference, perturbed))
    ratio = gaps[0] / gaps[1]
    logger.info(f"gaps={gaps}, ratio={ratio:.3f}")
    assert 2.5 <= ratio <= 10.0


def test_fast_transient_settles(two_bus):
    case, Y = two_bus
    eps = 1e-3
    state = initial_state(case, Y, np.zeros(2), Model.perturbed(eps))
    kicked = DynamicState(state.delta, state.omega + np.array([0.0, DISTURBANCE]), state.model)
    settle = 5 * eps / case.d_load.min()
    trajectory = simulate(case, Y, kicked, SimOptions(horizon=settle, sample_dt=settle / 10))
    y = boundary_layer_transform(case, Y, trajectory.final)
    assert abs(y[0]) <= 0.01 * DISTURBANCE


def test_boundary_layer_matches_exponential():
    d_load = np.array([0.5, 1.0, 2.0])
    y0 = np.array([1.0, -0.3, 0.7])
    layer = simulate_boundary_layer(d_load, y0, 10.0)
    exact = y0 * np.exp(-np.outer(layer.tau, d_load))
    assert np.max(np.abs(layer.y - exact)) <= 1e-10


def test_boundary_layer_unit_decay():
    layer = simulate_boundary_layer(np.array([1.0]), np.array([1.0]), 1.0, sample_dtau=0.5)
    assert layer.y[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-12)
    zero = simulate_boundary_layer(np.array([1.0, 2.0]), np.zeros(2), 1.0)
    assert not zero.y.any()


def test_boundary_layer_rejects_nonpositive_coefficients():
    with pytest.raises(InvalidParameterError):
        simulate_boundary_layer(np.array([0.0]), np.array([1.0]), 1.0)


def constant_trajectory(times, value: float) -> Trajectory:
    times = np.asarray(times, dtype=float)
    return Trajectory(times, np.full((len(times), 2), value), np.full((len(times), 1), value), Model.unperturbed(), 1)


def test_trajectory_divergence_basics():
    a = constant_trajectory([0.0, 1.0, 2.0], 0.0)
    assert trajectory_divergence(a, a) == 0.0
    assert trajectory_divergence(a, constant_trajectory([0.0, 0.5, 1.5, 2.0], 0.2)) == pytest.approx(0.2)


def test_trajectory_divergence_disjoint():
    with pytest.raises(TrajectoryRangeError):
        trajectory_divergence(constant_trajectory([0.0, 1.0], 0.0), constant_trajectory([2.0, 3.0], 0.0))


def test_quasi_steady_load_omega_zero_at_equilibrium(wscc9):
    case, Y, eq = wscc9
    assert np.allclose(quasi_steady_load_omega(case, Y, eq.delta), 0.0, atol=1e-9)


@pytest.mark.parametrize(
    "kwargs",
    [
        pytest.param({"horizon": 0.0}, id="zero horizon"),
        pytest.param({"rtol": -1.0}, id="negative rtol"),
        pytest.param({"sample_dt": 0.0}, id="zero sampling"),
    ],
)
def test_sim_options_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        SimOptions(**kwargs)
