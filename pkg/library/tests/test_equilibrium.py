import logging
import math

import numpy as np
import pytest

from swinglib.cases import load_bundled
from swinglib.equilibrium import (
    EquilibriumPoint,
    PowerFlowOptions,
    active_power_injection,
    check_assumption1,
    flow_sensitivity,
    line_flows,
    reactive_power_injection,
    solve_equilibrium,
    with_slack,
)
from swinglib.errors import InvalidParameterError, NonConvergenceError, PowerFlowError
from swinglib.netmodel import build_admittance, random_case
from tests.helpers import two_bus_case

logger = logging.getLogger(__name__)

WSCC_ANGLES_DEG = [
    0.0,
    9.668741126628124,
    4.771073237177319,
    -2.406643919519410,
    -4.017264326707550,
    1.925601686828564,
    0.6215445553889323,
    3.799120192692319,
    -4.349933576561007,
]
WSCC_SLACK = 0.7195470158922190


@pytest.fixture
def wscc9():
    case = load_bundled("wscc9")
    return case, build_admittance(case)


def test_wscc9_equilibrium(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    logger.info(f"iterations={eq.iterations}, residual={eq.residual_norm:.2e}")
    assert eq.delta[0] == 0.0
    assert eq.iterations <= 10
    assert eq.residual_norm <= 1e-10
    assert np.allclose(eq.delta, np.radians(WSCC_ANGLES_DEG), atol=1e-6)
    assert eq.slack_power == pytest.approx(WSCC_SLACK, abs=1e-6)


@pytest.mark.parametrize("P", [0.0, 0.5, 1.0, 1.9])
def test_two_bus_angle(P):
    case = two_bus_case(P=P)
    eq = solve_equilibrium(case, build_admittance(case))
    assert eq.delta[0] - eq.delta[1] == pytest.approx(math.asin(P / 2.0), abs=1e-10)
    assert eq.slack_power == pytest.approx(P, abs=1e-10)


def test_two_bus_reference_at_load():
    case = two_bus_case(P=1.0)
    eq = solve_equilibrium(case, build_admittance(case), reference=1)
    assert eq.delta[1] == 0.0
    assert eq.delta[0] == pytest.approx(math.asin(0.5), abs=1e-10)


def test_infeasible_transfer_fails():
    case = two_bus_case(P=3.0)
    with pytest.raises(PowerFlowError):
        solve_equilibrium(case, build_admittance(case), options=PowerFlowOptions(max_iter=30))


def test_non_convergence_carries_residual():
    case = load_bundled("wscc9")
    with pytest.raises(NonConvergenceError) as info:
        solve_equilibrium(case, build_admittance(case), options=PowerFlowOptions(max_iter=1))
    assert info.value.iterations == 1
    assert info.value.residual_norm > 1e-10


def test_warm_start_converges_immediately(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    again = solve_equilibrium(case, Y, init=eq.delta)
    assert again.iterations <= 1
    assert np.allclose(again.delta, eq.delta, atol=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        pytest.param({"reference": 9}, id="reference out of range"),
        pytest.param({"init": np.zeros(3)}, id="wrong init length"),
        pytest.param({"init": np.full(9, np.nan)}, id="non-finite init"),
    ],
)
def test_solver_rejects_bad_arguments(wscc9, kwargs):
    case, Y = wscc9
    with pytest.raises(InvalidParameterError):
        solve_equilibrium(case, Y, **kwargs)


def test_flow_sensitivity_structure(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    L = flow_sensitivity(case, Y, eq.delta)
    assert np.allclose(L.sum(axis=1), 0.0, atol=1e-12)
    Q = reactive_power_injection(case, Y, eq.delta)
    assert np.allclose(np.diag(L), -Q - case.voltages**2 * Y.B_diag, atol=1e-10)
    step = 1e-6
    for j in range(case.n):
        shift = np.zeros(case.n)
        shift[j] = step
        column = active_power_injection(case, Y, eq.delta + shift) - active_power_injection(case, Y, eq.delta - shift)
        assert np.allclose(column / (2 * step), L[:, j], atol=1e-6)


def test_two_bus_reactive_power():
    case = two_bus_case()
    Y = build_admittance(case)
    Q = reactive_power_injection(case, Y, np.array([0.1, 0.0]))
    assert Q[0] == pytest.approx(2.0 - 2.0 * math.cos(0.1), abs=1e-15)
    assert Q[1] == pytest.approx(Q[0], abs=1e-15)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("shift", [-math.pi, 0.37, 12.0])
def test_injections_are_shift_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    case = random_case(rng)
    Y = build_admittance(case)
    delta = rng.uniform(-1.0, 1.0, size=case.n)
    for injection in (active_power_injection, reactive_power_injection):
        assert np.allclose(injection(case, Y, delta + shift), injection(case, Y, delta), rtol=0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_lossless_injections_sum_to_zero(seed):
    rng = np.random.default_rng(seed)
    case = random_case(rng, lossy=False)
    Y = build_admittance(case)
    delta = rng.uniform(-1.0, 1.0, size=case.n)
    assert active_power_injection(case, Y, delta).sum() == pytest.approx(0.0, abs=1e-12)
    lossy = random_case(rng, lossy=True)
    losses = active_power_injection(lossy, build_admittance(lossy), rng.uniform(-1.0, 1.0, size=lossy.n)).sum()
    assert losses >= -1e-12


def test_with_slack_balances_reference(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    balanced = with_slack(case, eq)
    assert balanced.p_mech[0] == eq.slack_power
    P = active_power_injection(balanced, Y, eq.delta)
    assert np.allclose(P, balanced.injections, atol=1e-9)


def test_with_slack_needs_generator_reference():
    case = two_bus_case(P=0.5)
    eq = solve_equilibrium(case, build_admittance(case), reference=1)
    with pytest.raises(InvalidParameterError):
        with_slack(case, eq)


def test_line_flows_account_for_losses(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    flows = line_flows(case, Y, eq.delta)
    losses = sum(flow.loss for flow in flows)
    logger.info(f"losses={losses:.6f}")
    assert losses > 0
    assert losses == pytest.approx(active_power_injection(case, Y, eq.delta).sum(), abs=1e-9)


def test_assumption_holds_on_wscc9(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    report = check_assumption1(case, Y, eq)
    assert report.passed
    assert len(report.angles) == 2 * len(case.lines)
    assert 0 < report.min_margin < math.pi / 2
    frame = report.to_frame(case.names)
    assert list(frame.columns) == ["line_from", "line_to", "alpha_rad", "pass"]
    assert frame["pass"].all()


def test_assumption_margin_variant(wscc9):
    case, Y = wscc9
    eq = solve_equilibrium(case, Y)
    assert check_assumption1(case, Y, eq, margin=math.pi / 2).passed
    assert not check_assumption1(case, Y, eq, margin=math.radians(1.0)).passed


def test_assumption_fails_past_ninety_degrees():
    case = two_bus_case(x=0.5)
    Y = build_admittance(case)
    shifted = EquilibriumPoint(np.array([0.0, 2.0]), 0, 0.0, 0, 0.0)
    report = check_assumption1(case, Y, shifted)
    assert not report.passed
    assert [row.passed for row in report.angles] == [False, False]


@pytest.mark.parametrize("seed", range(10))
def test_random_cases_solve(seed):
    case = random_case(np.random.default_rng(seed))
    Y = build_admittance(case)
    try:
        eq = solve_equilibrium(case, Y)
    except PowerFlowError:
        pytest.skip(f"random case {seed} has no operating point")
    P = active_power_injection(case, Y, eq.delta)
    assert np.allclose(P[1:], case.injections[1:], atol=1e-9)
