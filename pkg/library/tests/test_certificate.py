import logging
import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from swinglib.cases import load_bundled
from swinglib.certificate import (
    Verdict,
    assess_corollary1,
    assess_theorem1,
    damping_threshold,
    line_addition_impact,
    neighbor_sum,
    parameter_margins,
    stability_index,
)
from swinglib.dynamics import Model
from swinglib.equilibrium import EquilibriumPoint, check_assumption1, reactive_power_injection, solve_equilibrium
from swinglib.errors import InvalidParameterError, PowerFlowError
from swinglib.linearization import StabilityVerdict, eigenvalues, flow_jacobian, stability_verdict, system_jacobian
from swinglib.netmodel import Line, add_line, build_admittance, random_case, scale_case
from tests.helpers import two_bus_case

logger = logging.getLogger(__name__)

SWEEP_SCALES = np.linspace(0.5, 3.0, 20)


def solved(case):
    Y = build_admittance(case)
    return case, Y, solve_equilibrium(case, Y)


@pytest.mark.parametrize(
    "d, expected",
    [pytest.param(2.0, 0.0, id="boundary"), pytest.param(1.0, 1.5, id="underdamped")],
)
def test_stability_index_closed_form(d, expected):
    assert stability_index(0.0, 1.0, -2.0, d, 1.0) == pytest.approx(expected)


@pytest.mark.parametrize(
    "Q, V, B_ii",
    [pytest.param(0.0, 1.0, -2.0, id="two bus"), pytest.param(-0.3, 1.04, -17.4, id="wscc9 like")],
)
def test_stability_index_monotone_in_machine_constants(Q, V, B_ii):
    by_damping = [stability_index(Q, V, B_ii, d, 0.1) for d in (0.5, 1.0, 2.0, 4.0)]
    by_inertia = [stability_index(Q, V, B_ii, 1.0, m) for m in (0.05, 0.1, 0.2, 0.4)]
    assert all(a > b for a, b in zip(by_damping, by_damping[1:]))
    assert all(a < b for a, b in zip(by_inertia, by_inertia[1:]))


def test_stability_index_needs_positive_inertia():
    with pytest.raises(InvalidParameterError):
        stability_index(0.0, 1.0, -2.0, 1.0, 0.0)


def test_damping_threshold():
    assert damping_threshold(2.0, 1.0) == 2.0
    assert damping_threshold(1.0, 0.25) == 2.0


def test_two_bus_boundary_passes():
    case, Y, eq = solved(two_bus_case(d=2.0))
    report = assess_theorem1(case, Y, eq)
    (generator,) = report.generators
    assert generator.Q == pytest.approx(0.0, abs=1e-12)
    assert generator.B_ii == -2.0
    assert generator.threshold == 2.0
    assert generator.C == pytest.approx(0.0, abs=1e-12)
    assert generator.theorem1_pass
    assert generator.corollary1_lhs == pytest.approx(2.0)
    assert generator.corollary1_pass
    assert report.theorem1_verdict is Verdict.PASS
    assert report.theorem1_all_pass
    assert report.corollary1_all_pass


def test_certificate_is_not_necessary():
    case, Y, eq = solved(two_bus_case(d=1.0))
    report = assess_theorem1(case, Y, eq)
    assert report.generators[0].C == pytest.approx(1.5)
    assert report.theorem1_verdict is Verdict.FAIL
    L = flow_jacobian(case, Y, eq)
    spectrum = eigenvalues(system_jacobian(L, case, Model.perturbed(1e-3)).matrix)
    assert spectrum.zero_count == 1
    assert stability_verdict(spectrum) is StabilityVerdict.STABLE


def test_wscc9_report():
    case, Y, eq = solved(load_bundled("wscc9"))
    report = assess_theorem1(case, Y, eq)
    logger.info(report.rows())
    assert [g.name for g in report.generators] == ["1", "2", "3"]
    assert report.assumption1_pass
    assert report.assumption1_min_margin > 0.05
    assert report.theorem1_verdict is Verdict.FAIL
    assert report.average_C == pytest.approx(np.mean([g.C for g in report.generators]))
    for g in report.generators:
        assert g.C == pytest.approx(g.corollary1_lhs - g.threshold, abs=1.0)
        assert g.C == pytest.approx(-g.Q - g.V**2 * g.B_ii - g.d**2 / (2 * g.m))
        assert g.theorem1_pass is (g.C <= 0)
        assert not g.shunt_flag


def test_wscc9_passes_with_more_damping():
    case, Y, eq = solved(scale_case(load_bundled("wscc9"), damping=3.0))
    report = assess_theorem1(case, Y, eq)
    assert report.theorem1_verdict is Verdict.PASS
    assert all(g.C < 0 for g in report.generators)


def test_inapplicable_when_angles_violate_assumption():
    case = two_bus_case(d=2.0)
    Y = build_admittance(case)
    eq = EquilibriumPoint(np.array([0.0, 2.0]), 0, 0.0, 0, 0.0)
    report = assess_theorem1(case, Y, eq)
    assert report.theorem1_verdict is Verdict.INAPPLICABLE
    assert not report.assumption1_pass
    assert report.generators[0].theorem1_pass is None
    assert report.generators[0].C is not None


def test_shunt_flag(caplog):
    case, Y, eq = solved(two_bus_case(shunt_b=3.0))
    with caplog.at_level(logging.WARNING):
        report = assess_theorem1(case, Y, eq)
    assert report.generators[0].B_ii == pytest.approx(1.0)
    assert report.generators[0].shunt_flag
    assert "B_ii" in caplog.text


def test_neighbor_sum_identity():
    cases = [load_bundled("wscc9"), two_bus_case(P=1.0)]
    cases += [random_case(np.random.default_rng(seed)) for seed in range(10)]
    rng = np.random.default_rng(99)
    for case in cases:
        Y = build_admittance(case)
        for delta in (np.zeros(case.n), rng.uniform(-1.0, 1.0, size=case.n)):
            Q = reactive_power_injection(case, Y, delta)
            for i in range(case.n0):
                expected = -Q[i] - case.voltages[i] ** 2 * Y.B_diag[i]
                assert neighbor_sum(case, Y, delta, i) == pytest.approx(expected, abs=1e-12)


def test_neighbor_sum_rejects_load_bus():
    case = two_bus_case()
    with pytest.raises(InvalidParameterError):
        neighbor_sum(case, build_admittance(case), np.zeros(2), 1)


@pytest.mark.parametrize("seed", range(40))
def test_corollary_implies_theorem(seed):
    case = random_case(np.random.default_rng(seed))
    try:
        case, Y, eq = solved(case)
    except PowerFlowError:
        pytest.skip(f"random case {seed} has no operating point")
    if not check_assumption1(case, Y, eq).passed:
        pytest.skip(f"random case {seed} violates the line-angle condition")
    report = assess_theorem1(case, Y, eq)
    for g in report.generators:
        assert g.corollary1_lhs >= -g.Q - g.V**2 * g.B_ii - 1e-12
        if g.corollary1_pass:
            assert g.theorem1_pass
    topology_only = assess_corollary1(case, Y)
    assert topology_only.kind == "corollary1"
    assert topology_only.corollary1_all_pass == report.corollary1_all_pass
    assert all(g.C is None for g in topology_only.generators)


def test_parameter_margins():
    case, Y, eq = solved(two_bus_case(d=1.0))
    (margin,) = parameter_margins(assess_theorem1(case, Y, eq))
    assert margin.S == pytest.approx(2.0)
    assert margin.d_min == pytest.approx(2.0)
    assert margin.m_max == pytest.approx(0.25)


def test_parameter_margins_need_equilibrium_report():
    case = two_bus_case()
    with pytest.raises(InvalidParameterError):
        parameter_margins(assess_corollary1(case, build_admittance(case)))


def test_parallel_line_flips_boundary_case():
    case, Y, eq = solved(two_bus_case(d=2.0))
    impact = line_addition_impact(case, Y, eq, Line(0, 1, 0.0, -2.0))
    assert impact.corollary1_flipped
    assert impact.theorem1_flipped
    (row,) = impact.generators
    assert row.corollary1_lhs_after == pytest.approx(4.0)
    assert row.C_after == pytest.approx(2.0, abs=1e-9)
    assert (impact.line_from, impact.line_to) == ("gen", "load")


@pytest.mark.parametrize("seed", range(15))
def test_added_line_never_lowers_neighbor_bound(seed):
    rng = np.random.default_rng(seed)
    case = random_case(rng)
    i = int(rng.integers(case.n0))
    j = int(rng.choice([k for k in range(case.n) if k != i]))
    line = Line.from_impedance(i, j, 0.1 * rng.random(), rng.uniform(0.2, 1.0))
    Y = build_admittance(case)

    extended = add_line(case, line)
    before = assess_corollary1(case, Y)
    after = assess_corollary1(extended, build_admittance(extended))
    for old, new in zip(before.generators, after.generators):
        assert new.corollary1_lhs >= old.corollary1_lhs - 1e-12
    assert after.generators[i].corollary1_lhs > before.generators[i].corollary1_lhs

    try:
        impact = line_addition_impact(case, Y, solve_equilibrium(case, Y), line)
    except PowerFlowError:
        pytest.skip(f"random case {seed} has no operating point")
    for row in impact.generators:
        assert row.corollary1_lhs_after >= row.corollary1_lhs_before - 1e-12


def test_degree_of_stability_trend():
    base = load_bundled("wscc9")
    mean_C, mean_re = [], []
    for scale in SWEEP_SCALES:
        case, Y, eq = solved(scale_case(base, damping=float(scale)))
        report = assess_theorem1(case, Y, eq)
        spectrum = eigenvalues(system_jacobian(flow_jacobian(case, Y, eq), case, Model.perturbed(1e-3)).matrix)
        mean_C.append(report.average_C)
        mean_re.append(spectrum.mean_nonzero_real)
    correlation = spearmanr(mean_C, mean_re).statistic
    logger.info(f"first point ({mean_C[0]:.3f}, {mean_re[0]:.3f}), last ({mean_C[-1]:.3f}, {mean_re[-1]:.3f})")
    assert correlation >= 0.9
    assert mean_C[-1] < mean_C[0]
    assert mean_re[-1] < mean_re[0]
    assert math.isfinite(mean_re[-1])
