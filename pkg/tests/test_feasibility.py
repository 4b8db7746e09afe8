import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairalloc import metrics
from fairalloc.feasibility import (
    Constraint,
    FeasibilityError,
    FeasibilitySpec,
    Kind,
    Status,
    WellChosenWarning,
    joint_feasibility,
    max_outcome_gap,
    min_disparity_policy,
    parse_constraints,
    prop1_solve,
    prop2_feasibility,
    prop4_feasibility,
    prop7_construct,
)
from fairalloc.fixtures import (
    FIXTURE_E_BUDGET,
    FIXTURE_F_BUDGET,
    fixture_a,
    fixture_b,
    fixture_c,
    fixture_d,
    fixture_e,
    fixture_f,
)
from fairalloc.policy import Policy, Scope, budget_usage, evaluate_outcomes, zero_policy
from fairalloc.population import Cell, PopulationModel, Shape, generate_random

SP_OUT = Constraint(Kind.SP_OUTCOMES)
SP_ALLOC = Constraint(Kind.SP_ALLOCATION)


def _equal_model():
    return PopulationModel.from_cells([Cell("a", "x", 0, 0, 0.5, 0.3, 0.5), Cell("b", "x", 0, 0, 0.5, 0.3, 0.5)])


def test_parse_constraints():
    got = parse_constraints("sp-alloc, csp-outcome:l0l1,csp-alloc")
    assert got == (SP_ALLOC, Constraint(Kind.CSP_OUTCOMES, "l0l1"), Constraint(Kind.CSP_ALLOCATION, "l0"))
    with pytest.raises(FeasibilityError):
        parse_constraints("nope")
    with pytest.raises(FeasibilityError):
        parse_constraints("sp-alloc:l0")
    with pytest.raises(FeasibilityError):
        FeasibilitySpec((SP_OUT,), budget=1.5)


# --- constant-probability condition


def test_prop1_fixture_b():
    res = prop1_solve(fixture_b(), 1.0)
    assert res.status is Status.FEASIBLE
    assert abs(res.policy.table[()] - 0.5) <= 1e-9
    assert all(abs(v - 0.65) <= 1e-9 for v in res.outcomes.values())
    pair = res.coefficients["pairs"][0]
    assert abs(pair["required_p"] - 0.5) <= 1e-12


def test_prop1_swapped_infeasible():
    res = prop1_solve(fixture_b(swap_effects=True), 1.0)
    assert res.status is Status.INFEASIBLE
    assert abs(res.coefficients["pairs"][0]["required_p"] + 0.5) <= 1e-12
    assert abs(res.residual_disparity - 0.2) <= 1e-9
    assert res.closest_policy.table[()] == 0.0


def test_prop1_budget_cuts_off_root():
    res = prop1_solve(fixture_b(), 0.4)
    assert res.status is Status.INFEASIBLE
    # gap at p is 0.2 - 0.4 p, smallest at the budget
    assert abs(res.residual_disparity - 0.04) <= 1e-9


def test_prop1_equal_groups_minimal_p():
    res = prop1_solve(_equal_model(), 1.0)
    assert res.status is Status.FEASIBLE and res.policy.table[()] == 0.0


def test_joint_matches_prop1():
    res = joint_feasibility(fixture_b(), FeasibilitySpec((SP_ALLOC, SP_OUT), 1.0, Scope.GLOBAL))
    assert res.status is Status.FEASIBLE
    assert abs(res.policy.table[()] - 0.5) <= 1e-9


# --- risk-level scope


def test_prop2_fixture_a_trivial():
    res = prop2_feasibility(fixture_a(), 1.0)
    assert res.status is Status.FEASIBLE
    assert all(q == 0.0 for q in res.policy.table.values())


def test_prop2_fixture_c_infeasible():
    with pytest.warns(WellChosenWarning):
        res = prop2_feasibility(fixture_c(), 1.0)
    assert res.status is Status.INFEASIBLE
    assert abs(res.residual_disparity - 0.12) <= 1e-9
    assert "l0_not_well_chosen" in res.flags


def _crafted_prop2():
    """Three groups, two risk levels; outcomes meet at 0.6 exactly when q = (0.5, 0.25)."""
    share = {"g0": 0.5, "g1": 0.8, "g2": 0.2}
    tau = {"g0": (0.2, 0.4), "g1": (0.4, 0.1), "g2": (0.1, 0.4)}
    cells = []
    for g, w in share.items():
        lift_at_q = 0.5 * tau[g][0] * w + 0.25 * tau[g][1] * (1 - w)
        p0 = 0.6 - lift_at_q
        cells.append(Cell(g, "x1", 1, 0, w / 3, p0, p0 + tau[g][0]))
        cells.append(Cell(g, "x2", 2, 0, (1 - w) / 3, p0, p0 + tau[g][1]))
    return PopulationModel.from_cells(cells)


def test_prop2_crafted_round_trip():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WellChosenWarning)
        res = prop2_feasibility(_crafted_prop2(), 0.5)
    assert res.status is Status.FEASIBLE
    assert abs(res.policy.table[1] - 0.5) <= 1e-9 and abs(res.policy.table[2] - 0.25) <= 1e-9
    assert all(abs(v - 0.6) <= 1e-9 for v in res.outcomes.values())
    assert res.budget_usage <= 0.5


# --- combined-level scope


def test_prop4_fixture_c():
    res = prop4_feasibility(fixture_c(), 1.0)
    assert res.status is Status.INFEASIBLE
    assert abs(res.residual_disparity - 0.12) <= 1e-9
    assert res.closest_policy.table == {(1, 1): 0.0, (2, 2): 1.0}
    pair = next(p for p in res.coefficients["pairs"] if p["g"] == "g")
    assert abs(pair["a"][(1, 1)] - 0.12) <= 1e-12
    assert abs(pair["a"][(2, 2)] + 0.08) <= 1e-12
    assert abs(pair["rhs"] + 0.2) <= 1e-12


def test_prop4_variant_feasible():
    res = prop4_feasibility(fixture_c(0.6), 1.0)
    assert res.status is Status.FEASIBLE
    assert res.policy.table[(1, 1)] == 0.0
    assert abs(res.policy.table[(2, 2)] - 5 / 6) <= 1e-9
    gap = metrics.sp_outcomes(metrics.ModelSource(fixture_c(0.6), allocate=res.policy)).max_abs_gap
    assert gap <= 1e-9


def test_prop4_warns_when_effects_differ_by_group():
    m = generate_random(2, Shape(2, 1, 2, 1))
    with pytest.warns(WellChosenWarning):
        res = prop4_feasibility(m, 1.0)
    assert "l1_not_well_chosen" in res.flags
    assert "group_level_effects" in res.coefficients


def test_equal_distributions_need_equal_baselines():
    res = prop4_feasibility(_equal_model(), 1.0)
    assert res.status is Status.FEASIBLE and all(q == 0 for q in res.policy.table.values())


def test_zero_budget_residual_is_baseline_gap():
    res = joint_feasibility(fixture_c(), FeasibilitySpec((SP_OUT,), 0.0, Scope.L0xL1))
    assert res.status is Status.INFEASIBLE
    assert abs(res.residual_disparity - 0.2) <= 1e-9


# --- min-disparity


def test_fixture_e_scopes():
    m = fixture_e()
    slack = min_disparity_policy(m, Scope.L0, FIXTURE_E_BUDGET)
    assert slack.gap <= 1e-12 and slack.policy.table[0] == 0.0
    forced = min_disparity_policy(m, Scope.L0, FIXTURE_E_BUDGET, budget_equality=True)
    assert abs(forced.gap - 0.12) <= 1e-9
    fine = min_disparity_policy(m, Scope.L0xL1, FIXTURE_E_BUDGET, budget_equality=True)
    assert fine.gap <= 1e-9
    assert fine.policy.table == {(0, "A"): 0.0, (0, "B"): 1.0}


def test_fixture_f_scopes():
    m = fixture_f()
    for b in (0.1, 0.5, 1.0):
        assert abs(min_disparity_policy(m, Scope.LxXnoG, b).gap - 0.2) <= 1e-9
    best = min_disparity_policy(m, Scope.LxG, FIXTURE_F_BUDGET)
    assert best.gap <= 1e-9
    assert best.policy.table[0, 0, "g"] == 0.0
    assert abs(best.policy.table[0, 0, "g'"] - 0.5) <= 1e-9


def test_allocation_constraints_stay_hard_in_residual():
    # equal allocation plus an exact spend of 0.3 pins q = 0.3 for both groups
    m = fixture_d()
    res = joint_feasibility(m, FeasibilitySpec((SP_ALLOC, SP_OUT), 0.3, Scope.LxG, budget_equality=True))
    assert res.status is Status.INFEASIBLE
    assert abs(res.residual_disparity - 0.155) <= 1e-9
    assert all(abs(q - 0.3) <= 1e-9 for q in res.closest_policy.table.values())


def test_csp_allocation_explicit_when_scope_finer():
    m = generate_random(6, Shape(2, 2, 1, 2))
    res = joint_feasibility(m, FeasibilitySpec((Constraint(Kind.CSP_ALLOCATION, "l0"),), 0.6, Scope.LxG,
                                               budget_equality=True))
    assert res.feasible
    src = metrics.ModelSource(m, allocate=res.policy)
    assert metrics.csp_allocation(src, legit="l0").max_abs_gap <= 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), budget=st.floats(0.0, 1.0),
       scope=st.sampled_from([Scope.GLOBAL, Scope.L0, Scope.L0xL1, Scope.LxXnoG, Scope.LxG]))
def test_min_disparity_never_worse_than_doing_nothing(seed, budget, scope):
    m = generate_random(seed, Shape(3, 2, 2, 2))
    best = min_disparity_policy(m, scope, budget)
    assert best.gap <= max_outcome_gap(m, zero_policy(m)) + 1e-9
    assert best.budget_usage <= budget + 1e-9
    assert abs(best.gap - best.lp_gap) <= 1e-9


# --- group-aware construction


def test_prop7_fixture_d():
    res = prop7_construct(fixture_d(), 1.0)
    assert res.status is Status.FEASIBLE
    assert abs(res.policy.table[(0, 0, "g1")] - 0.8) <= 1e-12
    assert all(abs(v - 0.6) <= 1e-12 for v in res.outcomes.values())
    assert abs(res.budget_usage - 0.4) <= 1e-12


def test_prop7_fixture_b_and_budget_flag():
    res = prop7_construct(fixture_b(), 0.1)
    assert abs(res.policy.table[(0, 0, "g1")] - 0.4) <= 1e-12
    assert all(abs(v - 0.6) <= 1e-12 for v in res.outcomes.values())
    assert "budget_exceeded" in res.flags


def test_prop7_equal_baselines():
    res = prop7_construct(_equal_model(), 1.0)
    assert res.status is Status.FEASIBLE and res.budget_usage == 0


def test_prop7_condition_fails():
    m = PopulationModel.from_cells([Cell("a", "x", 0, 0, 0.5, 0.6, 0.7), Cell("b", "x", 0, 0, 0.5, 0.4, 0.45)])
    res = prop7_construct(m, 1.0)
    assert res.status is Status.INFEASIBLE_BY_CONDITION
    assert abs(res.residual_disparity - 0.15) <= 1e-9
    assert not res.coefficients["ordering"][1]["condition_holds"]


def test_feasible_results_reaudit():
    for res, model in ((prop1_solve(fixture_b()), fixture_b()), (prop4_feasibility(fixture_c(0.6)), fixture_c(0.6)),
                       (prop7_construct(fixture_d()), fixture_d())):
        out = evaluate_outcomes(model, res.policy)
        assert max(out.values()) - min(out.values()) <= 1e-9
        assert abs(budget_usage(model, res.policy) - res.budget_usage) <= 1e-12
    assert isinstance(Policy.constant(0.0), Policy)
