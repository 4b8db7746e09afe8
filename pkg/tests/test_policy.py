import numpy as np
import pytest

from fairalloc.fixtures import fixture_b, fixture_c, fixture_e
from fairalloc.policy import (
    FaithfulnessKernel,
    Policy,
    PolicyError,
    Scope,
    UncoveredKeyError,
    allocation_rates,
    budget_usage,
    derived_allocation,
    evaluate_outcomes,
    lift,
    linear_forms,
    measurable,
    refines,
    scope_keys,
    zero_policy,
)
from fairalloc.population import Shape, generate_random


def test_scope_aliases():
    assert Scope.parse("l0l1") is Scope.L0xL1
    assert Scope.parse("lg") is Scope.LxG
    assert Scope.parse("LxXnoG") is Scope.LxXnoG
    assert Scope.LxXnoG.cli_name == "lx"
    with pytest.raises(ValueError):
        Scope.parse("bogus")


def test_refinement_order():
    assert refines(Scope.FULL, Scope.GLOBAL)
    assert refines(Scope.LxG, Scope.L0)
    assert not refines(Scope.LxG, Scope.LxXnoG)
    assert not refines(Scope.L0, Scope.L0xL1)
    assert measurable(Scope.L0, "l0") and measurable(Scope.L0, "l0l1")
    assert not measurable(Scope.L0xL1, "l0")


def test_constant_policy_outcomes():
    out = evaluate_outcomes(fixture_b(), Policy.constant(0.5))
    assert abs(out["g0"] - 0.65) < 1e-12 and abs(out["g1"] - 0.65) < 1e-12
    assert abs(budget_usage(fixture_b(), Policy.constant(0.5)) - 0.5) < 1e-12


def test_policy_bounds_and_coverage():
    with pytest.raises(PolicyError):
        Policy.constant(1.5)
    pol = Policy(Scope.L0, {1: 0.3})
    with pytest.raises(UncoveredKeyError):
        evaluate_outcomes(fixture_c(), pol)


def test_zero_policy_gives_baselines():
    out = evaluate_outcomes(fixture_c(), zero_policy(fixture_c()))
    assert abs(out["g"] - 0.6) < 1e-12 and abs(out["g'"] - 0.4) < 1e-12


def test_allocation_rates_by_level():
    m = fixture_e()
    pol = Policy(Scope.L0xL1, {(0, "A"): 0.0, (0, "B"): 1.0})
    rates = allocation_rates(m, pol)
    assert abs(rates.by_group["g"] - 0.8) < 1e-12
    assert abs(rates.by_group["g'"] - 0.2) < 1e-12
    assert rates.by_group_level["g", (0, "B")] == 1.0


def test_lift_preserves_cells():
    m = generate_random(3, Shape(2, 2, 2, 2))
    rng = np.random.default_rng(0)
    pol = Policy.from_vector(m, Scope.L0, rng.uniform(size=len(scope_keys(m, Scope.L0))))
    for fine in (Scope.L0xL1, Scope.LxXnoG, Scope.LxG, Scope.FULL):
        lifted = lift(pol, fine, m)
        assert all(lifted.q(c) == pol.q(c) for c in m.cells)
    with pytest.raises(PolicyError):
        lift(Policy.from_vector(m, Scope.LxG, [0.5] * len(scope_keys(m, Scope.LxG))), Scope.LxXnoG, m)


@pytest.mark.parametrize("scope", list(Scope))
def test_linear_forms_match_evaluation(scope):
    m = generate_random(11, Shape(3, 2, 2, 2))
    keys = scope_keys(m, scope)
    q = np.random.default_rng(1).uniform(size=len(keys))
    pol = Policy.from_vector(m, scope, q)
    f = linear_forms(m, scope)
    out = evaluate_outcomes(m, pol)
    for g in m.groups:
        assert abs(f.outcome_const[g] + np.dot(f.outcome_coef[g], q) - out[g]) < 1e-12
        assert abs(np.dot(f.alloc_coef[g], q) - allocation_rates(m, pol).by_group[g]) < 1e-12
    assert abs(np.dot(f.budget_coef, q) - budget_usage(m, pol)) < 1e-12


def test_kernel_identity_and_derived_allocation():
    m = fixture_b()
    rec = Policy.constant(0.4)
    ident = derived_allocation(m, rec, FaithfulnessKernel.identity())
    assert all(abs(ident.q(c) - 0.4) < 1e-12 for c in m.cells)
    leaky = FaithfulnessKernel(Scope.GLOBAL, {((), "1"): {"1": 0.5, "0": 0.5}, ((), "0"): {"0": 0.9, "1": 0.1}})
    alloc = derived_allocation(m, rec, leaky)
    assert all(abs(alloc.q(c) - (0.6 * 0.1 + 0.4 * 0.5)) < 1e-12 for c in m.cells)
    with pytest.raises(PolicyError):
        FaithfulnessKernel(Scope.GLOBAL, {((), "1"): {"1": 0.7}})
