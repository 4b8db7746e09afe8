import json

import pytest

from fairalloc import io, metrics
from fairalloc.feasibility import prop4_feasibility
from fairalloc.fixtures import FIXTURES, fixture_c
from fairalloc.policy import FaithfulnessKernel, Policy, Scope, scope_keys
from fairalloc.population import Shape, generate_random


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_population_round_trip(name):
    m = FIXTURES[name]()
    doc = io.population_to_json(m)
    io.check(doc, io.POPULATION_SCHEMA, "population")
    back = io.population_from_json(json.loads(io.dumps(doc)))
    assert back.cells == m.cells


@pytest.mark.parametrize("scope", list(Scope))
def test_policy_round_trip(scope):
    m = generate_random(1, Shape(2, 2, 2, 2))
    keys = scope_keys(m, scope)
    pol = Policy(scope, {k: (i % 5) / 4 for i, k in enumerate(keys)}, "p")
    back = io.policy_from_json(json.loads(io.dumps(io.policy_to_json(pol))))
    assert back == pol


def test_kernel_round_trip():
    k = FaithfulnessKernel(Scope.L0, {(1, "1"): {"1": 0.9, "0": 0.1}, (1, "0"): {"0": 1.0}})
    assert io.kernel_from_json(io.kernel_to_json(k)) == k


def test_schema_violations_listed():
    with pytest.raises(io.FormatError) as err:
        io.population_from_json({"cells": [{"group": "g", "covariate": "x", "l0": 0, "mass": -1, "p0": 0, "p1": 0}]})
    assert len(err.value.problems) == 2
    with pytest.raises(io.FormatError):
        io.policy_from_json({"scope": "L0", "table": [{"key": {"l1": 1}, "q": 0.5}]})
    with pytest.raises(io.FormatError):
        io.policy_from_json({"scope": "L0", "table": [{"key": {"l0": 1}, "q": 1.5}]})


def test_result_and_audit_validate():
    res = prop4_feasibility(fixture_c())
    doc = io.result_to_json(res, Scope.L0xL1)
    io.check(doc, io.RESULT_SCHEMA, "result")
    assert doc["coefficients"]["pairs"][0]["a"] == {"1|1": pytest.approx(0.12), "2|2": pytest.approx(-0.08)}
    src = metrics.ModelSource(fixture_c(), allocate=Policy.constant(0.3), recommend=Policy.constant(0.3))
    audit = metrics.audit_all(src)
    io.check(io.audit_to_json(audit), io.AUDIT_SCHEMA, "audit")


def test_markdown_stage_order():
    src = metrics.ModelSource(fixture_c(), recommend=Policy.constant(0.3))
    md = io.audit_markdown(metrics.audit_all(src))
    assert md.index("## Enrollment") < md.index("## Allocation") < md.index("## Outcomes")


def test_digest_stable():
    assert io.digest(fixture_c()) == io.digest(fixture_c())
    assert io.digest(fixture_c()) != io.digest(fixture_c(0.6))
