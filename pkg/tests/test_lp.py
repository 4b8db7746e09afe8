import math

import numpy as np
import pytest
from helpers import HAND_LPS, random_lp3, vertex_enumeration

from fairalloc.lp import LinearProgram, LpError, LpStatus, kernel, solve, violations


@pytest.mark.parametrize("name,lp,opt,status,x", HAND_LPS, ids=[c[0] for c in HAND_LPS])
def test_hand_cases(backend, name, lp, opt, status, x):
    res = solve(lp)
    assert res.status.value == status
    if opt is not None:
        assert abs(res.objective_value - opt) <= 1e-9
        assert res.max_violation <= 1e-9
        assert violations(lp, res.x) == []
    if x is not None:
        assert np.allclose(res.x, x, atol=1e-9)


def test_infeasible_certificate():
    res = solve(LinearProgram([0, 0], ineq_constraints=[([-1, -1], -3)]))
    assert res.status is LpStatus.INFEASIBLE
    assert res.residual > 1e-9
    assert abs(res.residual - 1.0) <= 1e-9
    assert "violated" in res.certificate


@pytest.mark.parametrize("seed", range(40))
def test_three_vars_against_vertices(backend, seed):
    lp = random_lp3(np.random.default_rng(seed))
    best = vertex_enumeration(lp)
    res = solve(lp)
    if best is None:
        assert res.status is LpStatus.INFEASIBLE
    else:
        assert res.optimal
        assert abs(res.objective_value - best) <= 1e-6


def test_against_scipy():
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        b = rng.normal(0.5, 1.0, size=m)
        Aeq = rng.normal(size=(1, n))
        beq = float((Aeq @ rng.uniform(size=n))[0])  # keep the equality satisfiable in the box
        c = rng.normal(size=n)
        lp = LinearProgram(list(c), [(list(Aeq[0]), beq)], [(list(a), float(v)) for a, v in zip(A, b)])
        ref = linprog(c, A_ub=A, b_ub=b, A_eq=Aeq, b_eq=[beq], bounds=[(0, 1)] * n, method="highs")
        res = solve(lp)
        if ref.status == 2:
            assert res.status is LpStatus.INFEASIBLE
        else:
            assert res.optimal
            assert abs(res.objective_value - ref.fun) <= 1e-7


def test_backends_agree():
    if not kernel.compiled_available():
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(9)
    lps = [random_lp3(rng) for _ in range(30)]
    before = kernel.BACKEND
    try:
        kernel.use("python")
        a = [solve(lp) for lp in lps]
        kernel.use("compiled")
        b = [solve(lp) for lp in lps]
    finally:
        kernel.use(before)
    for r1, r2 in zip(a, b):
        assert r1.status == r2.status
        assert r1.iterations == r2.iterations
        if r1.optimal:
            assert np.array_equal(r1.x, r2.x)


def test_deterministic():
    lp = HAND_LPS[4][1]
    a, b = solve(lp), solve(lp)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_bad_shapes():
    with pytest.raises(LpError):
        solve(LinearProgram([1, 2], ineq_constraints=[([1], 1)]))
    with pytest.raises(LpError):
        solve(LinearProgram([math.nan]))
    with pytest.raises(LpError):
        solve(LinearProgram([1], bounds=[(0, 1), (0, 1)]))
