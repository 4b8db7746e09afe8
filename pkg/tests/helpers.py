"""Shared oracles and hand-made cases for the test suite."""

from __future__ import annotations

import csv
import itertools
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np

from fairalloc.lp import LinearProgram

INF = math.inf

# (name, program, optimal objective or None, expected status, optimal x or None)
HAND_LPS = [
    ("two-var textbook max",
     LinearProgram([-1, -1], ineq_constraints=[([1, 2], 4), ([3, 1], 6)], bounds=[(0, INF)] * 2),
     -2.8, "FEASIBLE_OPTIMAL", [1.6, 1.2]),
    ("lower bound via negative rhs",
     LinearProgram([1], ineq_constraints=[([-1], -0.3)]),
     0.3, "FEASIBLE_OPTIMAL", [0.3]),
    ("simplex equality",
     LinearProgram([1, 2, 3], eq_constraints=[([1, 1, 1], 1)]),
     1.0, "FEASIBLE_OPTIMAL", [1, 0, 0]),
    ("klee-minty 3d",
     LinearProgram([-4, -2, -1], ineq_constraints=[([1, 0, 0], 5), ([4, 1, 0], 25), ([8, 4, 1], 125)],
                   bounds=[(0, INF)] * 3),
     -125.0, "FEASIBLE_OPTIMAL", [0, 0, 125]),
    ("chvatal cycling example",
     LinearProgram([-10, 57, 9, 24],
                   ineq_constraints=[([0.5, -5.5, -2.5, 9], 0), ([0.5, -1.5, -0.5, 1], 0), ([1, 0, 0, 0], 1)],
                   bounds=[(0, INF)] * 4),
     -1.0, "FEASIBLE_OPTIMAL", [1, 0, 1, 0]),
    ("free variable",
     LinearProgram([1], ineq_constraints=[([-1], 2)], bounds=[(-INF, INF)]),
     -2.0, "FEASIBLE_OPTIMAL", [-2]),
    ("redundant equalities",
     LinearProgram([1, -1], eq_constraints=[([1, 1], 1), ([2, 2], 2)]),
     -1.0, "FEASIBLE_OPTIMAL", [0, 1]),
    ("negative lower bounds",
     LinearProgram([1, 1], ineq_constraints=[([-1, -1], 2.5)], bounds=[(-1, 2), (-3, 1)]),
     -2.5, "FEASIBLE_OPTIMAL", None),
    ("pick two cheapest of five",
     LinearProgram([0.5, 0.2, 0.9, 0.1, 0.7], eq_constraints=[([1] * 5, 2)]),
     0.3, "FEASIBLE_OPTIMAL", [0, 1, 0, 1, 0]),
    ("upper bound only",
     LinearProgram([-1], bounds=[(-INF, 3)]),
     -3.0, "FEASIBLE_OPTIMAL", [3]),
    ("box too small",
     LinearProgram([0, 0], ineq_constraints=[([-1, -1], -3)]),
     None, "INFEASIBLE", None),
    ("contradictory equalities",
     LinearProgram([1, 1, 1], eq_constraints=[([1, 1, 0], 0.5), ([1, 1, 0], 0.7)]),
     None, "INFEASIBLE", None),
    ("unbounded ray",
     LinearProgram([-1, 0], ineq_constraints=[([0, 1], 1)], bounds=[(0, INF), (0, INF)]),
     None, "UNBOUNDED", None),
]


def random_lp3(rng: np.random.Generator) -> LinearProgram:
    """Three variables in [0, 1], a few random <= rows (some with negative rhs)."""
    m = int(rng.integers(1, 5))
    rows = [(list(rng.normal(size=3)), float(rng.normal(0.3, 0.8))) for _ in range(m)]
    return LinearProgram(list(rng.normal(size=3)), ineq_constraints=rows)


def vertex_enumeration(lp: LinearProgram):
    """Best objective over all vertices of {A x <= b, 0 <= x <= 1}; None if empty."""
    c = np.asarray(lp.objective, float)
    n = len(c)
    A = [list(a) for a, _ in lp.ineq_constraints]
    b = [float(v) for _, v in lp.ineq_constraints]
    for a, v in lp.eq_constraints:
        A += [list(a), [-x for x in a]]
        b += [v, -v]
    for i in range(n):
        e = [0.0] * n
        e[i] = 1.0
        A.append(e)
        b.append(1.0)
        A.append([-x for x in e])
        b.append(0.0)
    A = np.array(A)
    b = np.array(b)
    best = None
    for rows in itertools.combinations(range(len(A)), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            val = float(c @ x)
            best = val if best is None else min(best, val)
    return best


# ---------------------------------------------------------------------------
# datasets and the conditional-frequency oracle


def random_records(rng: np.random.Generator, n: int | None = None) -> list[dict]:
    n = int(rng.integers(1, 5001)) if n is None else n
    groups = [f"g{i}" for i in range(int(rng.integers(2, 5)))]
    l0s = list(range(int(rng.integers(1, 4))))
    l1s = ["a", "b"][: int(rng.integers(1, 3))]
    # skewed group/level mix so some (group, level) strata stay empty
    gp = rng.dirichlet(np.ones(len(groups)) * 0.5)
    rows = []
    for i in range(n):
        g = int(rng.choice(len(groups), p=gp))
        l0 = l0s[int(rng.integers(0, len(l0s)))] if g % 2 == 0 else l0s[0]
        rec = int(rng.random() < 0.3 + 0.1 * g)
        recv = rec if rng.random() < 0.8 else 1 - rec
        y = "" if rng.random() < 0.05 else str(int(rng.random() < 0.4 + 0.2 * recv))
        rows.append({"id": str(i), "group": groups[g], "l0": l0, "l1": l1s[int(rng.integers(0, len(l1s)))],
                     "recommended": str(rec), "received": str(recv), "outcome": y})
    return rows


def write_records(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["id", "group", "l0", "l1", "recommended", "received", "outcome"])
        w.writeheader()
        w.writerows(rows)


def oracle_rates(rows: list[dict], definition: int, legit: str | None) -> dict:
    """{(group, stratum): Fraction or None} by a single counting pass over raw rows.

    Strata are tuples: (treatment,) / (t, t_received) / () with the level
    prepended for conditional definitions.
    """
    groups = sorted({r["group"] for r in rows})
    ts = ("0", "1")

    def level(r):
        return r["l0"] if legit == "l0" else (r["l0"], r["l1"])

    levels = sorted({level(r) for r in rows}, key=repr) if legit else [None]
    num = defaultdict(int)
    den = defaultdict(int)
    for r in rows:
        lv = (level(r),) if legit else ()
        g = r["group"]
        if definition in (1, 2):
            for t in ts:
                den[g, lv + (t,)] += 1
                num[g, lv + (t,)] += r["recommended"] == t
        elif definition in (3, 4):
            for t2 in ts:
                key = lv + (r["recommended"], t2)
                den[g, key] += 1
                num[g, key] += r["received"] == t2
        elif definition in (5, 6):
            for t in ts:
                den[g, lv + (t,)] += 1
                num[g, lv + (t,)] += r["received"] == t
        else:
            if r["outcome"] != "":
                den[g, lv] += 1
                num[g, lv] += r["outcome"] == "1"
    if definition in (1, 2, 5, 6):
        tails = [(t,) for t in ts]
    elif definition in (3, 4):
        tails = [(t, t2) for t in ts for t2 in ts]
    else:
        tails = [()]
    out = {}
    for g in groups:
        for lv in levels:
            for tail in tails:
                key = ((lv,) if legit else ()) + tail
                out[g, key] = Fraction(num[g, key], den[g, key]) if den[g, key] else None
    return out


def report_rates(report) -> dict:
    """Same shape as ``oracle_rates`` from a DisparityReport's strata."""
    out = {}
    for s in report.strata:
        label = dict(s.label)
        key = ()
        if "level" in label:
            key += (label["level"],)
        if "t" in label:
            key += (label["t"],)
        if "t_received" in label:
            key += (label["t_received"],)
        for g, v in s.rates.items():
            out[g, key] = v
    return out


def oracle_pairs(rates: dict):
    """Expected (defined differences, undefined pairs) from per-group rates."""
    groups = sorted({g for g, _ in rates})
    strata = sorted({k for _, k in rates}, key=repr)
    diffs, undefined = {}, set()
    for key in strata:
        for g, h in itertools.permutations(groups, 2):
            a, b = rates[g, key], rates[h, key]
            if a is None or b is None:
                undefined.add((g, h, key))
            else:
                diffs[g, h, key] = a - b
    return diffs, undefined


def _norm_key(label) -> tuple:
    d = dict(label)
    key = ()
    for f in ("level", "t", "t_received"):
        if f in d:
            key += (d[f],)
    return key


def report_pairs(report):
    diffs = {(p.group, p.other, _norm_key(p.stratum)): p.diff for p in report.pairs}
    undefined = {(g, h, _norm_key(s)) for g, h, s in report.undefined}
    return diffs, undefined
