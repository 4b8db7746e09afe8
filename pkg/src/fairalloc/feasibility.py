"""Joint satisfiability of allocation and outcome parity, and policy synthesis.

Every question here is linear in the policy table ``q`` (one treatment
probability per scope key): group outcomes are ``base_g + coef_g . q``,
allocation rates ``alloc_g . q`` and budget usage ``mass . q``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations, permutations
from typing import Sequence

from .lp import LinearProgram, solve
from .policy import (
    LinearForms,
    Policy,
    Scope,
    budget_usage,
    evaluate_outcomes,
    linear_forms,
    measurable,
)
from .population import PopulationModel, group_statistics, level_effects, require_valid

PARITY_TOL = 1e-9
TIE_TOL = 0.0


class Status(str, enum.Enum):
    FEASIBLE = "FEASIBLE"
    INFEASIBLE = "INFEASIBLE"
    INFEASIBLE_BY_CONDITION = "INFEASIBLE_BY_CONDITION"


class Kind(str, enum.Enum):
    SP_ALLOCATION = "SP_ALLOCATION"
    CSP_ALLOCATION = "CSP_ALLOCATION"
    SP_OUTCOMES = "SP_OUTCOMES"
    CSP_OUTCOMES = "CSP_OUTCOMES"


class FeasibilityError(ValueError):
    pass


class InfeasibleConstraintsError(FeasibilityError):
    """The hard (allocation-side) constraints admit no policy at all."""


class WellChosenWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Constraint:
    kind: Kind
    legit: str | None = None

    def __post_init__(self):
        conditional = self.kind in (Kind.CSP_ALLOCATION, Kind.CSP_OUTCOMES)
        if conditional and self.legit not in ("l0", "l0l1"):
            raise FeasibilityError(f"{self.kind.value} needs conditioning levels 'l0' or 'l0l1'")
        if not conditional and self.legit is not None:
            raise FeasibilityError(f"{self.kind.value} takes no conditioning levels")

    @property
    def is_outcome(self) -> bool:
        return self.kind in (Kind.SP_OUTCOMES, Kind.CSP_OUTCOMES)

    @property
    def metric_definition(self) -> int:
        return {Kind.SP_ALLOCATION: 5, Kind.CSP_ALLOCATION: 6, Kind.SP_OUTCOMES: 7, Kind.CSP_OUTCOMES: 8}[self.kind]

    def __str__(self) -> str:
        return self.kind.value + (f"({self.legit})" if self.legit else "")


_CLI_KINDS = {
    "sp-alloc": Kind.SP_ALLOCATION,
    "csp-alloc": Kind.CSP_ALLOCATION,
    "sp-outcome": Kind.SP_OUTCOMES,
    "csp-outcome": Kind.CSP_OUTCOMES,
}


def parse_constraints(text: str) -> tuple[Constraint, ...]:
    """Parse ``"sp-alloc,csp-outcome:l0"``; CSP entries default to ``l0``."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, _, legit = item.partition(":")
        name = name.lower()
        if name in _CLI_KINDS:
            kind = _CLI_KINDS[name]
        else:
            try:
                kind = Kind(name.upper())
            except ValueError:
                raise FeasibilityError(f"unknown constraint {item!r}") from None
        if kind in (Kind.CSP_ALLOCATION, Kind.CSP_OUTCOMES):
            out.append(Constraint(kind, legit or "l0"))
        else:
            if legit:
                raise FeasibilityError(f"{name} takes no conditioning levels")
            out.append(Constraint(kind))
    return tuple(out)


@dataclass(frozen=True)
class FeasibilitySpec:
    constraints: tuple[Constraint, ...]
    budget: float = 1.0
    scope: Scope = Scope.GLOBAL
    eps: float = PARITY_TOL
    budget_equality: bool = False

    def __post_init__(self):
        if not 0.0 <= self.budget <= 1.0:
            raise FeasibilityError(f"budget {self.budget} outside [0, 1]")
        if not self.constraints:
            raise FeasibilityError("at least one constraint is required")


@dataclass(frozen=True)
class FeasibilityResult:
    status: Status
    policy: Policy | None
    residual_disparity: float | None = None
    closest_policy: Policy | None = None
    coefficients: dict = field(default_factory=dict)
    budget: float = 1.0
    budget_usage: float | None = None
    outcomes: dict | None = None
    flags: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


@dataclass(frozen=True)
class MinDisparity:
    policy: Policy
    gap: float
    lp_gap: float
    budget_usage: float


# ---------------------------------------------------------------------------
# LP assembly


class _Problem:
    """Rows over the variable vector ``[q_1..q_n, (d)]``."""

    def __init__(self, model: PopulationModel, scope: Scope, with_gap: bool):
        self.model = model
        self.scope = scope
        self._forms: dict[str, LinearForms] = {}
        self.forms = self.forms_for("l0l1")
        self.n = len(self.forms.keys)
        self.with_gap = with_gap
        self.nv = self.n + (1 if with_gap else 0)
        self.eq: list[tuple[list[float], float]] = []
        self.ub: list[tuple[list[float], float]] = []

    def forms_for(self, legit: str) -> LinearForms:
        if legit not in self._forms:
            self._forms[legit] = linear_forms(self.model, self.scope, legit)
        return self._forms[legit]

    def row(self, coef: Sequence[float], d: float = 0.0) -> list[float]:
        r = list(coef)
        if self.with_gap:
            r.append(d)
        return r

    def budget(self, b: float, equality: bool) -> None:
        (self.eq if equality else self.ub).append((self.row(self.forms.budget_coef), b))

    def _pairwise(self, items: dict, consts: dict | None, relax: bool) -> None:
        keys = list(items)
        if relax:
            # |(c_g + a_g q) - (c_h + a_h q)| <= d
            for g, h in permutations(keys, 2):
                coef = [a - b for a, b in zip(items[g], items[h])]
                rhs = (consts[h] - consts[g]) if consts else 0.0
                self.ub.append((self.row(coef, -1.0), rhs))
        else:
            ref = keys[0] if keys else None
            for h in keys[1:]:
                coef = [a - b for a, b in zip(items[ref], items[h])]
                rhs = (consts[h] - consts[ref]) if consts else 0.0
                self.eq.append((self.row(coef), rhs))

    def oriented_outcome_gap(self) -> None:
        """(c_g + a_g q) - (c_h + a_h q) <= d for pairs where g starts ahead."""
        c, a = self.forms.outcome_const, self.forms.outcome_coef
        for g, h in permutations(self.model.groups, 2):
            if c[g] >= c[h]:
                coef = [x - y for x, y in zip(a[g], a[h])]
                self.ub.append((self.row(coef, -1.0), c[h] - c[g]))

    def add(self, con: Constraint, relax: bool = False) -> None:
        if con.kind is Kind.SP_ALLOCATION:
            self._pairwise(self.forms.alloc_coef, None, relax)
        elif con.kind is Kind.SP_OUTCOMES:
            self._pairwise(self.forms.outcome_coef, self.forms.outcome_const, relax)
        else:
            f = self.forms_for(con.legit)
            levels = sorted({lv for _, lv in f.level_alloc_coef}, key=repr)
            for lv in levels:
                gs = [g for g in self.model.groups if (g, lv) in f.level_alloc_coef]
                if con.kind is Kind.CSP_ALLOCATION:
                    if measurable(self.scope, con.legit):
                        continue  # holds structurally
                    self._pairwise({g: f.level_alloc_coef[g, lv] for g in gs}, None, relax)
                else:
                    self._pairwise({g: f.level_outcome_coef[g, lv] for g in gs},
                                   {g: f.level_outcome_const[g, lv] for g in gs}, relax)

    def bounds(self):
        b = [(0.0, 1.0)] * self.n
        if self.with_gap:
            b = b + [(0.0, float("inf"))]
        return b

    def solve_lexicographic(self, primary: Sequence[float] | None, tie_break: str = "lex"):
        """Minimise ``primary``, then budget, then q_1, q_2, ... in turn.

        Returns the final LP result, or the first non-optimal one.
        """
        eq = list(self.eq)
        ub = list(self.ub)
        bounds = self.bounds()
        stages = []
        if primary is not None:
            stages.append(list(primary))
        if tie_break in ("lex", "budget"):
            stages.append(self.row(self.forms.budget_coef))
        if tie_break == "lex":
            for i in range(self.n):
                e = [0.0] * self.nv
                e[i] = 1.0
                stages.append(e)
        if not stages:
            stages.append([0.0] * self.nv)
        res = None
        for k, obj in enumerate(stages):
            res = solve(LinearProgram(obj, eq, ub, bounds))
            if not res.optimal:
                return res
            if k + 1 < len(stages):
                ub.append((obj, res.objective_value + TIE_TOL))
        return res

    def policy(self, x, label: str) -> Policy:
        return Policy(self.scope, {k: min(1.0, max(0.0, float(v))) for k, v in zip(self.forms.keys, x[: self.n])}, label)


def max_outcome_gap(model: PopulationModel, policy: Policy) -> float:
    out = evaluate_outcomes(model, policy)
    vals = [float(v) for v in out.values()]
    return max(vals) - min(vals) if vals else 0.0


def outcome_gap_for(model: PopulationModel, policy: Policy, constraints: Sequence[Constraint]) -> float:
    """Largest outcome-parity deviation among the requested outcome constraints."""
    from . import metrics

    src = metrics.ModelSource(model, allocate=policy)
    gaps = [0.0]
    for con in constraints:
        if con.kind is Kind.SP_OUTCOMES:
            gaps.append(float(metrics.sp_outcomes(src).max_abs_gap))
        elif con.kind is Kind.CSP_OUTCOMES:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", metrics.UndefinedPairWarning)
                gaps.append(float(metrics.csp_outcomes(src, legit=con.legit).max_abs_gap))
    return max(gaps)


# ---------------------------------------------------------------------------
# synthesis


def min_disparity_policy(model: PopulationModel, scope: Scope, budget: float = 1.0,
                         hard_constraints: Sequence[Constraint] = (), *, budget_equality: bool = False,
                         tie_break: str = "lex", oriented: bool = False) -> MinDisparity:
    """Policy on ``scope`` minimising the max-abs group outcome gap within the budget.

    With ``oriented`` the objective is instead the largest signed gap
    ``outcome_g - outcome_h`` over pairs whose baseline favours ``g``
    (floored at zero); ``lp_gap`` then carries that value.
    """
    require_valid(model)
    prob = _Problem(model, scope, with_gap=True)
    if oriented:
        prob.oriented_outcome_gap()
    else:
        prob.add(Constraint(Kind.SP_OUTCOMES), relax=True)
    for con in hard_constraints:
        prob.add(con)
    prob.budget(budget, budget_equality)
    res = prob.solve_lexicographic(prob.row([0.0] * prob.n, 1.0), tie_break)
    if not res.optimal:
        raise InfeasibleConstraintsError(
            f"no {scope.value} policy meets the hard constraints within budget {budget} "
            f"(phase-one residual {res.residual:.3g})"
        )
    pol = prob.policy(res.x, f"min-disparity {scope.value}")
    return MinDisparity(pol, max_outcome_gap(model, pol), float(res.x[-1]), float(budget_usage(model, pol)))


def _closest(model, spec: FeasibilitySpec, tie_break: str):
    prob = _Problem(model, spec.scope, with_gap=True)
    outcome_cons = [c for c in spec.constraints if c.is_outcome]
    for con in spec.constraints:
        prob.add(con, relax=con.is_outcome)
    prob.budget(spec.budget, spec.budget_equality)
    res = prob.solve_lexicographic(prob.row([0.0] * prob.n, 1.0), tie_break)
    if not res.optimal:
        raise InfeasibleConstraintsError(
            f"allocation constraints {[str(c) for c in spec.constraints if not c.is_outcome]} "
            f"admit no {spec.scope.value} policy within budget {spec.budget}"
        )
    pol = prob.policy(res.x, f"closest {spec.scope.value}")
    return pol, outcome_gap_for(model, pol, outcome_cons or [Constraint(Kind.SP_OUTCOMES)])


def joint_feasibility(model: PopulationModel, spec: FeasibilitySpec, *, tie_break: str = "lex") -> FeasibilityResult:
    """Find a ``spec.scope`` policy meeting every requested constraint, or report the residual."""
    require_valid(model)
    prob = _Problem(model, spec.scope, with_gap=False)
    for con in spec.constraints:
        prob.add(con)
    prob.budget(spec.budget, spec.budget_equality)
    res = prob.solve_lexicographic(None, tie_break)
    common = dict(budget=spec.budget, constraints=spec.constraints)
    if res.optimal:
        pol = prob.policy(res.x, f"feasible {spec.scope.value}")
        return FeasibilityResult(
            Status.FEASIBLE, pol, 0.0, pol,
            budget_usage=float(budget_usage(model, pol)),
            outcomes={g: float(v) for g, v in evaluate_outcomes(model, pol).items()},
            **common,
        )
    closest, residual = _closest(model, spec, tie_break)
    return FeasibilityResult(
        Status.INFEASIBLE, None, residual, closest,
        budget_usage=float(budget_usage(model, closest)),
        outcomes={g: float(v) for g, v in evaluate_outcomes(model, closest).items()},
        flags=(f"lp_phase_one_residual={res.residual:.6g}",),
        **common,
    )


# ---------------------------------------------------------------------------
# named conditions


def prop1_solve(model: PopulationModel, budget: float = 1.0) -> FeasibilityResult:
    """Constant treatment probability p with equal allocation and equal outcomes.

    Each pair needs ``(ATE_h - ATE_g) p = base_g - base_h``; the smallest
    p in [0, budget] satisfying every pair is returned.
    """
    require_valid(model)
    stats = group_statistics(model)
    groups = model.groups
    pairs = []
    candidates = {0.0}
    for g, h in combinations(groups, 2):
        slope = float(stats[h].ate - stats[g].ate)
        rhs = float(stats[g].baseline - stats[h].baseline)
        need = rhs / slope if slope != 0.0 else None
        if need is not None:
            candidates.add(need)
        pairs.append({"g": g, "g_prime": h, "effect_difference": slope, "baseline_difference": rhs,
                      "required_p": need})
    coeffs = {"pairs": pairs}

    def gap(p):
        return max((abs(pr["effect_difference"] * p - pr["baseline_difference"]) for pr in pairs), default=0.0)

    feasible = sorted(min(max(p, 0.0), budget) for p in candidates
                      if -1e-12 <= p <= budget + 1e-12 and gap(min(max(p, 0.0), budget)) <= PARITY_TOL)
    cons = (Constraint(Kind.SP_ALLOCATION), Constraint(Kind.SP_OUTCOMES))
    if feasible:
        pol = Policy.constant(feasible[0], "prop1 constant policy")
        return FeasibilityResult(
            Status.FEASIBLE, pol, 0.0, pol, coeffs, budget, float(feasible[0]),
            {g: float(v) for g, v in evaluate_outcomes(model, pol).items()}, constraints=cons,
        )
    best = min_disparity_policy(model, Scope.GLOBAL, budget)
    return FeasibilityResult(
        Status.INFEASIBLE, None, best.gap, best.policy, coeffs, budget, best.budget_usage,
        {g: float(v) for g, v in evaluate_outcomes(model, best.policy).items()}, constraints=cons,
    )


def _pairwise_level_coefficients(model, stats, level_attr, marginal_attr):
    out = []
    for g, h in permutations(model.groups, 2):
        sg, sh = stats[g], stats[h]
        levels = getattr(sg, marginal_attr).keys()
        coef = {}
        for lv in levels:
            a = getattr(sg, level_attr).get(lv, 0) * getattr(sg, marginal_attr)[lv]
            b = getattr(sh, level_attr).get(lv, 0) * getattr(sh, marginal_attr)[lv]
            coef[lv] = float(a - b)
        out.append({"g": g, "g_prime": h, "coefficients": coef,
                    "rhs": float(sh.baseline - sg.baseline)})
    return out


def prop2_feasibility(model: PopulationModel, budget: float = 1.0) -> FeasibilityResult:
    """Risk-level (L0) policy with outcome parity."""
    report = require_valid(model)
    flags = ()
    if not report.l0_well_chosen:
        warnings.warn("l0 is not well chosen: baseline outcomes differ across groups within a risk level",
                      WellChosenWarning, stacklevel=2)
        flags = ("l0_not_well_chosen",)
    stats = group_statistics(model)
    res = joint_feasibility(model, FeasibilitySpec((Constraint(Kind.SP_OUTCOMES),), budget, Scope.L0))
    pop_l0 = {lv: float(sum(c.mass for c in model.cells if c.l0 == lv)) for lv in model.l0_levels}
    coeffs = {
        "pairs": _pairwise_level_coefficients(model, stats, "l0_effect", "l0_marginal"),
        "budget_coefficients": pop_l0,
    }
    return _with(res, coefficients=coeffs, flags=res.flags + flags,
                 constraints=(Constraint(Kind.CSP_ALLOCATION, "l0"), Constraint(Kind.SP_OUTCOMES)))


def prop4_feasibility(model: PopulationModel, budget: float = 1.0) -> FeasibilityResult:
    """Combined-level (L0 x L1) policy with outcome parity.

    The LP uses each group's own level effects, so returned policies are
    exact; ``a_l`` in the audit trail uses the population level effect.
    """
    report = require_valid(model)
    flags = ()
    if not report.l1_well_chosen:
        warnings.warn("l1 is not well chosen: level effects differ across groups; "
                      "a_l uses the population-weighted effect", WellChosenWarning, stacklevel=2)
        flags = ("l1_not_well_chosen",)
    stats = group_statistics(model)
    tau = level_effects(model)
    pairs = []
    for g, h in permutations(model.groups, 2):
        a = {lv: float(tau[lv] * (stats[g].l_marginal[lv] - stats[h].l_marginal[lv])) for lv in model.levels}
        pairs.append({"g": g, "g_prime": h, "a": a, "rhs": float(stats[h].baseline - stats[g].baseline)})
    coeffs = {
        "level_effects": {lv: float(v) for lv, v in tau.items()},
        "group_level_effects": {g: {lv: float(v) for lv, v in stats[g].l_effect.items()} for g in model.groups},
        "pairs": pairs,
        "exact_pairs": _pairwise_level_coefficients(model, stats, "l_effect", "l_marginal"),
    }
    res = joint_feasibility(model, FeasibilitySpec((Constraint(Kind.SP_OUTCOMES),), budget, Scope.L0xL1))
    return _with(res, coefficients=coeffs, flags=res.flags + flags,
                 constraints=(Constraint(Kind.CSP_ALLOCATION, "l0l1"), Constraint(Kind.SP_OUTCOMES)))


def prop7_construct(model: PopulationModel, budget: float = 1.0) -> FeasibilityResult:
    """Group-aware policy lifting every group to the best baseline outcome.

    Groups are ordered by baseline, highest first; group i is treated
    uniformly at rate ``(base_0 - base_i) / ATE_i``. Needs ATE_i to cover the
    baseline deficit for every i > 0.
    """
    require_valid(model)
    stats = group_statistics(model)
    order = sorted(model.groups, key=lambda g: -float(stats[g].baseline))
    top = float(stats[order[0]].baseline)
    rates = {}
    rows = []
    ok = True
    for i, g in enumerate(order):
        deficit = top - float(stats[g].baseline)
        ate = float(stats[g].ate)
        holds = i == 0 or ate >= deficit - 1e-12
        if deficit <= 0.0:
            r = 0.0
        elif ate > 0.0 and holds:
            r = min(1.0, deficit / ate)
        else:
            r = None
            holds = False
        ok = ok and holds
        rates[g] = r
        rows.append({"rank": i, "group": g, "baseline": float(stats[g].baseline), "ate": ate,
                     "deficit": deficit, "condition_holds": holds, "rate": r})
    coeffs = {"ordering": rows}
    if not ok:
        best = min_disparity_policy(model, Scope.LxG, budget)
        return FeasibilityResult(
            Status.INFEASIBLE_BY_CONDITION, None, best.gap, best.policy, coeffs, budget, best.budget_usage,
            {g: float(v) for g, v in evaluate_outcomes(model, best.policy).items()},
            constraints=(Constraint(Kind.SP_OUTCOMES),),
        )
    table = {(c.l0, c.l1, c.group): rates[c.group] for c in model.cells}
    pol = Policy(Scope.LxG, table, "group-status parity construction")
    used = float(budget_usage(model, pol))
    flags = ("budget_exceeded",) if used > budget + 1e-12 else ()
    return FeasibilityResult(
        Status.FEASIBLE, pol, 0.0, pol, coeffs, budget, used,
        {g: float(v) for g, v in evaluate_outcomes(model, pol).items()}, flags,
        (Constraint(Kind.SP_OUTCOMES),),
    )


def _with(res: FeasibilityResult, **changes) -> FeasibilityResult:
    return replace(res, **changes)
