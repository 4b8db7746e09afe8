"""Randomized verification of the compatibility results.

Each check runs the analytic operation from ``feasibility`` on generated
models and compares it with an independent oracle: a re-audit through
``metrics`` for feasible answers, and an exhaustive grid over the policy
table for infeasible ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import io, metrics
from .feasibility import (
    PARITY_TOL,
    Status,
    WellChosenWarning,
    min_disparity_policy,
    prop1_solve,
    prop2_feasibility,
    prop4_feasibility,
    prop7_construct,
)
from .fixtures import FIXTURE_E_BUDGET, FIXTURE_F_BUDGET, fixture_a, fixture_b, fixture_c, fixture_d, fixture_e, fixture_f
from .policy import Scope, budget_usage, evaluate_outcomes, linear_forms, refines
from .population import Cell, PopulationModel, Shape, generate_random, group_statistics

DOMINANCE_TOL = 1e-9
MAX_GRID_VARS = 3
GRID_STEP = 1e-2
PROP1_GRID_STEP = 1e-3
PROPS = (1, 2, 4, 7)
DOMINANCE_PAIRS = (
    (Scope.L0, Scope.L0xL1),
    (Scope.L0xL1, Scope.LxXnoG),
    (Scope.LxXnoG, Scope.LxG),
)


class VerificationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class GeneratorConfig:
    """Ranges (inclusive) for random model shapes and budgets.

    ``well_chosen_*`` of None means a fair coin per trial. ``max_keys`` caps
    the number of policy variables at ``scope``.
    """

    groups: tuple[int, int] = (2, 3)
    l0: tuple[int, int] = (1, 2)
    l1: tuple[int, int] = (1, 1)
    covariates: tuple[int, int] = (1, 1)
    budget: tuple[float, float] = (0.2, 1.0)
    well_chosen_l0: bool | None = False
    well_chosen_l1: bool | None = False
    scope: Scope | None = None
    max_keys: int | None = None


DEFAULT_CONFIGS = {
    1: GeneratorConfig(groups=(2, 3), l0=(1, 2), scope=Scope.GLOBAL, max_keys=1),
    2: GeneratorConfig(groups=(2, 3), l0=(2, 3), l1=(1, 2), covariates=(1, 2), well_chosen_l0=None,
                       scope=Scope.L0, max_keys=MAX_GRID_VARS),
    4: GeneratorConfig(groups=(2, 3), l0=(1, 3), l1=(1, 3), covariates=(1, 2), well_chosen_l1=None,
                       scope=Scope.L0xL1, max_keys=MAX_GRID_VARS),
    7: GeneratorConfig(groups=(2, 4), l0=(1, 2), l1=(1, 2), covariates=(1, 2)),
}

DOMINANCE_CONFIG = GeneratorConfig(groups=(2, 3), l0=(1, 3), l1=(1, 2), covariates=(1, 3), budget=(0.05, 1.0))


def _n_keys(shape: Shape, scope: Scope | None) -> int:
    return {
        None: 0,
        Scope.GLOBAL: 1,
        Scope.L0: shape.l0,
        Scope.L0xL1: shape.l0 * shape.l1,
        Scope.LxXnoG: shape.l0 * shape.l1 * shape.covariates,
        Scope.LxG: shape.l0 * shape.l1 * shape.groups,
        Scope.FULL: shape.groups * shape.l0 * shape.l1 * shape.covariates,
    }[scope]


def draw_instance(config: GeneratorConfig, seed: int) -> tuple[PopulationModel, float]:
    """Model and budget for one trial; fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        shape = Shape(*(int(rng.integers(lo, hi + 1)) for lo, hi in
                        (config.groups, config.l0, config.l1, config.covariates)))
        if config.max_keys is None or _n_keys(shape, config.scope) <= config.max_keys:
            break
    else:
        raise VerificationError(f"no shape within {config.max_keys} keys at {config.scope}")
    wc0 = bool(rng.integers(2)) if config.well_chosen_l0 is None else config.well_chosen_l0
    wc1 = bool(rng.integers(2)) if config.well_chosen_l1 is None else config.well_chosen_l1
    budget = float(rng.uniform(*config.budget))
    model = generate_random(int(rng.integers(2**31)), shape, well_chosen_l0=wc0, well_chosen_l1=wc1)
    return model, budget


def force_prop7_condition(model: PopulationModel, seed: int) -> PopulationModel:
    """Rescale effects so every group's ATE covers its gap to the best baseline.

    Cell effects become ``(1 - p0) * u_g`` with ``u_g`` drawn from
    ``[deficit_g / (1 - base_g), 1]``; this keeps ``p1 <= 1``.
    """
    rng = np.random.default_rng(seed)
    stats = group_statistics(model)
    top = max(float(s.baseline) for s in stats.values())
    u = {}
    for g in model.groups:
        base = float(stats[g].baseline)
        lo = (top - base) / (1.0 - base) if base < 1.0 else 0.0
        u[g] = float(rng.uniform(min(1.0, lo + 1e-9), 1.0))
    cells = [Cell(c.group, c.covariate, c.l0, c.l1, c.mass, c.p0, float(c.p0) + (1.0 - float(c.p0)) * u[c.group])
             for c in model.cells]
    return PopulationModel.from_cells(cells)


def _trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31, size=trials)]


# ---------------------------------------------------------------------------
# grid oracle


@dataclass(frozen=True)
class GridResult:
    min_gap: float
    argmin: tuple[float, ...]
    lipschitz: float
    step: float
    points: int

    @property
    def resolution(self) -> float:
        """Bound on how far the grid minimum can sit above the true minimum."""
        return self.lipschitz * self.step


def grid_outcome_gap(model: PopulationModel, scope: Scope, budget: float, step: float = GRID_STEP,
                     max_vars: int = MAX_GRID_VARS) -> GridResult:
    """Smallest max-abs group outcome gap over a grid of ``scope`` policies within budget.

    Flooring an optimal policy onto the grid never raises budget usage and
    changes each pairwise gap by at most ``sum |coef_g - coef_h| * step``;
    that sum (maximised over pairs) is reported as ``lipschitz``.
    """
    forms = linear_forms(model, scope)
    n = len(forms.keys)
    if n > max_vars:
        raise VerificationError(f"grid oracle limited to {max_vars} variables, scope {scope.value} has {n}")
    ticks = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    axes = [ticks.reshape([-1 if j == i else 1 for j in range(n)]) for i in range(n)]
    shape = (len(ticks),) * n

    def affine(c0, c):
        acc = np.full(shape, c0)
        for ax, ci in zip(axes, c):
            acc = acc + ax * ci
        return acc

    groups = list(model.groups)
    coef = np.array([forms.outcome_coef[g] for g in groups]).reshape(len(groups), n)
    outs = [affine(forms.outcome_const[g], coef[k]) for k, g in enumerate(groups)]
    gaps = np.maximum.reduce(outs) - np.minimum.reduce(outs)
    usage = affine(0.0, forms.budget_coef)
    gaps = np.where(usage <= budget + 1e-12, gaps, np.inf).ravel()
    i = int(np.argmin(gaps))
    point = np.unravel_index(i, shape)
    lip = 0.0
    for a in range(len(groups)):
        for b in range(a + 1, len(groups)):
            lip = max(lip, float(np.abs(coef[a] - coef[b]).sum()))
    return GridResult(float(gaps[i]), tuple(float(ticks[j]) for j in point), lip, step, gaps.size)


# ---------------------------------------------------------------------------
# verification runs


@dataclass
class VerificationRun:
    kind: str
    seed: int
    trials: int
    outcomes: list[dict] = field(default_factory=list)
    failures: list[PopulationModel] = field(default_factory=list)

    @property
    def disagreements(self) -> int:
        return sum(1 for o in self.outcomes if not o["ok"])

    @property
    def passed(self) -> bool:
        return self.disagreements == 0

    def count(self, key: str, value=True) -> int:
        return sum(1 for o in self.outcomes if o.get(key) == value)

    def summary(self) -> dict:
        verdicts: dict[str, int] = {}
        for o in self.outcomes:
            if "verdict" in o:
                verdicts[o["verdict"]] = verdicts.get(o["verdict"], 0) + 1
        return {
            "passed": self.passed,
            "disagreements": self.disagreements,
            "verdicts": dict(sorted(verdicts.items())),
            "unresolved_at_grid_resolution": self.count("unresolved"),
            "strict_witnesses": self.count("strict"),
        }

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "trials": self.trials,
            "passed": self.passed,
            "summary": self.summary(),
            "outcomes": [io.jsonable(o) for o in sorted(self.outcomes, key=lambda o: o["trial"])],
            "failures": [io.population_to_json(m) for m in self.failures],
        }


def _reaudit(model, policy, legit: str | None) -> dict:
    src = metrics.ModelSource(model, allocate=policy)
    gaps = {"sp_outcomes": float(metrics.sp_outcomes(src).max_abs_gap)}
    if legit is None:
        gaps["sp_allocation"] = float(metrics.sp_allocation(src).max_abs_gap)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", metrics.UndefinedPairWarning)
            gaps["csp_allocation"] = float(metrics.csp_allocation(src, legit=legit).max_abs_gap)
    return gaps


_PROP_SCOPE = {1: (Scope.GLOBAL, None), 2: (Scope.L0, "l0"), 4: (Scope.L0xL1, "l0l1")}
_PROP_OP = {1: prop1_solve, 2: prop2_feasibility, 4: prop4_feasibility}


def check_instance(prop: int, model: PopulationModel, budget: float) -> dict:
    """Run one proposition check on one model; the record's ``ok`` is the oracle verdict."""
    if prop == 7:
        return _check_prop7(model, budget)
    scope, legit = _PROP_SCOPE[prop]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WellChosenWarning)
        res = _PROP_OP[prop](model, budget)
    step = PROP1_GRID_STEP if prop == 1 else GRID_STEP
    grid = grid_outcome_gap(model, scope, budget, step)
    rec = {"verdict": res.status.value, "budget": budget, "grid_min": grid.min_gap,
           "grid_resolution": grid.resolution, "residual": res.residual_disparity, "problems": []}
    problems = rec["problems"]
    if res.status is Status.FEASIBLE:
        gaps = _reaudit(model, res.policy, legit)
        rec["reaudit"] = gaps
        problems += [f"{k} gap {v:.3g} after re-audit" for k, v in gaps.items() if v > PARITY_TOL]
        used = float(budget_usage(model, res.policy))
        if used > budget + 1e-12:
            problems.append(f"budget usage {used} over {budget}")
        if grid.min_gap > grid.resolution + 1e-12:
            problems.append(f"grid never gets within {grid.resolution:.3g} of parity (min {grid.min_gap:.3g})")
        if prop == 1:
            p = res.policy.table[()]
            rec["p"] = p
            first = _first_near_parity(model, budget, grid)
            rec["grid_p"] = first
            if first is None or abs(first - p) > 2 * grid.step + 1e-12:
                problems.append(f"p={p} but grid first reaches parity at {first}")
    else:
        r = float(res.residual_disparity)
        if grid.min_gap < r - 1e-9:
            problems.append(f"grid point with gap {grid.min_gap:.6g} beats residual {r:.6g} at {grid.argmin}")
        if grid.min_gap > r + grid.resolution + 1e-9:
            problems.append(f"grid minimum {grid.min_gap:.6g} too far above residual {r:.6g}")
        if r <= PARITY_TOL:
            problems.append(f"reported infeasible with residual {r:.3g}")
        rec["unresolved"] = r <= grid.resolution
    rec["ok"] = not problems
    return rec


def _first_near_parity(model, budget, grid: GridResult):
    stats = group_statistics(model)
    groups = list(model.groups)
    base = np.array([float(stats[g].baseline) for g in groups])
    ate = np.array([float(stats[g].ate) for g in groups])
    ps = np.linspace(0.0, 1.0, int(round(1.0 / grid.step)) + 1)
    ps = ps[ps <= budget + 1e-12]
    out = base[None, :] + ps[:, None] * ate[None, :]
    gaps = out.max(axis=1) - out.min(axis=1)
    hit = np.nonzero(gaps <= grid.resolution / 2 + 1e-12)[0]
    return float(ps[hit[0]]) if len(hit) else None


def _check_prop7(model: PopulationModel, budget: float) -> dict:
    res = prop7_construct(model, budget)
    rec = {"verdict": res.status.value, "budget": budget, "residual": res.residual_disparity, "problems": []}
    problems = rec["problems"]
    if res.status is not Status.FEASIBLE:
        problems.append("condition reported as failing")
    else:
        stats = group_statistics(model)
        top = max(float(s.baseline) for s in stats.values())
        outs = evaluate_outcomes(model, res.policy)
        spread = max(abs(float(v) - top) for v in outs.values())
        gap = float(metrics.sp_outcomes(metrics.ModelSource(model, allocate=res.policy)).max_abs_gap)
        rec.update(gap=gap, distance_to_top=spread, budget_usage=res.budget_usage,
                   budget_exceeded="budget_exceeded" in res.flags)
        if gap > PARITY_TOL:
            problems.append(f"outcome gap {gap:.3g}")
        if spread > PARITY_TOL:
            problems.append(f"outcomes miss the top baseline by {spread:.3g}")
    rec["ok"] = not problems
    return rec


def _seeded(prop: int) -> list[tuple[str, PopulationModel, float]]:
    return {
        1: [("fixture B", fixture_b(), 1.0), ("fixture B swapped", fixture_b(True), 1.0)],
        2: [("fixture A", fixture_a(), 1.0)],
        4: [("fixture C", fixture_c(), 1.0), ("fixture C tau2=0.6", fixture_c(0.6), 1.0)],
        7: [("fixture D", fixture_d(), 1.0)],
    }[prop]


def verify_proposition(prop: int, trials: int = 100, seed: int = 0, config: GeneratorConfig | None = None,
                       *, include_fixtures: bool = True) -> VerificationRun:
    if prop not in PROPS:
        raise VerificationError(f"proposition must be one of {PROPS}, got {prop}")
    if trials < 1:
        raise VerificationError("trials must be >= 1")
    config = config or DEFAULT_CONFIGS[prop]
    run = VerificationRun(f"prop{prop}", seed, trials)
    jobs = []
    if include_fixtures:
        jobs += [(-(i + 1), name, m, b) for i, (name, m, b) in enumerate(_seeded(prop))]
    for t, s in enumerate(_trial_seeds(seed, trials)):
        model, budget = draw_instance(config, s)
        if prop == 7:
            model = force_prop7_condition(model, s)
        jobs.append((t, f"seed {s}", model, budget))
    for t, source, model, budget in jobs:
        rec = check_instance(prop, model, budget)
        rec.update(trial=t, source=source, digest=io.digest(model))
        run.outcomes.append(rec)
        if not rec["ok"]:
            run.failures.append(model)
    return run


# ---------------------------------------------------------------------------
# dominance


@dataclass(frozen=True)
class Dominance:
    coarse: Scope
    fine: Scope
    coarse_gap: float
    fine_gap: float
    # signed gaps, baseline-advantaged group first
    coarse_oriented: float = 0.0
    fine_oriented: float = 0.0

    @property
    def dominates(self) -> bool:
        return (self.fine_gap <= self.coarse_gap + DOMINANCE_TOL
                and self.fine_oriented <= self.coarse_oriented + DOMINANCE_TOL)

    def strict(self, min_gap: float) -> bool:
        return self.fine_gap + min_gap < self.coarse_gap


def _comparable(coarse: Scope, fine: Scope) -> bool:
    return refines(fine, coarse) or (coarse, fine) == (Scope.LxXnoG, Scope.LxG)


def verify_dominance(model: PopulationModel, coarse: Scope, fine: Scope, budget: float = 1.0,
                     *, budget_equality: bool = False) -> Dominance:
    """Min-disparity optimum on each scope at the same budget.

    ``LxG`` against ``LxXnoG`` is not a refinement; the comparison is only
    guaranteed when the effect is constant within each combined level.
    """
    if not _comparable(coarse, fine):
        raise VerificationError(f"{fine.value} does not refine {coarse.value}")
    def opt(scope, oriented):
        return min_disparity_policy(model, scope, budget, budget_equality=budget_equality, tie_break="none",
                                    oriented=oriented)

    a, ao = opt(coarse, False), opt(coarse, True)
    b, bo = (a, ao) if fine is coarse else (opt(fine, False), opt(fine, True))
    return Dominance(coarse, fine, a.gap, b.gap, ao.lp_gap, bo.lp_gap)


def _pair_config(pair, config: GeneratorConfig | None) -> GeneratorConfig:
    config = config or DOMINANCE_CONFIG
    if pair == (Scope.LxXnoG, Scope.LxG) and not config.well_chosen_l1:
        # the group-aware scope only dominates when effects are constant within a level
        config = replace(config, well_chosen_l1=True)
    return config


def verify_dominance_suite(pair: tuple[Scope, Scope], trials: int = 200, seed: int = 0,
                           config: GeneratorConfig | None = None, min_gap: float = 1e-3) -> VerificationRun:
    coarse, fine = pair
    if not _comparable(coarse, fine):
        raise VerificationError(f"{fine.value} does not refine {coarse.value}")
    if trials < 1:
        raise VerificationError("trials must be >= 1")
    config = _pair_config(pair, config)
    run = VerificationRun(f"dominance {coarse.value}<{fine.value}", seed, trials)
    for t, s in enumerate(_trial_seeds(seed, trials)):
        model, budget = draw_instance(config, s)
        d = verify_dominance(model, coarse, fine, budget)
        rec = {"trial": t, "source": f"seed {s}", "digest": io.digest(model), "budget": budget,
               "coarse_gap": d.coarse_gap, "fine_gap": d.fine_gap, "coarse_oriented": d.coarse_oriented,
               "fine_oriented": d.fine_oriented, "strict": d.strict(min_gap),
               "ok": d.dominates}
        run.outcomes.append(rec)
        if not d.dominates:
            run.failures.append(model)
    return run


@dataclass(frozen=True)
class Witness:
    source: str
    model: PopulationModel
    budget: float
    budget_equality: bool
    coarse_gap: float
    fine_gap: float

    def to_json(self) -> dict:
        return {"source": self.source, "digest": io.digest(self.model), "budget": self.budget,
                "budget_equality": self.budget_equality, "coarse_gap": self.coarse_gap,
                "fine_gap": self.fine_gap, "model": io.population_to_json(self.model)}


def seeded_witnesses(pair: tuple[Scope, Scope]) -> list[tuple[str, PopulationModel, float, bool]]:
    if pair == (Scope.L0, Scope.L0xL1):
        # with a slack budget both scopes reach parity; forcing the spend separates them
        return [("fixture E", fixture_e(), FIXTURE_E_BUDGET, True)]
    if pair == (Scope.LxXnoG, Scope.LxG):
        return [("fixture F", fixture_f(), FIXTURE_F_BUDGET, False)]
    return []


def search_strict_witness(pair: tuple[Scope, Scope], trials: int = 200, seed: int = 0,
                          min_gap: float = 1e-3, config: GeneratorConfig | None = None,
                          *, include_seeded: bool = True) -> list[Witness]:
    """Instances where the finer scope beats the coarser one by more than ``min_gap``."""
    coarse, fine = pair
    if trials < 1:
        raise VerificationError("trials must be >= 1")
    if not _comparable(coarse, fine):
        raise VerificationError(f"{fine.value} does not refine {coarse.value}")
    found = []
    candidates = list(seeded_witnesses(pair)) if include_seeded else []
    config = _pair_config(pair, config)
    for s in _trial_seeds(seed, trials):
        model, budget = draw_instance(config, s)
        candidates.append((f"seed {s}", model, budget, False))
    for source, model, budget, equality in candidates:
        d = verify_dominance(model, coarse, fine, budget, budget_equality=equality)
        if d.strict(min_gap):
            found.append(Witness(source, model, budget, equality, d.coarse_gap, d.fine_gap))
    return found


# ---------------------------------------------------------------------------
# worked example


@dataclass(frozen=True)
class WorkedExample:
    baselines: dict
    rhs: float
    a: dict
    sign_pattern: bool
    feasible_case: object
    infeasible_case: object
    boundary_q: tuple
    grid: GridResult

    @property
    def passed(self) -> bool:
        inf = self.infeasible_case
        return (
            self.feasible_case.status is Status.FEASIBLE
            and inf.status is Status.INFEASIBLE
            and abs(inf.residual_disparity - 0.12) <= 1e-9
            and self.boundary_q == (0.0, 1.0)
            and abs(self.rhs + 0.2) <= 1e-12
            and self.sign_pattern
            and abs(self.grid.min_gap - 0.12) <= 1e-9
        )

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "baselines": self.baselines,
            "rhs": self.rhs,
            "a": io.jsonable(self.a),
            "sign_pattern_a1_pos_a2_neg": self.sign_pattern,
            "case_1": io.result_to_json(self.feasible_case, Scope.L0xL1),
            "case_2": io.result_to_json(self.infeasible_case, Scope.L0xL1),
            "boundary_q": list(self.boundary_q),
            "grid_min_gap": self.grid.min_gap,
            "grid_argmin": list(self.grid.argmin),
        }


def replicate_worked_example() -> WorkedExample:
    """Two groups, two combined levels: effects (0.3, 0.6) are compatible, (0.3, 0.2) are not."""
    model = fixture_c()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WellChosenWarning)
        bad = prop4_feasibility(model, 1.0)
        good = prop4_feasibility(fixture_c(0.6), 1.0)
    stats = group_statistics(model)
    pair = next(p for p in bad.coefficients["pairs"] if p["g"] == "g")
    levels = sorted(pair["a"])
    a = {lv: pair["a"][lv] for lv in levels}
    q = tuple(bad.closest_policy.table[lv] for lv in levels)
    grid = grid_outcome_gap(model, Scope.L0xL1, 1.0, step=1e-3)
    return WorkedExample(
        baselines={g: float(s.baseline) for g, s in stats.items()},
        rhs=pair["rhs"],
        a=a,
        sign_pattern=a[levels[0]] > 0 > a[levels[1]],
        feasible_case=good,
        infeasible_case=bad,
        boundary_q=q,
        grid=grid,
    )
