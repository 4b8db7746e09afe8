"""Randomized binary-treatment policies over conditioning scopes."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Mapping

from .population import Cell, PopulationModel, ordered


class Scope(str, enum.Enum):
    GLOBAL = "GLOBAL"
    L0 = "L0"
    L0xL1 = "L0xL1"
    LxXnoG = "LxXnoG"
    LxG = "LxG"
    FULL = "FULL"

    @classmethod
    def parse(cls, name: str) -> "Scope":
        key = name.strip()
        if key in SCOPE_ALIASES:
            return SCOPE_ALIASES[key]
        for s in cls:
            if s.value.lower() == key.lower():
                return s
        raise ValueError(f"unknown scope {name!r}")

    @property
    def cli_name(self) -> str:
        return {v: k for k, v in SCOPE_ALIASES.items()}[self]


SCOPE_ALIASES = {
    "global": Scope.GLOBAL,
    "l0": Scope.L0,
    "l0l1": Scope.L0xL1,
    "lx": Scope.LxXnoG,
    "lg": Scope.LxG,
    "full": Scope.FULL,
}

# immediate coarsenings of each scope
_PARENTS = {
    Scope.GLOBAL: (),
    Scope.L0: (Scope.GLOBAL,),
    Scope.L0xL1: (Scope.L0,),
    Scope.LxXnoG: (Scope.L0xL1,),
    Scope.LxG: (Scope.L0xL1,),
    Scope.FULL: (Scope.LxG, Scope.LxXnoG),
}


def refines(fine: Scope, coarse: Scope) -> bool:
    """True when every ``coarse``-measurable policy is also ``fine``-measurable."""
    if fine is coarse:
        return True
    return any(refines(p, coarse) for p in _PARENTS[fine])


class PolicyError(ValueError):
    pass


class UncoveredKeyError(PolicyError):
    pass


def project(cell: Cell, scope: Scope) -> Hashable:
    if scope is Scope.GLOBAL:
        return ()
    if scope is Scope.L0:
        return cell.l0
    if scope is Scope.L0xL1:
        return (cell.l0, cell.l1)
    if scope is Scope.LxXnoG:
        return (cell.l0, cell.l1, cell.covariate)
    if scope is Scope.LxG:
        return (cell.l0, cell.l1, cell.group)
    if scope is Scope.FULL:
        return (cell.group, cell.covariate)
    raise PolicyError(f"unknown scope {scope!r}")


def scope_keys(model: PopulationModel, scope: Scope) -> tuple:
    """Realized scope keys in a deterministic order."""
    return ordered(project(c, scope) for c in model.cells)


@dataclass(frozen=True)
class Policy:
    """Probability ``q`` of assigning treatment 1, per scope key."""

    scope: Scope
    table: Mapping[Hashable, float]
    label: str = ""

    def __post_init__(self):
        for k, q in self.table.items():
            if not 0.0 <= q <= 1.0:
                raise PolicyError(f"q={q} outside [0,1] at key {k!r}")

    def q(self, cell: Cell) -> float:
        key = project(cell, self.scope)
        try:
            return self.table[key]
        except KeyError:
            raise UncoveredKeyError(f"policy ({self.scope.value}) has no entry for key {key!r}") from None

    @classmethod
    def constant(cls, q: float, label: str = "") -> "Policy":
        return cls(Scope.GLOBAL, {(): q}, label or f"constant q={q}")

    @classmethod
    def from_vector(cls, model: PopulationModel, scope: Scope, values, label: str = "") -> "Policy":
        keys = scope_keys(model, scope)
        if len(values) != len(keys):
            raise PolicyError(f"expected {len(keys)} values for scope {scope.value}, got {len(values)}")
        return cls(scope, {k: min(1.0, max(0.0, float(v))) for k, v in zip(keys, values)}, label)

    def vector(self, model: PopulationModel) -> list[float]:
        return [self.table[k] for k in scope_keys(model, self.scope)]


def zero_policy(model: PopulationModel, scope: Scope = Scope.GLOBAL) -> Policy:
    return Policy(scope, {k: 0.0 for k in scope_keys(model, scope)}, "no treatment")


def evaluate_outcomes(model: PopulationModel, policy: Policy) -> dict[str, float]:
    """P(Y(mu(X)) = 1 | G = g): treated cells move from p0 to p1 with probability q."""
    out = {}
    for g in model.groups:
        m = model.group_mass[g]
        out[g] = sum((c.mass / m) * (c.p0 + policy.q(c) * c.tau) for c in model.cells_of(g))
    return out


@dataclass(frozen=True)
class AllocationRates:
    by_group: dict[str, float]
    by_group_level: dict[tuple, float] = field(default_factory=dict)


def allocation_rates(model: PopulationModel, policy: Policy, legit: str = "l0l1") -> AllocationRates:
    """P(mu = 1 | G = g) and P(mu = 1 | G = g, L = l) for the chosen conditioning levels."""
    level = _level_fn(legit)
    by_group = {}
    num: dict = defaultdict(float)
    den: dict = defaultdict(float)
    for g in model.groups:
        m = model.group_mass[g]
        by_group[g] = sum((c.mass / m) * policy.q(c) for c in model.cells_of(g))
    for c in model.cells:
        k = (c.group, level(c))
        num[k] += c.mass * policy.q(c)
        den[k] += c.mass
    by_level = {k: num[k] / den[k] for k in den if den[k] > 0}
    return AllocationRates(by_group, by_level)


def budget_usage(model: PopulationModel, policy: Policy) -> float:
    """Population treatment probability P(mu(X) = 1)."""
    return sum(c.mass * policy.q(c) for c in model.cells)


def lift(policy: Policy, finer: Scope, model: PopulationModel) -> Policy:
    """Re-express ``policy`` on a refining scope without changing any cell's q."""
    if not refines(finer, policy.scope):
        raise PolicyError(f"{finer.value} does not refine {policy.scope.value}")
    table: dict = {}
    for c in model.cells:
        key = project(c, finer)
        q = policy.q(c)
        if key in table and table[key] != q:
            raise PolicyError(f"scope {finer.value} key {key!r} mixes cells with different q")
        table[key] = q
    return Policy(finer, {k: table[k] for k in scope_keys(model, finer)}, policy.label)


def _level_fn(legit: str):
    if legit == "l0":
        return lambda c: c.l0
    if legit == "l0l1":
        return lambda c: c.level
    raise PolicyError(f"unknown conditioning levels {legit!r} (expected 'l0' or 'l0l1')")


def measurable(scope: Scope, legit: str) -> bool:
    """Whether every ``scope`` policy is a function of the conditioning levels alone."""
    return refines(Scope.L0 if legit == "l0" else Scope.L0xL1, scope)


# ---------------------------------------------------------------------------
# faithfulness


@dataclass(frozen=True)
class FaithfulnessKernel:
    """P(received = t' | scope key, recommended = t).

    ``table`` maps ``(key, t)`` to a distribution ``{t': prob}``. An empty
    kernel is the identity (everyone receives what they were recommended).
    """

    scope: Scope = Scope.GLOBAL
    table: Mapping[tuple, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        for k, dist in self.table.items():
            if abs(sum(dist.values()) - 1.0) > 1e-9:
                raise PolicyError(f"kernel distribution at {k!r} sums to {sum(dist.values())}")
            if any(p < 0 for p in dist.values()):
                raise PolicyError(f"negative kernel probability at {k!r}")

    @property
    def is_identity(self) -> bool:
        return not self.table

    @classmethod
    def identity(cls) -> "FaithfulnessKernel":
        return cls()

    def prob(self, cell: Cell, recommended: str, received: str) -> float:
        if self.is_identity:
            return 1.0 if recommended == received else 0.0
        key = (project(cell, self.scope), recommended)
        try:
            return self.table[key].get(received, 0.0)
        except KeyError:
            raise UncoveredKeyError(f"kernel has no entry for {key!r}") from None


def derived_allocation(model: PopulationModel, recommend: Policy, kernel: FaithfulnessKernel) -> Policy:
    """Cell-level allocation policy induced by a recommendation policy and a kernel."""
    table = {}
    for c in model.cells:
        q = recommend.q(c)
        table[project(c, Scope.FULL)] = (1.0 - q) * kernel.prob(c, "0", "1") + q * kernel.prob(c, "1", "1")
    return Policy(Scope.FULL, table, "derived allocation")


# ---------------------------------------------------------------------------
# linear forms over the policy table (used by the LP builders)


@dataclass(frozen=True)
class LinearForms:
    """Affine maps from a scope's q-vector to group-level quantities."""

    keys: tuple
    outcome_const: dict[str, float]
    outcome_coef: dict[str, list[float]]
    alloc_coef: dict[str, list[float]]
    budget_coef: list[float]
    # (group, level) -> coefficients, for conditional constraints
    level_outcome_const: dict[tuple, float]
    level_outcome_coef: dict[tuple, list[float]]
    level_alloc_coef: dict[tuple, list[float]]


def linear_forms(model: PopulationModel, scope: Scope, legit: str = "l0l1") -> LinearForms:
    keys = scope_keys(model, scope)
    index = {k: i for i, k in enumerate(keys)}
    level = _level_fn(legit)
    n = len(keys)
    oc: dict = {g: 0.0 for g in model.groups}
    ov: dict = {g: [0.0] * n for g in model.groups}
    av: dict = {g: [0.0] * n for g in model.groups}
    bv = [0.0] * n
    lmass: dict = defaultdict(float)
    for c in model.cells:
        lmass[c.group, level(c)] += float(c.mass)
    loc: dict = defaultdict(float)
    lov: dict = defaultdict(lambda: [0.0] * n)
    lav: dict = defaultdict(lambda: [0.0] * n)
    for c in model.cells:
        i = index[project(c, scope)]
        w = float(c.mass / model.group_mass[c.group])
        oc[c.group] += w * float(c.p0)
        ov[c.group][i] += w * float(c.tau)
        av[c.group][i] += w
        bv[i] += float(c.mass)
        gl = (c.group, level(c))
        wl = float(c.mass) / lmass[gl]
        loc[gl] += wl * float(c.p0)
        lov[gl][i] += wl * float(c.tau)
        lav[gl][i] += wl
    return LinearForms(keys, oc, ov, av, bv, dict(loc), dict(lov), dict(lav))
