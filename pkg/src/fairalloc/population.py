"""Discrete population models over (group, covariate) cells.

A cell carries its probability mass, the probability of a positive outcome
without treatment (``p0``) and with treatment (``p1``). Historical records
can be turned into a model by stratum frequencies, assuming treatment is
as good as random within each (group, covariate) stratum.
"""

from __future__ import annotations

import csv
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

MASS_TOL = 1e-9
CATE_TOL = 1e-12
WELL_CHOSEN_TOL = 1e-9

Number = float | Fraction


class PopulationError(ValueError):
    """Raised for inputs that cannot form a population model or dataset."""


class InvalidModelError(PopulationError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid population model: " + "; ".join(self.violations))


class UnestimableError(PopulationError):
    pass


def ordered(values: Iterable[Hashable]) -> tuple:
    """Distinct values, sorted when comparable, otherwise in first-seen order."""
    seen = list(dict.fromkeys(values))
    try:
        return tuple(sorted(seen))
    except TypeError:
        return tuple(seen)


@dataclass(frozen=True)
class Cell:
    group: str
    covariate: str
    l0: Hashable
    l1: Hashable
    mass: Number
    p0: Number | None
    p1: Number | None

    @property
    def tau(self) -> Number:
        if self.p0 is None or self.p1 is None:
            raise UnestimableError(f"treatment effect unestimable at cell ({self.group}, {self.covariate})")
        return self.p1 - self.p0

    @property
    def level(self) -> tuple:
        return (self.l0, self.l1)

    @property
    def estimable(self) -> bool:
        return self.p0 is not None and self.p1 is not None


@dataclass(frozen=True)
class PopulationModel:
    cells: tuple[Cell, ...]
    groups: tuple[str, ...]
    l0_levels: tuple
    l1_levels: tuple
    treatments: tuple[str, ...] = ("0", "1")
    # strata dropped during estimation, kept for reporting
    excluded: tuple[tuple[str, str, str], ...] = ()

    @classmethod
    def from_cells(cls, cells: Iterable[Cell], treatments: Sequence[str] = ("0", "1"),
                   excluded: Sequence[tuple[str, str, str]] = ()) -> "PopulationModel":
        cells = tuple(cells)
        if not cells:
            raise PopulationError("a population model needs at least one cell")
        return cls(
            cells=cells,
            groups=ordered(c.group for c in cells),
            l0_levels=ordered(c.l0 for c in cells),
            l1_levels=ordered(c.l1 for c in cells),
            treatments=tuple(treatments),
            excluded=tuple(excluded),
        )

    @cached_property
    def group_mass(self) -> dict[str, Number]:
        out: dict[str, Number] = {g: 0 for g in self.groups}
        for c in self.cells:
            out[c.group] += c.mass
        return out

    @cached_property
    def levels(self) -> tuple:
        """Combined (l0, l1) levels that are realized by some cell."""
        return ordered(c.level for c in self.cells)

    def cells_of(self, group: str) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.group == group)

    def conditional_mass(self, cell: Cell) -> Number:
        """P(cell | G = cell.group)."""
        return cell.mass / self.group_mass[cell.group]

    @property
    def unestimable(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if not c.estimable)

    @property
    def l0_well_chosen(self) -> bool:
        return _constant_within(self.cells, lambda c: c.l0, lambda c: c.p0)

    @property
    def l1_well_chosen(self) -> bool:
        return _constant_within(self.cells, lambda c: c.l1, lambda c: c.tau)


def _constant_within(cells, key, value) -> bool:
    seen: dict = {}
    for c in cells:
        if not c.estimable:
            continue
        k = key(c)
        v = value(c)
        if k in seen:
            if abs(seen[k] - v) > WELL_CHOSEN_TOL:
                return False
        else:
            seen[k] = v
    return True


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]
    l0_well_chosen: bool
    l1_well_chosen: bool
    unestimable: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations


def _cell_name(c: Cell) -> str:
    return f"({c.group}, {c.covariate})"


def validate(model: PopulationModel) -> ValidationReport:
    v: list[str] = []
    total = 0
    pairs: Counter = Counter()
    unest = []
    for c in model.cells:
        pairs[(c.group, c.covariate)] += 1
        if c.mass < 0:
            v.append(f"negative mass {float(c.mass)} at cell {_cell_name(c)}")
        total += c.mass
        for name in ("p0", "p1"):
            p = getattr(c, name)
            if p is None:
                unest.append(f"{name} unestimable at cell {_cell_name(c)}")
            elif not 0 <= p <= 1:
                v.append(f"{name}={float(p)} outside [0,1] at cell {_cell_name(c)}")
        if c.estimable and c.tau < -CATE_TOL:
            v.append(f"negative CATE {float(c.tau)} at cell {_cell_name(c)}")
    if abs(total - 1) > MASS_TOL:
        v.append(f"cell masses sum to {float(total)}, not 1")
    for (g, x), n in pairs.items():
        if n > 1:
            v.append(f"duplicate cell ({g}, {x}) appears {n} times")
    for g, m in model.group_mass.items():
        if m <= 0:
            v.append(f"group {g} has no positive mass")
        else:
            cond = sum(c.mass / m for c in model.cells if c.group == g)
            if abs(cond - 1) > MASS_TOL:
                v.append(f"conditional masses of group {g} sum to {float(cond)}")
    return ValidationReport(
        violations=tuple(v),
        l0_well_chosen=model.l0_well_chosen,
        l1_well_chosen=model.l1_well_chosen,
        unestimable=tuple(unest),
    )


def require_valid(model: PopulationModel, *, estimable: bool = True) -> ValidationReport:
    report = validate(model)
    if not report.valid:
        raise InvalidModelError(report.violations)
    if estimable and report.unestimable:
        raise InvalidModelError(report.unestimable)
    return report


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class AllocationRecord:
    id: str
    group: str
    l0: Hashable
    l1: Hashable | None
    recommended: str
    received: str
    outcome: int | None = None
    features: tuple[tuple[str, str], ...] = ()

    @property
    def covariate(self) -> str:
        parts = [f"l0={self.l0}", f"l1={'' if self.l1 is None else self.l1}"]
        parts += [f"{k}={v}" for k, v in self.features]
        return "|".join(parts)


@dataclass(frozen=True)
class Dataset:
    records: tuple[AllocationRecord, ...]
    treatments: tuple[str, ...]

    def __post_init__(self):
        if not self.records:
            raise PopulationError("dataset empty")
        if len(self.treatments) < 2:
            raise PopulationError("a dataset needs at least two declared treatments")
        ts = set(self.treatments)
        for r in self.records:
            if r.recommended not in ts or r.received not in ts:
                raise PopulationError(f"record {r.id}: treatment outside declared set {sorted(ts)}")
            if r.outcome not in (None, 0, 1):
                raise PopulationError(f"record {r.id}: outcome must be 0 or 1, got {r.outcome!r}")

    @cached_property
    def groups(self) -> tuple[str, ...]:
        return ordered(r.group for r in self.records)

    @property
    def has_l1(self) -> bool:
        return all(r.l1 is not None for r in self.records)

    @property
    def has_outcomes(self) -> bool:
        return any(r.outcome is not None for r in self.records)


def _parse_level(s: str):
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        return s


RECORD_COLUMNS = ("id", "group", "l0", "l1", "recommended", "received", "outcome")


def read_records_csv(path, treatments: Sequence[str] | None = None) -> Dataset:
    """Read ``id,group,l0,l1,recommended,received,outcome[,feat_*]`` rows."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PopulationError("dataset empty")
        missing = [c for c in RECORD_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise PopulationError(f"missing required columns: {', '.join(missing)}")
        feats = [c for c in reader.fieldnames if c.startswith("feat_")]
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                outcome = row["outcome"].strip()
                records.append(
                    AllocationRecord(
                        id=row["id"].strip(),
                        group=row["group"].strip(),
                        l0=_parse_level(row["l0"]),
                        l1=_parse_level(row["l1"]) if row["l1"].strip() else None,
                        recommended=row["recommended"].strip(),
                        received=row["received"].strip(),
                        outcome=int(outcome) if outcome else None,
                        features=tuple((f, row[f].strip()) for f in feats),
                    )
                )
            except (ValueError, AttributeError) as exc:
                raise PopulationError(f"line {lineno}: {exc}") from None
    if not records:
        raise PopulationError("dataset empty")
    if treatments is None:
        seen = ordered([r.recommended for r in records] + [r.received for r in records])
        treatments = ("0", "1") if set(seen) <= {"0", "1"} else seen
    return Dataset(tuple(records), tuple(treatments))


@dataclass(frozen=True)
class EstimationConfig:
    """``mode`` is ``"audit"`` (keep unestimable strata, allow negative effects)
    or ``"synthesis"`` (drop unestimable strata, clamp negative effects)."""

    mode: str = "synthesis"
    control: str = "0"
    treated: str = "1"


def from_records(data: Dataset, config: EstimationConfig = EstimationConfig()) -> PopulationModel:
    if config.mode not in ("audit", "synthesis"):
        raise PopulationError(f"unknown estimation mode {config.mode!r}")
    if not data.has_outcomes:
        raise PopulationError("outcome column has no values")
    if config.mode == "synthesis" and set(data.treatments) != {config.control, config.treated}:
        raise PopulationError(f"synthesis requires binary treatments, got {list(data.treatments)}")

    n = len(data.records)
    count: Counter = Counter()
    arm_n: Counter = Counter()
    arm_pos: Counter = Counter()
    info: dict = {}
    for r in data.records:
        key = (r.group, r.covariate)
        count[key] += 1
        info.setdefault(key, r)
        if r.outcome is None:
            continue
        arm_n[key, r.received] += 1
        arm_pos[key, r.received] += r.outcome

    cells = []
    excluded = []
    for key in ordered(count):
        g, x = key
        r = info[key]
        est = {}
        for name, arm in (("p0", config.control), ("p1", config.treated)):
            k = arm_n[key, arm]
            est[name] = Fraction(arm_pos[key, arm], k) if k else None
        if est["p0"] is None or est["p1"] is None:
            which = "p0" if est["p0"] is None else "p1"
            excluded.append((g, x, f"{which} unestimable"))
            if config.mode == "synthesis":
                continue
        if config.mode == "synthesis" and est["p1"] < est["p0"]:
            warnings.warn(f"negative empirical effect at ({g}, {x}) clamped to zero for synthesis", stacklevel=2)
            est["p1"] = est["p0"]
        cells.append(Cell(g, x, r.l0, r.l1, Fraction(count[key], n), est["p0"], est["p1"]))

    if not cells or all(not c.estimable for c in cells):
        raise PopulationError("all strata unestimable")
    if config.mode == "synthesis" and excluded:
        kept = sum(c.mass for c in cells)
        cells = [replace(c, mass=c.mass / kept) for c in cells]
    return PopulationModel.from_cells(cells, treatments=(config.control, config.treated), excluded=excluded)


# ---------------------------------------------------------------------------
# random instances


@dataclass(frozen=True)
class Shape:
    groups: int = 2
    l0: int = 2
    l1: int = 1
    covariates: int = 1


def generate_random(seed: int, shape: Shape = Shape(), *, well_chosen_l0: bool = False,
                    well_chosen_l1: bool = False) -> PopulationModel:
    """Random valid model with ``groups x l0 x l1 x covariates`` cells.

    Covariate ids encode the levels, so a covariate value is shared across
    groups. Masses are Dirichlet draws; effects are kept non-negative and
    ``p1 <= 1``.
    """
    if min(shape.groups, shape.l0, shape.l1, shape.covariates) < 1:
        raise PopulationError(f"impossible shape {shape}")
    rng = np.random.default_rng(seed)
    groups = [f"g{i}" for i in range(shape.groups)]
    combos = [(a, b, k) for a in range(shape.l0) for b in range(shape.l1) for k in range(shape.covariates)]

    group_p = rng.dirichlet(np.ones(shape.groups))
    p0_level = rng.uniform(0.05, 0.95, size=shape.l0)
    keys = [(g, combo) for g in groups for combo in combos]
    if well_chosen_l0:
        p0 = {key: p0_level[key[1][0]] for key in keys}
    else:
        p0 = {key: v for key, v in zip(keys, rng.uniform(0.05, 0.95, size=len(keys)))}

    u = rng.uniform(0.0, 1.0, size=max(shape.l1, len(keys)))
    if well_chosen_l1:
        tau_level = {}
        for b in range(shape.l1):
            head = 1.0 - max(p0[key] for key in keys if key[1][1] == b)
            tau_level[b] = u[b] * head
        tau = {key: tau_level[key[1][1]] for key in keys}
    else:
        tau = {key: u[i] * (1.0 - p0[key]) for i, key in enumerate(keys)}

    cells = []
    for gi, g in enumerate(groups):
        within = rng.dirichlet(np.ones(len(combos)))
        for ci, combo in enumerate(combos):
            key = (g, combo)
            a, b, k = combo
            cells.append(Cell(g, f"x{a}.{b}.{k}", a, b, float(group_p[gi] * within[ci]),
                              float(p0[key]), float(p0[key] + tau[key])))
    return PopulationModel.from_cells(cells)


# ---------------------------------------------------------------------------
# group statistics


@dataclass(frozen=True)
class GroupStats:
    mass: Number
    baseline: Number
    ate: Number
    l0_marginal: Mapping
    l1_marginal: Mapping
    l_marginal: Mapping
    # mass-weighted effect within (group, level); absent when the level has no mass
    l0_effect: Mapping = field(default_factory=dict)
    l_effect: Mapping = field(default_factory=dict)


def group_statistics(model: PopulationModel) -> dict[str, GroupStats]:
    out = {}
    for g in model.groups:
        m = model.group_mass[g]
        base = 0
        ate = 0
        l0m: dict = defaultdict(int)
        l1m: dict = defaultdict(int)
        lm: dict = defaultdict(int)
        l0t: dict = defaultdict(int)
        lt: dict = defaultdict(int)
        for c in model.cells_of(g):
            w = c.mass / m
            base += w * c.p0
            ate += w * c.tau
            l0m[c.l0] += w
            l1m[c.l1] += w
            lm[c.level] += w
            l0t[c.l0] += w * c.tau
            lt[c.level] += w * c.tau
        out[g] = GroupStats(
            mass=m,
            baseline=base,
            ate=ate,
            l0_marginal={k: l0m.get(k, 0) for k in model.l0_levels},
            l1_marginal={k: l1m.get(k, 0) for k in model.l1_levels},
            l_marginal={k: lm.get(k, 0) for k in model.levels},
            l0_effect={k: l0t[k] / l0m[k] for k in l0m if l0m[k] > 0},
            l_effect={k: lt[k] / lm[k] for k in lm if lm[k] > 0},
        )
    return out


def level_effects(model: PopulationModel) -> dict:
    """Population mass-weighted treatment effect per combined level."""
    num: dict = defaultdict(int)
    den: dict = defaultdict(int)
    for c in model.cells:
        num[c.level] += c.mass * c.tau
        den[c.level] += c.mass
    return {k: (num[k] / den[k] if den[k] > 0 else 0) for k in model.levels}


def level0_baselines(model: PopulationModel) -> dict:
    """Population P(Y0=1 | L0=l)."""
    num: dict = defaultdict(int)
    den: dict = defaultdict(int)
    for c in model.cells:
        num[c.l0] += c.mass * c.p0
        den[c.l0] += c.mass
    return {k: (num[k] / den[k] if den[k] > 0 else 0) for k in model.l0_levels}
