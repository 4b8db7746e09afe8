"""Eight group-fairness definitions as pairwise disparity reports.

Enrollment (recommendation policy), faithfulness and allocation (received
treatment), and outcome parity, each unconditional and conditional on
legitimate levels (``"l0"`` or ``"l0l1"``). Probabilities come either from
historical records (exact rational frequencies) or from a population model
with policies (analytic).
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

from .policy import FaithfulnessKernel, Policy, derived_allocation
from .population import Dataset, PopulationModel, ordered

ANALYTIC_EPS = 1e-9
EMPIRICAL_EPS = 0.02

DEFINITIONS = {
    1: "statistical parity in enrollment",
    2: "conditional statistical parity in enrollment",
    3: "equalized faithfulness in allocation",
    4: "conditional equalized faithfulness in allocation",
    5: "statistical parity in allocation",
    6: "conditional statistical parity in allocation",
    7: "statistical parity in outcomes",
    8: "conditional statistical parity in outcomes",
}
STAGES = {1: "enrollment", 2: "enrollment", 3: "allocation", 4: "allocation",
          5: "allocation", 6: "allocation", 7: "outcomes", 8: "outcomes"}
CONDITIONAL = {2, 4, 6, 8}


class MetricsError(ValueError):
    """Requested definition cannot be computed from this source."""


class UndefinedPairWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# probability sources


def _level_of(legit: str | None, l0, l1):
    if legit is None:
        return None
    if legit == "l0":
        return l0
    if legit == "l0l1":
        return (l0, l1)
    raise MetricsError(f"unknown conditioning levels {legit!r}")


class DatasetSource:
    """Empirical conditional frequencies over historical records."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.groups = dataset.groups
        self.treatments = dataset.treatments
        self._counts = Counter(
            (r.group, r.l0, r.l1, r.recommended, r.received, r.outcome) for r in dataset.records
        )
        self.default_eps = EMPIRICAL_EPS

    def check(self, definition: int, legit: str | None) -> None:
        if definition in CONDITIONAL and legit == "l0l1" and not self.dataset.has_l1:
            raise MetricsError("conditioning on l0l1 requires an l1 value on every record")
        if definition in (7, 8) and not self.dataset.has_outcomes:
            raise MetricsError("outcome definitions require the outcome column")

    def levels(self, legit: str) -> tuple:
        return ordered(_level_of(legit, k[1], k[2]) for k in self._counts)

    def _freq(self, g, level, legit, num, den) -> Fraction | None:
        n = d = 0
        for (grp, l0, l1, rec, recv, y), c in self._counts.items():
            if grp != g:
                continue
            if level is not None and _level_of(legit, l0, l1) != level:
                continue
            if den(rec, recv, y):
                d += c
                if num(rec, recv, y):
                    n += c
        return Fraction(n, d) if d else None

    def enroll(self, g, t, level=None, legit=None):
        return self._freq(g, level, legit, lambda rec, recv, y: rec == t, lambda *a: True)

    def faithful(self, g, t, t2, level=None, legit=None):
        return self._freq(g, level, legit, lambda rec, recv, y: recv == t2, lambda rec, recv, y: rec == t)

    def alloc(self, g, t, level=None, legit=None):
        return self._freq(g, level, legit, lambda rec, recv, y: recv == t, lambda *a: True)

    def outcome(self, g, level=None, legit=None):
        return self._freq(g, level, legit, lambda rec, recv, y: y == 1, lambda rec, recv, y: y is not None)


class ModelSource:
    """Analytic probabilities from a population model and policies.

    Enrollment uses ``recommend``; faithfulness uses ``recommend`` with
    ``kernel`` (identity when omitted); allocation and outcomes use
    ``allocate``, or the allocation induced by ``recommend`` and ``kernel``.
    """

    def __init__(self, model: PopulationModel, recommend: Policy | None = None,
                 kernel: FaithfulnessKernel | None = None, allocate: Policy | None = None):
        self.model = model
        self.recommend = recommend
        self.kernel = kernel if kernel is not None else FaithfulnessKernel.identity()
        if allocate is None and recommend is not None:
            allocate = derived_allocation(model, recommend, self.kernel)
        self.allocate = allocate
        self.groups = model.groups
        self.treatments = ("0", "1")
        self.default_eps = ANALYTIC_EPS

    def check(self, definition: int, legit: str | None) -> None:
        if definition in (1, 2, 3, 4) and self.recommend is None:
            raise MetricsError(f"definition {definition} needs a recommendation policy")
        if definition in (5, 6, 7, 8) and self.allocate is None:
            raise MetricsError(f"definition {definition} needs an allocation policy")

    def levels(self, legit: str) -> tuple:
        return ordered(_level_of(legit, c.l0, c.l1) for c in self.model.cells)

    def _cells(self, g, level, legit):
        for c in self.model.cells:
            if c.group == g and (level is None or _level_of(legit, c.l0, c.l1) == level):
                yield c

    @staticmethod
    def _treat(q, t):
        return q if t == "1" else 1 - q

    def _ratio(self, pairs):
        num = den = 0
        for n, d in pairs:
            num += n
            den += d
        return num / den if den > 0 else None

    def enroll(self, g, t, level=None, legit=None):
        return self._ratio((c.mass * self._treat(self.recommend.q(c), t), c.mass) for c in self._cells(g, level, legit))

    def faithful(self, g, t, t2, level=None, legit=None):
        terms = []
        for c in self._cells(g, level, legit):
            w = c.mass * self._treat(self.recommend.q(c), t)
            terms.append((w * self.kernel.prob(c, t, t2), w))
        return self._ratio(terms)

    def alloc(self, g, t, level=None, legit=None):
        return self._ratio((c.mass * self._treat(self.allocate.q(c), t), c.mass) for c in self._cells(g, level, legit))

    def outcome(self, g, level=None, legit=None):
        return self._ratio((c.mass * (c.p0 + self.allocate.q(c) * c.tau), c.mass) for c in self._cells(g, level, legit))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Stratum:
    label: tuple[tuple[str, Hashable], ...]
    rates: dict

    def describe(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.label) or "all"


@dataclass(frozen=True)
class PairGap:
    group: str
    other: str
    stratum: tuple
    diff: object


@dataclass(frozen=True)
class DisparityReport:
    definition: int
    legit: str | None
    groups: tuple
    strata: tuple[Stratum, ...]
    eps: float
    pairs: tuple[PairGap, ...] = ()
    undefined: tuple[tuple[str, str, tuple], ...] = ()
    levels: tuple = field(default=())

    @property
    def name(self) -> str:
        return DEFINITIONS[self.definition]

    @property
    def max_abs_gap(self):
        return max((abs(p.diff) for p in self.pairs), default=0)

    @property
    def satisfied(self) -> bool:
        return self.max_abs_gap <= self.eps

    def matrix(self, stratum: tuple) -> dict[tuple[str, str], object]:
        return {(p.group, p.other): p.diff for p in self.pairs if p.stratum == stratum}


def _build(definition, src, eps, legit, strata_spec) -> DisparityReport:
    groups = src.groups
    strata = []
    pairs = []
    undefined = []
    for label, rate_fn in strata_spec:
        rates = {g: rate_fn(g) for g in groups}
        strata.append(Stratum(label, rates))
        for g in groups:
            for h in groups:
                if g == h:
                    continue
                if rates[g] is None or rates[h] is None:
                    undefined.append((g, h, label))
                else:
                    pairs.append(PairGap(g, h, label, rates[g] - rates[h]))
    if undefined:
        warnings.warn(
            f"definition {definition}: {len(undefined)} group pairs have zero conditioning mass",
            UndefinedPairWarning,
            stacklevel=3,
        )
    lv = src.levels(legit) if legit else ()
    return DisparityReport(definition, legit, tuple(groups), tuple(strata), eps, tuple(pairs), tuple(undefined), lv)


def _prepare(src, definition, eps, legit):
    if definition in CONDITIONAL and legit is None:
        raise MetricsError(f"definition {definition} needs conditioning levels")
    src.check(definition, legit)
    return src.default_eps if eps is None else eps


def sp_enrollment(src, eps=None) -> DisparityReport:
    eps = _prepare(src, 1, eps, None)
    spec = [((("t", t),), lambda g, t=t: src.enroll(g, t)) for t in src.treatments]
    return _build(1, src, eps, None, spec)


def csp_enrollment(src, eps=None, legit="l0") -> DisparityReport:
    eps = _prepare(src, 2, eps, legit)
    spec = [((("level", lv), ("t", t)), lambda g, t=t, lv=lv: src.enroll(g, t, lv, legit))
            for lv in src.levels(legit) for t in src.treatments]
    return _build(2, src, eps, legit, spec)


def equalized_faithfulness(src, eps=None) -> DisparityReport:
    eps = _prepare(src, 3, eps, None)
    spec = [((("t", t), ("t_received", t2)), lambda g, t=t, t2=t2: src.faithful(g, t, t2))
            for t in src.treatments for t2 in src.treatments]
    return _build(3, src, eps, None, spec)


def conditional_equalized_faithfulness(src, eps=None, legit="l0") -> DisparityReport:
    eps = _prepare(src, 4, eps, legit)
    spec = [((("level", lv), ("t", t), ("t_received", t2)),
             lambda g, t=t, t2=t2, lv=lv: src.faithful(g, t, t2, lv, legit))
            for lv in src.levels(legit) for t in src.treatments for t2 in src.treatments]
    return _build(4, src, eps, legit, spec)


def sp_allocation(src, eps=None) -> DisparityReport:
    eps = _prepare(src, 5, eps, None)
    spec = [((("t", t),), lambda g, t=t: src.alloc(g, t)) for t in src.treatments]
    return _build(5, src, eps, None, spec)


def csp_allocation(src, eps=None, legit="l0") -> DisparityReport:
    eps = _prepare(src, 6, eps, legit)
    spec = [((("level", lv), ("t", t)), lambda g, t=t, lv=lv: src.alloc(g, t, lv, legit))
            for lv in src.levels(legit) for t in src.treatments]
    return _build(6, src, eps, legit, spec)


def sp_outcomes(src, eps=None) -> DisparityReport:
    eps = _prepare(src, 7, eps, None)
    return _build(7, src, eps, None, [((), lambda g: src.outcome(g))])


def csp_outcomes(src, eps=None, legit="l0") -> DisparityReport:
    eps = _prepare(src, 8, eps, legit)
    spec = [((("level", lv),), lambda g, lv=lv: src.outcome(g, lv, legit)) for lv in src.levels(legit)]
    return _build(8, src, eps, legit, spec)


COMPUTE = {
    1: lambda src, eps, legit: sp_enrollment(src, eps),
    2: csp_enrollment,
    3: lambda src, eps, legit: equalized_faithfulness(src, eps),
    4: conditional_equalized_faithfulness,
    5: lambda src, eps, legit: sp_allocation(src, eps),
    6: csp_allocation,
    7: lambda src, eps, legit: sp_outcomes(src, eps),
    8: csp_outcomes,
}


def compute(definition: int, src, eps=None, legit: str = "l0") -> DisparityReport:
    return COMPUTE[definition](src, eps, legit)


@dataclass(frozen=True)
class Audit:
    reports: tuple[DisparityReport, ...]
    skipped: tuple[tuple[int, str], ...]

    @property
    def satisfied(self) -> bool:
        return all(r.satisfied for r in self.reports)

    def report(self, definition: int) -> DisparityReport:
        for r in self.reports:
            if r.definition == definition:
                return r
        raise KeyError(definition)


def audit_all(src, eps=None, legit: str = "l0", definitions: Sequence[int] = tuple(DEFINITIONS)) -> Audit:
    """Every applicable definition; inapplicable ones are listed as skipped with the reason."""
    reports = []
    skipped = []
    for d in definitions:
        try:
            reports.append(compute(d, src, eps, legit))
        except MetricsError as exc:
            skipped.append((d, str(exc)))
    return Audit(tuple(reports), tuple(skipped))
