"""Small hand-built population models with known answers.

Used as golden cases in tests and as seeded witnesses in the strict
dominance search.
"""

from __future__ import annotations

from .population import Cell, PopulationModel


def fixture_a() -> PopulationModel:
    """Same p0/effect everywhere; g1 sits more often at risk level 1."""
    share = {"g0": 0.5, "g1": 0.8}
    cells = []
    for g, p in share.items():
        cells.append(Cell(g, "l1", 1, 0, 0.5 * p, 0.5, 0.6))
        cells.append(Cell(g, "l2", 2, 0, 0.5 * (1 - p), 0.5, 0.6))
    return PopulationModel.from_cells(cells)


def fixture_b(swap_effects: bool = False) -> PopulationModel:
    """One cell per group: baselines 0.6 / 0.4, effects 0.1 / 0.5.

    With ``swap_effects`` the effects become 0.5 / 0.1 and both baselines
    drop by 0.1 (to 0.5 / 0.3) so that p1 stays a probability; the baseline
    gap is still 0.2.
    """
    if swap_effects:
        return PopulationModel.from_cells([
            Cell("g0", "x", 0, 0, 0.5, 0.5, 1.0),
            Cell("g1", "x", 0, 0, 0.5, 0.3, 0.4),
        ])
    return PopulationModel.from_cells([
        Cell("g0", "x", 0, 0, 0.5, 0.6, 0.7),
        Cell("g1", "x", 0, 0, 0.5, 0.4, 0.9),
    ])


def fixture_c(tau2: float = 0.2) -> PopulationModel:
    """Two groups, two combined levels, baselines 0.6 and 0.4.

    P(L=1 | g) = 0.7, P(L=1 | g') = 0.3; level effects 0.3 and ``tau2``.
    Per-cell p0 differs by group inside a level so that p0 + effect stays
    within [0, 1] for ``tau2`` up to 0.6.
    """
    p0 = {("g", 1): 0.69, ("g", 2): 0.39, ("g'", 1): 0.4, ("g'", 2): 0.4}
    tau = {1: 0.3, 2: tau2}
    share = {"g": 0.7, "g'": 0.3}
    cells = []
    for g, p in share.items():
        for lv, w in ((1, p), (2, 1 - p)):
            base = p0[g, lv]
            cells.append(Cell(g, f"x{lv}", lv, lv, 0.5 * w, base, base + tau[lv]))
    return PopulationModel.from_cells(cells)


def fixture_d() -> PopulationModel:
    """Like fixture B with the lower group's effect at 0.25."""
    return PopulationModel.from_cells([
        Cell("g0", "x", 0, 0, 0.5, 0.6, 0.7),
        Cell("g1", "x", 0, 0, 0.5, 0.4, 0.65),
    ])


FIXTURE_E_BUDGET = 0.5


def fixture_e() -> PopulationModel:
    """Single risk level; effect level A (0.4) vs B (0.0); g mostly B, g' mostly A."""
    share_a = {"g": 0.2, "g'": 0.8}
    cells = []
    for g, a in share_a.items():
        cells.append(Cell(g, "xA", 0, "A", 0.5 * a, 0.5, 0.9))
        cells.append(Cell(g, "xB", 0, "B", 0.5 * (1 - a), 0.5, 0.5))
    return PopulationModel.from_cells(cells)


FIXTURE_F_BUDGET = 0.5


def fixture_f() -> PopulationModel:
    """Both groups share one covariate cell; baselines 0.6 / 0.4, effect 0.4."""
    return PopulationModel.from_cells([
        Cell("g", "x", 0, 0, 0.5, 0.6, 1.0),
        Cell("g'", "x", 0, 0, 0.5, 0.4, 0.8),
    ])


FIXTURES = {
    "A": fixture_a,
    "B": fixture_b,
    "C": fixture_c,
    "D": fixture_d,
    "E": fixture_e,
    "F": fixture_f,
}
