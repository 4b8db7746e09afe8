"""Dense two-phase simplex over box-bounded variables."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernel

PIVOT_TOL = 1e-11
INFEASIBLE_TOL = 1e-9
MAX_ITER = 50_000


class LpStatus(str, enum.Enum):
    FEASIBLE_OPTIMAL = "FEASIBLE_OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"


class LpError(ValueError):
    """Malformed linear program (shape mismatch, non-finite coefficients)."""


class LpIterationLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """minimize c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi.

    ``bounds`` defaults to [0, 1] for every variable. Upper bounds may be
    ``math.inf``; lower bounds may be ``-math.inf``.
    """

    objective: Sequence[float]
    eq_constraints: Sequence[tuple[Sequence[float], float]] = ()
    ineq_constraints: Sequence[tuple[Sequence[float], float]] = ()
    bounds: Sequence[tuple[float, float]] | None = None

    @property
    def n(self) -> int:
        return len(self.objective)

    def arrays(self):
        n = self.n
        c = np.asarray(self.objective, dtype=float).reshape(n)

        def stack(rows):
            if not rows:
                return np.zeros((0, n)), np.zeros(0)
            A = np.asarray([list(a) for a, _ in rows], dtype=float)
            b = np.asarray([b for _, b in rows], dtype=float)
            if A.shape != (len(rows), n):
                raise LpError(f"constraint rows must have {n} coefficients, got shape {A.shape}")
            return A, b

        A_eq, b_eq = stack(self.eq_constraints)
        A_ub, b_ub = stack(self.ineq_constraints)
        if self.bounds is None:
            lo, hi = np.zeros(n), np.ones(n)
        else:
            if len(self.bounds) != n:
                raise LpError(f"expected {n} bounds, got {len(self.bounds)}")
            lo = np.array([b[0] for b in self.bounds], dtype=float)
            hi = np.array([b[1] for b in self.bounds], dtype=float)
        for name, arr in (("objective", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_ub", A_ub), ("b_ub", b_ub)):
            if not np.all(np.isfinite(arr)):
                raise LpError(f"non-finite value in {name}")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise LpError("invalid bounds")
        return c, A_eq, b_eq, A_ub, b_ub, lo, hi


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    objective_value: float | None
    residual: float = 0.0
    certificate: dict = field(default_factory=dict)
    iterations: int = 0
    max_violation: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.FEASIBLE_OPTIMAL


def violations(lp: LinearProgram, x) -> list[tuple[str, int, float]]:
    """Constraint violations of point ``x`` as ``(kind, index, amount)``, amount > 0."""
    c, A_eq, b_eq, A_ub, b_ub, lo, hi = lp.arrays()
    x = np.asarray(x, dtype=float)
    out = []
    for i, r in enumerate(A_eq @ x - b_eq):
        if r != 0.0:
            out.append(("eq", i, abs(float(r))))
    for i, r in enumerate(A_ub @ x - b_ub):
        if r > 0.0:
            out.append(("ineq", i, float(r)))
    for j in range(len(x)):
        if x[j] < lo[j]:
            out.append(("lower", j, float(lo[j] - x[j])))
        elif x[j] > hi[j]:
            out.append(("upper", j, float(x[j] - hi[j])))
    return out


def _standard_form(lp: LinearProgram):
    """Map to  min c'y  s.t. M y (=, <=) r,  y >= 0  and return the back-substitution."""
    c, A_eq, b_eq, A_ub, b_ub, lo, hi = lp.arrays()
    n = lp.n
    # each original variable x_j = offset_j + sum_k T[j, k] y_k
    cols = []  # (var, sign)
    offset = np.zeros(n)
    extra_ub = []  # (column index, bound)
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                extra_ub.append((len(cols) - 1, hi[j] - lo[j]))
        elif np.isfinite(hi[j]):
            offset[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    k = len(cols)
    S = np.zeros((n, k))
    for idx, (j, sgn) in enumerate(cols):
        S[j, idx] = sgn

    c_y = c @ S
    const = float(c @ offset)
    E = A_eq @ S
    e = b_eq - A_eq @ offset
    U = A_ub @ S
    u = b_ub - A_ub @ offset
    if extra_ub:
        B = np.zeros((len(extra_ub), k))
        for r, (col, bound) in enumerate(extra_ub):
            B[r, col] = 1.0
        U = np.vstack([U, B])
        u = np.concatenate([u, [b for _, b in extra_ub]])
    return c_y, const, E, e, U, u, S, offset


def solve(lp: LinearProgram, *, debug: bool = False) -> LpResult:
    c_y, const, E, e, U, u, S, offset = _standard_form(lp)
    k = len(c_y)
    m_eq, m_ub = E.shape[0], U.shape[0]
    m = m_eq + m_ub

    # columns: y (k) | slacks (m_ub) | artificials
    rows = []
    rhs = []
    need_art = []
    for i in range(m_eq):
        a, b = E[i].copy(), e[i]
        if b < 0:
            a, b = -a, -b
        rows.append((a, np.zeros(m_ub), b))
        need_art.append(True)
    for i in range(m_ub):
        a, b = U[i].copy(), u[i]
        s = np.zeros(m_ub)
        s[i] = 1.0
        if b < 0:
            a, b, s = -a, -b, -s
            need_art.append(True)
        else:
            need_art.append(False)
        rows.append((a, s, b))
    n_art = sum(need_art)
    n_real = k + m_ub
    ncols = n_real + n_art
    T = np.zeros((m + 1, ncols + 1))
    basis = np.zeros(m, dtype=np.int64)
    art = n_real
    for i, (a, s, b) in enumerate(rows):
        T[i, :k] = a
        T[i, k:n_real] = s
        T[i, -1] = b
        if need_art[i]:
            T[i, art] = 1.0
            basis[i] = art
            art += 1
        else:
            basis[i] = k + (i - m_eq)

    total_iter = 0
    residual = 0.0
    if n_art:
        # phase one: minimise the sum of artificials
        T[m, :] = 0.0
        T[m, n_real:ncols] = 1.0
        for i in range(m):
            if basis[i] >= n_real:
                T[m, :] -= T[i, :]
        status, it = kernel.iterate(T, basis, ncols, PIVOT_TOL, MAX_ITER)
        total_iter += it
        if status == kernel.ITERATION_LIMIT:
            raise LpIterationLimit("phase one did not terminate")
        residual = max(0.0, -float(T[m, -1]))
        if residual > INFEASIBLE_TOL:
            y = _read_basic(T, basis, k)
            x = offset + S @ y
            viol = violations(lp, x)
            cert = {
                "residual": residual,
                "point": x.tolist(),
                "violated": [{"kind": kd, "index": i, "amount": amt} for kd, i, amt in viol if amt > INFEASIBLE_TOL],
            }
            if debug:
                cert["tableau"] = T.tolist()
            return LpResult(LpStatus.INFEASIBLE, None, None, residual, cert, total_iter)
        # drive remaining artificials out of the basis
        keep = []
        for i in range(m):
            if basis[i] >= n_real:
                piv_cols = np.flatnonzero(np.abs(T[i, :n_real]) > PIVOT_TOL)
                if piv_cols.size:
                    kernel.pivot(T, basis, i, int(piv_cols[0]))
                    keep.append(i)
                # else: redundant row, dropped below
            else:
                keep.append(i)
        if len(keep) < m:
            T = np.ascontiguousarray(np.vstack([T[keep], T[m:m + 1]]))
            basis = np.ascontiguousarray(basis[keep])
            m = len(keep)

    # phase two
    T[m, :] = 0.0
    T[m, :k] = c_y
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m, :] -= cb * T[i, :]
    status, it = kernel.iterate(T, basis, n_real, PIVOT_TOL, MAX_ITER)
    total_iter += it
    if status == kernel.ITERATION_LIMIT:
        raise LpIterationLimit("phase two did not terminate")
    if status == kernel.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED, None, -math.inf, residual, {}, total_iter)
    y = _read_basic(T, basis, k)
    x = offset + S @ y
    _, _, _, _, _, lo, hi = lp.arrays()
    x = np.minimum(np.maximum(x, lo), hi)
    obj = float(np.asarray(lp.objective, dtype=float) @ x)
    viol = violations(lp, x)
    worst = max((amt for _, _, amt in viol), default=0.0)
    cert = {"tableau": T.tolist()} if debug else {}
    return LpResult(LpStatus.FEASIBLE_OPTIMAL, x, obj, residual, cert, total_iter, worst)


def _read_basic(T, basis, k):
    y = np.zeros(k)
    for i, b in enumerate(basis):
        if b < k:
            y[b] = max(T[i, -1], 0.0)
    return y
