"""Pure-Python simplex pivot loop, used when the compiled kernel is unavailable.

Must stay numerically identical to ``_kernel.pyx``: same pivot rule, same
tie-breaking, same order of floating point operations.
"""

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2


def pivot(T, basis, row, col):
    m1 = T.shape[0]
    piv = T[row, col]
    T[row, :] = T[row, :] / piv
    T[row, col] = 1.0
    prow = T[row, :]
    for i in range(m1):
        if i == row:
            continue
        f = T[i, col]
        if f != 0.0:
            T[i, :] = T[i, :] - f * prow
            T[i, col] = 0.0
    basis[row] = col


def iterate(T, basis, n_eligible, tol, max_iter):
    """Run Bland-rule simplex iterations on tableau ``T`` in place.

    The last row holds reduced costs (minimisation) and the last column the
    right-hand side. Only columns ``< n_eligible`` may enter the basis.
    Returns ``(status, iterations)``.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    it = 0
    while it < max_iter:
        neg = np.flatnonzero(T[m, :n_eligible] < -tol)
        if neg.size == 0:
            return OPTIMAL, it
        col = int(neg[0])
        row = -1
        best = 0.0
        for i in np.flatnonzero(T[:m, col] > tol):
            ratio = T[i, rhs] / T[i, col]
            if row < 0 or ratio < best - 1e-12:
                row = i
                best = ratio
            elif ratio <= best + 1e-12 and basis[i] < basis[row]:
                row = i
                best = ratio
        if row < 0:
            return UNBOUNDED, it
        pivot(T, basis, row, col)
        it += 1
    return ITERATION_LIMIT, it

