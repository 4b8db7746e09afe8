# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex pivot loop. Mirrors ``_kernel_py`` operation for operation."""

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2


cdef void _pivot(double[:, ::1] T, long long[::1] basis, Py_ssize_t row,
                 Py_ssize_t col) noexcept nogil:
    cdef Py_ssize_t m1 = T.shape[0]
    cdef Py_ssize_t n1 = T.shape[1]
    cdef Py_ssize_t i, j
    cdef double piv = T[row, col]
    cdef double f
    for j in range(n1):
        T[row, j] = T[row, j] / piv
    T[row, col] = 1.0
    for i in range(m1):
        if i == row:
            continue
        f = T[i, col]
        if f != 0.0:
            for j in range(n1):
                T[i, j] = T[i, j] - f * T[row, j]
            T[i, col] = 0.0
    basis[row] = col


def pivot(double[:, ::1] T, long long[::1] basis, Py_ssize_t row, Py_ssize_t col):
    _pivot(T, basis, row, col)


def iterate(double[:, ::1] T, long long[::1] basis, Py_ssize_t n_eligible,
            double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t it = 0
    cdef Py_ssize_t i, j
    cdef Py_ssize_t row = -1
    cdef Py_ssize_t col = -1
    cdef double best, ratio, a
    with nogil:
        while it < max_iter:
            col = -1
            for j in range(n_eligible):
                if T[m, j] < -tol:
                    col = j
                    break
            if col < 0:
                break
            row = -1
            best = 0.0
            for i in range(m):
                a = T[i, col]
                if a > tol:
                    ratio = T[i, rhs] / a
                    if row < 0 or ratio < best - 1e-12:
                        row = i
                        best = ratio
                    elif ratio <= best + 1e-12 and basis[i] < basis[row]:
                        row = i
                        best = ratio
            if row < 0:
                break
            _pivot(T, basis, row, col)
            it += 1
    if it >= max_iter:
        return ITERATION_LIMIT, it
    if col < 0:
        return OPTIMAL, it
    return UNBOUNDED, it
