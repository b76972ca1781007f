# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SMO inner loop. Same contract as ``_smo_py.smo_solve``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

cdef double TAU = 1e-12


def smo_solve(K_in, y_in, double C, double tol, long max_iter):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Karr = np.ascontiguousarray(K_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] yarr = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef double[:, ::1] K = Karr
    cdef double[::1] y = yarr
    cdef Py_ssize_t n = y.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    G_arr = -np.ones(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr
    cdef Py_ssize_t t, i, j
    cdef long it = 0
    cdef bint converged = False
    cdef double gmax, gmin, v, ai, aj, yi, yj, quad, delta, diff, s, ni, nj, di, dj
    cdef double ci, cj

    while it < max_iter:
        gmax = -INFINITY
        gmin = INFINITY
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if y[t] > 0:
                if alpha[t] < C and v > gmax:
                    gmax = v
                    i = t
                if alpha[t] > 0 and v < gmin:
                    gmin = v
                    j = t
            else:
                if alpha[t] > 0 and v > gmax:
                    gmax = v
                    i = t
                if alpha[t] < C and v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        it += 1
        ai = alpha[i]
        aj = alpha[j]
        yi = y[i]
        yj = y[j]
        if yi != yj:
            quad = K[i, i] + K[j, j] + 2.0 * K[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            elif ni < 0:
                ni = 0.0
                nj = -diff
            if diff > 0:
                if ni > C:
                    ni = C
                    nj = C - diff
            elif nj > C:
                nj = C
                ni = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            ni = ai - delta
            nj = aj + delta
            if s > C:
                if ni > C:
                    ni = C
                    nj = s - C
            elif nj < 0:
                nj = 0.0
                ni = s
            if s > C:
                if nj > C:
                    nj = C
                    ni = s - C
            elif ni < 0:
                ni = 0.0
                nj = s
        di = ni - ai
        dj = nj - aj
        alpha[i] = ni
        alpha[j] = nj
        ci = yi * di
        cj = yj * dj
        for t in range(n):
            G[t] += y[t] * (ci * K[i, t] + cj * K[j, t])  # K symmetric; rows are contiguous
    return alpha_arr, G_arr, it, bool(converged)
