# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the per-sample loss kernel and the class scatter."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

cdef double LOG_SPACE_RATIO = 1e12
cdef double DENOM_FLOOR = 1e-300


def loss_grad(Z, labels, counts=None):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t b = z.shape[0], c = z.shape[1], j, k
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g = np.empty((b, c))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] losses = np.empty(b)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] n
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logn
    cdef double m, s, w, na, cmax = 0.0, cmin = INFINITY
    cdef Py_ssize_t a
    cdef bint weighted = counts is not None
    cdef bint logspace = False

    if weighted:
        n = np.ascontiguousarray(counts, dtype=np.float64)
        logn = np.empty(c)
        for k in range(c):
            if n[k] > 0:
                logn[k] = log(n[k])
                if n[k] > cmax:
                    cmax = n[k]
                if n[k] < cmin:
                    cmin = n[k]
            else:
                logn[k] = -INFINITY
        for j in range(b):
            if n[y[j]] <= 0:
                raise ValueError("every sample's class must have a positive count")
        logspace = cmax / cmin > LOG_SPACE_RATIO

    for j in range(b):
        a = y[j]
        if not weighted:
            m = z[j, 0]
            for k in range(1, c):
                if z[j, k] > m:
                    m = z[j, k]
            s = 0.0
            for k in range(c):
                g[j, k] = exp(z[j, k] - m)
                s += g[j, k]
            if s < DENOM_FLOOR:
                s = DENOM_FLOOR
            losses[j] = log(s) - (z[j, a] - m)
        elif logspace:
            m = -INFINITY
            for k in range(c):
                if n[k] > 0 and z[j, k] + logn[k] - logn[a] > m:
                    m = z[j, k] + logn[k] - logn[a]
            s = 0.0
            for k in range(c):
                if n[k] > 0:
                    g[j, k] = exp(z[j, k] + logn[k] - logn[a] - m)
                else:
                    g[j, k] = 0.0
                s += g[j, k]
            if s < DENOM_FLOOR:
                s = DENOM_FLOOR
            losses[j] = log(s) + m - z[j, a]
        else:
            na = n[a]
            m = -INFINITY
            for k in range(c):
                if n[k] > 0 and z[j, k] > m:
                    m = z[j, k]
            s = 0.0
            for k in range(c):
                if n[k] > 0:
                    w = n[k] / na
                    g[j, k] = w * exp(z[j, k] - m)
                else:
                    g[j, k] = 0.0
                s += g[j, k]
            if s < DENOM_FLOOR:
                s = DENOM_FLOOR
            losses[j] = log(s) - (z[j, a] - m)
        for k in range(c):
            g[j, k] = g[j, k] / s
        g[j, a] -= 1.0
    return losses, g


def class_parts(G, H, labels, num_classes):
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[:, ::1] h = np.ascontiguousarray(H, dtype=np.float64)
    cdef cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t c = num_classes, b = h.shape[0], d = h.shape[1], i, j, t, k
    out = np.zeros((c, c, d))
    cdef double[:, :, ::1] parts = out
    cdef double gji
    cdef double* row
    cdef const double* hj
    for j in range(b):
        k = y[j]
        hj = &h[j, 0]
        for i in range(c):
            gji = g[j, i]
            row = &parts[i, k, 0]
            for t in range(d):
                row[t] += gji * hj[t]
    return out
