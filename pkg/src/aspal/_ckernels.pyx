# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled projection kernels. Same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def project_simplex(v):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.sort(x)
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef double css = 0.0, theta = 0.0, ui
    # u is ascending; walk it from the top
    for i in range(n):
        ui = u[n - 1 - i]
        css += ui
        if ui - (css - 1.0) / (i + 1) > 0:
            theta = (css - 1.0) / (i + 1)
    out = np.empty(n)
    cdef double[::1] o = out
    for j in range(n):
        o[j] = x[j] - theta if x[j] > theta else 0.0
    return out


cdef inline double _clip01(double t) nogil:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    return t


def project_capped_simplex(v, double k, double tol=1e-12, int max_iter=200):
    cdef double[::1] x = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef Py_ssize_t n = x.shape[0], i
    cdef int it
    cdef double lo = x[0], hi = x[0], theta, s, target_tol, t, sfree, s2, theta2
    cdef Py_ssize_t nfree, nup
    for i in range(n):
        if x[i] < lo:
            lo = x[i]
        if x[i] > hi:
            hi = x[i]
    lo -= 1.0
    target_tol = tol * (k if k > 1.0 else 1.0)
    theta = 0.5 * (lo + hi)
    with nogil:
        for it in range(max_iter):
            theta = 0.5 * (lo + hi)
            s = 0.0
            for i in range(n):
                s += _clip01(x[i] - theta)
            if fabs(s - k) <= target_tol:
                break
            if s > k:
                lo = theta
            else:
                hi = theta
            if hi - lo <= 1e-16 * (fabs(theta) if fabs(theta) > 1.0 else 1.0):
                break
        s = 0.0
        sfree = 0.0
        nfree = 0
        nup = 0
        for i in range(n):
            t = x[i] - theta
            s += _clip01(t)
            if t >= 1.0:
                nup += 1
            elif t > 0.0:
                nfree += 1
                sfree += x[i]
        if nfree > 0:
            theta2 = (sfree - (k - nup)) / nfree
            s2 = 0.0
            for i in range(n):
                s2 += _clip01(x[i] - theta2)
            if fabs(s2 - k) <= fabs(s - k):
                theta = theta2
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = _clip01(x[i] - theta)
    return out


def soft_threshold(v, double t):
    cdef double[::1] x = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        if x[i] > t:
            o[i] = x[i] - t
        elif x[i] < -t:
            o[i] = x[i] + t
        else:
            o[i] = 0.0
    return np.reshape(out, np.shape(v))
