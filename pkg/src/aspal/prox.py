"""Projections and proximal operators for the benchmark problem classes.

Vector-level projections accept 1-d arrays. Matrix-level operators accept
2-d arrays; the ``*_prox`` builders wrap them into :class:`ProxFunction`
objects acting on flattened variables.
"""

import numpy as np

from . import kernels
from .core import ProxFunction
from .linops import remember_svd, singular_values, sym_eig, thin_svd

_FEAS_TOL = 1e-9


def project_simplex(v):
    """Euclidean projection onto the unit simplex {x >= 0, sum(x) = 1}.

    Exact sort-and-threshold algorithm, O(n log n).
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty vector")
    return kernels.project_simplex(v)


def project_box(v, l, u):
    if l > u:
        raise ValueError("box needs l <= u")
    return np.clip(np.asarray(v, dtype=float), l, u)


def project_capped_simplex(v, k):
    """Projection onto {x : 0 <= x <= 1, sum(x) = k}.

    Bisection on the shift ``theta`` in ``x = clip(v - theta, 0, 1)``,
    followed by one exact solve on the active pattern found.
    """
    v = np.asarray(v, dtype=float).ravel()
    n = v.size
    if not 0 < k <= n:
        raise ValueError(f"cap k={k} must satisfy 0 < k <= n={n}")
    return kernels.project_capped_simplex(v, float(k))


def _symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _spectral_apply(M, fn):
    w, V = sym_eig(_symmetrize(M))
    return (V * fn(w)) @ V.T


def project_spectraplex(M):
    """Projection onto {Z PSD, trace(Z) = 1} via simplex projection of eigenvalues."""
    return _spectral_apply(M, project_simplex)


def project_fantope(M, k):
    """Projection onto the k-Fantope {0 <= Z <= I, trace(Z) = k}."""
    n = np.shape(M)[0]
    if not 1 <= k <= n:
        raise ValueError(f"Fantope rank k={k} must satisfy 1 <= k <= n={n}")
    return _spectral_apply(M, lambda w: project_capped_simplex(w, k))


def prox_nuclear(M, t):
    """Singular value soft-thresholding, the prox of t * nuclear norm."""
    if t <= 0:
        raise ValueError("threshold must be positive")
    U, s, V = thin_svd(M)
    s = np.maximum(s - t, 0.0)
    keep = s > 0
    U, s, V = U[:, keep], s[keep], V[:, keep]
    X = (U * s) @ V.T
    remember_svd(X, U, s, V)
    return X


def soft_threshold(v, t):
    return kernels.soft_threshold(np.asarray(v, dtype=float), float(t))


# -- ProxFunction builders ---------------------------------------------------

def _indicator(test):
    return lambda z: 0.0 if test(z) else np.inf


def simplex_indicator(n):
    def inside(z):
        return abs(z.sum() - 1.0) <= _FEAS_TOL * n and z.min() >= -_FEAS_TOL
    return ProxFunction(value=_indicator(inside), prox=lambda v, gamma: project_simplex(v),
                        M_h=0.0, D_h=np.sqrt(2.0), name="simplex")


def box_indicator(n, l, u):
    def inside(z):
        return z.min() >= l - _FEAS_TOL and z.max() <= u + _FEAS_TOL
    return ProxFunction(value=_indicator(inside), prox=lambda v, gamma: project_box(v, l, u),
                        M_h=0.0, D_h=(u - l) * np.sqrt(n), name="box")


def _matrix_eigs(z, n):
    return np.linalg.eigvalsh(_symmetrize(z.reshape(n, n)))


def spectraplex_indicator(n):
    def inside(z):
        w = _matrix_eigs(z, n)
        return w.min() >= -_FEAS_TOL and abs(w.sum() - 1.0) <= _FEAS_TOL * n
    return ProxFunction(value=_indicator(inside),
                        prox=lambda v, gamma: project_spectraplex(v.reshape(n, n)).ravel(),
                        M_h=0.0, D_h=np.sqrt(2.0), name="spectraplex")


def fantope_indicator(n, k):
    def inside(z):
        w = _matrix_eigs(z, n)
        return (w.min() >= -_FEAS_TOL and w.max() <= 1 + _FEAS_TOL
                and abs(w.sum() - k) <= _FEAS_TOL * n)
    return ProxFunction(value=_indicator(inside),
                        prox=lambda v, gamma: project_fantope(v.reshape(n, n), k).ravel(),
                        M_h=0.0, D_h=np.sqrt(2.0 * min(k, n - k)), name="fantope")


def nuclear_norm(shape, weight):
    """h(X) = weight * |X|_* on flattened matrices of the given shape."""
    def value(z):
        return weight * singular_values(z.reshape(shape)).sum()

    def prox(v, gamma):
        if weight == 0:
            return np.array(v, dtype=float)
        return prox_nuclear(v.reshape(shape), weight * gamma).ravel()
    return ProxFunction(value=value, prox=prox, M_h=weight * np.sqrt(min(shape)),
                        name="nuclear")


def l1_norm(weight):
    return ProxFunction(value=lambda z: weight * np.abs(z).sum(),
                        prox=lambda v, gamma: soft_threshold(v, weight * gamma),
                        name="l1")


def separable(parts, sizes, name="separable"):
    """Block-separable sum of prox functions on consecutive slices."""
    bounds = np.cumsum([0] + list(sizes))

    def value(z):
        return sum(h.value(z[a:b]) for h, a, b in zip(parts, bounds[:-1], bounds[1:]))

    def prox(v, gamma):
        return np.concatenate([h.prox(v[a:b], gamma)
                               for h, a, b in zip(parts, bounds[:-1], bounds[1:])])
    return ProxFunction(value=value, prox=prox, name=name)
