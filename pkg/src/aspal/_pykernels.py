"""Pure-numpy projection kernels; reference twin of ``_ckernels.pyx``."""

import numpy as np


def project_simplex(v):
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _capped_sum(v, theta):
    return np.clip(v - theta, 0.0, 1.0).sum()


def project_capped_simplex(v, k, tol=1e-12, max_iter=200):
    v = np.asarray(v, dtype=float)
    target_tol = tol * max(1.0, k)
    lo = v.min() - 1.0
    hi = v.max()
    theta = 0.5 * (lo + hi)
    for _ in range(max_iter):
        theta = 0.5 * (lo + hi)
        s = _capped_sum(v, theta)
        if abs(s - k) <= target_tol:
            break
        if s > k:
            lo = theta
        else:
            hi = theta
        if hi - lo <= 1e-16 * max(1.0, abs(theta)):
            break
    x = np.clip(v - theta, 0.0, 1.0)
    # exact shift for the active pattern found by bisection
    t = v - theta
    free = (t > 0.0) & (t < 1.0)
    nfree = np.count_nonzero(free)
    if nfree:
        nup = np.count_nonzero(t >= 1.0)
        theta2 = (v[free].sum() - (k - nup)) / nfree
        x2 = np.clip(v - theta2, 0.0, 1.0)
        if abs(x2.sum() - k) <= abs(x.sum() - k):
            x = x2
    return x


def soft_threshold(v, t):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
