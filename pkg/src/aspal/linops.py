"""Dense linear-algebra helpers: operator norms, eigen- and singular value
decompositions with the ordering conventions the prox toolbox expects."""

import threading

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .core import LinearMap


def estimate_spectral_norm(A, tol=1e-4, max_iter=1000, seed=0):
    """Estimate the largest singular value of a linear map.

    Power iteration on ``A* A`` from a seeded Gaussian start. Stops once the
    Rayleigh-quotient estimate changes by less than ``tol`` relative.

    Parameters
    ----------
    A : LinearMap or ndarray
    tol : float
        Relative stopping tolerance, in (0, 1).
    max_iter : int
    seed : int
        Seed of the start vector, so estimates are reproducible.

    Returns
    -------
    float
        The estimate, or 0.0 when ``A`` annihilates the iterate.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    if not isinstance(A, LinearMap):
        A = LinearMap.from_matrix(A)
    n = A.shape[1]
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        Ax = A.apply(x)
        y = A.adjoint(Ax)
        ny = np.linalg.norm(y)
        if ny == 0.0 or np.linalg.norm(Ax) == 0.0:
            return 0.0
        # |A x| for unit x is a lower bound that converges to |A|_2
        new = np.sqrt(ny)
        x = y / ny
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return float(np.linalg.norm(A.apply(x))) if sigma > 0 else 0.0


def _symmetry_gap(M):
    return np.linalg.norm(M - M.T) / max(1.0, np.linalg.norm(M))


def sym_eig(M):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(w, V)`` with ``M = V diag(w) V^T`` and orthonormal columns in
    ``V``. Raises ``ValueError`` if ``M`` is not symmetric to 1e-10.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("sym_eig needs a square matrix")
    if _symmetry_gap(M) > 1e-10:
        raise ValueError("sym_eig needs a symmetric matrix")
    w, V = np.linalg.eigh(M)
    return w[::-1], V[:, ::-1]


_known = threading.local()
_gesdd = lapack.dgesdd


def remember_svd(M, U, s, V):
    """Record a factorization already known for ``M``.

    Proximal maps built on an SVD know the singular triplets of their
    output; a smooth oracle evaluated at that same point can then skip its
    own factorization. Only the nonzero triplets need to be given. One
    entry per thread is kept.
    """
    _known.entry = (np.array(M, dtype=float), U, s, V)


def _lookup(M):
    entry = getattr(_known, "entry", None)
    if entry is not None and entry[0].shape == M.shape and np.array_equal(entry[0], M):
        return entry[1:]
    return None


def thin_svd(M, allow_truncated=False):
    """Thin SVD ``M = U diag(s) V^T`` with ``s`` descending.

    Note the third output is V, not V^T. The divide-and-conquer LAPACK
    driver occasionally fails to converge on finite input; the slower QR
    iteration driver is used as a fallback. With ``allow_truncated`` a
    factorization registered through :func:`remember_svd` may be returned,
    which omits the zero singular values.
    """
    M = np.asarray(M, dtype=float)
    if allow_truncated:
        hit = _lookup(M)
        if hit is not None:
            return hit
    if M.ndim != 2:
        raise ValueError("thin_svd needs a 2-d array")
    # the raw driver skips the input validation of scipy.linalg.svd, which
    # is a sizeable share of the cost for the small matrices seen here; a
    # Fortran-ordered copy is cheaper than the wrapper's own conversion
    U, s, Vt, info = _gesdd(np.asfortranarray(M), compute_uv=1, full_matrices=0,
                            overwrite_a=int(not np.isfortran(M)))
    if info != 0:
        U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
    return U, s, Vt.T


def singular_values(M):
    """Singular values of ``M`` in descending order (same fallback as thin_svd)."""
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(M, compute_uv=False, lapack_driver="gesvd")
