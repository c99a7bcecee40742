"""Seeded generators for the benchmark problem families.

Every generator draws from a Philox counter-based generator seeded with the
given 64-bit seed, in a fixed documented order, so identical arguments give
bit-identical instances. Each instance keeps the raw arrays it was built
from in ``instance.data`` and its parameters in ``instance.metadata``; the
pair is enough to rebuild it (see :func:`save_instance`).

Families and draw order:

``qp_simplex``/``qp_box``
    A (l x n), B (n x n), C (l x n), d (l) ~ U[0, 1]; D ~ U[1, 1000]^n;
    then z* ~ U[0, 1]^n (simplex) or u, z0 ~ U[-r, r]^n (box).
``qsdp``
    For each of A (l), B (n), C (l) blocks of n x n matrices: a mask
    U[0, 1] < density, then values U[0, 1]; then d ~ U[0, 1]^l,
    D ~ U[1, 1000]^n and a Gaussian n x n factor G for z0 = G G^T / tr.
``spca``
    Gaussian n x n matrix for the eigenvectors.
``bmc``
    No randomness; the ratings come from a CSV file.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import prox
from .core import (AffineConstraint, LinearMap, ProblemInstance, SetConstraint,
                   SmoothFunction)
from .linops import singular_values, thin_svd

FAMILIES = ("qp_simplex", "qp_box", "qsdp", "spca", "bmc")


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def curvature_scaling(neg_quad, pos_quad, m_f, L_f):
    """Weights (tau1, tau2) for f = -tau1/2 <Hn z, z> + tau2/2 <Hp z, z> + ...

    With ``tau1 = m_f / lmax(Hn)`` and ``tau2 = L_f / lmax(Hp)`` the Hessian
    ``tau2 Hp - tau1 Hn`` has largest eigenvalue at most ``L_f`` and smallest
    at least ``-m_f``. The bounds are tight when the two ranges do not mix.
    Any matrix with the same nonzero spectrum (e.g. ``F F^T`` for
    ``Hn = F^T F``) can be passed.
    """
    if m_f > L_f:
        raise ValueError("curvature targets need m_f <= L_f")
    ln = np.linalg.eigvalsh(np.asarray(neg_quad, dtype=float))[-1]
    lp = np.linalg.eigvalsh(np.asarray(pos_quad, dtype=float))[-1]
    if ln <= 0 or lp <= 0:
        raise ValueError("quadratic pieces must be nonzero PSD matrices")
    return m_f / ln, L_f / lp


# -- nonconvex QPs -----------------------------------------------------------

def _quadratic_f(DB, C, d, tau1, tau2, m_f, L_f):
    """f(z) = -tau1/2 |DB z|^2 + tau2/2 |C z - d|^2."""
    def value(z):
        g = DB @ z
        r = C @ z - d
        return -0.5 * tau1 * float(g @ g) + 0.5 * tau2 * float(r @ r)

    def grad(z):
        return -tau1 * (DB.T @ (DB @ z)) + tau2 * (C.T @ (C @ z - d))
    return SmoothFunction(value=value, grad=grad, m_f=m_f, L_f=L_f)


def quadratic_hessian(prob):
    """Explicit Hessian of a QP or QSDP instance's objective."""
    data, meta = prob.data, prob.metadata
    DB = data["D"][:, None] * data["B"]
    C = data["C"]
    return -meta["tau1"] * DB.T @ DB + meta["tau2"] * C.T @ C


def _qp_scaling(DB, C, m_f, L_f):
    small = min(DB.shape)
    neg = DB @ DB.T if DB.shape[0] == small else DB.T @ DB
    pos = C @ C.T if C.shape[0] <= C.shape[1] else C.T @ C
    return curvature_scaling(neg, pos, m_f, L_f)


def _build_qp(data, meta):
    A, B, C, d, D = (data[k] for k in ("A", "B", "C", "d", "D"))
    DB = D[:, None] * B
    f = _quadratic_f(DB, C, d, meta["tau1"], meta["tau2"], meta["m_f"], meta["L_f"])
    n = A.shape[1]
    if meta["family"] == "qp_simplex":
        h = prox.simplex_indicator(n)
    else:
        r = meta["r"]
        h = prox.box_indicator(n, -r, r)
    con = AffineConstraint(LinearMap.from_matrix(A), data["b"])
    return ProblemInstance(f=f, h=h, constraint=con, z0=data["z0"], metadata=meta,
                           data=data, feasible_point=data["z_feas"])


def _qp_common(rng, l, n):
    A = rng.random((l, n))
    B = rng.random((n, n))
    C = rng.random((l, n))
    d = rng.random(l)
    D = rng.uniform(1.0, 1000.0, n)
    return A, B, C, d, D


def _check_targets(m_f, L_f):
    if not (m_f > 0 and L_f > 0):
        raise ValueError("curvature targets must be positive")
    if m_f > L_f:
        raise ValueError("curvature targets need m_f <= L_f")


def gen_qp_simplex(l, n, m_f, L_f, seed):
    """Nonconvex QP over the unit simplex with dense random data."""
    if not 0 < l < n:
        raise ValueError("need 0 < l < n")
    _check_targets(m_f, L_f)
    rng = make_rng(seed)
    A, B, C, d, D = _qp_common(rng, l, n)
    zstar = rng.random(n)
    z_feas = np.full(n, 1.0 / n)
    tau1, tau2 = _qp_scaling(D[:, None] * B, C, m_f, L_f)
    data = dict(A=A, B=B, C=C, d=d, D=D, b=A @ z_feas, z0=zstar / zstar.sum(), z_feas=z_feas)
    meta = dict(family="qp_simplex", l=l, n=n, m_f=float(m_f), L_f=float(L_f), seed=int(seed),
                tau1=tau1, tau2=tau2, curvature_mode="upper_bound")
    return _build_qp(data, meta)


def gen_qp_box(l, n, r, m_f, L_f, seed):
    """Nonconvex QP over the box [-r, r]^n with dense random data."""
    if not 0 < l < n:
        raise ValueError("need 0 < l < n")
    if not r > 0:
        raise ValueError("box radius must be positive")
    _check_targets(m_f, L_f)
    rng = make_rng(seed)
    A, B, C, d, D = _qp_common(rng, l, n)
    u = rng.uniform(-r, r, n)
    z0 = rng.uniform(-r, r, n)
    tau1, tau2 = _qp_scaling(D[:, None] * B, C, m_f, L_f)
    data = dict(A=A, B=B, C=C, d=d, D=D, b=A @ u, z0=z0, z_feas=u)
    meta = dict(family="qp_box", l=l, n=n, r=float(r), m_f=float(m_f), L_f=float(L_f),
                seed=int(seed), tau1=tau1, tau2=tau2, curvature_mode="upper_bound")
    return _build_qp(data, meta)


# -- nonconvex QSDP ----------------------------------------------------------

def _sparse_sym_block(rng, count, n, density):
    mask = rng.random((count, n, n)) < density
    vals = rng.random((count, n, n))
    M = np.where(mask, vals, 0.0)
    M = 0.5 * (M + M.transpose(0, 2, 1))
    return M.reshape(count, n * n)


def _build_qsdp(data, meta):
    n = meta["n"]
    DB = data["D"][:, None] * data["B"]
    f = _quadratic_f(DB, data["C"], data["d"], meta["tau1"], meta["tau2"],
                     meta["m_f"], meta["L_f"])
    con = AffineConstraint(LinearMap.from_matrix(data["A"]), data["b"])
    return ProblemInstance(f=f, h=prox.spectraplex_indicator(n), constraint=con,
                           z0=data["z0"], shape=(n, n), metadata=meta, data=data,
                           feasible_point=data["z_feas"])


def gen_qsdp(l, n, density, m_f, L_f, seed):
    """Nonconvex quadratic SDP over the spectraplex with sparse random operators.

    Operator matrices are symmetrized, which leaves their action on
    symmetric arguments unchanged and keeps gradients symmetric.
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    _check_targets(m_f, L_f)
    rng = make_rng(seed)
    A = _sparse_sym_block(rng, l, n, density)
    B = _sparse_sym_block(rng, n, n, density)
    C = _sparse_sym_block(rng, l, n, density)
    d = rng.random(l)
    D = rng.uniform(1.0, 1000.0, n)
    G = rng.standard_normal((n, n))
    Z0 = G @ G.T
    Z0 /= np.trace(Z0)
    Z0 = 0.5 * (Z0 + Z0.T)
    z_feas = (np.eye(n) / n).ravel()
    tau1, tau2 = _qp_scaling(D[:, None] * B, C, m_f, L_f)
    data = dict(A=A, B=B, C=C, d=d, D=D, b=A @ z_feas, z0=Z0.ravel(), z_feas=z_feas)
    meta = dict(family="qsdp", l=l, n=n, density=float(density), m_f=float(m_f),
                L_f=float(L_f), seed=int(seed), tau1=tau1, tau2=tau2,
                curvature_mode="upper_bound", z0_construction="normalized Gaussian Gram")
    return _build_qsdp(data, meta)


# -- sparse PCA --------------------------------------------------------------

def mcp(t, vartheta, b):
    """Concave part of the minimax concave penalty, elementwise."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    return np.where(a <= b * vartheta, -t * t / (2.0 * b), b * vartheta ** 2 / 2.0 - vartheta * a)


def mcp_grad(t, vartheta, b):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= b * vartheta, -t / b, -vartheta * np.sign(t))


def spca_covariance(n, s, leading, rng):
    """Sigma = P diag(leading, 1, ..., 1) P^T with a planted s-sparse top
    eigenvector; P is orthonormalized keeping the planted column."""
    P = rng.standard_normal((n, n))
    P[:, 0] = 0.0
    P[:s, 0] = 1.0 / np.sqrt(s)
    Q, R = np.linalg.qr(P)
    Q = Q * np.sign(np.diag(R))
    lam = np.ones(n)
    lam[0] = leading
    S = (Q * lam) @ Q.T
    return 0.5 * (S + S.T)


def _build_spca(data, meta):
    n, k = meta["n"], meta["k"]
    vt, b = meta["vartheta"], meta["b"]
    Sigma = data["Sigma"]
    N = n * n
    sig = Sigma.ravel()

    def value(z):
        return float(sig @ z[:N]) + float(mcp(z[N:], vt, b).sum())

    def grad(z):
        return np.concatenate([sig, mcp_grad(z[N:], vt, b)])

    curv = 1.0 / b
    f = SmoothFunction(value=value, grad=grad, m_f=curv, L_f=curv)
    h = prox.separable([prox.fantope_indicator(n, k), prox.l1_norm(vt)], [N, N], name="spca")
    A = LinearMap(apply=lambda z: z[:N] - z[N:],
                  adjoint=lambda p: np.concatenate([p, -p]), shape=(N, 2 * N))
    Dk = np.zeros((n, n))
    Dk[np.arange(k), np.arange(k)] = 1.0
    z0 = np.concatenate([Dk.ravel(), np.zeros(N)])
    z_feas = np.concatenate([Dk.ravel(), Dk.ravel()])
    return ProblemInstance(f=f, h=h, constraint=AffineConstraint(A, np.zeros(N)), z0=z0,
                           shape=(2, n, n), metadata=meta, data=data, feasible_point=z_feas)


def gen_spca(n, s, k, vartheta, b_mcp, seed, leading=100.0):
    """Sparse PCA over the k-Fantope with an MCP-regularized copy variable.

    The variable stacks (Pi, Phi) as two flattened n x n blocks, coupled by
    Pi - Phi = 0.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if not 1 <= s <= n:
        raise ValueError("need 1 <= s <= n")
    if not (vartheta > 0 and b_mcp > 0):
        raise ValueError("vartheta and b must be positive")
    rng = make_rng(seed)
    Sigma = spca_covariance(n, s, leading, rng)
    meta = dict(family="spca", n=n, l=n * n, s=s, k=k, vartheta=float(vartheta),
                b=float(b_mcp), leading=float(leading), m_f=1.0 / b_mcp, L_f=1.0 / b_mcp,
                seed=int(seed))
    return _build_spca(dict(Sigma=Sigma), meta)


# -- bounded matrix completion ----------------------------------------------

def read_ratings(path):
    """Parse a ratings CSV with header containing userId, movieId, rating.

    Ids are reindexed from 0 in first-appearance order. Returns
    ``(Q, mask)``.
    """
    users, movies, entries = {}, {}, []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty ratings file") from None
        try:
            iu, im, ir = (header.index(c) for c in ("userId", "movieId", "rating"))
        except ValueError:
            raise ValueError(f"{path}: header must contain userId, movieId, rating") from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                uid, mid, val = row[iu].strip(), row[im].strip(), float(row[ir])
            except (IndexError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed ratings row {row!r}") from None
            if not np.isfinite(val):
                raise ValueError(f"{path}:{lineno}: non-finite rating")
            i = users.setdefault(uid, len(users))
            j = movies.setdefault(mid, len(movies))
            entries.append((i, j, val))
    if not entries:
        raise ValueError(f"{path}: no ratings")
    Q = np.zeros((len(users), len(movies)))
    mask = np.zeros_like(Q)
    for i, j, val in entries:
        Q[i, j] = val
        mask[i, j] = 1.0
    return Q, mask


def _spectral_penalty_grad(sv, upsilon, tau_m, theta):
    return tau_m * (upsilon / (theta + sv) - upsilon / theta)


def _build_bmc(data, meta):
    Q, mask = data["Q"], data["mask"]
    shape = Q.shape
    ups, tau_m, theta = meta["upsilon"], meta["tau_m"], meta["theta"]
    lo, hi = meta["l_bound"], meta["u_bound"]
    kappa0 = ups / theta

    def spec_value(sv):
        return tau_m * float(np.sum(ups * np.log1p(sv / theta) - kappa0 * sv))

    def value(z):
        X = z.reshape(shape)
        R = mask * (X - Q)
        return 0.5 * float(np.sum(R * R)) + spec_value(singular_values(X))

    def joint(z):
        X = z.reshape(shape)
        R = mask * (X - Q)
        # zero singular values contribute nothing to value or gradient
        U, sv, V = thin_svd(X, allow_truncated=True)
        G = R + (U * _spectral_penalty_grad(sv, ups, tau_m, theta)) @ V.T
        return 0.5 * float(np.sum(R * R)) + spec_value(sv), G.ravel()

    def grad(z):
        return joint(z)[1]

    f = SmoothFunction(value=value, grad=grad, m_f=meta["m_f"], L_f=meta["L_f"], joint=joint)
    h = prox.nuclear_norm(shape, tau_m * kappa0)
    con = SetConstraint(LinearMap.identity(Q.size), lambda y: np.clip(y, lo, hi))
    return ProblemInstance(f=f, h=h, constraint=con, z0=np.zeros(Q.size), shape=shape,
                           metadata=meta, data=data, feasible_point=np.clip(Q, lo, hi).ravel())


def bmc_from_matrix(Q, mask, upsilon=0.5, tau_m=0.5, theta=0.5, l_bound=0.0, u_bound=5.0,
                    source=None):
    Q = np.asarray(Q, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if not (upsilon > 0 and tau_m >= 0 and theta > 0):
        raise ValueError("need upsilon > 0, tau_m >= 0, theta > 0")
    if l_bound > u_bound:
        raise ValueError("need l_bound <= u_bound")
    m_f = 2.0 * upsilon * tau_m / theta ** 2
    meta = dict(family="bmc", p=Q.shape[0], q=Q.shape[1], n=Q.size, l=Q.size,
                upsilon=float(upsilon), tau_m=float(tau_m), theta=float(theta),
                l_bound=float(l_bound), u_bound=float(u_bound), m_f=m_f, L_f=max(1.0, m_f),
                observed=int(mask.sum()), source=source)
    return _build_bmc(dict(Q=Q, mask=mask), meta)


def load_bmc(ratings_path, upsilon=0.5, tau_m=0.5, theta=0.5, l_bound=0.0, u_bound=5.0):
    """Bounded matrix completion instance from a ratings CSV."""
    Q, mask = read_ratings(ratings_path)
    # the bundled fixture is named rather than located, so instance files
    # do not depend on where the package is installed
    bundled = Path(ratings_path).resolve() == bundled_ratings_path().resolve()
    source = "bundled:" + Path(ratings_path).name if bundled else str(ratings_path)
    return bmc_from_matrix(Q, mask, upsilon, tau_m, theta, l_bound, u_bound, source=source)


def bundled_ratings_path():
    """Path of the bundled 50 x 40 synthetic ratings fixture, the output of
    ``synthetic_ratings(seed=2024)``."""
    return Path(str(resources.files("aspal") / "data" / "ratings_50x40.csv"))


def synthetic_ratings(p=50, q=40, rank=3, density=0.3, seed=0):
    """CSV text of a synthetic low-rank ratings table in half-star steps.

    Every user and every movie receives at least one rating.
    """
    rng = make_rng(seed)
    U = rng.random((p, rank))
    V = rng.random((q, rank))
    R = U @ V.T
    R = 0.5 + 4.5 * (R - R.min()) / (R.max() - R.min())
    R = np.clip(np.round(2.0 * (R + 0.3 * rng.standard_normal((p, q)))) / 2.0, 0.5, 5.0)
    obs = rng.random((p, q)) < density
    obs[np.arange(p), np.arange(p) % q] = True
    obs[np.arange(q) % p, np.arange(q)] = True
    out = io.StringIO()
    out.write("userId,movieId,rating,timestamp\n")
    for i in range(p):
        for j in range(q):
            if obs[i, j]:
                out.write(f"{i + 1},{j + 1},{R[i, j]:.1f},0\n")
    return out.getvalue()


# -- specs, defaults and serialization --------------------------------------

@dataclass
class GenSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family", None)
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
        seed = int(d.pop("seed", 0))
        return cls(family=family, params=d, seed=seed)

    def to_dict(self):
        return {"family": self.family, "seed": self.seed, **self.params}


def generate(spec):
    """Build an instance from a :class:`GenSpec` (or an equivalent dict)."""
    if isinstance(spec, dict):
        spec = GenSpec.from_dict(spec)
    p = dict(spec.params)
    fam = spec.family
    if "m_f" in p and "L_f" in p and p["m_f"] > p["L_f"]:
        raise ValueError("curvature targets need m_f <= L_f")
    if fam == "qp_simplex":
        return gen_qp_simplex(p["l"], p["n"], p["m_f"], p["L_f"], spec.seed)
    if fam == "qp_box":
        return gen_qp_box(p["l"], p["n"], p["r"], p["m_f"], p["L_f"], spec.seed)
    if fam == "qsdp":
        return gen_qsdp(p["l"], p["n"], p.get("density", 0.05), p["m_f"], p["L_f"], spec.seed)
    if fam == "spca":
        return gen_spca(p["n"], p.get("s", 5), p["k"], p.get("vartheta", 100.0), p["b"],
                        spec.seed, leading=p.get("leading", 100.0))
    if fam == "bmc":
        path = p.get("ratings") or bundled_ratings_path()
        return load_bmc(path, p.get("upsilon", 0.5), p.get("tau_m", 0.5),
                        p.get("theta", 0.5), p.get("l_bound", 0.0), p.get("u_bound", 5.0))
    raise ValueError(f"unknown family {fam!r}")


def solver_defaults(prob):
    """Per-family starting parameters (lambda_bar, c1, M0, doubling threshold)."""
    meta = prob.metadata
    fam, m_f = meta["family"], meta["m_f"]
    if fam in ("qp_simplex", "qp_box"):
        return dict(lambda_bar=20.0 / m_f, c1=1.0, M0_initial=100.0, doubling_threshold=75)
    if fam == "qsdp":
        return dict(lambda_bar=1.0 / (20.0 * m_f), c1=1.0, M0_initial=100.0,
                    doubling_threshold=75)
    if fam == "spca":
        return dict(lambda_bar=1.0 / (2.0 * m_f), c1=1.0, M0_initial=1.0, doubling_threshold=4)
    if fam == "bmc":
        lam = 10.0 / m_f if m_f > 0 else 10.0
        return dict(lambda_bar=lam, c1=500.0, M0_initial=1.0, doubling_threshold=4)
    raise ValueError(f"no defaults for family {fam!r}")


_BUILDERS = {"qp_simplex": _build_qp, "qp_box": _build_qp, "qsdp": _build_qsdp,
             "spca": _build_spca, "bmc": _build_bmc}

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


def instance_bytes(prob):
    """Deterministic zip archive of an instance's arrays and metadata."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("metadata.json", date_time=_ZIP_DATE)
        zf.writestr(info, json.dumps(prob.metadata, sort_keys=True, default=_json_default))
        for key in sorted(prob.data):
            arr = io.BytesIO()
            np.save(arr, np.ascontiguousarray(prob.data[key]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{key}.npy", date_time=_ZIP_DATE), arr.getvalue(),
                        compress_type=zipfile.ZIP_DEFLATED)
    return buf.getvalue()


def save_instance(path, prob):
    Path(path).write_bytes(instance_bytes(prob))


def load_instance(path):
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("metadata.json"))
        data = {}
        for name in zf.namelist():
            if name.endswith(".npy"):
                data[name[:-4]] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    fam = meta.get("family")
    if fam not in _BUILDERS:
        raise ValueError(f"{path}: unknown family {fam!r}")
    return _BUILDERS[fam](data, meta)
